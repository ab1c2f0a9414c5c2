//! Command implementations behind the `pointmatch` binary.

pub mod config;
pub mod store;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pointmatch::dataset::Split;
use pointmatch::eval::{evaluate, IoUReport};
use pointmatch::model::{read_checkpoint, write_checkpoint, MlpParams};
use pointmatch::synth::WeakVariant;
use pointmatch::train::{run_training_with, Ablation, EpochMetrics};
use serde::{Deserialize, Serialize};

use crate::config::{Overrides, RunConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const RUN_MANIFEST_FILE: &str = "run.json";
pub const ABLATION_FILE: &str = "ablation.tsv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Parser)]
#[command(name = "pointmatch", version, about = "Weakly supervised point-cloud segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (scene files and manifest) into --out.
    Gen(Common),
    /// Build and cache super-point partitions for the training scenes.
    Superpoints(Common),
    /// Train a model; writes checkpoint, metrics CSV and run manifest to --out.
    Train(Common),
    /// Evaluate a checkpoint on the validation split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "val")]
        split: String,
    },
    /// Train every configured variant under every scheme and seed.
    Ablate(Common),
    /// Summarize a training or ablation directory.
    Report(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ratio:F | points:K | oneclick
    #[arg(long)]
    pub scheme: Option<String>,
    /// full | no-consistency | fixed-w:V | fast-decay:D
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Dataset directory, overriding the config.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

impl Common {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            seed: self.seed,
            scheme: self.scheme.clone(),
            ablation: self.ablation.clone(),
            epochs: self.epochs,
            dataset: self.dataset.clone(),
        })?;
        Ok(cfg)
    }
}

/// Provenance record written next to every run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub seed: u64,
    pub scheme: String,
    pub ablation: String,
    pub artifacts: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("writing {}", path.display()))?,
    ))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => cmd_gen(&c).map(|_| ()),
        Command::Superpoints(c) => cmd_superpoints(&c).map(|_| ()),
        Command::Train(c) => cmd_train(&c).map(|_| ()),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let report = cmd_eval(&common, checkpoint.as_deref(), &split)?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Ablate(c) => cmd_ablate(&c).map(|_| ()),
        Command::Report(c) => {
            print!("{}", cmd_report(&c)?);
            Ok(())
        }
    }
}

/// `--out` is the dataset directory.
pub fn cmd_gen(c: &Common) -> Result<usize> {
    let cfg = c.load_config()?;
    let n = store::generate(&cfg.data, cfg.seed, &c.out)?;
    log::info!("wrote {n} scenes to {}", c.out.display());
    Ok(n)
}

fn ensure_dataset(cfg: &RunConfig) -> Result<()> {
    if !store::exists(&cfg.dataset) {
        log::info!("generating dataset in {}", cfg.dataset.display());
        store::generate(&cfg.data, cfg.seed, &cfg.dataset)?;
    }
    Ok(())
}

/// Returns the number of partitions newly built.
pub fn cmd_superpoints(c: &Common) -> Result<usize> {
    let cfg = c.load_config()?;
    ensure_dataset(&cfg)?;
    let entries = store::manifest(&cfg.dataset)?;
    let mut built = 0;
    for e in store::split_entries(&entries, Split::Train) {
        let (part, fresh) = store::partition(&cfg.dataset, e, &cfg.cluster)?;
        built += usize::from(fresh);
        log::debug!("{}: {} super-points", e.file, part.num_groups());
    }
    log::info!("{built} partitions built");
    Ok(built)
}

pub fn write_metrics<W: Write>(w: W, history: &[EpochMetrics]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    if history.is_empty() {
        csv.write_record([
            "epoch",
            "w",
            "l_ce",
            "l_pl",
            "l_pl_sp",
            "l_total",
            "mask_rate",
            "sp_mask_rate",
            "pl_accuracy",
            "sp_pl_accuracy",
            "val_miou",
        ])?;
    }
    for m in history {
        csv.serialize(m)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut csv = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    csv.deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("in {}", path.display()))
}

pub fn write_params(path: &Path, params: &MlpParams) -> Result<()> {
    write_checkpoint(create(path)?, params)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<MlpParams> {
    let r = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    read_checkpoint(r).with_context(|| format!("in {}", path.display()))
}

pub fn epoch_checkpoint(out: &Path, epoch: usize) -> PathBuf {
    out.join("checkpoints").join(format!("epoch_{epoch:04}.bin"))
}

/// Trains under a fully resolved config, writing artifacts into `out`.
pub fn train_into(cfg: &RunConfig, out: &Path, command: &str) -> Result<Vec<EpochMetrics>> {
    let started = unix_now();
    ensure_dataset(cfg)?;
    let data = store::load_dataset(&cfg.dataset, cfg.weak_variant()?, &cfg.cluster, cfg.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut artifacts = Vec::new();
    let every = cfg.checkpoint_every;
    let outcome = run_training_with(&cfg.train, &data, |trainer, m| {
        log::debug!(
            "epoch {} w {:.4} loss {:.5} mask {:.3} val {:?}",
            m.epoch,
            m.w,
            m.l_total,
            m.mask_rate,
            m.val_miou
        );
        if every > 0 && (m.epoch + 1) % every == 0 {
            let path = epoch_checkpoint(out, m.epoch);
            write_params(&path, &trainer.params)?;
        }
        Ok::<(), anyhow::Error>(())
    })?;
    if every > 0 {
        artifacts.extend((0..cfg.train.epochs).filter(|e| (e + 1) % every == 0).map(|e| epoch_checkpoint(out, e)));
    }

    let ckpt = out.join(CHECKPOINT_FILE);
    write_params(&ckpt, &outcome.params)?;
    let metrics = out.join(METRICS_FILE);
    write_metrics(create(&metrics)?, &outcome.history)?;
    let echo = out.join(CONFIG_ECHO_FILE);
    fs::write(&echo, cfg.to_toml()?)?;
    artifacts.extend([ckpt, metrics, echo.clone()]);

    let manifest = RunManifest {
        command: command.into(),
        config_hash: cfg.hash()?,
        config: echo,
        dataset: cfg.dataset.clone(),
        seed: cfg.seed,
        scheme: cfg.scheme.clone(),
        ablation: cfg.ablation.to_string(),
        artifacts,
        started_unix: started,
        finished_unix: unix_now(),
    };
    serde_json::to_writer_pretty(create(&out.join(RUN_MANIFEST_FILE))?, &manifest)?;
    if let Some(v) = outcome.history.iter().rev().find_map(|m| m.val_miou) {
        log::info!("{}: final val mIoU {:.4}", out.display(), v);
    }
    Ok(outcome.history)
}

pub fn cmd_train(c: &Common) -> Result<Vec<EpochMetrics>> {
    let cfg = c.load_config()?;
    train_into(&cfg, &c.out, "train")
}

/// Single un-augmented forward pass per scene; never touches super-points.
pub fn cmd_eval(c: &Common, checkpoint: Option<&Path>, split: &str) -> Result<IoUReport> {
    let cfg = c.load_config()?;
    let split = match split {
        "train" => Split::Train,
        "val" => Split::Val,
        other => bail!("unknown split {other:?}"),
    };
    let ckpt = checkpoint.map_or_else(|| c.out.join(CHECKPOINT_FILE), Path::to_path_buf);
    let params = read_params(&ckpt)?;
    let entries = store::manifest(&cfg.dataset)?;
    let scenes = store::load_split(&cfg.dataset, &entries, split)?;
    if scenes.is_empty() {
        bail!("no {} scenes in {}", split.name(), cfg.dataset.display());
    }
    let report = evaluate(&params, &scenes, cfg.train.k_feat)?;
    let table = c.out.join(format!("iou_{}.tsv", split.name()));
    fs::create_dir_all(&c.out)?;
    fs::write(&table, report.to_table())?;
    Ok(report)
}

/// Final logged validation mIoU of a history.
pub fn final_val_miou(history: &[EpochMetrics]) -> Option<f64> {
    history.iter().rev().find_map(|m| m.val_miou)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub scheme: String,
    pub variant: String,
    /// Final val mIoU per seed, in seed order.
    pub miou: Vec<f64>,
}

impl AblationRow {
    pub fn mean(&self) -> f64 {
        self.miou.iter().sum::<f64>() / self.miou.len().max(1) as f64
    }
}

pub fn ablation_run_dir(out: &Path, scheme: &WeakVariant, variant: &Ablation, seed: u64) -> PathBuf {
    out.join(store::scheme_tag(scheme))
        .join(variant.to_string().replace(':', "-"))
        .join(format!("seed_{seed}"))
}

pub fn ablation_dataset_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("data").join(format!("seed_{seed}"))
}

pub fn ablation_table(rows: &[AblationRow], seeds: &[u64]) -> String {
    let mut s = String::from("scheme\tvariant");
    for seed in seeds {
        s.push_str(&format!("\tseed_{seed}"));
    }
    s.push_str("\tmean\n");
    for r in rows {
        s.push_str(&format!("{}\t{}", r.scheme, r.variant));
        for v in &r.miou {
            s.push_str(&format!("\t{:.4}", v * 100.0));
        }
        s.push_str(&format!("\t{:.4}\n", r.mean() * 100.0));
    }
    s
}

/// Every variant sees the same seeds, hence identical data, weak labels,
/// initialization and views.
pub fn cmd_ablate(c: &Common) -> Result<Vec<AblationRow>> {
    let base = c.load_config()?;
    let seeds = if base.ablate.seeds.is_empty() {
        vec![base.seed]
    } else {
        base.ablate.seeds.clone()
    };
    let mut rows = Vec::new();
    for scheme in &base.ablate.schemes {
        let scheme_v: WeakVariant = scheme.parse()?;
        for variant in &base.ablate.variants {
            let variant_v: Ablation = variant.parse()?;
            let mut miou = Vec::with_capacity(seeds.len());
            for &seed in &seeds {
                let mut cfg = base.clone();
                cfg.seed = seed;
                cfg.scheme = scheme.clone();
                cfg.ablation = variant_v;
                cfg.dataset = ablation_dataset_dir(&c.out, seed);
                cfg.sync();
                let dir = ablation_run_dir(&c.out, &scheme_v, &variant_v, seed);
                let history = train_into(&cfg, &dir, "ablate")?;
                miou.push(final_val_miou(&history).context("ablation run logged no validation mIoU")?);
            }
            rows.push(AblationRow {
                scheme: scheme_v.to_string(),
                variant: variant_v.to_string(),
                miou,
            });
        }
    }
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join(ABLATION_FILE), ablation_table(&rows, &seeds))?;
    Ok(rows)
}

/// Early-stage purity: in the first quarter of training, how often the
/// super-point pseudo-labels are at least as accurate as the point-wise
/// ones (epochs where both are defined).
#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub epochs_considered: usize,
    pub sp_at_least_pw: usize,
    pub rows: Vec<(usize, f64, f64)>,
}

impl PurityReport {
    pub fn from_history(history: &[EpochMetrics]) -> Self {
        let quarter = (history.len() / 4).max(1).min(history.len());
        let rows: Vec<(usize, f64, f64)> = history[..quarter]
            .iter()
            .filter_map(|m| Some((m.epoch, m.pl_accuracy?, m.sp_pl_accuracy?)))
            .collect();
        Self {
            epochs_considered: rows.len(),
            sp_at_least_pw: rows.iter().filter(|(_, pw, sp)| sp >= pw).count(),
            rows,
        }
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.epochs_considered > 0).then(|| self.sp_at_least_pw as f64 / self.epochs_considered as f64)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("early-stage pseudo-label purity (first quarter)\nepoch\tpointwise\tsuperpoint\n");
        for (e, pw, sp) in &self.rows {
            s.push_str(&format!("{e}\t{pw:.4}\t{sp:.4}\n"));
        }
        match self.fraction() {
            Some(f) => s.push_str(&format!(
                "superpoint >= pointwise in {}/{} epochs ({:.1}%)\n",
                self.sp_at_least_pw,
                self.epochs_considered,
                f * 100.0
            )),
            None => s.push_str("no epoch with both masked accuracies defined\n"),
        }
        s
    }
}

/// Renders `report.txt` in `--out` from its metrics and ablation table.
pub fn cmd_report(c: &Common) -> Result<String> {
    let mut s = String::new();
    let metrics = c.out.join(METRICS_FILE);
    let ablation = c.out.join(ABLATION_FILE);
    if metrics.is_file() {
        let history = read_metrics(&metrics)?;
        s.push_str(&format!("epochs\t{}\n", history.len()));
        if let Some(v) = final_val_miou(&history) {
            s.push_str(&format!("final val mIoU\t{:.4}\n", v * 100.0));
        }
        let mut w_runs: Vec<(f64, usize)> = Vec::new();
        for m in &history {
            match w_runs.last_mut() {
                Some((w, n)) if *w == m.w => *n += 1,
                _ => w_runs.push((m.w, 1)),
            }
        }
        let sched: Vec<String> = w_runs.iter().map(|(w, n)| format!("{w:.4}x{n}")).collect();
        s.push_str(&format!("w schedule\t{}\n\n", sched.join(" ")));
        s.push_str(&PurityReport::from_history(&history).render());
    }
    if ablation.is_file() {
        if !s.is_empty() {
            s.push('\n');
        }
        s.push_str("ablation (final val mIoU, %)\n");
        s.push_str(&fs::read_to_string(&ablation)?);
    }
    if s.is_empty() {
        bail!("{} has neither {METRICS_FILE} nor {ABLATION_FILE}", c.out.display());
    }
    fs::write(c.out.join(REPORT_FILE), &s)?;
    Ok(s)
}
