//! On-disk dataset layout.
//!
//! ```text
//! DIR/manifest.txt
//! DIR/train/scene_0000.txt            scene
//! DIR/train/scene_0000.inst.txt       instance ids
//! DIR/train/scene_0000.weak-oneclick-s7.txt   weak labels, scheme and seed
//! DIR/train/scene_0000.sp-<key>.txt   super-point cache
//! DIR/val/scene_0000.txt
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pointmatch::dataset::{weak_seed, DatasetSpec, Split};
use pointmatch::io::{
    read_instances, read_manifest, read_partition, read_scene, read_weak, write_instances, write_manifest,
    write_partition, write_scene, write_weak, ManifestEntry,
};
use pointmatch::superpoint::{build_superpoints, ClusterConfig};
use pointmatch::synth::{generate_scene, sample_weak_labels, WeakScheme, WeakVariant};
use pointmatch::train::{Dataset, TrainScene};
use pointmatch::types::{PointCloud, SuperPointPartition, WeakLabels};

use crate::config::cluster_key;

pub const MANIFEST_FILE: &str = "manifest.txt";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("writing {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("reading {}", path.display()))?,
    ))
}

/// Scheme string made safe for file names: `ratio:0.01` -> `ratio-0.01`.
pub fn scheme_tag(variant: &WeakVariant) -> String {
    variant.to_string().replace(':', "-")
}

fn sibling(scene: &Path, suffix: &str) -> PathBuf {
    let stem = scene.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    scene.with_file_name(format!("{stem}.{suffix}.txt"))
}

pub fn instance_path(scene: &Path) -> PathBuf {
    sibling(scene, "inst")
}

pub fn weak_path(scene: &Path, variant: &WeakVariant, root: u64) -> PathBuf {
    sibling(scene, &format!("weak-{}-s{root}", scheme_tag(variant)))
}

pub fn partition_path(scene: &Path, cfg: &ClusterConfig) -> PathBuf {
    sibling(scene, &format!("sp-{}", cluster_key(cfg)))
}

/// Writes every scene, its instance ids and the manifest. Returns the
/// number of scene files.
pub fn generate(spec: &DatasetSpec, root: u64, dir: &Path) -> Result<usize> {
    spec.validate()?;
    let mut entries = Vec::new();
    for split in [Split::Train, Split::Val] {
        for i in 0..spec.count(split) {
            let scene_spec = spec.scene_at(root, split, i);
            let scene = generate_scene(&scene_spec)?;
            let rel = format!("{}/scene_{i:04}.txt", split.name());
            let path = dir.join(&rel);
            write_scene(create(&path)?, &scene.cloud)?;
            write_instances(create(&instance_path(&path))?, &scene.instance_ids)?;
            entries.push(ManifestEntry {
                file: rel,
                num_points: scene.cloud.len(),
                num_classes: scene.cloud.num_classes(),
                seed: scene_spec.seed,
            });
        }
    }
    write_manifest(create(&dir.join(MANIFEST_FILE))?, &entries)?;
    Ok(entries.len())
}

pub fn exists(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

pub fn manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    read_manifest(open(&path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_scene(dir: &Path, entry: &ManifestEntry) -> Result<PointCloud> {
    let path = dir.join(&entry.file);
    let cloud = read_scene(open(&path)?).with_context(|| format!("in {}", path.display()))?;
    if cloud.len() != entry.num_points || cloud.num_classes() != entry.num_classes {
        bail!("{} disagrees with the manifest", path.display());
    }
    Ok(cloud)
}

pub fn split_entries(entries: &[ManifestEntry], split: Split) -> Vec<&ManifestEntry> {
    entries.iter().filter(|e| e.split() == split.name()).collect()
}

/// Loads cached weak labels or samples and caches them.
pub fn weak_labels(dir: &Path, entry: &ManifestEntry, index: usize, variant: WeakVariant, root: u64) -> Result<WeakLabels> {
    let scene = dir.join(&entry.file);
    let path = weak_path(&scene, &variant, root);
    if path.is_file() {
        return read_weak(open(&path)?).with_context(|| format!("in {}", path.display()));
    }
    let cloud = load_scene(dir, entry)?;
    let ids = read_instances(open(&instance_path(&scene))?)?;
    let scheme = WeakScheme {
        variant,
        seed: weak_seed(root, index),
    };
    let weak = sample_weak_labels(&cloud, Some(&ids), &scheme)?;
    write_weak(create(&path)?, &weak)?;
    Ok(weak)
}

/// Loads a cached partition or builds and caches it.
pub fn partition(dir: &Path, entry: &ManifestEntry, cfg: &ClusterConfig) -> Result<(SuperPointPartition, bool)> {
    let path = partition_path(&dir.join(&entry.file), cfg);
    if path.is_file() {
        let part = read_partition(open(&path)?).with_context(|| format!("in {}", path.display()))?;
        return Ok((part, false));
    }
    let part = build_superpoints(&load_scene(dir, entry)?, cfg)?;
    write_partition(create(&path)?, &part)?;
    Ok((part, true))
}

/// Everything training needs; builds missing caches on the way.
pub fn load_dataset(dir: &Path, variant: WeakVariant, cluster: &ClusterConfig, root: u64) -> Result<Dataset> {
    let entries = manifest(dir)?;
    let mut data = Dataset::default();
    for (i, e) in split_entries(&entries, Split::Train).into_iter().enumerate() {
        data.train.push(TrainScene {
            cloud: load_scene(dir, e)?,
            weak: weak_labels(dir, e, i, variant, root)?,
            partition: partition(dir, e, cluster)?.0,
        });
    }
    data.val = load_split(dir, &entries, Split::Val)?;
    if data.train.is_empty() {
        bail!("{} has no training scenes", dir.display());
    }
    Ok(data)
}

pub fn load_split(dir: &Path, entries: &[ManifestEntry], split: Split) -> Result<Vec<PointCloud>> {
    split_entries(entries, split)
        .into_iter()
        .map(|e| load_scene(dir, e))
        .collect()
}
