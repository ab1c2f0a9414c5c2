//! Line-oriented text formats for scenes, weak labels, partitions, instance
//! ids and dataset manifests.
//!
//! Class indices are 0-based in every file. Scene labels use `-1` for
//! "unknown" when the cloud carries no ground truth. Reals are written with
//! 9 significant digits.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::types::{PointCloud, SuperPointPartition, WeakLabels};

pub const SCENE_MAGIC: &str = "pointmatch-scene v1";
pub const WEAK_MAGIC: &str = "pointmatch-weak v1";
pub const PARTITION_MAGIC: &str = "pointmatch-sp v1";
pub const INSTANCE_MAGIC: &str = "pointmatch-inst v1";
pub const MANIFEST_MAGIC: &str = "manifest v1";

/// Rounds to 9 significant digits and prints the shortest string that
/// parses back to the rounded value.
pub fn fmt_real(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Self {
            inner: r.lines(),
            line: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            Some(l) => {
                self.line += 1;
                Ok(Some(l?))
            }
            None => Ok(None),
        }
    }

    fn expect_line(&mut self, what: &str) -> Result<String> {
        self.next_line()?
            .ok_or_else(|| Error::parse(self.line + 1, format!("unexpected end of file, expected {what}")))
    }

    /// Header `MAGIC a b ...`; returns the integer fields.
    fn header(&mut self, magic: &str, fields: usize) -> Result<Vec<usize>> {
        let line = self.expect_line(magic)?;
        let rest = line
            .strip_prefix(magic)
            .ok_or_else(|| Error::parse(self.line, format!("expected header {magic:?}")))?;
        let values = rest
            .split_whitespace()
            .map(|t| self.parse_token::<usize>(t))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != fields {
            return Err(Error::parse(
                self.line,
                format!("header {magic:?} needs {fields} fields, got {}", values.len()),
            ));
        }
        Ok(values)
    }

    fn parse_token<T: std::str::FromStr>(&self, t: &str) -> Result<T> {
        t.parse().map_err(|_| Error::parse(self.line, format!("bad value {t:?}")))
    }

    fn fields(&mut self, n: usize, what: &str) -> Result<Vec<String>> {
        let line = self.expect_line(what)?;
        let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if toks.len() != n {
            return Err(Error::parse(
                self.line,
                format!("expected {n} fields, got {}", toks.len()),
            ));
        }
        Ok(toks)
    }

    fn finish(&mut self) -> Result<()> {
        while let Some(l) = self.next_line()? {
            if !l.trim().is_empty() {
                return Err(Error::parse(self.line, "trailing content"));
            }
        }
        Ok(())
    }
}

pub fn write_scene<W: Write>(mut w: W, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "{SCENE_MAGIC} {} {}", cloud.len(), cloud.num_classes())?;
    let labels = cloud.gt_labels();
    for i in 0..cloud.len() {
        let [x, y, z] = cloud.positions()[i];
        let [r, g, b] = cloud.colors()[i];
        let label = labels.map_or(-1, |l| l[i] as i64);
        writeln!(
            w,
            "{} {} {} {} {} {} {label}",
            fmt_real(x),
            fmt_real(y),
            fmt_real(z),
            fmt_real(r),
            fmt_real(g),
            fmt_real(b)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Labels must be all known or all `-1`.
pub fn read_scene<R: BufRead>(r: R) -> Result<PointCloud> {
    let mut lines = Lines::new(r);
    let h = lines.header(SCENE_MAGIC, 2)?;
    let (n, c) = (h[0], h[1]);
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut unknown = 0usize;
    for _ in 0..n {
        let t = lines.fields(7, "a point line")?;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = lines.parse_token(&t[k])?;
        }
        let label: i64 = lines.parse_token(&t[6])?;
        match label {
            -1 => unknown += 1,
            l if l >= 0 && (l as usize) < c => labels.push(l as usize),
            l => return Err(Error::parse(lines.line, format!("label {l} out of range for {c} classes"))),
        }
        positions.push([v[0], v[1], v[2]]);
        colors.push([v[3], v[4], v[5]]);
    }
    lines.finish()?;
    let gt = match unknown {
        0 => Some(labels),
        u if u == n => None,
        _ => return Err(Error::parse(0, "scene mixes known and unknown labels")),
    };
    PointCloud::new(positions, colors, gt, c)
}

pub fn write_weak<W: Write>(mut w: W, weak: &WeakLabels) -> Result<()> {
    writeln!(w, "{WEAK_MAGIC} {}", weak.len())?;
    for (i, c) in weak.iter() {
        writeln!(w, "{i} {c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weak<R: BufRead>(r: R) -> Result<WeakLabels> {
    let mut lines = Lines::new(r);
    let l = lines.header(WEAK_MAGIC, 1)?[0];
    let mut pairs = Vec::with_capacity(l);
    for _ in 0..l {
        let t = lines.fields(2, "an index/class line")?;
        pairs.push((lines.parse_token(&t[0])?, lines.parse_token(&t[1])?));
    }
    lines.finish()?;
    WeakLabels::from_pairs(pairs)
}

pub fn write_partition<W: Write>(mut w: W, part: &SuperPointPartition) -> Result<()> {
    writeln!(w, "{PARTITION_MAGIC} {} {}", part.num_points(), part.num_groups())?;
    for g in part.group_of() {
        writeln!(w, "{g}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partition<R: BufRead>(r: R) -> Result<SuperPointPartition> {
    let mut lines = Lines::new(r);
    let h = lines.header(PARTITION_MAGIC, 2)?;
    let (n, m) = (h[0], h[1]);
    let mut group_of = Vec::with_capacity(n);
    for _ in 0..n {
        let t = lines.fields(1, "a group id")?;
        group_of.push(lines.parse_token(&t[0])?);
    }
    lines.finish()?;
    SuperPointPartition::new(group_of, m)
}

pub fn write_instances<W: Write>(mut w: W, ids: &[usize]) -> Result<()> {
    writeln!(w, "{INSTANCE_MAGIC} {}", ids.len())?;
    for id in ids {
        writeln!(w, "{id}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances<R: BufRead>(r: R) -> Result<Vec<usize>> {
    let mut lines = Lines::new(r);
    let n = lines.header(INSTANCE_MAGIC, 1)?[0];
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let t = lines.fields(1, "an instance id")?;
        ids.push(lines.parse_token(&t[0])?);
    }
    lines.finish()?;
    Ok(ids)
}

/// One manifest row: a scene file path relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub num_points: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl ManifestEntry {
    /// `train` or `val`, taken from the first path component.
    pub fn split(&self) -> &str {
        self.file.split('/').next().unwrap_or("")
    }
}

pub fn write_manifest<W: Write>(mut w: W, entries: &[ManifestEntry]) -> Result<()> {
    writeln!(w, "{MANIFEST_MAGIC}")?;
    for e in entries {
        if e.file.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("manifest path {:?} contains whitespace", e.file)));
        }
        writeln!(w, "{} {} {} {}", e.file, e.num_points, e.num_classes, e.seed)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ManifestEntry>> {
    let mut lines = Lines::new(r);
    lines.header(MANIFEST_MAGIC, 0)?;
    let mut entries = Vec::new();
    while let Some(line) = lines.next_line()? {
        if line.trim().is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(Error::parse(lines.line, format!("expected 4 fields, got {}", t.len())));
        }
        entries.push(ManifestEntry {
            file: t[0].to_owned(),
            num_points: lines.parse_token(t[1])?,
            num_classes: lines.parse_token(t[2])?,
            seed: lines.parse_token(t[3])?,
        });
    }
    Ok(entries)
}
