//! Binary checkpoints: a `pointmatch-ckpt v1` line, a `dims ...` line with
//! the layer widths, then every parameter as a little-endian `f64` in layer
//! order (weights row-major, then biases).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::mlp::MlpParams;

pub const CHECKPOINT_MAGIC: &str = "pointmatch-ckpt v1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &MlpParams) -> Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    let dims: Vec<String> = params.dims().iter().map(ToString::to_string).collect();
    writeln!(w, "dims {}", dims.join(" "))?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<MlpParams> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(Error::parse(1, format!("expected {CHECKPOINT_MAGIC:?}")));
    }
    line.clear();
    r.read_line(&mut line)?;
    let dims: Vec<usize> = match line.trim_end().strip_prefix("dims ") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(2, format!("bad width {t:?}"))))
            .collect::<Result<_>>()?,
        None => return Err(Error::parse(2, "expected dims line")),
    };
    let mut params = MlpParams::zeros(&dims)?;
    let mut buf = [0u8; 8];
    for v in params.values_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(3, "truncated parameter block"))?;
        *v = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::parse(3, "trailing bytes after parameters"));
    }
    Ok(params)
}
