//! Versioned checkpoint container.
//!
//! Layout: one text header line
//!
//! ```text
//! aden-checkpoint <version> <json meta>
//! ```
//!
//! followed by named blocks, each a text line
//! `block <kind> <name> <batch> <channels> <len>` plus `numel * 4`
//! bytes of little-endian f32 values and a trailing newline, and a
//! final `end` line. Block kinds are `param`, `opt_gsq` and `opt_usq`
//! (the optimizer accumulators). Loading rejects any version other
//! than the current one.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::model::{build_model, ModelConfig, ModelParams};
use crate::optim::{AdaDelta, AdaDeltaState};
use crate::tensor::{Shape, Tensor};

const FORMAT: &str = "aden-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    optimizer: crate::optim::AdaDeltaConfig,
}

fn push_block(out: &mut Vec<u8>, kind: &str, name: &str, shape: Shape, values: &[f64]) {
    out.extend_from_slice(
        format!("block {kind} {name} {} {} {}\n", shape.batch, shape.channels, shape.len).as_bytes(),
    );
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.push(b'\n');
}

/// Serialize parameters and optimizer state to `path`.
pub fn save(path: &Path, params: &ModelParams, opt: &AdaDelta) -> Result<()> {
    let meta = Meta { model: params.config().clone(), optimizer: opt.config() };
    let header = serde_json::to_string(&meta)
        .map_err(|e| Error::Checkpoint(format!("cannot serialize config: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(format!("{FORMAT} {VERSION} {header}\n").as_bytes());
    for (name, tensor) in params.tensors() {
        push_block(&mut out, "param", name, tensor.shape(), tensor.data());
    }
    for (name, state) in opt.states() {
        let shape = match params.tensor(name) {
            Some(t) => t.shape(),
            None => continue,
        };
        push_block(&mut out, "opt_gsq", name, shape, &state.acc_grad_sq);
        push_block(&mut out, "opt_usq", name, shape, &state.acc_update_sq);
    }
    out.extend_from_slice(b"end\n");
    atomic_write(path, &out)
}

fn read_values(reader: &mut impl Read, n: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4 + 1];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: truncated block: {e}", path.display())))?;
    if bytes[n * 4] != b'\n' {
        return Err(Error::Checkpoint(format!(
            "{}: malformed block terminator",
            path.display()
        )));
    }
    Ok(bytes[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Load parameters and optimizer state saved by [`save`].
pub fn load(path: &Path) -> Result<(ModelParams, AdaDelta)> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);

    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let header = header.trim_end_matches('\n');
    let mut parts = header.splitn(3, ' ');
    let (magic, version, meta_json) = (
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default(),
    );
    if magic != FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: not a {FORMAT} file (found '{magic}')",
            path.display()
        )));
    }
    if version != VERSION.to_string() {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let meta: Meta = serde_json::from_str(meta_json)
        .map_err(|e| Error::Checkpoint(format!("{}: bad config header: {e}", path.display())))?;

    // Build the architecture to fix the expected name and shape set,
    // then overwrite every tensor from the file.
    let mut params = build_model(&meta.model, 0)?;
    let mut seen: std::collections::BTreeSet<String> = Default::default();
    let mut opt = AdaDelta::new(meta.optimizer);
    opt.config().validate()?;
    let mut gsq: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    let mut usq: std::collections::BTreeMap<String, Vec<f64>> = Default::default();

    loop {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if n == 0 {
            return Err(Error::Checkpoint(format!(
                "{}: missing end marker",
                path.display()
            )));
        }
        let line = line.trim_end_matches('\n');
        if line == "end" {
            break;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 6 || fields[0] != "block" {
            return Err(Error::Checkpoint(format!(
                "{}: malformed block line '{line}'",
                path.display()
            )));
        }
        let (kind, name) = (fields[1], fields[2]);
        let dims: Vec<usize> = fields[3..6]
            .iter()
            .map(|f| {
                f.parse::<usize>().map_err(|_| {
                    Error::Checkpoint(format!("{}: bad dimension '{f}'", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        let shape = Shape::new(dims[0], dims[1], dims[2]);
        let expected = params
            .tensor(name)
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "{}: block '{name}' is not part of the configured architecture",
                    path.display()
                ))
            })?
            .shape();
        if expected != shape {
            return Err(Error::Checkpoint(format!(
                "{}: block '{name}' has shape {shape}, architecture expects {expected}",
                path.display()
            )));
        }
        let values = read_values(&mut reader, shape.numel(), path)?;
        match kind {
            "param" => {
                params.set_tensor(name, Tensor::from_vec(shape, values)?)?;
                seen.insert(name.to_string());
            }
            "opt_gsq" => {
                gsq.insert(name.to_string(), values);
            }
            "opt_usq" => {
                usq.insert(name.to_string(), values);
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "{}: unknown block kind '{other}'",
                    path.display()
                )));
            }
        }
    }

    let missing: Vec<&str> = params.names().filter(|n| !seen.contains(*n)).collect();
    if !missing.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{}: missing parameter blocks: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    for (name, g) in gsq {
        let u = usq.remove(&name).unwrap_or_else(|| vec![0.0; g.len()]);
        opt.insert_state(name, AdaDeltaState { acc_grad_sq: g, acc_update_sq: u });
    }
    Ok((params, opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::AdaDeltaConfig;
    use crate::training::{train_step, TrainBatch};

    fn small_params() -> (ModelParams, AdaDelta) {
        let cfg = ModelConfig {
            feature_channels: 3,
            window_len: 6,
            ..ModelConfig::default()
        };
        let mut params = build_model(&cfg, 17).unwrap();
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let windows: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
            .map(|i| {
                let c: Vec<f64> = (0..6).map(|j| ((i * 6 + j) as f64 * 0.4).sin()).collect();
                let n: Vec<f64> = c.iter().map(|v| v + 0.1).collect();
                (c, n)
            })
            .collect();
        let batch = TrainBatch::from_windows(&windows).unwrap();
        train_step(&mut params, &mut opt, &batch, 1).unwrap();
        (params, opt)
    }

    #[test]
    fn round_trip_preserves_f32_values_and_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (params, opt) = small_params();
        save(&path, &params, &opt).unwrap();
        let (loaded, loaded_opt) = load(&path).unwrap();

        assert_eq!(loaded.config(), params.config());
        for (name, tensor) in params.tensors() {
            let got = loaded.tensor(name).unwrap();
            for (a, b) in tensor.data().iter().zip(got.data()) {
                assert_eq!(*a as f32, *b as f32, "{name}");
                assert_eq!(*b, (*a as f32) as f64, "{name} not a clean f32 widening");
            }
        }
        assert_eq!(loaded_opt.config(), opt.config());
        for (name, state) in opt.states() {
            let got = loaded_opt.state(name).unwrap();
            for (a, b) in state.acc_grad_sq.iter().zip(&got.acc_grad_sq) {
                assert_eq!((*a as f32) as f64, *b);
            }
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (params, opt) = small_params();
        save(&path, &params, &opt).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        let header_end = bytes.iter().position(|b| *b == b'\n').unwrap();
        let header = String::from_utf8_lossy(&bytes[..header_end]).replace("aden-checkpoint 1", "aden-checkpoint 2");
        let mut patched = header.into_bytes();
        patched.extend_from_slice(&bytes[header_end..]);
        std::mem::swap(&mut bytes, &mut patched);
        fs::write(&path, bytes).unwrap();

        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn garbage_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, "something else\n").unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));

        let (params, opt) = small_params();
        save(&path, &params, &opt).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
