//! Dataset and latent CSV files.
//!
//! Dataset format: header `t,noisy,clean`, one sample per row, decimal
//! text; one file per signal, the file stem is the signal id. Latent
//! exports use the header `pc1,pc2,label`. All writes go through a
//! temp-file-then-rename so readers never observe partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pca::project_top2;
use crate::signal::SignalPair;

/// Write `pair` as `t,noisy,clean` rows to `path`.
pub fn save_csv(pair: &SignalPair, path: &Path) -> Result<()> {
    let mut text = String::from("t,noisy,clean\n");
    for (n, (noisy, clean)) in pair.noisy.iter().zip(&pair.clean).enumerate() {
        let t = n as f64 / pair.sample_rate_hz;
        text.push_str(&format!("{t},{noisy},{clean}\n"));
    }
    atomic_write(path, text.as_bytes())
}

/// Save every pair into `dir` as `<id>.csv`.
pub fn save_pairs(pairs: &[SignalPair], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for pair in pairs {
        save_csv(pair, &dir.join(format!("{}.csv", pair.id)))?;
    }
    Ok(())
}

/// Parse one dataset CSV; the signal id is the file stem and the sample
/// rate is recovered from the `t` column spacing.
pub fn load_csv(path: &Path) -> Result<SignalPair> {
    let content = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut lines = content.lines().enumerate();

    let Some((_, header)) = lines.next() else {
        return Err(Error::Data(format!("{}: empty file", path.display())));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "noisy", "clean"] {
        return Err(Error::Data(format!(
            "{}: line 1: expected header 't,noisy,clean', got '{header}'",
            path.display()
        )));
    }

    let mut times = Vec::new();
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!(
                "{}: line {lineno}: expected 3 fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let mut parse = |field: &str, name: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{}: line {lineno}: non-numeric {name} value '{field}'",
                    path.display()
                ))
            })
        };
        times.push(parse(fields[0], "t")?);
        noisy.push(parse(fields[1], "noisy")?);
        clean.push(parse(fields[2], "clean")?);
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".into());
    if clean.is_empty() {
        return Err(Error::Data(format!("{}: no samples after the header", path.display())));
    }
    let sample_rate = if times.len() >= 2 && times[1] > times[0] {
        1.0 / (times[1] - times[0])
    } else {
        1.0
    };
    SignalPair::new(id, sample_rate, clean, noisy)
}

/// Load every `*.csv` in `dir`, sorted by file name.
pub fn load_csv_dir(dir: &Path) -> Result<Vec<SignalPair>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no CSV files", dir.display())));
    }
    files.iter().map(|p| load_csv(p)).collect()
}

/// Label attached to each exported latent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentLabel {
    Clean,
    Noisy,
}

impl LatentLabel {
    fn as_str(self) -> &'static str {
        match self {
            LatentLabel::Clean => "clean",
            LatentLabel::Noisy => "noisy",
        }
    }
}

/// Project flattened latents to 2D and write `pc1,pc2,label` rows.
pub fn export_latents_2d(latents: &[(Vec<f64>, LatentLabel)], path: &Path) -> Result<()> {
    let rows: Vec<Vec<f64>> = latents.iter().map(|(v, _)| v.clone()).collect();
    let projected = project_top2(&rows)?;
    let mut text = String::from("pc1,pc2,label\n");
    for ((pc1, pc2), (_, label)) in projected.iter().zip(latents) {
        text.push_str(&format!("{pc1},{pc2},{}\n", label.as_str()));
    }
    atomic_write(path, text.as_bytes())
}

/// Write via a sibling temp file and rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
