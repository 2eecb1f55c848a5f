//! Channel CSV files and the dataset manifest.
//!
//! Each channel is one headerless CSV with `N` rows of `M` values. A missing
//! entry is an empty cell or the literal `NaN`. The manifest is a JSON object
//! listing channel files (relative to the manifest's directory) and the
//! expected grid shape.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{build_tensor, ChannelGrid, HdiTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub channels: Vec<PathBuf>,
    pub n_days: usize,
    pub m_slots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn read_channel_csv(path: &Path) -> Result<ChannelGrid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut grid = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| parse_cell(cell).map_err(|msg| {
                Error::parse(path, format!("row {}, column {}: {msg}", row_idx + 1, col + 1))
            }))
            .collect::<Result<Vec<_>>>()?;
        grid.push(row);
    }
    Ok(grid)
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "NaN" {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| format!("cannot parse {cell:?}"))?;
    if v.is_finite() {
        Ok(Some(v))
    } else {
        Err(format!("non-finite value {cell:?}"))
    }
}

/// Renders one channel of `t` as CSV text with blanks at unobserved cells.
pub fn channel_csv(t: &HdiTensor, channel: usize) -> String {
    let mut out = String::new();
    for n in 0..t.n_days() {
        for m in 0..t.m_slots() {
            if m > 0 {
                out.push(',');
            }
            if let Some(v) = t.get(crate::data::Position::new(channel, n, m)) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Reads every channel named in the manifest and checks the grid shape.
pub fn load_manifest(path: &Path) -> Result<(Manifest, HdiTensor)> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut grids = Vec::with_capacity(manifest.channels.len());
    for rel in &manifest.channels {
        let file = base.join(rel);
        let grid = read_channel_csv(&file)?;
        if grid.len() != manifest.n_days {
            return Err(Error::DimensionMismatch(format!(
                "{}: {} rows, manifest says n_days = {}",
                file.display(),
                grid.len(),
                manifest.n_days
            )));
        }
        if let Some((i, row)) = grid.iter().enumerate().find(|(_, r)| r.len() != manifest.m_slots) {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} columns, manifest says m_slots = {}",
                file.display(),
                i + 1,
                row.len(),
                manifest.m_slots
            )));
        }
        grids.push(grid);
    }
    let tensor = build_tensor(&grids)?;
    Ok((manifest, tensor))
}

/// Writes `channel_<c>.csv` files and `manifest.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    t: &HdiTensor,
    density: Option<f64>,
    seed: Option<u64>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut channels = Vec::with_capacity(t.k());
    for c in 0..t.k() {
        let name = PathBuf::from(format!("channel_{c}.csv"));
        write_file(&dir.join(&name), channel_csv(t, c).as_bytes())?;
        channels.push(name);
    }
    let manifest = Manifest {
        channels,
        n_days: t.n_days(),
        m_slots: t.m_slots(),
        density,
        seed,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}
