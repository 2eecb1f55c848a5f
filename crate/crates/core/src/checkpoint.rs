//! Binary checkpoints: a single-line JSON header terminated by `\n`, then
//! little-endian IEEE-754 `f64` arrays in the order the header lists.
//!
//! VAE files store `w1, b1, …, w5, b5` followed by the Adam first and second
//! moments in the same block order. Factor files store `P` then `Q`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::write_file;
use crate::error::{Error, Result};
use crate::lfa::FactorMatrices;
use crate::vae::{AdamState, MuActivation, VaeGradients, VaeParams, BLOCK_NAMES, LOGVAR_MAX, LOGVAR_MIN};

pub const VAE_FORMAT: &str = "vaelf-vae";
pub const LFA_FORMAT: &str = "vaelf-lfa";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeHeader {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub mu_activation: MuActivation,
    pub seed: u64,
    pub step: u64,
    pub logvar_clamp: [f64; 2],
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeCheckpoint {
    pub params: VaeParams,
    pub adam: AdamState,
    pub seed: u64,
}

fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f64s(body: &[u8], offset: &mut usize, len: usize) -> Vec<f64> {
    let bytes = &body[*offset..*offset + 8 * len];
    *offset += 8 * len;
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

fn check_format(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Checkpoint(format!("format {format:?}, expected {expected:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn check_body(arrays: &[ArrayEntry], body: &[u8]) -> Result<()> {
    let expected: usize = arrays.iter().map(|a| a.len * 8).sum();
    if body.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, header declares {expected}",
            body.len()
        )));
    }
    Ok(())
}

pub fn encode_vae(p: &VaeParams, adam: &AdamState, seed: u64) -> Result<Vec<u8>> {
    p.check_shapes()?;
    let mut arrays = Vec::with_capacity(30);
    for prefix in ["", "adam_m.", "adam_v."] {
        for (name, block) in BLOCK_NAMES.iter().zip(p.blocks()) {
            arrays.push(ArrayEntry {
                name: format!("{prefix}{name}"),
                len: block.len(),
            });
        }
    }
    let header = VaeHeader {
        format: VAE_FORMAT.into(),
        version: FORMAT_VERSION,
        input_dim: p.input_dim,
        hidden_dim: p.hidden_dim,
        latent_dim: p.latent_dim,
        mu_activation: p.mu_activation,
        seed,
        step: adam.step,
        logvar_clamp: [LOGVAR_MIN, LOGVAR_MAX],
        arrays,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for blocks in [p.blocks(), adam.m.blocks(), adam.v.blocks()] {
        for b in blocks {
            push_f64s(&mut out, b);
        }
    }
    Ok(out)
}

pub fn decode_vae(bytes: &[u8]) -> Result<VaeCheckpoint> {
    let (head, body) = split_header(bytes)?;
    let header: VaeHeader = serde_json::from_slice(head)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    check_format(&header.format, header.version, VAE_FORMAT)?;
    if header.logvar_clamp != [LOGVAR_MIN, LOGVAR_MAX] {
        return Err(Error::Checkpoint(format!(
            "log-variance clamp {:?} differs from [{LOGVAR_MIN}, {LOGVAR_MAX}]",
            header.logvar_clamp
        )));
    }
    if header.latent_dim == 0 || header.hidden_dim == 0 || header.latent_dim >= header.input_dim {
        return Err(Error::Checkpoint("invalid dimensions in header".into()));
    }
    let mut params = VaeParams::zeros(header.input_dim, header.hidden_dim, header.latent_dim);
    params.mu_activation = header.mu_activation;
    let mut adam = AdamState::new(&params);
    adam.step = header.step;

    let expected: Vec<(String, usize)> = ["", "adam_m.", "adam_v."]
        .iter()
        .flat_map(|prefix| {
            BLOCK_NAMES
                .iter()
                .zip(params.blocks())
                .map(move |(n, b)| (format!("{prefix}{n}"), b.len()))
        })
        .collect();
    let declared: Vec<(String, usize)> = header.arrays.iter().map(|a| (a.name.clone(), a.len)).collect();
    if declared != expected {
        return Err(Error::Checkpoint(
            "array list does not match the declared dimensions".into(),
        ));
    }
    check_body(&header.arrays, body)?;

    let mut offset = 0;
    let targets: [&mut VaeGradients; 2] = [&mut adam.m, &mut adam.v];
    for block in params.blocks_mut() {
        let len = block.len();
        block.copy_from_slice(&read_f64s(body, &mut offset, len));
    }
    for state in targets {
        for block in state.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&read_f64s(body, &mut offset, len));
        }
    }
    Ok(VaeCheckpoint {
        params,
        adam,
        seed: header.seed,
    })
}

pub fn save_vae(path: &Path, p: &VaeParams, adam: &AdamState, seed: u64) -> Result<()> {
    write_file(path, &encode_vae(p, adam, seed)?)
}

pub fn load_vae(path: &Path) -> Result<VaeCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_vae(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfaHeader {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub n_days: usize,
    pub m_slots: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub seed: u64,
    pub arrays: Vec<ArrayEntry>,
}

pub fn encode_lfa(f: &FactorMatrices) -> Result<Vec<u8>> {
    let header = LfaHeader {
        format: LFA_FORMAT.into(),
        version: FORMAT_VERSION,
        k: f.k,
        n_days: f.n_days,
        m_slots: f.m_slots,
        rows: f.rows(),
        cols: f.cols(),
        rank: f.rank,
        seed: f.seed,
        arrays: vec![
            ArrayEntry {
                name: "P".into(),
                len: f.p.len(),
            },
            ArrayEntry {
                name: "Q".into(),
                len: f.q.len(),
            },
        ],
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f64s(&mut out, &f.p);
    push_f64s(&mut out, &f.q);
    Ok(out)
}

pub fn decode_lfa(bytes: &[u8]) -> Result<FactorMatrices> {
    let (head, body) = split_header(bytes)?;
    let h: LfaHeader = serde_json::from_slice(head)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    check_format(&h.format, h.version, LFA_FORMAT)?;
    if h.rank == 0 || h.rows != h.k * h.n_days || h.cols != h.m_slots {
        return Err(Error::Checkpoint("inconsistent factor dimensions".into()));
    }
    let names: Vec<(&str, usize)> = h.arrays.iter().map(|a| (a.name.as_str(), a.len)).collect();
    if names != [("P", h.rows * h.rank), ("Q", h.cols * h.rank)] {
        return Err(Error::Checkpoint("array list does not match the declared dimensions".into()));
    }
    check_body(&h.arrays, body)?;
    let mut offset = 0;
    let p = read_f64s(body, &mut offset, h.rows * h.rank);
    let q = read_f64s(body, &mut offset, h.cols * h.rank);
    Ok(FactorMatrices {
        k: h.k,
        n_days: h.n_days,
        m_slots: h.m_slots,
        rank: h.rank,
        seed: h.seed,
        p,
        q,
    })
}

pub fn save_lfa(path: &Path, f: &FactorMatrices) -> Result<()> {
    write_file(path, &encode_lfa(f)?)
}

pub fn load_lfa(path: &Path) -> Result<FactorMatrices> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_lfa(&bytes)
}
