//! Versioned binary container for parameter vectors, Fisher diagonals, and
//! merged models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "IMMC" | u32 version | u8 kind | u32 n_layers | u32 layer sizes...
//! u64 seed | u32 task_id | u64 aux | 32-byte config digest
//! u8 method | u32 n_alphas | f64 alphas...        (merged models only)
//! u64 d | f64 values...
//! ```
//!
//! `aux` carries the Fisher sample count for fisher files and is zero
//! otherwise. Files are written to a temporary sibling and renamed into
//! place so a failed write never leaves a partial checkpoint behind.

use crate::error::{ImmError, Result};
use crate::merge::{MergeConfig, MergeMethod, MergedModel, DEFAULT_EPSILON};
use crate::mlp::{MlpSpec, ParameterVector};
use crate::posterior::FisherDiagonal;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"IMMC";
const VERSION: u32 = 1;

/// What a checkpoint file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentKind {
    Params,
    Fisher,
    Merged,
}

impl ContentKind {
    fn to_byte(self) -> u8 {
        match self {
            ContentKind::Params => 0,
            ContentKind::Fisher => 1,
            ContentKind::Merged => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ContentKind::Params),
            1 => Some(ContentKind::Fisher),
            2 => Some(ContentKind::Merged),
            _ => None,
        }
    }
}

/// Everything a checkpoint stores besides the raw value array.
#[derive(Debug, Clone)]
pub struct CheckpointHeader {
    pub kind: ContentKind,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub task_id: u32,
    /// Fisher sample count for fisher files, zero otherwise.
    pub aux: u64,
    pub config_digest: [u8; 32],
    /// Merge method and alphas, for merged models.
    pub merge: Option<(MergeMethod, Vec<f64>)>,
}

/// A loaded checkpoint: header plus the raw double array.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<f64>,
}

/// SHA-256 digest of a serializable config, recorded in headers so results
/// can name the exact configuration that produced them.
pub fn config_digest<T: serde::Serialize>(config: &T) -> [u8; 32] {
    let json = serde_json::to_vec(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&json);
    hasher.finalize().into()
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> ImmError {
    ImmError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes a checkpoint atomically (temporary file + rename).
pub fn save(path: impl AsRef<Path>, header: &CheckpointHeader, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp-write");
    let result = write_to(&tmp, path, header, values);
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
        return result;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_to(tmp: &Path, path: &Path, header: &CheckpointHeader, values: &[f64]) -> Result<()> {
    {
        let mut w = BufWriter::new(File::create(tmp)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_all(&[header.kind.to_byte()])?;
        w.write_u32::<LittleEndian>(header.layer_sizes.len() as u32)?;
        for &s in &header.layer_sizes {
            w.write_u32::<LittleEndian>(s as u32)?;
        }
        w.write_u64::<LittleEndian>(header.seed)?;
        w.write_u32::<LittleEndian>(header.task_id)?;
        w.write_u64::<LittleEndian>(header.aux)?;
        w.write_all(&header.config_digest)?;
        if header.kind == ContentKind::Merged {
            let (method, alphas) = header
                .merge
                .as_ref()
                .ok_or_else(|| ckpt_err(path, "merged checkpoint without merge info"))?;
            w.write_all(&[match method {
                MergeMethod::Mean => 0u8,
                MergeMethod::Mode => 1u8,
            }])?;
            w.write_u32::<LittleEndian>(alphas.len() as u32)?;
            for &a in alphas {
                w.write_f64::<LittleEndian>(a)?;
            }
        }
        w.write_u64::<LittleEndian>(values.len() as u64)?;
        for &v in values {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads and validates a checkpoint.
pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(ckpt_err(path, "bad magic"));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    if version != VERSION {
        return Err(ckpt_err(path, format!("unsupported version {version}")));
    }
    let mut kind_byte = [0u8; 1];
    r.read_exact(&mut kind_byte)
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    let kind = ContentKind::from_byte(kind_byte[0])
        .ok_or_else(|| ckpt_err(path, format!("unknown content kind {}", kind_byte[0])))?;
    let n_layers = r
        .read_u32::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))? as usize;
    let mut layer_sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_sizes.push(
            r.read_u32::<LittleEndian>()
                .map_err(|_| ckpt_err(path, "truncated header"))? as usize,
        );
    }
    let seed = r
        .read_u64::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    let task_id = r
        .read_u32::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    let aux = r
        .read_u64::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    let mut config_digest = [0u8; 32];
    r.read_exact(&mut config_digest)
        .map_err(|_| ckpt_err(path, "truncated header"))?;
    let merge = if kind == ContentKind::Merged {
        let mut method_byte = [0u8; 1];
        r.read_exact(&mut method_byte)
            .map_err(|_| ckpt_err(path, "truncated merge info"))?;
        let method = match method_byte[0] {
            0 => MergeMethod::Mean,
            1 => MergeMethod::Mode,
            other => return Err(ckpt_err(path, format!("unknown merge method {other}"))),
        };
        let k = r
            .read_u32::<LittleEndian>()
            .map_err(|_| ckpt_err(path, "truncated merge info"))? as usize;
        let mut alphas = Vec::with_capacity(k);
        for _ in 0..k {
            alphas.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|_| ckpt_err(path, "truncated merge info"))?,
            );
        }
        Some((method, alphas))
    } else {
        None
    };
    let d = r
        .read_u64::<LittleEndian>()
        .map_err(|_| ckpt_err(path, "truncated header"))? as usize;
    let spec = MlpSpec::new(layer_sizes.clone())
        .map_err(|e| ckpt_err(path, format!("invalid layer sizes: {e}")))?;
    if d != spec.param_count() {
        return Err(ckpt_err(
            path,
            format!(
                "value count {d} does not match layout size {}",
                spec.param_count()
            ),
        ));
    }
    let mut values = vec![0.0f64; d];
    r.read_f64_into::<LittleEndian>(&mut values)
        .map_err(|_| ckpt_err(path, "truncated value data"))?;
    Ok(Checkpoint {
        header: CheckpointHeader {
            kind,
            layer_sizes,
            seed,
            task_id,
            aux,
            config_digest,
            merge,
        },
        values,
    })
}

/// Convenience writer for a trained parameter vector.
pub fn save_params(
    path: impl AsRef<Path>,
    params: &ParameterVector,
    spec: &MlpSpec,
    seed: u64,
    task_id: u32,
    config_digest: [u8; 32],
) -> Result<()> {
    save(
        path,
        &CheckpointHeader {
            kind: ContentKind::Params,
            layer_sizes: spec.layer_sizes().to_vec(),
            seed,
            task_id,
            aux: 0,
            config_digest,
            merge: None,
        },
        params.values(),
    )
}

/// Convenience writer for a Fisher diagonal.
pub fn save_fisher(
    path: impl AsRef<Path>,
    fisher: &FisherDiagonal,
    spec: &MlpSpec,
    seed: u64,
    task_id: u32,
    config_digest: [u8; 32],
) -> Result<()> {
    save(
        path,
        &CheckpointHeader {
            kind: ContentKind::Fisher,
            layer_sizes: spec.layer_sizes().to_vec(),
            seed,
            task_id,
            aux: fisher.sample_count() as u64,
            config_digest,
            merge: None,
        },
        fisher.values(),
    )
}

/// Convenience writer for a merged model.
pub fn save_merged(
    path: impl AsRef<Path>,
    merged: &MergedModel,
    spec: &MlpSpec,
    seed: u64,
    config_digest: [u8; 32],
) -> Result<()> {
    save(
        path,
        &CheckpointHeader {
            kind: ContentKind::Merged,
            layer_sizes: spec.layer_sizes().to_vec(),
            seed,
            task_id: 0,
            aux: 0,
            config_digest,
            merge: Some((merged.method, merged.config.alphas.clone())),
        },
        merged.mean.values(),
    )
}

/// Interprets a loaded checkpoint as a parameter vector for `spec`.
pub fn params_from(ckpt: &Checkpoint, spec: &MlpSpec) -> Result<ParameterVector> {
    if ckpt.header.layer_sizes != spec.layer_sizes() {
        return Err(ImmError::ShapeMismatch(
            "checkpoint layer sizes do not match spec".into(),
        ));
    }
    ParameterVector::new(ckpt.values.clone(), spec)
}

/// Interprets a loaded checkpoint as a Fisher diagonal.
pub fn fisher_from(ckpt: &Checkpoint) -> Result<FisherDiagonal> {
    if ckpt.header.kind != ContentKind::Fisher {
        return Err(ImmError::Checkpoint {
            path: String::new(),
            reason: "checkpoint does not hold a Fisher diagonal".into(),
        });
    }
    FisherDiagonal::new(ckpt.values.clone(), ckpt.header.aux as usize)
}

/// Rebuilds a [`MergedModel`] facade from a merged checkpoint.
pub fn merged_from(ckpt: &Checkpoint, spec: &MlpSpec) -> Result<MergedModel> {
    let (method, alphas) = ckpt
        .header
        .merge
        .clone()
        .ok_or_else(|| ImmError::Checkpoint {
            path: String::new(),
            reason: "checkpoint does not hold a merged model".into(),
        })?;
    Ok(MergedModel {
        mean: params_from(ckpt, spec)?,
        variance_diag: None,
        method,
        config: MergeConfig::new(alphas, DEFAULT_EPSILON)?,
    })
}
