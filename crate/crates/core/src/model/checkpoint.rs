//! Binary checkpoint format.
//!
//! Layout (little endian): magic `HQCM`, `u32` version, `u32` record count,
//! then per record: `u32` name length, UTF-8 name, `u8` dtype (0 f32, 1 f64),
//! `u32` rank, `rank × u32` dims, payload.

use std::path::Path;

use super::{HybridModel, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::qsim::QuantumLayerConfig;
use crate::tensor::{Real, Tensor};

const MAGIC: [u8; 4] = *b"HQCM";
const VERSION: u32 = 1;
const CONFIG_RECORD: &str = "config";

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    /// 0 = f32, 1 = f64.
    pub dtype: u8,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl TensorRecord {
    pub fn from_tensor<T: Real>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        TensorRecord {
            name: name.into(),
            dtype: T::DTYPE_TAG,
            shape: t.shape().to_vec(),
            values: t.data().iter().map(|v| v.as_f64()).collect(),
        }
    }
}

pub fn encode_records(records: &[TensorRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.dtype);
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &r.values {
            if r.dtype == 0 {
                (v as f32).write_le(&mut out);
            } else {
                v.write_le(&mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let count = r.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = r.u32(&format!("record {i} name length"))? as usize;
        let name = std::str::from_utf8(r.take(len, &format!("record {i} name"))?)
            .map_err(|_| Error::TensorMismatch {
                name: format!("#{i}"),
                detail: "name is not UTF-8".into(),
            })?
            .to_string();
        let dtype = r.take(1, &name)?[0];
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => {
                return Err(Error::TensorMismatch {
                    name,
                    detail: format!("unknown dtype tag {other}"),
                })
            }
        };
        let rank = r.u32(&name)? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32(&name)? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(width).ok_or_else(|| Error::Truncated(name.clone()))?, &name)?;
        let values = payload
            .chunks_exact(width)
            .map(|c| if dtype == 0 { f32::read_le(c) as f64 } else { f64::read_le(c) })
            .collect();
        records.push(TensorRecord {
            name,
            dtype,
            shape,
            values,
        });
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[TensorRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_records(records)).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TensorRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_records(&bytes)
}

fn config_record(cfg: &ModelConfig) -> TensorRecord {
    let q = cfg.quantum;
    let values = [
        cfg.input_size,
        cfg.num_classes,
        cfg.conv_channels[0],
        cfg.conv_channels[1],
        cfg.conv_channels[2],
        cfg.reduction_ratio,
        q.qubits,
        q.depth,
        q.circuits,
        (cfg.variant == Variant::Classical) as usize,
    ]
    .iter()
    .map(|&v| v as f64)
    .collect::<Vec<_>>();
    TensorRecord {
        name: CONFIG_RECORD.into(),
        dtype: 1,
        shape: vec![values.len()],
        values,
    }
}

fn parse_config(rec: &TensorRecord) -> Result<ModelConfig> {
    let bad = |detail: &str| Error::TensorMismatch {
        name: CONFIG_RECORD.into(),
        detail: detail.into(),
    };
    if rec.values.len() != 10 {
        return Err(bad("expected 10 entries"));
    }
    let mut v = [0usize; 10];
    for (dst, &x) in v.iter_mut().zip(&rec.values) {
        if !(x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64) {
            return Err(bad("entries must be non-negative integers"));
        }
        *dst = x as usize;
    }
    let variant = match v[9] {
        0 => Variant::Hybrid,
        1 => Variant::Classical,
        _ => return Err(bad("unknown variant code")),
    };
    let cfg = ModelConfig {
        input_size: v[0],
        num_classes: v[1],
        conv_channels: [v[2], v[3], v[4]],
        reduction_ratio: v[5],
        quantum: QuantumLayerConfig {
            qubits: v[6],
            depth: v[7],
            circuits: v[8],
        },
        variant,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fill_slot<T: Real>(records: &[TensorRecord], name: &str, slot: &mut Tensor<T>) -> Result<()> {
    let rec = records.iter().find(|r| r.name == name).ok_or_else(|| Error::TensorMismatch {
        name: name.into(),
        detail: "missing".into(),
    })?;
    if rec.shape != slot.shape() {
        return Err(Error::TensorMismatch {
            name: name.into(),
            detail: format!("shape {:?} != expected {:?}", rec.shape, slot.shape()),
        });
    }
    for (dst, &v) in slot.data_mut().iter_mut().zip(&rec.values) {
        *dst = T::from_f64_lossy(v);
    }
    Ok(())
}

impl<T: Real> HybridModel<T> {
    pub fn to_records(&self) -> Vec<TensorRecord> {
        let mut records = vec![config_record(&self.config)];
        for (name, t) in self.params().into_iter().chain(self.buffers()) {
            records.push(TensorRecord::from_tensor(name, t));
        }
        records
    }

    pub fn from_records(records: &[TensorRecord]) -> Result<Self> {
        let cfg_rec = records
            .iter()
            .find(|r| r.name == CONFIG_RECORD)
            .ok_or_else(|| Error::TensorMismatch {
                name: CONFIG_RECORD.into(),
                detail: "missing".into(),
            })?;
        Self::from_records_with_config(records, parse_config(cfg_rec)?)
    }

    /// Loads tensors into a freshly built model of the given configuration.
    /// Any tensor that is missing, extra or of the wrong shape is an error;
    /// the stored config record itself is ignored.
    pub fn from_records_with_config(records: &[TensorRecord], config: ModelConfig) -> Result<Self> {
        let mut model = HybridModel::new(config, 0)?;
        let mut expected = records.iter().any(|r| r.name == CONFIG_RECORD) as usize;
        for (name, slot) in model.params_mut() {
            fill_slot(records, &name, slot)?;
            expected += 1;
        }
        for (name, slot) in model.buffers_mut() {
            fill_slot(records, &name, slot)?;
            expected += 1;
        }
        if records.len() != expected {
            let known: Vec<String> = model.to_records().into_iter().map(|r| r.name).collect();
            let extra = records
                .iter()
                .find(|r| !known.contains(&r.name))
                .map(|r| r.name.clone())
                .unwrap_or_else(|| "(duplicate)".into());
            return Err(Error::TensorMismatch {
                name: extra,
                detail: "unexpected record".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, &self.to_records())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(&read_records(path)?)
    }

    pub fn load_with_config(path: &Path, config: ModelConfig) -> Result<Self> {
        Self::from_records_with_config(&read_records(path)?, config)
    }
}
