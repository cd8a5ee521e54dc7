//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "LDFW" | version u32 | kind u8 | tensor count u32 |
//!   per tensor: name len u16 | UTF-8 name | rank u8 | dims u32 × rank | f32 payload
//! ```
//!
//! Model hyperparameters travel as a `meta.config` tensor so a checkpoint
//! is self-describing.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ConditionedRegressor, RegressorConfig};
use crate::real::Real;

pub const MAGIC: &[u8; 4] = b"LDFW";
pub const FORMAT_VERSION: u32 = 1;

const META_CONFIG: &str = "meta.config";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Encoder = 1,
    Decoder = 2,
    Flow = 3,
    Latent = 4,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Encoder => "ENC",
            ModelKind::Decoder => "DEC",
            ModelKind::Flow => "FM",
            ModelKind::Latent => "LAT",
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => ModelKind::Encoder,
            2 => ModelKind::Decoder,
            3 => ModelKind::Flow,
            4 => ModelKind::Latent,
            other => return Err(Error::Format(format!("unknown model kind tag {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(kind: ModelKind, model: &ConditionedRegressor<T>) -> Self {
        let c = model.config();
        let meta = [
            c.input_dim,
            c.cond_dim,
            c.output_dim,
            c.hidden,
            c.depth,
            usize::from(c.time_embedding),
        ];
        let mut tensors = vec![NamedTensor {
            name: META_CONFIG.into(),
            dims: vec![meta.len() as u32],
            data: meta.iter().map(|&v| v as f32).collect(),
        }];
        tensors.extend(model.named_tensors().map(|(name, shape, data)| NamedTensor {
            name: name.to_string(),
            dims: shape.iter().map(|&d| d as u32).collect(),
            data: data.iter().map(|v| v.as_f64() as f32).collect(),
        }));
        Self { kind, tensors }
    }

    pub fn with_scalar(mut self, name: &str, value: f32) -> Self {
        self.tensors.push(NamedTensor {
            name: name.into(),
            dims: vec![1],
            data: vec![value],
        });
        self
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<f32> {
        self.tensor(name).and_then(|t| t.data.first().copied())
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.tag().into(),
                found: self.kind.tag().into(),
            });
        }
        Ok(())
    }

    /// Rebuilds the regressor, checking the kind tag first.
    pub fn to_model<T: Real>(&self, kind: ModelKind) -> Result<ConditionedRegressor<T>> {
        self.expect_kind(kind)?;
        let meta = self
            .tensor(META_CONFIG)
            .ok_or_else(|| Error::Format("missing meta.config".into()))?;
        if meta.data.len() != 6 {
            return Err(Error::Format("meta.config must hold 6 entries".into()));
        }
        let m: Vec<usize> = meta.data.iter().map(|&v| v as usize).collect();
        let config = RegressorConfig {
            input_dim: m[0],
            cond_dim: m[1],
            output_dim: m[2],
            hidden: m[3],
            depth: m[4],
            time_embedding: m[5] != 0,
        };
        let named: Vec<(String, Vec<usize>, Vec<T>)> = self
            .tensors
            .iter()
            .filter(|t| !t.name.starts_with("meta."))
            .map(|t| {
                (
                    t.name.clone(),
                    t.dims.iter().map(|&d| d as usize).collect(),
                    t.data.iter().map(|&v| T::lit(v as f64)).collect(),
                )
            })
            .collect();
        ConditionedRegressor::from_named(config, &named)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len =
                u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {}", t.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            let rank =
                u8::try_from(t.dims.len()).map_err(|_| Error::Format(format!("tensor {} rank too large", t.name)))?;
            out.push(rank);
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            let numel: usize = t.dims.iter().map(|&d| d as usize).product();
            if numel != t.data.len() {
                return Err(Error::Format(format!(
                    "tensor {} payload {} does not match dims {:?}",
                    t.name,
                    t.data.len(),
                    t.dims
                )));
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut kind = [0u8; 1];
        read_exact(r, &mut kind)?;
        let kind = ModelKind::from_u8(kind[0])?;
        let count = read_u32(r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(r, &mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let mut rank = [0u8; 1];
            read_exact(r, &mut rank)?;
            let dims = (0..rank[0]).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
            let numel: usize = dims.iter().map(|&d| d as usize).product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 4];
                read_exact(r, &mut b)?;
                data.push(f32::from_le_bytes(b));
            }
            tensors.push(NamedTensor { name, dims, data });
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Self { kind, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
