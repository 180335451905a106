//! Checkpoint container, all integers little-endian:
//!
//! ```text
//! [8]  magic "ICUDCKPT"
//! u32  version (= 1)
//! u16  kind length, kind bytes ("bilstm", "logreg")
//! u32  parameter count
//!      per parameter: u32 name length, name bytes, u32 rank, u64 dims[rank],
//!                     f32 values[product(dims)]
//! u8   moments flag
//!      if 1: u64 optimizer step, then per parameter f32 m[..], f32 v[..]
//! u32  epoch
//! f64  best validation AUROC
//! u32  patience counter
//! u32  config length, config text (key=value lines, UTF-8)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{NumError, ParameterSet, Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ICUDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingState {
    pub epoch: u32,
    pub best_val_auroc: f64,
    pub patience_counter: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub params: ParameterSet<f32>,
    pub include_moments: bool,
    pub state: TrainingState,
    pub config: String,
}

fn bad(msg: impl Into<String>) -> NumError {
    NumError::Checkpoint(msg.into())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, NumError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], NumError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, NumError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, NumError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, NumError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, NumError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, NumError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, n: usize) -> Result<String, NumError> {
        String::from_utf8(self.bytes(n)?).map_err(|_| bad("invalid UTF-8"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NumError> {
        Ok(self
            .bytes(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn new<F: Real>(kind: &str, params: &ParameterSet<F>, state: TrainingState, config: String) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            params: params.cast(),
            include_moments: true,
            state,
            config,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind.len() as u16).to_le_bytes());
        out.extend_from_slice(self.kind.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for id in self.params.ids() {
            let name = self.params.name(id);
            let t = self.params.tensor(id);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f32s(&mut out, &t.data);
        }
        out.push(self.include_moments as u8);
        if self.include_moments {
            out.extend_from_slice(&self.params.step().to_le_bytes());
            for id in self.params.ids() {
                let (m, v) = self.params.moments(id);
                put_f32s(&mut out, m);
                put_f32s(&mut out, v);
            }
        }
        out.extend_from_slice(&self.state.epoch.to_le_bytes());
        out.extend_from_slice(&self.state.best_val_auroc.to_le_bytes());
        out.extend_from_slice(&self.state.patience_counter.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out
    }

    pub fn read_from(r: impl Read) -> Result<Self, NumError> {
        let mut r = Reader { inner: r };
        if &r.array::<8>()? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let kind_len = r.u16()? as usize;
        let kind = r.string(kind_len)?;
        let n = r.u32()? as usize;
        let mut params = ParameterSet::new();
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let count: usize = shape.iter().product();
            let data = r.f32s(count)?;
            params.add(&name, Tensor::from_vec(&shape, data)?)?;
        }
        let include_moments = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(bad(format!("bad moments flag {other}"))),
        };
        if include_moments {
            params.set_step(r.u64()?);
            for id in params.ids().collect::<Vec<_>>() {
                let len = params.tensor(id).len();
                let m = r.f32s(len)?;
                let v = r.f32s(len)?;
                params.set_moments(id, m, v)?;
            }
        }
        let state = TrainingState {
            epoch: r.u32()?,
            best_val_auroc: r.f64()?,
            patience_counter: r.u32()?,
        };
        let config_len = r.u32()? as usize;
        let config = r.string(config_len)?;
        Ok(Checkpoint {
            kind,
            params,
            include_moments,
            state,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Looks up a `key=value` entry in the embedded config text.
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.lines().find_map(|line| {
            let (k, v) = line.split_once('=')?;
            (k.trim() == key).then_some(v.trim())
        })
    }
}
