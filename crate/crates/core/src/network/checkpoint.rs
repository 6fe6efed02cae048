//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EPCK" | version u32 | count u32 | count × entry
//! entry: name_len u32 | name (utf-8) | dtype u8 | rank u32 | rank × dim u64 | payload
//! ```
//!
//! Entries hold every parameter followed by every buffer, in the module's
//! traversal order, so saving the same model twice yields identical bytes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::{DType, Float, Tensor};

pub const MAGIC: &[u8; 4] = b"EPCK";
pub const VERSION: u32 = 1;

/// Which of the model's tensors a load must restore.
#[derive(Clone, Copy)]
pub enum LoadFilter<'a> {
    All,
    /// Only tensors whose name satisfies the predicate; the rest keep their
    /// current values.
    Only(&'a dyn Fn(&str) -> bool),
}

impl LoadFilter<'_> {
    fn wants(&self, name: &str) -> bool {
        match self {
            LoadFilter::All => true,
            LoadFilter::Only(keep) => keep(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Values widened to f64.
    pub values: Vec<f64>,
}

fn push_entry<T: Float>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE.code());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
}

pub fn encode<T: Float, M: Module<T> + ?Sized>(model: &M) -> Vec<u8> {
    let mut tensors: Vec<(&str, &Tensor<T>)> = Vec::new();
    model.visit_params(&mut |p| tensors.push((&p.name, &p.value)));
    model.visit_buffers(&mut |name, t| tensors.push((name, t)));
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        push_entry(&mut out, name, t);
    }
    out
}

pub fn save<T: Float, M: Module<T> + ?Sized>(model: &M, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let out = self.bytes.get(self.at..end)?;
        self.at = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Decoded entries, plus a description of where the data ended early if the
/// file is truncated.
pub struct Decoded {
    pub entries: Vec<Entry>,
    pub truncated: Option<String>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    match r.u32() {
        Some(VERSION) => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {v} (expected {VERSION})"
            )))
        }
        None => return Err(Error::Checkpoint("truncated header".into())),
    }
    let count = r.u32().ok_or_else(|| Error::Checkpoint("truncated header".into()))? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        match read_entry(&mut r)? {
            Some(e) => entries.push(e),
            None => {
                let after = entries.last().map_or("the header".to_string(), |e: &Entry| format!("'{}'", e.name));
                return Ok(Decoded {
                    entries,
                    truncated: Some(format!("file ends inside entry {i} of {count}, after {after}")),
                });
            }
        }
    }
    Ok(Decoded { entries, truncated: None })
}

fn read_entry(r: &mut Reader<'_>) -> Result<Option<Entry>> {
    let Some(len) = r.u32() else { return Ok(None) };
    let Some(name) = r.take(len as usize) else { return Ok(None) };
    let name = String::from_utf8(name.to_vec())
        .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
    let Some(code) = r.take(1) else { return Ok(None) };
    let dtype = DType::from_code(code[0])
        .ok_or_else(|| Error::Checkpoint(format!("'{name}': unknown dtype code {}", code[0])))?;
    let Some(rank) = r.u32() else { return Ok(None) };
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let Some(d) = r.u64() else { return Ok(None) };
        shape.push(d as usize);
    }
    let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let Some(numel) = numel else {
        return Err(Error::Checkpoint(format!("'{name}': shape {shape:?} overflows")));
    };
    let Some(payload) = numel.checked_mul(dtype.size()).and_then(|n| r.take(n)) else {
        return Ok(None);
    };
    let values = match dtype {
        DType::F32 => payload.chunks_exact(4).map(|b| f32::read_le(b) as f64).collect(),
        DType::F64 => payload.chunks_exact(8).map(f64::read_le).collect(),
    };
    Ok(Some(Entry { name, dtype, shape, values }))
}

/// Names of the tensors a load restored.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub restored: Vec<String>,
    /// Model tensors left untouched because the filter excluded them.
    pub kept: Vec<String>,
}

/// Restores the model's tensors from `bytes`. Nothing is modified unless
/// every requested tensor is present with a matching shape.
pub fn load_bytes<T: Float, M: Module<T> + ?Sized>(
    model: &mut M,
    bytes: &[u8],
    filter: LoadFilter<'_>,
) -> Result<LoadReport> {
    let decoded = decode(bytes)?;
    let by_name: HashMap<&str, &Entry> =
        decoded.entries.iter().map(|e| (e.name.as_str(), e)).collect();

    let mut wanted: Vec<(String, Vec<usize>)> = Vec::new();
    let mut report = LoadReport::default();
    let mut note = |name: &str, shape: &[usize]| {
        if filter.wants(name) {
            wanted.push((name.to_string(), shape.to_vec()));
        } else {
            report.kept.push(name.to_string());
        }
    };
    model.visit_params(&mut |p| note(&p.name, p.value.shape()));
    model.visit_buffers(&mut |name, t| note(name, t.shape()));

    for (name, shape) in &wanted {
        let Some(entry) = by_name.get(name.as_str()) else {
            let why = match &decoded.truncated {
                Some(t) => format!(" (checkpoint truncated: {t})"),
                None => String::new(),
            };
            return Err(Error::Checkpoint(format!("missing tensor '{name}'{why}")));
        };
        if &entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}': checkpoint shape {:?}, model expects {shape:?}",
                entry.shape
            )));
        }
    }

    let assign = |name: &str, t: &mut Tensor<T>| {
        if filter.wants(name) {
            let entry = by_name[name];
            for (dst, &v) in t.data_mut().iter_mut().zip(&entry.values) {
                *dst = T::from_f64(v).unwrap_or_else(T::nan);
            }
        }
    };
    model.visit_params_mut(&mut |p| assign(&p.name, &mut p.value));
    model.visit_buffers_mut(&mut |name, t| assign(name, t));
    report.restored = wanted.into_iter().map(|(n, _)| n).collect();
    Ok(report)
}

pub fn load<T: Float, M: Module<T> + ?Sized>(
    model: &mut M,
    path: &Path,
    filter: LoadFilter<'_>,
) -> Result<LoadReport> {
    let bytes = fs::read(path)?;
    load_bytes(model, &bytes, filter)
}

/// SHA-256 over the names and little-endian bytes of the selected
/// parameters and buffers, in traversal order.
pub fn digest<T: Float, M: Module<T> + ?Sized>(model: &M, select: &dyn Fn(&str) -> bool) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    let mut feed = |name: &str, t: &Tensor<T>| {
        if select(name) {
            hasher.update(name.as_bytes());
            hasher.update(t.to_le_bytes());
        }
    };
    model.visit_params(&mut |p| feed(&p.name, &p.value));
    model.visit_buffers(&mut |name, t| feed(name, t));
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
