//! Versioned binary container for named tensors, and helpers to snapshot
//! or restore a supernet's trainable state.
//!
//! # File layout
//!
//! ```text
//! offset 0: magic bytes "MNL1"
//! u32 LE:   entry count
//! entries:  repeated manifest records
//!             u32 LE  name length in bytes, then that many UTF-8 bytes
//!             u8      dtype tag (0 = f32, 1 = f64)
//!             u32 LE  rank, then rank × u32 LE dimension sizes
//! payload:  raw arrays in manifest order, every element little-endian
//! ```
//!
//! The manifest is fully parsed before any payload is read, so a corrupt
//! header never yields a partially-filled result.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::supernet::Supernet;
use crate::tensor::{Dtype, Element};

const MAGIC: [u8; 4] = *b"MNL1";

/// Type-erased array payload.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies out as the requested element type, converting if needed.
    pub fn to_vec<E: Element>(&self) -> Vec<E> {
        match self {
            ArrayData::F32(v) => v.iter().map(|x| E::lit(*x as f64)).collect(),
            ArrayData::F64(v) => v.iter().map(|x| E::lit(*x)).collect(),
        }
    }

    pub fn from_slice<E: Element>(values: &[E]) -> Self {
        match E::DTYPE {
            Dtype::F32 => ArrayData::F32(values.iter().map(|v| v.as_f64() as f32).collect()),
            Dtype::F64 => ArrayData::F64(values.iter().map(|v| v.as_f64()).collect()),
        }
    }
}

/// One tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

pub fn save(path: &Path, arrays: &[NamedArray]) -> Result<()> {
    for a in arrays {
        let numel: usize = a.shape.iter().product();
        if numel != a.data.len() {
            return Err(Error::Dimension(format!(
                "checkpoint entry '{}' has shape {:?} but {} values",
                a.name,
                a.shape,
                a.data.len()
            )));
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_u32::<LittleEndian>(arrays.len() as u32)?;
    for a in arrays {
        out.write_u32::<LittleEndian>(a.name.len() as u32)?;
        out.write_all(a.name.as_bytes())?;
        out.write_u8(a.data.dtype().byte_tag())?;
        out.write_u32::<LittleEndian>(a.shape.len() as u32)?;
        for &d in &a.shape {
            out.write_u32::<LittleEndian>(d as u32)?;
        }
    }
    for a in arrays {
        match &a.data {
            ArrayData::F32(v) => {
                for &x in v {
                    out.write_f32::<LittleEndian>(x)?;
                }
            }
            ArrayData::F64(v) => {
                for &x in v {
                    out.write_f64::<LittleEndian>(x)?;
                }
            }
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<NamedArray>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint shorter than its magic bytes".into()))?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "checkpoint magic mismatch: expected {:?}, found {:?}",
            std::str::from_utf8(&MAGIC).unwrap(),
            magic
        )));
    }
    let count = file.read_u32::<LittleEndian>()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = file.read_u32::<LittleEndian>()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        file.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Format(format!("checkpoint entry name is not UTF-8: {e}")))?;
        let tag = file.read_u8()?;
        let dtype = Dtype::from_byte_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown dtype tag {tag} for entry '{name}'")))?;
        let rank = file.read_u32::<LittleEndian>()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(file.read_u32::<LittleEndian>()? as usize);
        }
        manifest.push((name, dtype, shape));
    }
    let mut arrays = Vec::with_capacity(count);
    for (name, dtype, shape) in manifest {
        let numel: usize = shape.iter().product();
        let data = match dtype {
            Dtype::F32 => {
                let mut v = vec![0.0f32; numel];
                file.read_f32_into::<LittleEndian>(&mut v).map_err(|_| {
                    Error::Format(format!("checkpoint payload truncated at entry '{name}'"))
                })?;
                ArrayData::F32(v)
            }
            Dtype::F64 => {
                let mut v = vec![0.0f64; numel];
                file.read_f64_into::<LittleEndian>(&mut v).map_err(|_| {
                    Error::Format(format!("checkpoint payload truncated at entry '{name}'"))
                })?;
                ArrayData::F64(v)
            }
        };
        arrays.push(NamedArray { name, shape, data });
    }
    Ok(arrays)
}

/// Collects every trainable parameter and every running-statistics vector
/// of a supernet, in the model's canonical visit order.
pub fn snapshot_supernet<E: Element>(net: &mut Supernet<E>) -> Vec<NamedArray> {
    let mut arrays = Vec::new();
    net.visit_params(&mut |name, p| {
        arrays.push(NamedArray {
            name,
            shape: p.value.shape().to_vec(),
            data: ArrayData::from_slice(p.value.data()),
        });
    });
    net.visit_norms(&mut |name, bn| {
        arrays.push(NamedArray {
            name: format!("{name}.running_mean"),
            shape: vec![bn.running_mean.len()],
            data: ArrayData::from_slice(&bn.running_mean),
        });
        arrays.push(NamedArray {
            name: format!("{name}.running_var"),
            shape: vec![bn.running_var.len()],
            data: ArrayData::from_slice(&bn.running_var),
        });
    });
    arrays
}

pub fn save_supernet<E: Element>(path: &Path, net: &mut Supernet<E>) -> Result<()> {
    let arrays = snapshot_supernet(net);
    save(path, &arrays)
}

/// Writes checkpoint contents back into a structurally matching supernet.
/// Every model tensor must be present with the right shape; extra entries
/// in the checkpoint are rejected so silent architecture drift is caught.
pub fn load_into_supernet<E: Element>(path: &Path, net: &mut Supernet<E>) -> Result<()> {
    let arrays = load(path)?;
    let mut by_name: HashMap<String, NamedArray> =
        arrays.into_iter().map(|a| (a.name.clone(), a)).collect();
    let mut missing = Vec::new();
    let mut shape_err = None;
    net.visit_params(&mut |name, p| {
        match by_name.remove(&name) {
            Some(a) if a.shape == p.value.shape() => {
                let values = a.data.to_vec::<E>();
                p.value.data_mut().copy_from_slice(&values);
            }
            Some(a) => {
                shape_err.get_or_insert(format!(
                    "entry '{}' has shape {:?}, model expects {:?}",
                    name,
                    a.shape,
                    p.value.shape()
                ));
            }
            None => missing.push(name),
        }
    });
    net.visit_norms(&mut |name, bn| {
        for (suffix, stat) in
            [("running_mean", &mut bn.running_mean), ("running_var", &mut bn.running_var)]
        {
            let key = format!("{name}.{suffix}");
            match by_name.remove(&key) {
                Some(a) if a.shape == [stat.len()] => {
                    *stat = a.data.to_vec::<E>();
                }
                Some(a) => {
                    shape_err.get_or_insert(format!(
                        "entry '{key}' has shape {:?}, model expects [{}]",
                        a.shape,
                        stat.len()
                    ));
                }
                None => missing.push(key),
            }
        }
    });
    if let Some(msg) = shape_err {
        return Err(Error::Format(msg));
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!("checkpoint is missing entries: {missing:?}")));
    }
    if !by_name.is_empty() {
        let mut extra: Vec<_> = by_name.into_keys().collect();
        extra.sort();
        return Err(Error::Format(format!("checkpoint has unknown entries: {extra:?}")));
    }
    Ok(())
}
