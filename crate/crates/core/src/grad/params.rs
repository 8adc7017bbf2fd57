//! Named parameter arrays with a binary checkpoint format.
//!
//! A checkpoint is two files: `<path>` holds every array back to back as
//! little-endian f64, and `<path>.json` is the index, a list of
//! `{name, shape, offset}` entries where `offset` is in bytes from the
//! start of the binary file. Arrays appear in insertion order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

/// Ordered collection of named f64 arrays (model weights).
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, ArrayD<f64>)>,
}

fn index_path(bin_path: &Path) -> PathBuf {
    let mut os = bin_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::InvalidInput(format!("duplicate parameter {name:?}")));
        }
        self.entries.push((name.to_string(), value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))
    }

    /// Replace an existing parameter's values; the shape must not change.
    pub fn set(&mut self, name: &str, value: ArrayD<f64>) -> Result<()> {
        let slot = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))?;
        if slot.1.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "param_set",
                lhs: slot.1.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        slot.1 = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Arrays in insertion order, for pairing with an optimizer.
    pub fn arrays(&self) -> Vec<ArrayD<f64>> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    /// Overwrite all arrays in insertion order (after an optimizer step).
    pub fn replace_arrays(&mut self, arrays: Vec<ArrayD<f64>>) -> Result<()> {
        if arrays.len() != self.entries.len() {
            return Err(Error::Contract(format!(
                "replace_arrays: {} arrays for {} parameters",
                arrays.len(),
                self.entries.len()
            )));
        }
        for ((_, slot), arr) in self.entries.iter_mut().zip(arrays) {
            if slot.shape() != arr.shape() {
                return Err(Error::ShapeMismatch {
                    op: "replace_arrays",
                    lhs: slot.shape().to_vec(),
                    rhs: arr.shape().to_vec(),
                });
            }
            *slot = arr;
        }
        Ok(())
    }

    pub fn save(&self, bin_path: &Path) -> Result<()> {
        let file = File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let mut w = BufWriter::new(file);
        let mut index = Vec::with_capacity(self.entries.len());
        let mut offset = 0u64;
        for (name, arr) in &self.entries {
            index.push(IndexEntry {
                name: name.clone(),
                shape: arr.shape().to_vec(),
                offset,
            });
            let arr = arr.as_standard_layout();
            for &x in arr.as_slice().expect("standard layout") {
                w.write_all(&x.to_le_bytes())
                    .map_err(|e| Error::io(bin_path, e))?;
            }
            offset += 8 * arr.len() as u64;
        }
        w.flush().map_err(|e| Error::io(bin_path, e))?;
        let ipath = index_path(bin_path);
        let json = serde_json::to_string_pretty(&index)
            .map_err(|e| Error::Contract(format!("index serialization: {e}")))?;
        std::fs::write(&ipath, json).map_err(|e| Error::io(&ipath, e))?;
        Ok(())
    }

    pub fn load(bin_path: &Path) -> Result<Self> {
        let ipath = index_path(bin_path);
        let json = std::fs::read_to_string(&ipath).map_err(|e| Error::io(&ipath, e))?;
        let index: Vec<IndexEntry> = serde_json::from_str(&json)
            .map_err(|e| Error::malformed(&ipath, format!("bad index: {e}")))?;
        let file = File::open(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let total = file
            .metadata()
            .map_err(|e| Error::io(bin_path, e))?
            .len();
        let mut r = BufReader::new(file);
        let mut entries = Vec::with_capacity(index.len());
        let mut expected_offset = 0u64;
        for e in &index {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset {
                return Err(Error::malformed(
                    bin_path,
                    format!("entry {:?} at offset {}, expected {}", e.name, e.offset, expected_offset),
                ));
            }
            let mut buf = vec![0u8; 8 * n];
            r.read_exact(&mut buf).map_err(|e| Error::io(bin_path, e))?;
            let data: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&e.shape), data)
                .map_err(|err| Error::malformed(bin_path, format!("entry {:?}: {err}", e.name)))?;
            entries.push((e.name.clone(), arr));
            expected_offset += 8 * n as u64;
        }
        if expected_offset != total {
            return Err(Error::malformed(
                bin_path,
                format!("binary is {total} bytes, index covers {expected_offset}"),
            ));
        }
        Ok(Self { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn sample_params() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("conv1.weight", arr2(&[[0.1, -0.2], [0.3, 1.0e-300]]).into_dyn())
            .unwrap();
        p.insert("head.weight", arr1(&[f64::MIN_POSITIVE, 2.5, -0.0]).into_dyn())
            .unwrap();
        p.insert("head.bias", ndarray::arr0(0.75).into_dyn()).unwrap();
        p
    }

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.bin");
        let p = sample_params();
        p.save(&path).unwrap();
        let q = ParamSet::load(&path).unwrap();
        assert_eq!(p.len(), q.len());
        for ((n1, a1), (n2, a2)) in p.iter().zip(q.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a1.shape(), a2.shape());
            for (x, y) in a1.iter().zip(a2.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", arr1(&[1.0]).into_dyn()).unwrap();
        assert!(p.insert("w", arr1(&[2.0]).into_dyn()).is_err());
    }

    #[test]
    fn set_preserves_shape() {
        let mut p = sample_params();
        assert!(p.set("head.bias", arr1(&[1.0, 2.0]).into_dyn()).is_err());
        p.set("head.bias", ndarray::arr0(-1.5).into_dyn()).unwrap();
        assert_eq!(p.get("head.bias").unwrap()[[]], -1.5);
    }

    #[test]
    fn truncated_binary_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.bin");
        sample_params().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(ParamSet::load(&path).is_err());
    }

    #[test]
    fn replace_arrays_round_trip() {
        let mut p = sample_params();
        let mut arrays = p.arrays();
        for a in &mut arrays {
            *a *= 2.0;
        }
        p.replace_arrays(arrays).unwrap();
        assert_eq!(p.get("head.bias").unwrap()[[]], 1.5);
    }
}
