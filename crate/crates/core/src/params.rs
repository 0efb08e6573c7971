//! Named parameter storage and its binary container.
//!
//! Container layout, all integers and floats little-endian:
//!
//! | bytes            | field                                   |
//! |------------------|-----------------------------------------|
//! | 8                | magic `CTMOPARM`                        |
//! | 4                | format version (`u32`, currently 1)     |
//! | 4                | record count (`u32`)                    |
//! | per record:      |                                         |
//! | 4                | name length in bytes (`u32`)            |
//! | name length      | UTF-8 name                              |
//! | 4                | rank (`u32`)                            |
//! | 8 × rank         | extents (`u64` each)                    |
//! | 8 × product      | payload (`f64`, row-major)              |
//!
//! Records are written in store order, so save → load → save is byte-identical.

use std::io::{Read, Write};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PARAM_MAGIC: &[u8; 8] = b"CTMOPARM";
pub const PARAM_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    /// Looks up a parameter that the caller knows must exist.
    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::format(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
                .collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(PARAM_MAGIC)?;
        w.write_all(&PARAM_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(self.entries.len()).map_err(|_| Error::format("too many records"))?.to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::format("not a parameter container (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != PARAM_VERSION {
            return Err(Error::format(format!("unsupported parameter container version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut store = Self::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::format("parameter name is not UTF-8"))?;
            let rank = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(r)? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            if store.contains(&name) {
                return Err(Error::format(format!("duplicate parameter `{name}`")));
            }
            store.insert(name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout_of_a_single_record() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        let bytes = store.to_bytes();
        assert_eq!(&bytes[..8], b"CTMOPARM");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(bytes[20], b'w');
        assert_eq!(&bytes[21..25], &2u32.to_le_bytes());
        assert_eq!(&bytes[25..33], &1u64.to_le_bytes());
        assert_eq!(&bytes[33..41], &2u64.to_le_bytes());
        assert_eq!(&bytes[41..49], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[49..57], &(-2.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 57);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut store = ParamStore::new();
        store.insert("a.weight", Tensor::new(vec![2, 3], (0..6).map(|i| i as f64 / 7.0).collect()).unwrap());
        store.insert("a.bias", Tensor::vector(vec![0.1, f64::MIN_POSITIVE, -0.0]));
        store.insert("s", Tensor::scalar(std::f64::consts::PI));
        let first = store.to_bytes();
        let loaded = ParamStore::read_from(&mut first.as_slice()).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(loaded.to_bytes(), first);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(ParamStore::read_from(&mut &b"NOTMAGIC\x01\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
        let mut store = ParamStore::new();
        store.insert("x", Tensor::vector(vec![1.0, 2.0]));
        let bytes = store.to_bytes();
        assert!(ParamStore::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
    }
}
