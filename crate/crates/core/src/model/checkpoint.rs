//! Model checkpoint files.
//!
//! | bytes | field                                                         |
//! |-------|---------------------------------------------------------------|
//! | 8     | magic `CTMOMODL`                                              |
//! | 4     | format version (`u32` LE, currently 1)                        |
//! | 4     | descriptor length `n` (`u32` LE)                              |
//! | n     | UTF-8 TOML descriptor: `features = D` plus a `[model]` table  |
//! | rest  | parameter container (see [`crate::params`]) holding every     |
//! |       | network parameter, then `stats.mean` and `stats.std`          |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::FeatureStats;
use crate::params::{read_u32, ParamStore};
use crate::tensor::Tensor;

use super::{ArchConfig, Model};

pub const MODEL_MAGIC: &[u8; 8] = b"CTMOMODL";
pub const MODEL_VERSION: u32 = 1;

const STATS_MEAN: &str = "stats.mean";
const STATS_STD: &str = "stats.std";

#[derive(Serialize, Deserialize)]
struct Descriptor {
    features: usize,
    model: ArchConfig,
}

impl Model {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let desc = toml::to_string(&Descriptor { features: self.dim, model: self.arch.clone() })
            .map_err(|e| Error::format(e.to_string()))?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(desc.len() as u32).to_le_bytes())?;
        w.write_all(desc.as_bytes())?;
        let mut store = self.params.clone();
        store.insert(STATS_MEAN, Tensor::vector(self.stats.mean.clone()));
        store.insert(STATS_STD, Tensor::vector(self.stats.std.clone()));
        store.write_to(w)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format("not a model checkpoint (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let len = read_u32(r)? as usize;
        let mut desc = vec![0u8; len];
        r.read_exact(&mut desc)?;
        let desc = String::from_utf8(desc).map_err(|_| Error::format("descriptor is not UTF-8"))?;
        let desc: Descriptor = toml::from_str(&desc).map_err(|e| Error::format(format!("bad descriptor: {e}")))?;

        let mut store = ParamStore::read_from(r)?;
        let mean = store.expect(STATS_MEAN)?.data().to_vec();
        let std = store.expect(STATS_STD)?.data().to_vec();
        let params: ParamStore = {
            let mut p = ParamStore::new();
            for (name, t) in store.iter_mut() {
                if name != STATS_MEAN && name != STATS_STD {
                    p.insert(name, std::mem::replace(t, Tensor::scalar(0.0)));
                }
            }
            p
        };
        // A fresh initialization supplies the expected names and shapes.
        let mut model = Model::new(desc.model, desc.features)?;
        model.set_params(params)?;
        model.set_stats(FeatureStats { mean, std })?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}
