//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!   magic `b"LTMC"`, format version u32,
//!   config: u32 byte length + TOML,
//!   u32 tensor count, then per tensor:
//!     u32 name length + name, u32 rank, u64 dims, f64 payload.
//!
//! Save and load round-trip bit-for-bit. Load rejects anything whose
//! tensor inventory disagrees with the config, so a truncated or edited
//! file cannot produce a silently wrong model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{layout, Model, ModelConfig, ModelError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"LTMC";
const FORMAT_VERSION: u32 = 1;

impl Model {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let config = toml::to_string(&self.config)
            .map_err(|e| ModelError::Format(format!("config serialization: {e}")))?;
        w.write_all(&(config.len() as u32).to_le_bytes())?;
        w.write_all(config.as_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &dim in t.shape() {
                w.write_all(&(dim as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Format("bad magic, not a model checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let config_len = read_u32(&mut r)? as usize;
        let mut config_bytes = vec![0u8; config_len];
        read_exact(&mut r, &mut config_bytes)?;
        let config_str = String::from_utf8(config_bytes)
            .map_err(|_| ModelError::Format("config block is not UTF-8".into()))?;
        let config: ModelConfig = toml::from_str(&config_str)
            .map_err(|e| ModelError::Format(format!("config parse: {e}")))?;
        config.validate()?;

        let expected = layout(&config);
        let count = read_u32(&mut r)? as usize;
        if count != expected.len() {
            return Err(ModelError::Format(format!(
                "checkpoint holds {count} tensors, config implies {}",
                expected.len()
            )));
        }
        let mut params = Vec::with_capacity(count);
        for (want_name, want_shape) in expected {
            let name_len = read_u32(&mut r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            read_exact(&mut r, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?;
            if name != want_name {
                return Err(ModelError::Format(format!(
                    "tensor order mismatch: found {name}, expected {want_name}"
                )));
            }
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            if shape != want_shape {
                return Err(ModelError::Format(format!(
                    "tensor {name} has shape {shape:?}, expected {want_shape:?}"
                )));
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                read_exact(&mut r, &mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let tensor = Tensor::new(&shape, data)
                .map_err(|e| ModelError::Format(format!("tensor {name}: {e}")))?;
            params.push((name, tensor));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(ModelError::Format("trailing bytes after last tensor".into()));
        }
        Ok(Model::from_parts(config, params))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ModelError> {
    r.read_exact(buf)
        .map_err(|_| ModelError::Format("unexpected end of file".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
