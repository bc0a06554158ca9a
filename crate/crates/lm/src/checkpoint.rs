//! Binary tensor files: magic, version, model config, string metadata and
//! named `f32` tensors in row-major order, all little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{ModelConfig, ModelError, Params};
use crate::tensor::Scalar;

pub const MAGIC: &[u8; 8] = b"MOLTEXT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub config: ModelConfig,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<NamedTensor>,
}

fn put_u32(w: &mut impl Write, x: u32) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String, CheckpointError> {
    let n = get_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(CheckpointError::Malformed(format!("string of {n} bytes")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| CheckpointError::Malformed("non-UTF-8 string".into()))
}

impl TensorFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, FORMAT_VERSION)?;
        let c = &self.config;
        for x in [c.vocab_size, c.n_layers, c.n_heads, c.d_model, c.d_ff, c.max_seq_len] {
            put_u32(w, x as u32)?;
        }
        w.write_all(&c.rope_base.to_le_bytes())?;
        put_u32(w, self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        put_u32(w, self.tensors.len() as u32)?;
        for t in &self.tensors {
            put_str(w, &t.name)?;
            put_u32(w, t.shape.len() as u32)?;
            for &dim in &t.shape {
                put_u32(w, dim as u32)?;
            }
            let mut bytes = Vec::with_capacity(t.data.len() * 4);
            for x in &t.data {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<TensorFile, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = get_u32(r)? as usize;
        }
        let config = ModelConfig {
            vocab_size: dims[0],
            n_layers: dims[1],
            n_heads: dims[2],
            d_model: dims[3],
            d_ff: dims[4],
            max_seq_len: dims[5],
            rope_base: get_f64(r)?,
        };
        config.validate()?;
        let n_meta = get_u32(r)?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((get_str(r)?, get_str(r)?));
        }
        let n_tensors = get_u32(r)?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = get_str(r)?;
            let ndim = get_u32(r)? as usize;
            if ndim > 8 {
                return Err(CheckpointError::Malformed(format!("{name}: {ndim} dimensions")));
            }
            let shape = (0..ndim)
                .map(|_| get_u32(r).map(|x| x as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let mut bytes = vec![0u8; len * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(TensorFile { config, meta, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TensorFile, CheckpointError> {
        let mut r = bytes;
        let f = TensorFile::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.len())));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TensorFile, CheckpointError> {
        TensorFile::from_bytes(&fs::read(path)?)
    }
}

/// Tensors of a flat buffer laid out like `params`, names prefixed.
pub fn named_tensors<S: Scalar>(params: &Params<S>, buffer: &[S], prefix: &str) -> Vec<NamedTensor> {
    params
        .layout()
        .slots()
        .iter()
        .map(|s| NamedTensor {
            name: format!("{prefix}{}", s.name),
            shape: s.shape.clone(),
            data: buffer[s.range()].iter().map(|x| x.to_bits_f32()).collect(),
        })
        .collect()
}

/// Rebuilds a layout-shaped buffer from prefixed tensors.
pub fn gather_buffer<S: Scalar>(
    file: &TensorFile,
    config: &ModelConfig,
    prefix: &str,
) -> Result<Vec<S>, CheckpointError> {
    let layout = crate::model::Layout::new(config);
    let mut data = vec![S::zero(); layout.total];
    for s in layout.slots() {
        let name = format!("{prefix}{}", s.name);
        let t = file
            .tensor(&name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor {name}")))?;
        if t.shape != s.shape {
            return Err(CheckpointError::Malformed(format!(
                "{name}: shape {:?}, expected {:?}",
                t.shape, s.shape
            )));
        }
        for (dst, &x) in data[s.range()].iter_mut().zip(&t.data) {
            *dst = S::from_f32(x);
        }
    }
    Ok(data)
}

pub fn params_file(params: &Params<f32>) -> TensorFile {
    TensorFile {
        config: params.config().clone(),
        meta: Vec::new(),
        tensors: named_tensors(params, &params.data, ""),
    }
}

pub fn params_from_file(file: &TensorFile) -> Result<Params<f32>, CheckpointError> {
    let data = gather_buffer(file, &file.config, "")?;
    Ok(Params::from_data(file.config.clone(), data)?)
}

pub fn save_params(params: &Params<f32>, path: &Path) -> Result<(), CheckpointError> {
    params_file(params).save(path)
}

pub fn load_params(path: &Path) -> Result<Params<f32>, CheckpointError> {
    params_from_file(&TensorFile::load(path)?)
}
