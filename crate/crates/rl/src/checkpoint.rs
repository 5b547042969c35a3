//! Binary parameter container.
//!
//! Layout: `MPCK`, u32 version, u32 config length, config JSON, u32 tensor
//! count, then per tensor: u32 name length, name, u32 rows, u32 cols and
//! `rows * cols` f64 values. All integers and floats little-endian.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::policy::{PolicyConfig, PolicyParams};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"MPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("bad config: {0}")]
    Config(String),
    #[error("tensor {name}: stored {stored:?}, expected {expected:?}")]
    ShapeMismatch { name: String, stored: (usize, usize), expected: (usize, usize) },
    #[error("tensor table mismatch: {0}")]
    Table(String),
}

fn write_to(mut w: impl Write, params: &PolicyParams) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let config = serde_json::to_vec(&params.config).map_err(|e| CheckpointError::Config(e.to_string()))?;
    w.write_u32::<LittleEndian>(config.len() as u32)?;
    w.write_all(&config)?;
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (i, name) in params.names().iter().enumerate() {
        let t = params.tensor(i);
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u32::<LittleEndian>(t.rows as u32)?;
        w.write_u32::<LittleEndian>(t.cols as u32)?;
        for &v in &t.data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn save(path: &Path, params: &PolicyParams) -> Result<(), CheckpointError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let f = File::create(&tmp)?;
        let mut w = BufWriter::new(f);
        write_to(&mut w, params)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_string(r: &mut impl Read) -> Result<Vec<u8>, CheckpointError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Read a checkpoint; the stored config determines the expected shapes.
pub fn load(path: &Path) -> Result<PolicyParams, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let config: PolicyConfig =
        serde_json::from_slice(&read_string(&mut r)?).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let mut params = PolicyParams::zeros(config);
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count != params.len() {
        return Err(CheckpointError::Table(format!("{count} tensors stored, {} expected", params.len())));
    }
    for i in 0..count {
        let name = String::from_utf8(read_string(&mut r)?).map_err(|e| CheckpointError::Table(e.to_string()))?;
        if name != params.names()[i] {
            return Err(CheckpointError::Table(format!("tensor {i} is {name}, expected {}", params.names()[i])));
        }
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        let expected = params.tensor(i).shape();
        if (rows, cols) != expected {
            return Err(CheckpointError::ShapeMismatch { name, stored: (rows, cols), expected });
        }
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        params.set(i, Matrix::from_vec(rows, cols, data)).expect("shape checked");
    }
    Ok(params)
}

/// Load and require the stored tensors to match the shapes `expected`
/// implies.
pub fn load_compatible(path: &Path, expected: &PolicyConfig) -> Result<PolicyParams, CheckpointError> {
    let params = load(path)?;
    let want = expected.shapes();
    if want.len() != params.len() {
        return Err(CheckpointError::Table(format!("{} tensors stored, {} expected", params.len(), want.len())));
    }
    for (i, (name, shape)) in want.into_iter().enumerate() {
        if params.names()[i] != name {
            return Err(CheckpointError::Table(format!(
                "stored tensor `{}` where `{name}` was expected (backbone {:?} vs {:?})",
                params.names()[i],
                params.config.backbone,
                expected.backbone
            )));
        }
        let stored = params.tensor(i).shape();
        if stored != shape {
            return Err(CheckpointError::ShapeMismatch { name, stored, expected: shape });
        }
    }
    Ok(params)
}
