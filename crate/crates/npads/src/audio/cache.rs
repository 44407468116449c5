//! Binary feature cache: header {magic, version, T, Q}, then row-major
//! 32-bit floats. A CSV export exists for debugging.

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::{read_u32, Mat};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NPFC";
const VERSION: u32 = 1;

pub fn write_cache(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(features.n_frames() as u32).to_le_bytes())?;
    w.write_all(&(features.dim() as u32).to_le_bytes())?;
    for v in features.rows.data() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<FeatureMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!("{}: not a feature cache", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported cache version {version}",
            path.display()
        )));
    }
    let t = read_u32(&mut r)? as usize;
    let q = read_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(t * q);
    let mut buf = [0u8; 4];
    for _ in 0..t * q {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    Ok(FeatureMatrix { rows: Mat::from_vec(t, q, data), normalized: false })
}

pub fn export_csv(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for r in 0..features.n_frames() {
        let row = features.rows.row(r);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
