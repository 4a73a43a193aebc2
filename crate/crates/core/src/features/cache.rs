//! Flat binary cache for encoded matrices: little-endian `f64` values in
//! row-major order, with a JSON sidecar giving the shape and schema hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub rows: usize,
    pub cols: usize,
    pub schema_hash: String,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_f64_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn read_f64_le(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!("{} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_cache(path: &Path, values: &[f64], cols: usize, schema_hash: &str) -> Result<()> {
    if cols == 0 || values.len() % cols != 0 {
        return Err(Error::Shape(format!("{} values do not fill rows of {cols}", values.len())));
    }
    let header = CacheHeader { rows: values.len() / cols, cols, schema_hash: schema_hash.to_string() };
    fs::write(path, write_f64_le(values)).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    fs::write(&side, serde_json::to_vec_pretty(&header)?).map_err(|e| Error::io(side, e))
}

/// Reads a cache, refusing it when the schema hash differs.
pub fn read_cache(path: &Path, expected_hash: &str) -> Result<(CacheHeader, Vec<f64>)> {
    let side = sidecar(path);
    let header: CacheHeader =
        serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
    if header.schema_hash != expected_hash {
        return Err(Error::SchemaMismatch { expected: expected_hash.into(), found: header.schema_hash });
    }
    let values = read_f64_le(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
    if values.len() != header.rows * header.cols {
        return Err(Error::Shape(format!("cache holds {} values, header says {}x{}", values.len(), header.rows, header.cols)));
    }
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_and_hash_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.bin");
        let values = vec![1.5, -2.0, 0.0, f64::MIN_POSITIVE, 3.25, 7.0];
        write_cache(&path, &values, 3, "abc").unwrap();
        let (header, back) = read_cache(&path, "abc").unwrap();
        assert_eq!(header.rows, 2);
        assert_eq!(back, values);
        assert!(matches!(read_cache(&path, "xyz"), Err(Error::SchemaMismatch { .. })));
    }
}
