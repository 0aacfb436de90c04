//! Field snapshots: a 32-byte header (`CMAF`, version, `n`, `m`, component
//! count, padding) followed by little-endian `f64` values in row-major order,
//! components interleaved per point, plus a JSON sidecar naming the components.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::tensor::{component_names, HermitianField, Role};

pub const MAGIC: &[u8; 4] = b"CMAF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub role: String,
    pub n: usize,
    pub m: usize,
    pub components: Vec<String>,
}

/// Raw snapshot contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub m: usize,
    pub components: usize,
    pub values: Vec<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(n: usize, m: usize, components: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, n as u32, m as u32, components as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.resize(HEADER_LEN, 0);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let version = word(1);
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (n, m, components) = (word(2), word(3), word(4));
    let points = m
        .checked_pow(2 * n as u32)
        .ok_or_else(|| Error::Format("grid size overflows".into()))?;
    let expected = points * components;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * expected {
        return Err(Error::Format(format!(
            "expected {expected} values, found {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Snapshot {
        n,
        m,
        components,
        values,
    })
}

fn write_with_sidecar(path: &Path, role: &str, grid: &TorusGrid, names: Vec<String>, values: &[f64]) -> Result<()> {
    fs::write(path, encode(grid.n(), grid.m(), names.len(), values))?;
    let sidecar = Sidecar {
        role: role.to_string(),
        n: grid.n(),
        m: grid.m(),
        components: names,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn write_scalar(path: &Path, role: &str, f: &ScalarField) -> Result<()> {
    write_with_sidecar(path, role, f.grid(), vec![role.to_string()], f.values())
}

pub fn write_hermitian(path: &Path, f: &HermitianField) -> Result<()> {
    let names = component_names(f.n());
    write_with_sidecar(path, f.role().label(), f.grid(), names, &f.to_packed())
}

fn read_checked(path: &Path, grid: &TorusGrid, components: usize) -> Result<Snapshot> {
    let snap = decode(&fs::read(path)?)?;
    if snap.n != grid.n() || snap.m != grid.m() {
        return Err(Error::Format(format!(
            "snapshot is for n={}, m={}; grid has n={}, m={}",
            snap.n,
            snap.m,
            grid.n(),
            grid.m()
        )));
    }
    if snap.components != components {
        return Err(Error::Format(format!(
            "expected {components} components, found {}",
            snap.components
        )));
    }
    Ok(snap)
}

pub fn read_scalar(path: &Path, grid: &Arc<TorusGrid>) -> Result<ScalarField> {
    let snap = read_checked(path, grid, 1)?;
    ScalarField::new(Arc::clone(grid), snap.values)
}

pub fn read_hermitian(path: &Path, grid: &Arc<TorusGrid>, role: Role) -> Result<HermitianField> {
    let n = grid.n();
    let snap = read_checked(path, grid, n * n)?;
    Ok(HermitianField::from_packed(Arc::clone(grid), role, snap.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DiffMode;

    #[test]
    fn header_layout() {
        let bytes = encode(2, 8, 1, &[1.5]);
        assert_eq!(&bytes[..4], b"CMAF");
        assert_eq!(bytes.len(), 40);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 1.5);
    }

    #[test]
    fn roundtrip_files() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let u = grid.sample(|x| x[0] - 2.0 * x[3]);
        let path = dir.path().join("u.cmaf");
        write_scalar(&path, "u", &u).unwrap();
        assert_eq!(read_scalar(&path, &grid).unwrap().values(), u.values());
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.components, ["u"]);

        let h = grid.hessian_complex(&u).unwrap();
        let hp = dir.path().join("h.cmaf");
        write_hermitian(&hp, &h).unwrap();
        assert_eq!(read_hermitian(&hp, &grid, Role::Generic).unwrap().to_packed(), h.to_packed());
        assert!(read_scalar(&hp, &grid).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut bytes = encode(2, 8, 1, &vec![0.0; 4096]);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        assert!(decode(b"XXXX").is_err());
    }
}
