//! Binary snapshot format for extended fields.
//!
//! Layout (little endian):
//! magic `FRLB`, version u32, then m, n, nz, ell as u32, then s, L, Zmax as
//! f64, then the field values in layer-major row-major order (layer 0 is the
//! boundary face).

use crate::grid::{ExtendedField, ExtendedGrid, ThinGrid};
use crate::params::FracParam;
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FRLB";
const VERSION: u32 = 1;

pub fn write_field(path: &Path, field: &ExtendedField) -> Result<()> {
    let mut buf = Vec::with_capacity(44 + field.values.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let g = &field.grid;
    for v in [
        g.thin.m() as u32,
        g.thin.n() as u32,
        g.nz() as u32,
        field.ell as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [g.s(), g.thin.length(), g.zmax()] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_field(path: &Path, p: &FracParam) -> Result<ExtendedField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 48 || &bytes[..4] != MAGIC {
        return Err(Error::Snapshot("missing FRLB magic".into()));
    }
    let u32_at = |off: usize| -> u32 {
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
    };
    let f64_at = |off: usize| -> f64 {
        f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
    };
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let (m, n, nz, ell) = (
        u32_at(8) as usize,
        u32_at(12) as usize,
        u32_at(16) as usize,
        u32_at(20) as usize,
    );
    let (s, length, zmax) = (f64_at(24), f64_at(32), f64_at(40));
    if (s - p.s()).abs() > 1e-14 {
        return Err(Error::Snapshot(format!(
            "snapshot was written at s = {s}, requested s = {}",
            p.s()
        )));
    }
    let thin = ThinGrid::new(m, n, length)?;
    let grid = ExtendedGrid::new(thin, nz, zmax, p)?;
    let count = grid.thin.sites() * (nz + 1) * ell;
    let expect = 48 + count * 8;
    if bytes.len() != expect {
        return Err(Error::Snapshot(format!(
            "expected {expect} bytes, found {}",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        values.push(f64_at(48 + 8 * i));
    }
    let mut field = ExtendedField::zeros(&grid, ell);
    field.values = values;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let p = FracParam::new(0.7, 0.3, 0.5).unwrap();
        let thin = ThinGrid::new(1, 8, 1.0).unwrap();
        let grid = ExtendedGrid::new(thin, 4, 1.0, &p).unwrap();
        let field = ExtendedField::from_fn(&grid, 2, |x, z| vec![x[0] * 1.37 + z, -z * x[0]]);
        let dir = std::env::temp_dir().join("fraclab_snapshot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.frlb");
        write_field(&path, &field).unwrap();
        let back = read_field(&path, &p).unwrap();
        assert_eq!(field.values, back.values);
        assert_eq!(field.ell, back.ell);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = std::env::temp_dir().join("fraclab_snapshot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.frlb");
        std::fs::write(&path, b"FRLBxx").unwrap();
        let p = FracParam::new(0.7, 0.3, 0.5).unwrap();
        assert!(read_field(&path, &p).is_err());
        std::fs::remove_file(&path).ok();
    }
}
