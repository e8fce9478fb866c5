//! Binary field files: `"SFLD"`, u32 version, u32 dim, u32 component count,
//! per-axis u32 point counts, per-axis f64 lower then upper, then every
//! component row-major as f64. All little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{Grid, PeriodicBox};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFLD";
pub const VERSION: u32 = 1;

/// Grid plus raw components as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

pub fn write<W: Write>(mut w: W, grid: &Grid, components: &[&[f64]]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(components.len() as u32).to_le_bytes())?;
    for &d in grid.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for a in 0..grid.dim() {
        w.write_all(&grid.bbox().lower()[a].to_le_bytes())?;
        w.write_all(&grid.bbox().upper()[a].to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for c in components {
        if c.len() != grid.len() {
            return Err(Error::GridMismatch("component length differs from grid".into()));
        }
        buf.clear();
        for v in c.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read<R: Read>(mut r: R) -> Result<RawField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    if !(2..=3).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim}")));
    }
    let ncomp = read_u32(&mut r)? as usize;
    if ncomp > 9 {
        return Err(Error::Format(format!("{ncomp} components")));
    }
    let mut dims = Vec::with_capacity(dim);
    for _ in 0..dim {
        dims.push(read_u32(&mut r)? as usize);
    }
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for _ in 0..dim {
        lower.push(read_f64(&mut r)?);
        upper.push(read_f64(&mut r)?);
    }
    let grid = Grid::new(PeriodicBox::new(lower, upper)?, &dims)?;
    let mut bytes = vec![0u8; grid.len() * 8];
    let mut components = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        r.read_exact(&mut bytes)?;
        components.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes".into()));
    }
    Ok(RawField { grid, components })
}

pub fn save(path: &Path, grid: &Grid, components: &[&[f64]]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write(&mut w, grid, components)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<RawField> {
    let f = std::fs::File::open(path)?;
    read(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(PeriodicBox::new(vec![-1.0, -2.0], vec![1.0, 0.5]).unwrap(), &[16, 32]).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin() * 1e-300).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| -(i as f64) / 7.0).collect();
        let mut bytes = Vec::new();
        write(&mut bytes, &g, &[&a, &b]).unwrap();
        assert_eq!(&bytes[..4], b"SFLD");
        assert_eq!(bytes.len(), 4 + 12 + 8 + 32 + 2 * g.len() * 8);
        let back = read(bytes.as_slice()).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(back.components[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.components[1], b);
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let g = Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), 16).unwrap();
        let a = vec![1.0; g.len()];
        let mut bytes = Vec::new();
        write(&mut bytes, &g, &[&a]).unwrap();
        assert!(read(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read(extra.as_slice()).is_err());
        bytes[0] = b'X';
        assert!(matches!(read(bytes.as_slice()), Err(Error::Format(_))));
    }
}
