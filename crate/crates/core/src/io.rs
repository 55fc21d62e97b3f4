//! Field snapshots: CSV (physical node coordinates and value) and a binary
//! dump.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic  b"PCFD"
//! n      u32
//! N      u32            cells per axis
//! rho    f64
//! nu     n x f64
//! eps    f64
//! values (N + 1)^n x f64, first axis fastest
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fields::ScalarField;

pub const MAGIC: &[u8; 4] = b"PCFD";

pub fn field_csv(field: &ScalarField) -> String {
    let g = &field.grid;
    let names = ["x", "y", "z"];
    let mut s = names[..g.dim()].join(",");
    s.push_str(",value\n");
    for (j, v) in field.values.iter().enumerate() {
        for c in g.node_physical(j) {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{v}");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dim: usize,
    pub cells: usize,
    pub rho: f64,
    pub nu: Vec<f64>,
    pub eps: f64,
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn from_field(field: &ScalarField, eps: f64) -> Self {
        let g = &field.grid;
        Self {
            dim: g.dim(),
            cells: g.cells(),
            rho: g.side(),
            nu: g.cube().frame.normal().to_vec(),
            eps,
            values: field.values.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.cells as u32).to_le_bytes())?;
        w.write_all(&self.rho.to_le_bytes())?;
        for v in &self.nu {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.eps.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a field dump (bad magic)".into()));
        }
        let mut u = [0u8; 4];
        let mut f = [0u8; 8];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut u)?;
            Ok(u32::from_le_bytes(u) as usize)
        };
        let dim = read_u32(&mut r)?;
        let cells = read_u32(&mut r)?;
        if !(2..=3).contains(&dim) || cells == 0 {
            return Err(Error::Format(format!("bad header: n = {dim}, N = {cells}")));
        }
        let count = (cells + 1)
            .checked_pow(dim as u32)
            .filter(|c| *c <= 1 << 28)
            .ok_or_else(|| Error::Format("node count too large".into()))?;
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let rho = read_f64(&mut r)?;
        let nu = (0..dim)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let eps = read_f64(&mut r)?;
        let values = (0..count)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            cells,
            rho,
            nu,
            eps,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{init_from_datum, Grid};
    use crate::geometry::{frame_for, RotatedCube};
    use proptest::prelude::*;

    fn field(cells: usize) -> ScalarField {
        let g = Grid::new(
            RotatedCube::new(vec![0.0, 0.0], 1.0, frame_for(&[0.6, 0.8]).unwrap()).unwrap(),
            cells,
        )
        .unwrap();
        init_from_datum(&g, &[0.0, 0.0], &[0.6, 0.8], 0.2, g.h()).unwrap()
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let f = field(8);
        let csv = field_csv(&f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,y,value"));
        assert_eq!(lines.count(), 81);
    }

    #[test]
    fn header_layout() {
        let d = FieldDump::from_field(&field(8), 0.2);
        let b = d.to_bytes();
        assert_eq!(&b[..4], b"PCFD");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(b[12..20].try_into().unwrap()), 1.0);
        assert_eq!(b.len(), 4 + 8 + 8 + 16 + 8 + 81 * 8);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            FieldDump::read_from(&b"NOPE"[..]),
            Err(Error::Format(_))
        ));
        let mut b = FieldDump::from_field(&field(8), 0.2).to_bytes();
        b.truncate(100);
        assert!(FieldDump::read_from(&b[..]).is_err());
    }

    proptest! {
        #[test]
        fn dump_round_trips(cells in 8usize..20, eps in 0.01f64..1.0, seed in 0u64..1000) {
            let mut d = FieldDump::from_field(&field(cells), eps);
            for (k, v) in d.values.iter_mut().enumerate() {
                *v = ((k as u64 * 2654435761 + seed) % 1000) as f64 / 999.0;
            }
            let back = FieldDump::read_from(&d.to_bytes()[..]).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
