use std::fs;
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"BFM1";

/// `n` observations of `p` categorical predictors, 1-based, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMatrix {
    n: usize,
    p: usize,
    d: Vec<u16>,
    values: Vec<u16>,
}

impl FeatureMatrix {
    /// Checks every value against its column's category count.
    pub fn new(n: usize, d: Vec<u16>, values: Vec<u16>) -> Result<Self> {
        let p = d.len();
        if values.len() != n * p {
            return Err(Error::Contract(format!("{} values for a {n}x{p} matrix", values.len())));
        }
        if let Some(j) = d.iter().position(|&dj| dj == 0) {
            return Err(Error::Contract(format!("column {j} has no categories")));
        }
        if p > 0 {
            for (i, row) in values.chunks(p).enumerate() {
                for (j, (&v, &dj)) in row.iter().zip(&d).enumerate() {
                    if v == 0 || v > dj {
                        return Err(Error::Contract(format!(
                            "value {v} at row {i}, column {j} outside 1..={dj}"
                        )));
                    }
                }
            }
        }
        Ok(Self { n, p, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Category counts `d_j`.
    pub fn d(&self) -> &[u16] {
        &self.d
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, j: usize) -> u16 {
        self.values[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = u16> + '_ {
        (0..self.n).map(move |i| self.get(i, j))
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let values = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        FeatureMatrix { n: rows.len(), p: self.p, d: self.d.clone(), values }
    }

    /// Columns at the given indices, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let values = (0..self.n).flat_map(|i| cols.iter().map(move |&j| self.get(i, j))).collect();
        FeatureMatrix {
            n: self.n,
            p: cols.len(),
            d: cols.iter().map(|&j| self.d[j]).collect(),
            values,
        }
    }

    pub fn to_bfm1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 2 * (self.p + self.values.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.p as u32).to_le_bytes());
        for v in self.d.iter().chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bfm1(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::format(0, "missing BFM1 magic"));
        }
        if bytes.len() < 12 {
            return Err(Error::format(bytes.len(), "truncated BFM1 header"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let (n, p) = (word(4), word(8));
        let count = n
            .checked_mul(p)
            .and_then(|np| np.checked_add(p))
            .and_then(|c| c.checked_mul(2))
            .and_then(|c| c.checked_add(12))
            .ok_or_else(|| Error::format(4, "BFM1 dimensions overflow"))?;
        let need = count;
        if bytes.len() < need {
            return Err(Error::format(bytes.len(), format!("BFM1 payload truncated, need {need} bytes")));
        }
        if bytes.len() > need {
            return Err(Error::format(need, "trailing bytes after BFM1 payload"));
        }
        let halves: Vec<u16> = bytes[12..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        let (d, values) = halves.split_at(p);
        Self::new(n, d.to_vec(), values.to_vec())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bfm1(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bfm1()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(FeatureMatrix::new(1, vec![2, 3], vec![1, 3]).is_ok());
        assert!(FeatureMatrix::new(1, vec![2, 3], vec![3, 1]).is_err());
        assert!(FeatureMatrix::new(1, vec![2, 3], vec![0, 1]).is_err());
        assert!(FeatureMatrix::new(2, vec![2, 3], vec![1, 1]).is_err());
    }

    #[test]
    fn bfm1_layout() {
        let m = FeatureMatrix::new(2, vec![2, 11], vec![1, 11, 2, 5]).unwrap();
        let b = m.to_bfm1();
        assert_eq!(&b[..4], b"BFM1");
        assert_eq!(&b[4..12], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[2, 0, 11, 0]);
        assert_eq!(&b[16..], &[1, 0, 11, 0, 2, 0, 5, 0]);
        assert!(matches!(FeatureMatrix::from_bfm1(&b[..b.len() - 1]), Err(Error::Format { .. })));
        assert!(matches!(FeatureMatrix::from_bfm1(b"BFM2"), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn row_and_column_selection() {
        let m = FeatureMatrix::new(3, vec![3, 4], vec![1, 2, 3, 4, 2, 1]).unwrap();
        assert_eq!(m.select_rows(&[2, 0]).values(), &[2, 1, 1, 2]);
        let c = m.select_columns(&[1]);
        assert_eq!((c.d(), c.values()), (&[4u16][..], &[2u16, 4, 1][..]));
    }

    proptest! {
        #[test]
        fn bfm1_round_trip(n in 0usize..20, d in proptest::collection::vec(1u16..30, 0..6), seed in any::<u64>()) {
            let mut s = seed;
            let values: Vec<u16> = (0..n * d.len())
                .map(|k| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    1 + ((s >> 33) as u16) % d[k % d.len()]
                })
                .collect();
            let m = FeatureMatrix::new(n, d, values).unwrap();
            prop_assert_eq!(FeatureMatrix::from_bfm1(&m.to_bfm1()).unwrap(), m);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut b = b"BFM1".to_vec();
            b.extend(bytes);
            let _ = FeatureMatrix::from_bfm1(&b);
        }
    }
}
