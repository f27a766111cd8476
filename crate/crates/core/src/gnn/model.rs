use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const HIDDEN_UNITS: usize = 64;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Gcn,
    Sage,
}

impl Arch {
    fn code(self) -> u8 {
        match self {
            Arch::Gcn => 0,
            Arch::Sage => 1,
        }
    }

    /// Input width of the hidden layer: SAGE concatenates self and
    /// neighborhood features.
    pub fn hidden_input(self, feature_dim: usize) -> usize {
        match self {
            Arch::Gcn => feature_dim,
            Arch::Sage => 2 * feature_dim,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" => Ok(Arch::Sage),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture {other:?}"
            ))),
        }
    }
}

/// One hidden layer (`w1`, `b1`) and a linear two-class head (`w2`, `b2`).
/// Biases are stored as single-row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Arch,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Arch, feature_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let fan_in = arch.hidden_input(feature_dim);
        Self {
            arch,
            w1: glorot(&mut rng, fan_in, hidden),
            b1: Array2::zeros((1, hidden)),
            w2: glorot(&mut rng, hidden, NUM_CLASSES),
            b2: Array2::zeros((1, NUM_CLASSES)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch,
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array2::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array2::zeros(self.b2.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&Array2<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn feature_dim(&self) -> usize {
        match self.arch {
            Arch::Gcn => self.w1.nrows(),
            Arch::Sage => self.w1.nrows() / 2,
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.dim() == b.dim())
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{} params {:?} vs {} params {:?}",
                self.arch,
                self.tensors().map(|t| t.dim()),
                other.arch,
                other.tensors().map(|t| t.dim())
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Flat binary encoding:
    /// `b"FGLP"`, version `1u8`, arch `u8`, tensor count `u32`, then per
    /// tensor `rows u32`, `cols u32` and `rows * cols` row-major `f64`s.
    /// All integers and floats little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * (self.num_parameters() + 8));
        out.extend_from_slice(b"FGLP");
        out.push(1);
        out.push(self.arch.code());
        out.extend_from_slice(&4u32.to_le_bytes());
        for t in self.tensors() {
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != b"FGLP" {
            return Err(Error::Decode("bad magic".into()));
        }
        if cur.take(1)?[0] != 1 {
            return Err(Error::Decode("unsupported version".into()));
        }
        let arch = match cur.take(1)?[0] {
            0 => Arch::Gcn,
            1 => Arch::Sage,
            a => return Err(Error::Decode(format!("unknown arch code {a}"))),
        };
        if cur.u32()? != 4 {
            return Err(Error::Decode("expected 4 tensors".into()));
        }
        let mut tensors = Vec::with_capacity(4);
        for _ in 0..4 {
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Decode("tensor size overflow".into()))?;
            let data = cur.take(
                count
                    .checked_mul(8)
                    .ok_or_else(|| Error::Decode("tensor size overflow".into()))?,
            )?;
            let values: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Array2::from_shape_vec((rows, cols), values).expect("length checked"));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Decode("trailing bytes".into()));
        }
        let mut it = tensors.into_iter();
        let params = Self {
            arch,
            w1: it.next().expect("4 tensors"),
            b1: it.next().expect("4 tensors"),
            w2: it.next().expect("4 tensors"),
            b2: it.next().expect("4 tensors"),
        };
        let hidden = params.w1.ncols();
        if params.b1.dim() != (1, hidden)
            || params.w2.dim() != (hidden, NUM_CLASSES)
            || params.b2.dim() != (1, NUM_CLASSES)
            || (arch == Arch::Sage && !params.w1.nrows().is_multiple_of(2))
        {
            return Err(Error::Decode("inconsistent tensor shapes".into()));
        }
        Ok(params)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Decode("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shapes() {
        let g = ModelParams::init(Arch::Gcn, 7, HIDDEN_UNITS, 0);
        assert_eq!(g.w1.dim(), (7, 64));
        assert_eq!(g.w2.dim(), (64, 2));
        let s = ModelParams::init(Arch::Sage, 7, HIDDEN_UNITS, 0);
        assert_eq!(s.w1.dim(), (14, 64));
        assert_eq!(s.feature_dim(), 7);
        assert!(!g.same_shape(&s));
    }

    #[test]
    fn glorot_bounds() {
        let p = ModelParams::init(Arch::Gcn, 10, 64, 3);
        let bound = (6.0f64 / 74.0).sqrt();
        assert!(p.w1.iter().all(|v| v.abs() <= bound));
        assert_eq!(p, ModelParams::init(Arch::Gcn, 10, 64, 3));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(ModelParams::from_bytes(b"nope").is_err());
        let mut b = ModelParams::init(Arch::Gcn, 3, 4, 0).to_bytes();
        b.pop();
        assert!(ModelParams::from_bytes(&b).is_err());
        b.push(0);
        b.push(0);
        assert!(ModelParams::from_bytes(&b).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(f in 1usize..6, h in 1usize..8, seed in any::<u64>(), sage in any::<bool>()) {
            let arch = if sage { Arch::Sage } else { Arch::Gcn };
            let p = ModelParams::init(arch, f, h, seed);
            prop_assert_eq!(ModelParams::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }
}
