use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Op;

/// Unsigned fixed-point format of a value register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub bits: u32,
    pub frac: u32,
}

impl Default for FixedPoint {
    fn default() -> Self {
        Self { bits: 16, frac: 12 }
    }
}

impl FixedPoint {
    pub fn new(bits: u32, frac: u32) -> Result<Self> {
        if bits == 0 || bits > 40 || frac > bits {
            return Err(Error::Parameter(format!(
                "fixed-point format needs 0 < frac <= bits <= 40, got {bits}/{frac}"
            )));
        }
        Ok(Self { bits, frac })
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        (-(self.frac as f64)).exp2()
    }

    /// Nearest representable code for `value`.
    pub fn encode(&self, value: f64) -> Result<usize> {
        let code = (value / self.step()).round();
        let limit = (self.bits as f64).exp2();
        if !(code >= 0.0 && code < limit) {
            let int_bits = if value > 0.0 {
                (value.log2().floor() as i64 + 1).max(1) as u32
            } else {
                self.bits + 1
            };
            return Err(Error::Representation {
                value,
                required_bits: int_bits + self.frac,
                available_bits: self.bits,
            });
        }
        Ok(code as usize)
    }

    pub fn decode(&self, code: usize) -> f64 {
        code as f64 * self.step()
    }

    /// Rounds a value onto the grid.
    pub fn quantize(&self, value: f64) -> Result<f64> {
        Ok(self.decode(self.encode(value)?))
    }
}

/// Bit oracle |x>|y> -> |x>|y XOR code(f(x))> over an index register of size
/// `index_dim` followed by a value register in format `fp`.
pub fn oracle_from_function<F>(f: F, index_dim: usize, fp: FixedPoint) -> Result<Op>
where
    F: Fn(usize) -> f64,
{
    let vdim = 1usize << fp.bits;
    let codes: Vec<usize> = (0..index_dim)
        .map(|x| fp.encode(f(x)))
        .collect::<Result<_>>()?;
    let mut perm = Vec::with_capacity(index_dim * vdim);
    for (x, &code) in codes.iter().enumerate() {
        for y in 0..vdim {
            perm.push(x * vdim + (y ^ code));
        }
    }
    Ok(Op::Permutation(perm))
}

/// Diagonal oracle that flips the sign where the predicate holds.
pub fn phase_oracle<P>(pred: P, dim: usize) -> Op
where
    P: Fn(usize) -> bool,
{
    let marked: Vec<bool> = (0..dim).map(pred).collect();
    Op::phase_flip(&marked)
}
