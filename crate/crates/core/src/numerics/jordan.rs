use serde::{Deserialize, Serialize};

use super::cmat::{CMat, C64};
use crate::error::{Error, Result};

/// A single Jordan block `J = λI + N` of dimension `size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JordanBlock {
    pub lambda: C64,
    pub size: usize,
}

impl JordanBlock {
    pub fn new(lambda: C64, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument(
                "Jordan block size must be >= 1".into(),
            ));
        }
        Ok(JordanBlock { lambda, size })
    }

    pub fn scalar(lambda: C64) -> Self {
        JordanBlock { lambda, size: 1 }
    }

    /// Explicit matrix of the block.
    pub fn matrix(&self) -> CMat {
        CMat::from_fn(self.size, self.size, |i, j| {
            if i == j {
                self.lambda
            } else if j == i + 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// `exp(J t)`: upper triangular with entry `(i, i+k) = e^{λt} tᵏ / k!`.
pub fn jordan_exp(block: &JordanBlock, t: f64) -> Result<CMat> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time must be finite, got {t}"
        )));
    }
    let n = block.size;
    let e = (block.lambda * t).exp();
    let mut coef = Vec::with_capacity(n);
    let mut c = 1.0;
    for k in 0..n {
        if k > 0 {
            c *= t / k as f64;
        }
        coef.push(e * c);
    }
    Ok(CMat::from_fn(n, n, |i, j| {
        if j >= i {
            coef[j - i]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scaling and squaring with a truncated Taylor series.
    fn expm_oracle(a: &CMat) -> CMat {
        let norm = a.max_abs() * a.rows() as f64;
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let scaled = a.scale(C64::new(0.5f64.powi(s), 0.0));
        let n = a.rows();
        let mut term = CMat::identity(n);
        let mut sum = CMat::identity(n);
        for k in 1..30 {
            term = term
                .matmul(&scaled)
                .unwrap()
                .scale(C64::new(1.0 / k as f64, 0.0));
            sum = sum.add(&term).unwrap();
        }
        for _ in 0..s {
            sum = sum.matmul(&sum).unwrap();
        }
        sum
    }

    #[test]
    fn scalar_zero_block_is_identity() {
        let e = jordan_exp(&JordanBlock::scalar(C64::new(0.0, 0.0)), 5.0).unwrap();
        assert_eq!(e[(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn nilpotent_size_two() {
        let e = jordan_exp(&JordanBlock::new(C64::new(0.0, 0.0), 2).unwrap(), 3.0).unwrap();
        assert_eq!(e[(0, 0)].re, 1.0);
        assert_eq!(e[(0, 1)].re, 3.0);
        assert_eq!(e[(1, 0)].re, 0.0);
        assert_eq!(e[(1, 1)].re, 1.0);
    }

    #[test]
    fn matches_generic_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let lam = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
            let t = rng.random_range(-1.5..1.5);
            let blk = JordanBlock::new(lam, 3).unwrap();
            let closed = jordan_exp(&blk, t).unwrap();
            let oracle = expm_oracle(&blk.matrix().scale(C64::new(t, 0.0)));
            let scale = oracle.max_abs().max(1.0);
            assert!(closed.sub(&oracle).unwrap().max_abs() / scale < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_time_and_size() {
        assert!(jordan_exp(&JordanBlock::scalar(C64::new(1.0, 0.0)), f64::NAN).is_err());
        assert!(JordanBlock::new(C64::new(1.0, 0.0), 0).is_err());
    }

    #[test]
    fn semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let lam = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let blk = JordanBlock::new(lam, rng.random_range(1..5)).unwrap();
            let t1 = rng.random_range(-2.0..2.0);
            let t2 = rng.random_range(-2.0..2.0);
            let lhs = jordan_exp(&blk, t1 + t2).unwrap();
            let rhs = jordan_exp(&blk, t1)
                .unwrap()
                .matmul(&jordan_exp(&blk, t2).unwrap())
                .unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10 * lhs.max_abs().max(1.0));
        }
    }
}
