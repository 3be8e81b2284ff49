use crate::error::{Error, Result};
use crate::numerics::{CMat, Svd, C64};

/// Largest admissible `Re(λ) · Ms · Ts` before `e^{λ k Ts}` overflows.
const MAX_EXPONENT: f64 = 700.0;

/// Powers `1, w, w², …, w^Ms` of `w = e^{λ Ts}`, by repeated multiplication.
pub fn exp_powers(lambda: C64, ms: usize, ts: f64) -> Result<Vec<C64>> {
    if !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(Error::NonFinite(format!("eigenvalue {lambda}")));
    }
    if lambda.re * ms as f64 * ts > MAX_EXPONENT {
        return Err(Error::Overflow {
            re: lambda.re,
            im: lambda.im,
        });
    }
    let w = (lambda * ts).exp();
    let mut out = Vec::with_capacity(ms + 1);
    let mut z = C64::new(1.0, 0.0);
    out.push(z);
    for _ in 0..ms {
        z *= w;
        out.push(z);
    }
    Ok(out)
}

/// The block-structured matrix `L_Λ = [L_λ₁, …, L_λN]`, `L_λ = bdiag(Λ, …, Λ)`.
///
/// Only the shared `(Ms+1) × N` Vandermonde block is stored. Rows are ordered
/// trajectory-major (row `j (Ms+1) + k`), columns eigenvalue-major (column `l Mt + j`).
#[derive(Debug, Clone)]
pub struct LMatrix {
    lambdas: Vec<C64>,
    mt: usize,
    ms: usize,
    ts: f64,
    block: CMat,
}

/// Builds [`LMatrix`] for eigenvalues `lambdas` over `mt` trajectories of `ms` steps.
#[allow(non_snake_case)]
pub fn build_L(lambdas: &[C64], mt: usize, ms: usize, ts: f64) -> Result<LMatrix> {
    LMatrix::new(lambdas, mt, ms, ts)
}

impl LMatrix {
    pub fn new(lambdas: &[C64], mt: usize, ms: usize, ts: f64) -> Result<Self> {
        if !(ts > 0.0) || mt == 0 {
            return Err(Error::InvalidArgument(
                "L matrix needs Ts > 0 and Mt >= 1".into(),
            ));
        }
        let cols = lambdas
            .iter()
            .map(|&l| exp_powers(l, ms, ts))
            .collect::<Result<Vec<_>>>()?;
        Ok(LMatrix {
            lambdas: lambdas.to_vec(),
            mt,
            ms,
            ts,
            block: CMat::from_columns(ms + 1, &cols),
        })
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    /// The per-trajectory Vandermonde block.
    pub fn block(&self) -> &CMat {
        &self.block
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn rows(&self) -> usize {
        self.mt * (self.ms + 1)
    }

    pub fn cols(&self) -> usize {
        self.mt * self.lambdas.len()
    }

    /// `L g` without materializing `L`.
    pub fn mul(&self, g: &[C64]) -> Result<Vec<C64>> {
        if g.len() != self.cols() {
            return Err(Error::dims("LMatrix::mul", self.cols(), g.len()));
        }
        let ni = self.lambdas.len();
        let mut out = Vec::with_capacity(self.rows());
        for j in 0..self.mt {
            let coef: Vec<C64> = (0..ni).map(|l| g[l * self.mt + j]).collect();
            out.extend(self.block.mul_vec(&coef));
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> CMat {
        let ni = self.lambdas.len();
        let s = self.ms + 1;
        let mut d = CMat::zeros(self.rows(), self.cols());
        for j in 0..self.mt {
            for l in 0..ni {
                for k in 0..s {
                    d[(j * s + k, l * self.mt + j)] = self.block[(k, l)];
                }
            }
        }
        d
    }

    /// Minimum-norm least-squares solution of `L g ≈ h`, solved trajectory by trajectory.
    pub fn solve(&self, h: &[C64]) -> Result<Vec<C64>> {
        if h.len() != self.rows() {
            return Err(Error::dims("LMatrix::solve", self.rows(), h.len()));
        }
        let f = Projector::new(&self.block);
        let ni = self.lambdas.len();
        let mut g = vec![C64::new(0.0, 0.0); self.cols()];
        for (j, hj) in h.chunks_exact(self.ms + 1).enumerate() {
            let q = f.coefficients(hj);
            for l in 0..ni {
                g[l * self.mt + j] = q[l];
            }
        }
        Ok(g)
    }
}

/// Orthogonal projection onto the range of a Vandermonde block.
///
/// Columns are normalized before the SVD so that the rank decision and the
/// conditioning estimate do not depend on column scaling.
#[derive(Debug, Clone)]
pub(crate) struct Projector {
    scale: Vec<f64>,
    svd: Svd,
    rank: usize,
}

impl Projector {
    pub(crate) fn new(v: &CMat) -> Self {
        let n = v.cols();
        let scale: Vec<f64> = (0..n)
            .map(|l| {
                let s = (0..v.rows())
                    .map(|k| v[(k, l)].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let vs = CMat::from_fn(v.rows(), n, |k, l| v[(k, l)] / scale[l]);
        let svd = Svd::new(&vs);
        let tol = svd.tolerance();
        let rank = svd.s.iter().filter(|&&s| s > tol && s > 0.0).count();
        Projector { scale, svd, rank }
    }

    /// Condition number of the Gram matrix of the normalized columns.
    pub(crate) fn gram_cond(&self) -> f64 {
        if self.rank < self.scale.len() {
            return f64::INFINITY;
        }
        let c = self.svd.s[0] / self.svd.s[self.rank - 1];
        c * c
    }

    /// `Uᴴ h` over the numerical range.
    fn range_coords(&self, h: &[C64]) -> Vec<C64> {
        let u = &self.svd.u;
        (0..self.rank)
            .map(|r| (0..u.rows()).map(|k| u[(k, r)].conj() * h[k]).sum())
            .collect()
    }

    /// Residual `h − P h`.
    pub(crate) fn residual(&self, h: &[C64]) -> Vec<C64> {
        let c = self.range_coords(h);
        let u = &self.svd.u;
        (0..u.rows())
            .map(|k| h[k] - (0..self.rank).map(|r| u[(k, r)] * c[r]).sum::<C64>())
            .collect()
    }

    /// Minimum-norm coefficients `V† h` in the original column scaling.
    pub(crate) fn coefficients(&self, h: &[C64]) -> Vec<C64> {
        let c = self.range_coords(h);
        let v = &self.svd.v;
        (0..self.scale.len())
            .map(|l| {
                let s: C64 = (0..self.rank)
                    .map(|r| v[(l, r)] * (c[r] / self.svd.s[r]))
                    .sum();
                s / self.scale[l]
            })
            .collect()
    }
}
