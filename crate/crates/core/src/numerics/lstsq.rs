//! Householder QR, one-sided Jacobi SVD and the least-squares solvers built on them.

use super::cmat::{dotc, norm2_sqr, CMat, C64, ZERO};
use crate::error::{Error, Result};

/// Relative rank tolerance factor; the cutoff is `RTOL_FACTOR * max(rows, cols) * σ_max`.
pub const RTOL_FACTOR: f64 = 1e-12;

/// Householder QR of a tall matrix kept in column-major form.
struct HouseholderQr {
    rows: usize,
    /// Reflector vectors, `v_k` acts on rows `k..`.
    reflectors: Vec<(Vec<C64>, f64)>,
    /// Upper triangular factor, `n × n`, column-major.
    r: Vec<Vec<C64>>,
}

impl HouseholderQr {
    fn new(mut cols: Vec<Vec<C64>>, rows: usize) -> Self {
        let n = cols.len();
        debug_assert!(rows >= n);
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let xnorm = norm2_sqr(x).sqrt();
            if xnorm == 0.0 {
                reflectors.push((Vec::new(), 0.0));
                continue;
            }
            let x0 = x[0];
            let phase = if x0.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let alpha = -phase * xnorm;
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm2 = norm2_sqr(&v);
            if vnorm2 == 0.0 {
                reflectors.push((Vec::new(), 0.0));
                continue;
            }
            let beta = 2.0 / vnorm2;
            for col in cols.iter_mut().skip(k) {
                apply_reflector(&v, beta, &mut col[k..]);
            }
            reflectors.push((v, beta));
        }
        let r = cols
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let mut rc = vec![ZERO; n];
                rc[..=j].copy_from_slice(&c[..=j]);
                rc
            })
            .collect();
        HouseholderQr {
            rows,
            reflectors,
            r,
        }
    }

    /// Applies `Q` in place.
    fn apply_q(&self, b: &mut [C64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            if *beta != 0.0 {
                apply_reflector(v, *beta, &mut b[k..]);
            }
        }
    }
}

#[inline]
fn apply_reflector(v: &[C64], beta: f64, x: &mut [C64]) {
    let s = dotc(v, x) * beta;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= vi * s;
    }
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix given by columns.
/// Returns `(left singular vectors as columns, singular values, right singular vectors as columns)`.
fn jacobi_svd(mut g: Vec<Vec<C64>>) -> (Vec<Vec<C64>>, Vec<f64>, Vec<Vec<C64>>) {
    let n = g.len();
    let m = if n == 0 { 0 } else { g[0].len() };
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut c = vec![ZERO; n];
            c[j] = C64::new(1.0, 0.0);
            c
        })
        .collect();
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norm2_sqr(&g[p]);
                let beta = norm2_sqr(&g[q]);
                let gamma = dotc(&g[p], &g[q]);
                let gabs = gamma.norm();
                if gabs == 0.0 || gabs <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gabs);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ph = (gamma / gabs).conj();
                rotate(&mut g, p, q, c, s, ph);
                rotate(&mut v, p, q, c, s, ph);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = g.iter().map(|c| norm2_sqr(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sv[b]
            .partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut u = Vec::with_capacity(n);
    let mut vv = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for &j in &order {
        let s = sv[j];
        let col = if s > 0.0 {
            g[j].iter().map(|z| z / s).collect()
        } else {
            vec![ZERO; m]
        };
        u.push(col);
        vv.push(v[j].clone());
        ss.push(s);
    }
    sv.clear();
    (u, ss, vv)
}

#[inline]
fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, ph: C64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let bp = *b * ph;
        let na = *a * c - bp * s;
        let nb = *a * s + bp * c;
        *a = na;
        *b = nb;
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᴴ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl Svd {
    pub fn new(a: &CMat) -> Svd {
        let (m, n) = a.shape();
        if m >= n {
            let qr = HouseholderQr::new(a.to_columns(), m);
            let (ur, s, v) = jacobi_svd(qr.r.clone());
            // U = Q [U_r; 0]
            let ucols: Vec<Vec<C64>> = ur
                .into_iter()
                .map(|c| {
                    let mut full = vec![ZERO; qr.rows];
                    full[..n].copy_from_slice(&c);
                    qr.apply_q(&mut full);
                    full
                })
                .collect();
            Svd {
                u: CMat::from_columns(m, &ucols),
                s,
                v: CMat::from_columns(n, &v),
            }
        } else {
            let t = Svd::new(&a.adjoint());
            Svd {
                u: t.v,
                s: t.s,
                v: t.u,
            }
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Singular values above the rank cutoff.
    pub fn rank(&self) -> usize {
        let tol = self.tolerance();
        self.s.iter().filter(|&&s| s > tol).count()
    }

    pub fn tolerance(&self) -> f64 {
        RTOL_FACTOR * self.u.rows().max(self.v.rows()) as f64 * self.sigma_max()
    }

    /// 2-norm condition number; infinite when rank deficient.
    pub fn cond(&self) -> f64 {
        match self.s.last() {
            Some(&smin) if smin > 0.0 => self.sigma_max() / smin,
            _ => f64::INFINITY,
        }
    }

    /// Applies `V diag(f(s)) Uᴴ` to `b`, treating singular values below the cutoff as zero.
    fn apply_filtered(&self, b: &CMat, f: impl Fn(f64) -> f64) -> CMat {
        let tol = self.tolerance();
        let k = self.s.len();
        let n = self.v.rows();
        let mut x = CMat::zeros(n, b.cols());
        let mut coef = vec![ZERO; b.cols()];
        for r in 0..k {
            let s = self.s[r];
            if s <= tol || s == 0.0 {
                continue;
            }
            let w = f(s);
            coef.iter_mut().for_each(|c| *c = ZERO);
            for i in 0..self.u.rows() {
                let ui = self.u[(i, r)].conj();
                if ui == ZERO {
                    continue;
                }
                for (c, bij) in coef.iter_mut().zip(b.row(i)) {
                    *c += ui * bij;
                }
            }
            for i in 0..n {
                let vi = self.v[(i, r)] * w;
                for (xv, c) in x.row_mut(i).iter_mut().zip(&coef) {
                    *xv += vi * c;
                }
            }
        }
        x
    }
}

fn check_rhs(op: &'static str, a: &CMat, b: &CMat) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument(format!("{op}: empty matrix")));
    }
    if a.rows() != b.rows() {
        return Err(Error::dims(
            op,
            format!("rhs rows = {}", a.rows()),
            b.rows(),
        ));
    }
    Ok(())
}

/// Minimum-norm least-squares solution of `A x ≈ b` (one column of `x` per column of `b`).
///
/// Singular values below `1e-12 · max(rows, cols) · σ_max` are treated as zero. An
/// all-zero `A` has rank 0 and yields the zero solution.
pub fn pinv_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    check_rhs("pinv_solve", a, b)?;
    if a.is_zero() {
        return Ok(CMat::zeros(a.cols(), b.cols()));
    }
    Ok(Svd::new(a).apply_filtered(b, |s| 1.0 / s))
}

/// `argmin ‖A x − b‖² + δ₂ ‖x‖²`; reduces to [`pinv_solve`] for `δ₂ = 0`.
pub fn ridge_solve(a: &CMat, b: &CMat, delta2: f64) -> Result<CMat> {
    check_rhs("ridge_solve", a, b)?;
    if !(delta2 >= 0.0) || !delta2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge weight must be a finite value >= 0, got {delta2}"
        )));
    }
    if delta2 == 0.0 {
        return pinv_solve(a, b);
    }
    if a.is_zero() {
        return Ok(CMat::zeros(a.cols(), b.cols()));
    }
    Ok(Svd::new(a).apply_filtered(b, |s| s / (s * s + delta2)))
}

/// Reusable least-squares factorization for many right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    svd: Svd,
}

impl LeastSquares {
    pub fn new(a: &CMat) -> Self {
        LeastSquares { svd: Svd::new(a) }
    }

    pub fn svd(&self) -> &Svd {
        &self.svd
    }

    pub fn solve(&self, b: &CMat) -> Result<CMat> {
        if b.rows() != self.svd.u.rows() {
            return Err(Error::dims(
                "LeastSquares::solve",
                self.svd.u.rows(),
                b.rows(),
            ));
        }
        if self.svd.sigma_max() == 0.0 {
            return Ok(CMat::zeros(self.svd.v.rows(), b.cols()));
        }
        Ok(self.svd.apply_filtered(b, |s| 1.0 / s))
    }
}
