use serde::{Deserialize, Serialize};

use super::condense::DenseQp;
use crate::error::{Error, Result};
use crate::numerics::{dot, lu_solve, norm_inf, sym_eigen, Cholesky, Mat, C64};

/// ADMM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmSettings {
    pub rho: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub sigma: f64,
    /// Over-relaxation.
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub adapt_every: usize,
    pub polish: bool,
    pub scaling_iters: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 0.1,
            rho_min: 1e-3,
            rho_max: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-5,
            max_iter: 20000,
            check_every: 5,
            adapt_every: 25,
            polish: true,
            scaling_iters: 10,
        }
    }
}

/// Residuals of the optimality conditions, recomputed from the returned point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kkt {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// Multipliers of `L u ≤ rhs`, non-negative.
    pub duals: Vec<f64>,
    pub kkt: Kkt,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
}

/// Optimality residuals of `(u, y)` for `min uᵀHu + gᵀu s.t. A u ≤ b`.
pub fn kkt_residuals(hess: &Mat, g: &[f64], a: &Mat, b: &[f64], u: &[f64], y: &[f64]) -> Kkt {
    let hu = hess.mul_vec(u);
    let aty = a.tr_mul_vec(y);
    let stat = (0..u.len())
        .map(|i| (2.0 * hu[i] + g[i] + aty[i]).abs())
        .fold(0.0, f64::max);
    let au = a.mul_vec(u);
    let primal = au
        .iter()
        .zip(b)
        .map(|(x, bi)| (x - bi).max(0.0))
        .fold(0.0, f64::max);
    let comp = au
        .iter()
        .zip(b)
        .zip(y)
        .map(|((x, bi), yi)| (yi * (bi - x)).abs())
        .fold(0.0, f64::max);
    let dual_neg = y.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    Kkt {
        stationarity: stat.max(dual_neg),
        primal,
        complementarity: comp,
    }
}

/// Warm start: primal and (optionally) dual guesses in the original scaling.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub u: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

/// ADMM solver for `min uᵀHu + gᵀu s.t. A u ≤ b` with `H` and `A` fixed across solves.
///
/// The data are equilibrated once; factorizations are cached per step size.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: AdmmSettings,
    hess: Mat,
    a: Mat,
    /// Scaled `P = 2cDHD` and `Ā = EAD`.
    p: Mat,
    ab: Mat,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    factor: Option<(f64, Cholesky)>,
    /// Pseudo-inverse of `H` for the unconstrained case.
    pinv: Option<Mat>,
}

fn col_inf(m: &Mat, j: usize) -> f64 {
    (0..m.rows()).map(|i| m[(i, j)].abs()).fold(0.0, f64::max)
}

fn clip_norm(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

impl QpSolver {
    pub fn new(hess: &Mat, a: &Mat, settings: AdmmSettings) -> Result<Self> {
        let n = hess.rows();
        if hess.cols() != n || a.cols() != n {
            return Err(Error::dims("QP data", n, a.cols()));
        }
        let mut p = hess.scale(2.0);
        p.symmetrize();
        let mut ab = a.clone();
        let nc = a.rows();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; nc];
        let mut c = 1.0;
        for _ in 0..settings.scaling_iters {
            let dx: Vec<f64> = (0..n)
                .map(|j| 1.0 / clip_norm(col_inf(&p, j).max(col_inf(&ab, j))).sqrt())
                .collect();
            let dc: Vec<f64> = (0..nc)
                .map(|i| 1.0 / clip_norm(norm_inf(ab.row(i))).sqrt())
                .collect();
            p = Mat::from_fn(n, n, |i, j| dx[i] * p[(i, j)] * dx[j]);
            ab = Mat::from_fn(nc, n, |i, j| dc[i] * ab[(i, j)] * dx[j]);
            d.iter_mut().zip(&dx).for_each(|(a, b)| *a *= b);
            e.iter_mut().zip(&dc).for_each(|(a, b)| *a *= b);
            let mean_col = if n > 0 {
                (0..n).map(|j| col_inf(&p, j)).sum::<f64>() / n as f64
            } else {
                1.0
            };
            let gamma = 1.0 / clip_norm(mean_col);
            p = p.scale(gamma);
            c *= gamma;
        }
        let pinv = if nc == 0 {
            let (ev, v) = sym_eigen(hess);
            let top = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let tol = top * n as f64 * f64::EPSILON * 10.0;
            let inv: Vec<f64> = ev
                .iter()
                .map(|&x| if x > tol { 1.0 / x } else { 0.0 })
                .collect();
            Some(Mat::from_fn(n, n, |i, j| {
                (0..n).map(|k| v[(i, k)] * inv[k] * v[(j, k)]).sum()
            }))
        } else {
            None
        };
        Ok(QpSolver {
            settings,
            hess: hess.clone(),
            a: a.clone(),
            p,
            ab,
            d,
            e,
            c,
            factor: None,
            pinv,
        })
    }

    pub fn for_dense(qp: &DenseQp, settings: AdmmSettings) -> Result<Self> {
        Self::new(&qp.h1, &qp.l, settings)
    }

    fn factor(&mut self, rho: f64) -> Result<()> {
        if self.factor.as_ref().is_some_and(|(r, _)| *r == rho) {
            return Ok(());
        }
        let n = self.p.rows();
        let mut k = self.p.clone();
        let ata = self.ab.transpose().matmul(&self.ab);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += rho * ata[(i, j)];
            }
            k[(i, i)] += self.settings.sigma;
        }
        self.factor = Some((
            rho,
            Cholesky::new(&k).map_err(|e| e.at("ADMM factorization"))?,
        ));
        Ok(())
    }

    /// Solves for linear term `g` and right-hand side `b`.
    pub fn solve(&mut self, g: &[f64], b: &[f64], warm: Option<&WarmStart>) -> Result<QpSolution> {
        let n = self.p.rows();
        let nc = self.ab.rows();
        if g.len() != n || b.len() != nc {
            return Err(Error::dims(
                "QP vectors",
                format!("{n} and {nc}"),
                format!("{} and {}", g.len(), b.len()),
            ));
        }
        if g.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data".into()));
        }
        if let Some(pinv) = &self.pinv {
            let u: Vec<f64> = pinv.mul_vec(g).iter().map(|v| -0.5 * v).collect();
            let kkt = kkt_residuals(&self.hess, g, &self.a, b, &u, &[]);
            return Ok(QpSolution {
                u,
                duals: Vec::new(),
                kkt,
                iterations: 0,
                converged: true,
                polished: false,
            });
        }
        let s = self.settings.clone();
        let (d, e, c) = (self.d.clone(), self.e.clone(), self.c);
        let q: Vec<f64> = (0..n).map(|i| c * d[i] * g[i]).collect();
        let ub: Vec<f64> = (0..nc).map(|i| e[i] * b[i]).collect();

        let mut x: Vec<f64> = match warm {
            Some(w) if w.u.len() == n => (0..n).map(|i| w.u[i] / d[i]).collect(),
            _ => vec![0.0; n],
        };
        let mut z: Vec<f64> = self
            .ab
            .mul_vec(&x)
            .iter()
            .zip(&ub)
            .map(|(v, u)| v.min(*u))
            .collect();
        let mut y: Vec<f64> = match warm.and_then(|w| w.y.as_ref()) {
            Some(y0) if y0.len() == nc => (0..nc).map(|i| c * y0[i] / e[i]).collect(),
            _ => vec![0.0; nc],
        };
        let mut rho = s.rho;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut converged = false;
        let mut iters = 0;
        let mut y_prev = y.clone();
        let mut x_prev = x.clone();
        for k in 1..=s.max_iter {
            iters = k;
            self.factor(rho)?;
            let chol = &self.factor.as_ref().expect("factored").1;
            let w: Vec<f64> = (0..nc).map(|i| rho * z[i] - y[i]).collect();
            let atw = self.ab.tr_mul_vec(&w);
            let rhs: Vec<f64> = (0..n).map(|i| s.sigma * x[i] - q[i] + atw[i]).collect();
            let xt = chol.solve(&rhs);
            let zt = self.ab.mul_vec(&xt);
            for i in 0..n {
                x[i] = s.alpha * xt[i] + (1.0 - s.alpha) * x[i];
            }
            for i in 0..nc {
                let zr = s.alpha * zt[i] + (1.0 - s.alpha) * z[i];
                let zn = (zr + y[i] / rho).min(ub[i]);
                y[i] += rho * (zr - zn);
                z[i] = zn;
            }
            if k % s.check_every != 0 && k != s.max_iter {
                continue;
            }
            let ax = self.ab.mul_vec(&x);
            let px = self.p.mul_vec(&x);
            let aty = self.ab.tr_mul_vec(&y);
            let prim = (0..nc)
                .map(|i| ((ax[i] - z[i]) / e[i]).abs())
                .fold(0.0, f64::max);
            let dual = (0..n)
                .map(|i| ((px[i] + q[i] + aty[i]) / (c * d[i])).abs())
                .fold(0.0, f64::max);
            let ax_n = (0..nc).map(|i| (ax[i] / e[i]).abs()).fold(0.0, f64::max);
            let z_n = (0..nc).map(|i| (z[i] / e[i]).abs()).fold(0.0, f64::max);
            let px_n = (0..n).map(|i| (px[i] / d[i]).abs()).fold(0.0, f64::max) / c;
            let aty_n = (0..n).map(|i| (aty[i] / d[i]).abs()).fold(0.0, f64::max) / c;
            let q_n = norm_inf(g);
            let eps_p = s.eps_abs + s.eps_rel * ax_n.max(z_n);
            let eps_d = s.eps_abs + s.eps_rel * px_n.max(aty_n).max(q_n);
            let score = (prim / eps_p).max(dual / eps_d);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, x.clone(), y.clone(), z.clone()));
            }
            if prim <= eps_p && dual <= eps_d {
                converged = true;
                break;
            }

            // Infeasibility certificates on the iterate differences.
            let dy: Vec<f64> = (0..nc).map(|i| y[i] - y_prev[i]).collect();
            let dy_n = (0..nc).map(|i| (e[i] * dy[i]).abs()).fold(0.0, f64::max);
            if dy_n > s.eps_infeasible && dy.iter().all(|v| *v >= 0.0) {
                let atdy = self.ab.tr_mul_vec(&dy);
                let lhs = (0..n).map(|i| (atdy[i] / d[i]).abs()).fold(0.0, f64::max);
                if lhs <= s.eps_infeasible * dy_n && dot(&ub, &dy) < -s.eps_infeasible * dy_n {
                    return Err(Error::Infeasible);
                }
            }
            let dx: Vec<f64> = (0..n).map(|i| x[i] - x_prev[i]).collect();
            let dx_n = (0..n).map(|i| (d[i] * dx[i]).abs()).fold(0.0, f64::max);
            if dx_n > s.eps_infeasible {
                let pdx = self.p.mul_vec(&dx);
                let adx = self.ab.mul_vec(&dx);
                let tol = s.eps_infeasible * dx_n;
                if (0..n).all(|i| (pdx[i] / d[i]).abs() <= c * tol)
                    && dot(&q, &dx) < -c * tol
                    && (0..nc).all(|i| adx[i] / e[i] <= tol)
                {
                    return Err(Error::Unbounded);
                }
            }
            y_prev.clone_from(&y);
            x_prev.clone_from(&x);

            if k % s.adapt_every == 0 {
                let rp = prim / ax_n.max(z_n).max(1e-30);
                let rd = dual / px_n.max(aty_n).max(q_n).max(1e-30);
                let new = (rho * (rp / rd.max(1e-30)).sqrt()).clamp(s.rho_min, s.rho_max);
                if new > 5.0 * rho || new < rho / 5.0 {
                    rho = new;
                }
            }
        }
        if !converged {
            if let Some((_, bx, by, bz)) = best {
                x = bx;
                y = by;
                z = bz;
            }
        }
        let mut u: Vec<f64> = (0..n).map(|i| d[i] * x[i]).collect();
        let mut duals: Vec<f64> = (0..nc).map(|i| (e[i] * y[i] / c).max(0.0)).collect();
        let mut kkt = kkt_residuals(&self.hess, g, &self.a, b, &u, &duals);
        let mut polished = false;
        if s.polish {
            let active: Vec<usize> = (0..nc).filter(|&i| ub[i] - z[i] < y[i]).collect();
            if let Some((pu, py)) = self.polish(g, b, &active) {
                let pk = kkt_residuals(&self.hess, g, &self.a, b, &pu, &py);
                let worst = |k: &Kkt| k.stationarity.max(k.primal).max(k.complementarity);
                if worst(&pk) <= worst(&kkt) {
                    u = pu;
                    duals = py;
                    kkt = pk;
                    polished = true;
                    converged = converged || worst(&kkt) <= s.eps_abs;
                }
            }
        }
        Ok(QpSolution {
            u,
            duals,
            kkt,
            iterations: iters,
            converged,
            polished,
        })
    }

    /// Solves the equality-constrained problem on a guessed active set.
    fn polish(&self, g: &[f64], b: &[f64], active: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.hess.rows();
        let k = active.len();
        let dim = n + k;
        let kkt = Mat::from_fn(dim, dim, |i, j| match (i < n, j < n) {
            (true, true) => 2.0 * self.hess[(i, j)],
            (true, false) => self.a[(active[j - n], i)],
            (false, true) => self.a[(active[i - n], j)],
            (false, false) => 0.0,
        });
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        rhs.extend(active.iter().map(|&i| b[i]));
        let mut sol = lu_solve(&kkt, &rhs)?;
        for _ in 0..3 {
            let r = kkt.mul_vec(&sol);
            let res: Vec<f64> = rhs.iter().zip(&r).map(|(a, b)| a - b).collect();
            let corr = lu_solve(&kkt, &res)?;
            sol.iter_mut().zip(corr).for_each(|(s, c)| *s += c);
        }
        if sol[n..].iter().any(|&v| v < -1e-9) {
            return None;
        }
        let mut y = vec![0.0; self.a.rows()];
        for (j, &i) in active.iter().enumerate() {
            y[i] = sol[n + j].max(0.0);
        }
        sol.truncate(n);
        Some((sol, y))
    }
}

/// One-shot solve of a condensed problem at the lifted state `z0`.
pub fn solve_qp(
    qp: &DenseQp,
    z0: &[C64],
    reference: Option<&[f64]>,
    warm: Option<&WarmStart>,
    settings: &AdmmSettings,
) -> Result<QpSolution> {
    let g = qp.linear_term(z0, reference)?;
    let b = qp.rhs(z0);
    QpSolver::for_dense(qp, settings.clone())?.solve(&g, &b, warm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_scalar() {
        // min u² s.t. u ≤ −1.
        let mut s = QpSolver::new(
            &Mat::diag(&[1.0]),
            &Mat::diag(&[1.0]),
            AdmmSettings::default(),
        )
        .unwrap();
        let sol = s.solve(&[0.0], &[-1.0], None).unwrap();
        assert!(sol.converged);
        assert!((sol.u[0] + 1.0).abs() < 1e-6);
        assert!(sol.duals[0] > 0.0);
        assert!((sol.duals[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn unconstrained_closed_form() {
        let h = Mat::from_vec(2, 2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let mut s = QpSolver::new(&h, &Mat::zeros(0, 2), AdmmSettings::default()).unwrap();
        let g = [1.0, -3.0];
        let sol = s.solve(&g, &[], None).unwrap();
        let hu = h.mul_vec(&sol.u);
        assert!((2.0 * hu[0] + g[0]).abs() < 1e-12 && (2.0 * hu[1] + g[1]).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // u ≤ −1 and −u ≤ −1.
        let a = Mat::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        let mut s = QpSolver::new(&Mat::diag(&[1.0]), &a, AdmmSettings::default()).unwrap();
        assert!(matches!(
            s.solve(&[0.0], &[-1.0, -1.0], None),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn unbounded_detected() {
        let a = Mat::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let mut s = QpSolver::new(&Mat::diag(&[1.0, 0.0]), &a, AdmmSettings::default()).unwrap();
        assert!(matches!(
            s.solve(&[0.0, 1.0], &[1.0], None),
            Err(Error::Unbounded)
        ));
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let h = Mat::from_vec(3, 3, vec![2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]).unwrap();
        let a = Mat::from_vec(2, 3, vec![1.0, 1.0, 1.0, -1.0, 0.0, 1.0]).unwrap();
        let g = [-3.0, -2.0, -1.0];
        let b = [1.0, 0.2];
        let mut s = QpSolver::new(&h, &a, AdmmSettings::default()).unwrap();
        let cold = s.solve(&g, &b, None).unwrap();
        let warm = s
            .solve(
                &g,
                &b,
                Some(&WarmStart {
                    u: cold.u.iter().map(|v| v + 0.1).collect(),
                    y: None,
                }),
            )
            .unwrap();
        for (a, b) in cold.u.iter().zip(&warm.u) {
            assert!((a - b).abs() < 1e-5);
        }
        assert!(
            cold.kkt.stationarity < 1e-5
                && cold.kkt.primal < 1e-6
                && cold.kkt.complementarity < 1e-6
        );
    }
}
