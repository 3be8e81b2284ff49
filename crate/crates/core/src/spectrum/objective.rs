use rayon::prelude::*;

use crate::boundary::{LMatrix, Projector};
use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::C64;

/// Gram-matrix condition number above which the gradient is refused.
pub const MAX_GRAM_COND: f64 = 1e14;

/// Projection error of one output component as a function of its eigenvalues.
///
/// Target values are stored trajectory by trajectory, `Ms + 1` samples each.
#[derive(Debug, Clone)]
pub struct LambdaObjective {
    ts: f64,
    mt: usize,
    ms: usize,
    h: Vec<C64>,
}

impl LambdaObjective {
    pub fn new(ts: f64, mt: usize, ms: usize, h: Vec<C64>) -> Result<Self> {
        if h.len() != mt * (ms + 1) {
            return Err(Error::dims(
                "LambdaObjective targets",
                mt * (ms + 1),
                h.len(),
            ));
        }
        if !(ts > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Ts must be positive, got {ts}"
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("objective targets".into()));
        }
        Ok(LambdaObjective { ts, mt, ms, h })
    }

    /// Targets `h(x)` evaluated on every sample of `ds`.
    pub fn from_dataset(ds: &TrajectoryDataset, h: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let vals = ds.samples().map(|x| C64::new(h(x), 0.0)).collect();
        Self::new(ds.ts(), ds.n_traj(), ds.n_steps(), vals)
    }

    /// Targets equal to state coordinate `component`.
    pub fn state_component(ds: &TrajectoryDataset, component: usize) -> Result<Self> {
        if component >= ds.state_dim() {
            return Err(Error::dims(
                "state component",
                format!("< {}", ds.state_dim()),
                component,
            ));
        }
        Self::from_dataset(ds, |x| x[component])
    }

    pub fn targets(&self) -> &[C64] {
        &self.h
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn n_traj(&self) -> usize {
        self.mt
    }

    pub fn n_steps(&self) -> usize {
        self.ms
    }

    pub fn target_norm2(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }

    fn traj(&self, j: usize) -> &[C64] {
        let s = self.ms + 1;
        &self.h[j * s..(j + 1) * s]
    }

    fn check(&self, lambdas: &[C64]) -> Result<LMatrix> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one eigenvalue is required".into(),
            ));
        }
        if lambdas
            .iter()
            .any(|l| !l.re.is_finite() || !l.im.is_finite())
        {
            return Err(Error::NonFinite("eigenvalues".into()));
        }
        LMatrix::new(lambdas, self.mt, self.ms, self.ts)
    }

    /// Objective contribution of every trajectory, in trajectory order.
    pub fn per_trajectory(&self, lambdas: &[C64]) -> Result<Vec<f64>> {
        let l = self.check(lambdas)?;
        let p = Projector::new(l.block());
        Ok((0..self.mt)
            .into_par_iter()
            .map(|j| p.residual(self.traj(j)).iter().map(|z| z.norm_sqr()).sum())
            .collect())
    }

    /// `‖h‖² − ‖L L† h‖²`, evaluated as the squared residual norm.
    pub fn value(&self, lambdas: &[C64]) -> Result<f64> {
        Ok(self.per_trajectory(lambdas)?.iter().sum::<f64>().max(0.0))
    }

    /// Value and gradient `[∂p/∂Re λ₁, ∂p/∂Im λ₁, …]`.
    ///
    /// With `q = (LᴴL)⁻¹Lᴴh` and `r = h − Lq`, the two terms of the derivative combine to
    /// `∂p/∂θ = −2 Re(rᴴ ∂L/∂θ q)`.
    pub fn value_and_gradient(&self, lambdas: &[C64]) -> Result<(f64, Vec<f64>)> {
        let l = self.check(lambdas)?;
        let v = l.block();
        let p = Projector::new(v);
        let cond = p.gram_cond();
        if !(cond <= MAX_GRAM_COND) {
            return Err(Error::IllConditioned { cond });
        }
        let ni = lambdas.len();
        // ∂Λ/∂Re λ = Ts [0, 1, …, Ms]ᵀ ∘ Λ
        let dv: Vec<Vec<C64>> = (0..ni)
            .map(|c| {
                (0..=self.ms)
                    .map(|k| v[(k, c)] * (self.ts * k as f64))
                    .collect()
            })
            .collect();
        let parts: Vec<(f64, Vec<C64>)> = (0..self.mt)
            .into_par_iter()
            .map(|j| {
                let h = self.traj(j);
                let q = p.coefficients(h);
                let r = p.residual(h);
                let val: f64 = r.iter().map(|z| z.norm_sqr()).sum();
                let w: Vec<C64> = (0..ni)
                    .map(|c| {
                        let s: C64 = r.iter().zip(&dv[c]).map(|(ri, di)| ri.conj() * di).sum();
                        s * q[c]
                    })
                    .collect();
                (val, w)
            })
            .collect();
        let mut val = 0.0;
        let mut acc = vec![C64::new(0.0, 0.0); ni];
        for (v, w) in parts {
            val += v;
            for (a, b) in acc.iter_mut().zip(w) {
                *a += b;
            }
        }
        let mut grad = Vec::with_capacity(2 * ni);
        for a in acc {
            grad.push(-2.0 * a.re);
            // ∂Λ/∂Im λ = i ∂Λ/∂Re λ, and −2 Re(i z) = 2 Im(z)
            grad.push(2.0 * a.im);
        }
        Ok((val.max(0.0), grad))
    }
}

pub fn objective_value(obj: &LambdaObjective, lambdas: &[C64]) -> Result<f64> {
    obj.value(lambdas)
}

pub fn objective_gradient(obj: &LambdaObjective, lambdas: &[C64]) -> Result<Vec<f64>> {
    obj.value_and_gradient(lambdas).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{pinv_solve, CMat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Data of `ẋ = a x` sampled exactly, `h = x`.
    fn scalar_linear(a: f64, mt: usize, ms: usize, ts: f64) -> LambdaObjective {
        let mut h = Vec::new();
        for j in 0..mt {
            let x0 = 0.2 + 0.3 * j as f64;
            for k in 0..=ms {
                h.push(C64::new(x0 * (a * k as f64 * ts).exp(), 0.0));
            }
        }
        LambdaObjective::new(ts, mt, ms, h).unwrap()
    }

    fn random_instance(rng: &mut impl Rng, mt: usize, ms: usize) -> LambdaObjective {
        let h = (0..mt * (ms + 1))
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)))
            .collect();
        LambdaObjective::new(0.1, mt, ms, h).unwrap()
    }

    fn central_difference(obj: &LambdaObjective, lams: &[C64], step: f64) -> Vec<f64> {
        let mut g = Vec::new();
        for c in 0..lams.len() {
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut p = lams.to_vec();
                let mut m = lams.to_vec();
                p[c] += dir * step;
                m[c] -= dir * step;
                g.push((obj.value(&p).unwrap() - obj.value(&m).unwrap()) / (2.0 * step));
            }
        }
        g
    }

    #[test]
    fn exact_eigenvalue_has_zero_objective() {
        let obj = scalar_linear(-0.7, 4, 30, 0.05);
        assert!(obj.value(&[C64::new(-0.7, 0.0)]).unwrap() < 1e-20);
        let g = objective_gradient(&obj, &[C64::new(-0.7, 0.0)]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-7), "{g:?}");
    }

    #[test]
    fn zero_targets() {
        let obj = LambdaObjective::new(0.1, 2, 5, vec![C64::new(0.0, 0.0); 12]).unwrap();
        let lams = [C64::new(-0.3, 1.0), C64::new(0.2, 0.0)];
        assert_eq!(obj.value(&lams).unwrap(), 0.0);
        assert!(objective_gradient(&obj, &lams)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn huge_eigenvalue_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obj = random_instance(&mut rng, 3, 10);
        let lam = [C64::new(60.0, 0.0)];
        let l = LMatrix::new(&lam, 3, 10, 0.1).unwrap().to_dense();
        let h = CMat::col_vec(obj.targets());
        let g = pinv_solve(&l, &h).unwrap();
        let r = h.sub(&l.matmul(&g).unwrap()).unwrap();
        let want = r.norm_fro().powi(2);
        let got = obj.value(&lam).unwrap();
        assert!((got - want).abs() <= 1e-8 * want);
        assert!(got > 0.5 * obj.target_norm2());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let obj = random_instance(&mut rng, 3, 10);
        let lams = [C64::new(-0.5, 1.3), C64::new(0.2, -0.4)];
        let g = objective_gradient(&obj, &lams).unwrap();
        let fd = central_difference(&obj, &lams, 1e-6);
        let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * scale, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn ill_conditioned_gradient_is_refused() {
        let obj = scalar_linear(-0.7, 2, 10, 0.05);
        let lams = [C64::new(-0.7, 0.0), C64::new(-0.7, 0.0)];
        assert!(matches!(
            objective_gradient(&obj, &lams),
            Err(Error::IllConditioned { .. })
        ));
        // The value still falls back to the rank-revealing projection.
        assert!(obj.value(&lams).unwrap() < 1e-20);
    }

    #[test]
    fn rejects_non_finite() {
        let obj = scalar_linear(-0.7, 2, 10, 0.05);
        assert!(obj.value(&[C64::new(f64::NAN, 0.0)]).is_err());
    }
}
