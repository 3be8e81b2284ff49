use serde::{Deserialize, Serialize};

use crate::eigfun::EigenfunctionSet;
use crate::error::{Error, Result};
use crate::numerics::{pinv_solve, CMat, C64};
use crate::spectrum::is_conjugate_closed;

/// How the output matrix `C` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMode {
    /// Block-diagonal rows of ones following the output partition.
    Bdiag,
    /// Least squares over sample points.
    L2Fit,
    /// Worst-case (max-norm) fit over sample points.
    SupFit,
}

/// `z⁺ = Ad z + Bd u`, `ŷ = Re(C z)`, `z₀ = Φ̂(x₀)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub ts: f64,
    /// Diagonal of `A`.
    pub a: Vec<C64>,
    /// Diagonal of `Ad = exp(A Ts)`.
    pub ad: Vec<C64>,
    pub b: Option<CMat>,
    pub bd: Option<CMat>,
    pub c: CMat,
    pub lift: EigenfunctionSet,
}

/// `A` and `C` for an eigenfunction set.
///
/// `samples` are the states and `targets` the observable values there (fit modes only).
pub fn assemble_ac(
    set: &EigenfunctionSet,
    mode: CMode,
    samples: Option<(&[Vec<f64>], &[Vec<f64>])>,
) -> Result<(Vec<C64>, CMat)> {
    let a = set.eigenvalues().to_vec();
    let n = set.len();
    let c = match mode {
        CMode::Bdiag => {
            let part = set.partition().ok_or_else(|| {
                Error::InvalidArgument(
                    "bdiag output matrix needs the output partition of the eigenfunction set"
                        .into(),
                )
            })?;
            if part.total() != n {
                return Err(Error::dims("partition total", n, part.total()));
            }
            let mut c = CMat::zeros(part.n_outputs(), n);
            for i in 0..part.n_outputs() {
                for l in 0..part.sizes()[i] {
                    c[(i, part.offset(i) + l)] = C64::new(1.0, 0.0);
                }
            }
            c
        }
        CMode::L2Fit | CMode::SupFit => {
            let (xs, hs) =
                samples.ok_or_else(|| Error::Missing("sample points for fitting C".into()))?;
            if xs.len() != hs.len() || xs.is_empty() {
                return Err(Error::dims("C-fit samples", xs.len(), hs.len()));
            }
            let phi = set.evaluate_many(xs)?;
            let phi = CMat::from_vec(xs.len(), n, phi.concat())?;
            let nh = hs[0].len();
            let h = CMat::from_fn(hs.len(), nh, |s, i| C64::new(hs[s][i], 0.0));
            if mode == CMode::L2Fit {
                fit_c_l2(&phi, &h)?
            } else {
                fit_c_sup(&phi, &h)?
            }
        }
    };
    Ok((a, c))
}

/// `C = H Φ†` with samples as rows of `phi` and `h`.
pub fn fit_c_l2(phi: &CMat, h: &CMat) -> Result<CMat> {
    let ls = crate::numerics::LeastSquares::new(phi);
    if ls.svd().rank() < phi.cols() {
        log::warn!("sample matrix of eigenfunction values is rank deficient ({} < {}); using the pseudoinverse", ls.svd().rank(), phi.cols());
    }
    Ok(ls.solve(h)?.transpose())
}

/// Largest modulus of `h(x̄) − C Φ̂(x̄)` over samples and outputs.
pub fn sup_residual(phi: &CMat, h: &CMat, c: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..phi.rows() {
        let p = phi.row(s);
        for i in 0..c.rows() {
            let y: C64 = c.row(i).iter().zip(p).map(|(a, b)| a * b).sum();
            worst = worst.max((h[(s, i)] - y).norm());
        }
    }
    worst
}

/// Max-norm fit by Lawson's iteratively reweighted least squares, row by row.
pub fn fit_c_sup(phi: &CMat, h: &CMat) -> Result<CMat> {
    let (m, n) = (phi.rows(), phi.cols());
    let mut c = CMat::zeros(h.cols(), n);
    for i in 0..h.cols() {
        let target = h.col(i);
        let mut w = vec![1.0 / m as f64; m];
        let mut best: Option<(f64, Vec<C64>)> = None;
        for _ in 0..2000 {
            let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            let a = CMat::from_fn(m, n, |s, l| phi[(s, l)] * sw[s]);
            let b = CMat::from_fn(m, 1, |s, _| target[s] * sw[s]);
            let coef = pinv_solve(&a, &b)?.col(0);
            let r: Vec<f64> = (0..m)
                .map(|s| {
                    (target[s]
                        - phi
                            .row(s)
                            .iter()
                            .zip(&coef)
                            .map(|(x, y)| x * y)
                            .sum::<C64>())
                    .norm()
                })
                .collect();
            let worst = r.iter().copied().fold(0.0, f64::max);
            let improved = best.as_ref().is_none_or(|(b, _)| worst < *b);
            let prev = best.as_ref().map_or(f64::INFINITY, |(b, _)| *b);
            if improved {
                best = Some((worst, coef));
            }
            let total: f64 = w.iter().zip(&r).map(|(a, b)| a * b).sum();
            if total <= 0.0 || worst == 0.0 {
                break;
            }
            if improved && prev - worst <= 1e-10 * worst {
                break;
            }
            for (wv, rv) in w.iter_mut().zip(&r) {
                *wv *= rv / total;
            }
        }
        let (_, coef) = best.expect("at least one iteration");
        c.row_mut(i).copy_from_slice(&coef);
    }
    Ok(c)
}

/// `λ / (1 − e^{−λ Ts})`, with the limit `1/Ts` at `λ = 0`.
fn zoh_factor(lambda: C64, ts: f64) -> Result<C64> {
    if lambda.norm() * ts < 1e-8 {
        // Series: 1/Ts + λ/2 + λ² Ts/12.
        return Ok(C64::new(1.0 / ts, 0.0) + lambda * 0.5 + lambda * lambda * (ts / 12.0));
    }
    let den = C64::new(1.0, 0.0) - (-lambda * ts).exp();
    if den.norm() == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(lambda / den)
}

/// `B = diag(λᵢ / (1 − e^{−λᵢ Ts})) Bd`.
pub fn b_from_bd(lambdas: &[C64], bd: &CMat, ts: f64) -> Result<CMat> {
    if bd.rows() != lambdas.len() {
        return Err(Error::dims("Bd rows", lambdas.len(), bd.rows()));
    }
    let f = lambdas
        .iter()
        .map(|&l| zoh_factor(l, ts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CMat::from_fn(bd.rows(), bd.cols(), |i, j| {
        f[i] * bd[(i, j)]
    }))
}

/// Inverse of [`b_from_bd`].
pub fn bd_from_b(lambdas: &[C64], b: &CMat, ts: f64) -> Result<CMat> {
    if b.rows() != lambdas.len() {
        return Err(Error::dims("B rows", lambdas.len(), b.rows()));
    }
    let f = lambdas
        .iter()
        .map(|&l| zoh_factor(l, ts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CMat::from_fn(b.rows(), b.cols(), |i, j| b[(i, j)] / f[i]))
}

/// Root-mean-square error in percent: `100 ‖pred − true‖ / ‖true‖` over the sequence.
pub fn rmse_error(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != pred.len() || truth.iter().zip(pred).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::dims("rmse_error sequences", truth.len(), pred.len()));
    }
    let num: f64 = truth
        .iter()
        .zip(pred)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    let den: f64 = truth.iter().flatten().map(|x| x * x).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(100.0 * (num / den).sqrt())
}

impl LinearPredictor {
    pub fn new(ts: f64, a: Vec<C64>, c: CMat, lift: EigenfunctionSet) -> Result<Self> {
        if c.cols() != a.len() || lift.len() != a.len() {
            return Err(Error::dims(
                "predictor state dimension",
                a.len(),
                format!("C has {} columns, lift has {} rows", c.cols(), lift.len()),
            ));
        }
        let ad = a.iter().map(|l| (l * ts).exp()).collect();
        Ok(LinearPredictor {
            ts,
            a,
            ad,
            b: None,
            bd: None,
            c,
            lift,
        })
    }

    /// Installs `Bd` and the matching continuous-time `B`.
    pub fn set_bd(&mut self, bd: CMat) -> Result<()> {
        self.b = Some(b_from_bd(&self.a, &bd, self.ts)?);
        self.bd = Some(bd);
        Ok(())
    }

    pub fn n_lift(&self) -> usize {
        self.a.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.bd.as_ref().map_or(0, |b| b.cols())
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<C64>> {
        self.lift.evaluate(x)
    }

    /// `Re(C z)`.
    pub fn output(&self, z: &[C64]) -> Vec<f64> {
        self.c.mul_vec(z).iter().map(|v| v.re).collect()
    }

    /// One step `Ad z + Bd u` in place.
    pub fn step(&self, z: &mut [C64], u: Option<&[f64]>) {
        for (zi, a) in z.iter_mut().zip(&self.ad) {
            *zi *= a;
        }
        if let (Some(u), Some(bd)) = (u, &self.bd) {
            for (i, zi) in z.iter_mut().enumerate() {
                for (j, &uj) in u.iter().enumerate() {
                    *zi += bd[(i, j)] * uj;
                }
            }
        }
    }

    /// Predicted outputs `ŷ₀ … ŷ_steps` from `x0`.
    pub fn predict(
        &self,
        x0: &[f64],
        inputs: Option<&[Vec<f64>]>,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let z0 = self.lift(x0)?;
        self.predict_from(z0, inputs, steps)
    }

    /// Rollout from a given lifted state.
    pub fn predict_from(
        &self,
        mut z: Vec<C64>,
        inputs: Option<&[Vec<f64>]>,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if let Some(u) = inputs {
            if self.bd.is_none() {
                return Err(Error::Missing(
                    "input matrix Bd; the predictor was built without control data".into(),
                ));
            }
            if u.len() < steps {
                return Err(Error::dims("input sequence length", steps, u.len()));
            }
            if let Some(bad) = u.iter().find(|v| v.len() != self.n_inputs()) {
                return Err(Error::dims("input dimension", self.n_inputs(), bad.len()));
            }
        }
        let check = is_conjugate_closed(&self.a);
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let y = self.c.mul_vec(&z);
            if check {
                let re: f64 = y.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
                let im: f64 = y.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
                if im > 1e-6 * re.max(1e-300) {
                    log::debug!("step {k}: imaginary residue {im:.3e} of predicted output exceeds 1e-6 relative");
                }
            }
            out.push(y.iter().map(|v| v.re).collect());
            if k < steps {
                self.step(&mut z, inputs.map(|u| u[k].as_slice()));
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundaryMatrix, OutputPartition};
    use crate::dynamics::TrajectoryDataset;
    use crate::eigfun::{propagate_values, ExtensionOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_predictor(a: f64, ts: f64) -> (LinearPredictor, TrajectoryDataset) {
        let ms = 30;
        let x0 = [-1.0, -0.4, 0.3, 1.1];
        let trajs: Vec<Vec<Vec<f64>>> = x0
            .iter()
            .map(|&x| {
                (0..=ms)
                    .map(|k| vec![x * (a * k as f64 * ts).exp()])
                    .collect()
            })
            .collect();
        let ds = TrajectoryDataset::new(ts, trajs, None).unwrap();
        let g = CMat::from_fn(1, 4, |_, j| C64::new(x0[j], 0.0));
        let b = BoundaryMatrix {
            g,
            partition: OutputPartition::new(vec![1]).unwrap(),
            eigenvalues: vec![C64::new(a, 0.0)],
        };
        let mut set = propagate_values(&b, ts, ms).unwrap();
        set.fit_extension(&ds, &ExtensionOptions::default())
            .unwrap();
        let (av, c) = assemble_ac(&set, CMode::Bdiag, None).unwrap();
        (LinearPredictor::new(ts, av, c, set).unwrap(), ds)
    }

    #[test]
    fn bdiag_pattern() {
        let (p, _) = scalar_predictor(-0.5, 0.1);
        assert_eq!(p.c, CMat::identity(1));
        let g = CMat::identity(2);
        let b = BoundaryMatrix {
            g,
            partition: OutputPartition::new(vec![1, 1]).unwrap(),
            eigenvalues: vec![C64::new(0.0, 0.0); 2],
        };
        let set = propagate_values(&b, 0.1, 3).unwrap();
        assert_eq!(
            assemble_ac(&set, CMode::Bdiag, None).unwrap().1,
            CMat::identity(2)
        );
        let b = BoundaryMatrix {
            g: CMat::identity(3),
            partition: OutputPartition::new(vec![2, 1]).unwrap(),
            eigenvalues: vec![C64::new(0.0, 0.0); 3],
        };
        let c = assemble_ac(&propagate_values(&b, 0.1, 3).unwrap(), CMode::Bdiag, None)
            .unwrap()
            .1;
        assert_eq!(c.re(), vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn scalar_prediction_is_exact() {
        let (a, ts) = (-0.5, 0.1);
        let (p, _) = scalar_predictor(a, ts);
        let x0 = 0.7;
        let y = p.predict(&[x0], None, 25).unwrap();
        for (k, yk) in y.iter().enumerate() {
            assert!((yk[0] - x0 * (a * k as f64 * ts).exp()).abs() < 1e-12);
        }
        assert_eq!(p.predict(&[x0], None, 0).unwrap().len(), 1);
    }

    #[test]
    fn zero_eigenvalue_predicts_constant() {
        let b = BoundaryMatrix {
            g: CMat::from_fn(1, 3, |_, _| C64::new(2.0, 0.0)),
            partition: OutputPartition::new(vec![1]).unwrap(),
            eigenvalues: vec![C64::new(0.0, 0.0)],
        };
        let trajs: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|j| {
                (0..=4)
                    .map(|k| vec![j as f64, k as f64 * 0.1 + j as f64 * 0.05])
                    .collect()
            })
            .collect();
        let ds = TrajectoryDataset::new(0.1, trajs, None).unwrap();
        let mut set = propagate_values(&b, 0.1, 4).unwrap();
        set.fit_extension(&ds, &ExtensionOptions::default())
            .unwrap();
        let (a, c) = assemble_ac(&set, CMode::Bdiag, None).unwrap();
        let p = LinearPredictor::new(0.1, a, c, set).unwrap();
        let y = p.predict(&[0.5, 0.2], None, 10).unwrap();
        assert!(y.iter().all(|v| v[0] == y[0][0]));
    }

    #[test]
    fn rmse_examples() {
        let t = vec![vec![1.0, 2.0], vec![-0.5, 0.3]];
        assert_eq!(rmse_error(&t, &t).unwrap(), 0.0);
        let zero = vec![vec![0.0; 2]; 2];
        assert!((rmse_error(&t, &zero).unwrap() - 100.0).abs() < 1e-12);
        let twice: Vec<Vec<f64>> = t
            .iter()
            .map(|v| v.iter().map(|x| 2.0 * x).collect())
            .collect();
        assert!((rmse_error(&t, &twice).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(rmse_error(&zero, &t), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn zoh_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut lams: Vec<C64> = (0..6)
            .map(|_| C64::new(rng.random_range(-3.0..1.0), rng.random_range(-5.0..5.0)))
            .collect();
        lams.push(C64::new(0.0, 0.0));
        let bd = CMat::from_fn(7, 2, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let ts = 0.01;
        let b = b_from_bd(&lams, &bd, ts).unwrap();
        assert!((b[(6, 0)] - bd[(6, 0)] / ts).norm() < 1e-12 * b[(6, 0)].norm());
        let back = bd_from_b(&lams, &b, ts).unwrap();
        assert!(back.sub(&bd).unwrap().max_abs() <= 1e-10 * bd.max_abs());
    }

    #[test]
    fn l2_fit_exact_span_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let phi = CMat::from_fn(40, 4, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let c_true = CMat::from_fn(2, 4, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = phi.matmul(&c_true.transpose()).unwrap();
        let c = fit_c_l2(&phi, &h).unwrap();
        assert!(c.sub(&c_true).unwrap().max_abs() < 1e-10);
        assert!(sup_residual(&phi, &h, &c) < 1e-10);
    }

    /// Projected subgradient descent on the max-norm objective, as an independent oracle.
    fn subgradient_oracle(phi: &CMat, h: &[C64]) -> f64 {
        let n = phi.cols();
        let mut c = vec![C64::new(0.0, 0.0); n];
        let mut best = f64::INFINITY;
        for it in 0..200_000 {
            let res: Vec<C64> = (0..phi.rows())
                .map(|s| h[s] - phi.row(s).iter().zip(&c).map(|(a, b)| a * b).sum::<C64>())
                .collect();
            let (s, r) = res
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            best = best.min(r.norm());
            // d|r|/dc̄ direction: −conj(φ_s) r / |r|.
            let step = 0.05 / (1.0 + it as f64).sqrt();
            let dir = r / r.norm();
            for (l, cl) in c.iter_mut().enumerate() {
                *cl += phi[(s, l)].conj() * dir * step;
            }
        }
        best
    }

    #[test]
    fn sup_fit_matches_subgradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..3 {
            let xs: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = CMat::from_fn(30, 3, |s, l| C64::new(xs[s].powi(l as i32), 0.0));
            let h: Vec<C64> = xs.iter().map(|x| C64::new((2.0 * x).sin(), 0.0)).collect();
            let c = fit_c_sup(&phi, &CMat::col_vec(&h)).unwrap();
            let ours = sup_residual(&phi, &CMat::col_vec(&h), &c);
            let oracle = subgradient_oracle(&phi, &h);
            assert!(ours <= 1.01 * oracle, "ours {ours}, oracle {oracle}");
            let l2 = fit_c_l2(&phi, &CMat::col_vec(&h)).unwrap();
            assert!(ours <= sup_residual(&phi, &CMat::col_vec(&h), &l2) + 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let (mut p, _) = scalar_predictor(-0.3, 0.1);
        p.set_bd(CMat::from_real(1, 1, &[0.2]).unwrap()).unwrap();
        let back = LinearPredictor::from_json(&p.to_json().unwrap()).unwrap();
        let u = vec![vec![0.5]; 10];
        assert_eq!(
            p.predict(&[0.4], Some(&u), 10).unwrap(),
            back.predict(&[0.4], Some(&u), 10).unwrap()
        );
    }

    #[test]
    fn inputs_need_bd() {
        let (p, _) = scalar_predictor(-0.3, 0.1);
        assert!(matches!(
            p.predict(&[0.4], Some(&[vec![1.0]]), 1),
            Err(Error::Missing(_))
        ));
    }
}
