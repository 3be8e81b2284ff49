use log::warn;

use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::{eigvals, pinv_solve, CMat, C64};

use super::eigset::EigenvalueSet;

/// Continuous-time eigenvalues `log(eig K) / Ts` of the least-squares one-step map
/// `K = argmin ‖X' − K X‖` over all consecutive sample pairs.
pub fn dmd_eigenvalues(ds: &TrajectoryDataset) -> Result<EigenvalueSet> {
    if ds.has_inputs() {
        return Err(Error::InvalidArgument(
            "DMD seeding expects an uncontrolled dataset".into(),
        ));
    }
    let n = ds.state_dim();
    let pairs = ds.n_traj() * ds.n_steps();
    let mut x = Vec::with_capacity(pairs * n);
    let mut xp = Vec::with_capacity(pairs * n);
    for j in 0..ds.n_traj() {
        for k in 0..ds.n_steps() {
            x.extend(ds.state(j, k).iter().map(|&v| C64::new(v, 0.0)));
            xp.extend(ds.state(j, k + 1).iter().map(|&v| C64::new(v, 0.0)));
        }
    }
    // Xᵀ Kᵀ ≈ X'ᵀ
    let xt = CMat::from_vec(pairs, n, x)?;
    let xpt = CMat::from_vec(pairs, n, xp)?;
    let k = pinv_solve(&xt, &xpt)?.transpose();
    discrete_to_continuous(&eigvals(&k)?, ds.ts())
}

/// Maps discrete eigenvalues `μ` to `log(μ)/Ts` (principal branch), dropping `μ = 0`.
pub fn discrete_to_continuous(mu: &[C64], ts: f64) -> Result<EigenvalueSet> {
    let scale = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(mu.len());
    for &m in mu {
        if m.norm() <= 1e-14 * scale || m.norm() == 0.0 {
            warn!("dropping zero discrete eigenvalue (logarithm undefined)");
            continue;
        }
        out.push(m.ln() / ts);
    }
    Ok(EigenvalueSet::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_from_map(
        ts: f64,
        x0s: &[Vec<f64>],
        steps: usize,
        map: impl Fn(&[f64]) -> Vec<f64>,
    ) -> TrajectoryDataset {
        let trajs = x0s
            .iter()
            .map(|x0| {
                let mut t = vec![x0.clone()];
                for _ in 0..steps {
                    let next = map(t.last().unwrap());
                    t.push(next);
                }
                t
            })
            .collect();
        TrajectoryDataset::new(ts, trajs, None).unwrap()
    }

    #[test]
    fn scalar_decay_map() {
        let ds = dataset_from_map(1.0, &[vec![1.0], vec![-0.4]], 10, |x| vec![0.9 * x[0]]);
        let ev = dmd_eigenvalues(&ds).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev.values()[0] - C64::new(0.9f64.ln(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_map() {
        let th = 0.4f64;
        let ds = dataset_from_map(1.0, &[vec![1.0, 0.0], vec![0.3, 0.7]], 20, |x| {
            vec![
                th.cos() * x[0] - th.sin() * x[1],
                th.sin() * x[0] + th.cos() * x[1],
            ]
        });
        let mut ev = dmd_eigenvalues(&ds).unwrap().into_values();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0] - C64::new(0.0, -th)).norm() < 1e-8);
        assert!((ev[1] - C64::new(0.0, th)).norm() < 1e-8);
    }

    #[test]
    fn equilibrium_data() {
        let ds = dataset_from_map(0.1, &[vec![1.0, 0.0], vec![0.0, 1.0]], 5, |x| x.to_vec());
        let ev = dmd_eigenvalues(&ds).unwrap();
        assert!(ev.values().iter().all(|l| l.norm() < 1e-12));
    }

    #[test]
    fn zero_eigenvalue_dropped() {
        let ev = discrete_to_continuous(&[C64::new(0.0, 0.0), C64::new(0.5, 0.0)], 1.0).unwrap();
        assert_eq!(ev.len(), 1);
    }
}
