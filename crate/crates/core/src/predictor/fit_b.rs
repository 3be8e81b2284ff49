use rayon::prelude::*;

use super::model::LinearPredictor;
use super::observable::Observable;
use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::{pinv_solve, CMat, C64};

/// Least-squares `Bd` minimizing the multi-step output error
/// `Σⱼ Σ_{k=1..K} ‖yₖʲ − C Ad^k z₀ʲ − Σ_{i<k} C Ad^{k−i−1} Bd uᵢʲ‖²` with `A`, `C` fixed.
///
/// `outputs[j][k]` is the measured output at step `k` of trajectory `j` and
/// `inputs[j][i]` the input held over step `i`. `K` defaults to the full trajectory.
pub fn fit_bd(
    ad: &[C64],
    c: &CMat,
    z0: &[Vec<C64>],
    outputs: &[Vec<Vec<f64>>],
    inputs: &[Vec<Vec<f64>>],
    max_steps: Option<usize>,
) -> Result<CMat> {
    let n = ad.len();
    let nh = c.rows();
    if c.cols() != n {
        return Err(Error::dims("C columns", n, c.cols()));
    }
    let mt = z0.len();
    if outputs.len() != mt || inputs.len() != mt || mt == 0 {
        return Err(Error::dims(
            "trajectories",
            mt,
            format!("{} outputs, {} inputs", outputs.len(), inputs.len()),
        ));
    }
    let m = inputs[0].first().map_or(0, |u| u.len());
    if m == 0 {
        return Err(Error::InvalidArgument(
            "fit_B needs a controlled dataset with at least one input".into(),
        ));
    }
    let avail = inputs.iter().map(|u| u.len()).min().unwrap_or(0);
    if outputs
        .iter()
        .zip(inputs)
        .any(|(y, u)| y.len() != u.len() + 1)
    {
        return Err(Error::InvalidArgument(
            "each trajectory needs one more output than inputs".into(),
        ));
    }
    let k_max = match max_steps {
        Some(k) if k > avail => {
            return Err(Error::InvalidArgument(format!(
                "prediction window of {k} steps exceeds the {avail}-step trajectories"
            )))
        }
        Some(0) => {
            return Err(Error::InvalidArgument(
                "prediction window must be at least one step".into(),
            ))
        }
        Some(k) => k,
        None => avail,
    };
    let cols = n * m;
    let blocks: Vec<(Vec<C64>, Vec<C64>)> = (0..mt)
        .into_par_iter()
        .map(|j| {
            let mut theta = Vec::with_capacity(k_max * nh * cols);
            let mut target = Vec::with_capacity(k_max * nh);
            // s[c][l] = Σ_{i<k} u_i[c] ad_l^{k−1−i}; free[l] = ad_l^k z0_l.
            let mut s = vec![vec![C64::new(0.0, 0.0); n]; m];
            let mut free = z0[j].clone();
            for k in 1..=k_max {
                for (sc, &uc) in s.iter_mut().zip(&inputs[j][k - 1]) {
                    for (v, a) in sc.iter_mut().zip(ad) {
                        *v = *v * a + uc;
                    }
                }
                for (f, a) in free.iter_mut().zip(ad) {
                    *f *= a;
                }
                for r in 0..nh {
                    let crow = c.row(r);
                    let pred: C64 = crow.iter().zip(&free).map(|(a, b)| a * b).sum();
                    target.push(C64::new(outputs[j][k][r], 0.0) - pred);
                    for sc in &s {
                        theta.extend(crow.iter().zip(sc).map(|(a, b)| a * b));
                    }
                }
            }
            (theta, target)
        })
        .collect();
    let rows = mt * k_max * nh;
    let mut theta = Vec::with_capacity(rows * cols);
    let mut target = Vec::with_capacity(rows);
    for (t, y) in blocks {
        theta.extend(t);
        target.extend(y);
    }
    let theta = CMat::from_vec(rows, cols, theta)?;
    let x = pinv_solve(&theta, &CMat::col_vec(&target))?;
    // Column-major un-vectorization.
    Ok(CMat::from_fn(n, m, |l, cidx| x[(cidx * n + l, 0)]))
}

/// Multi-step output error of a given `Bd` on the same data as [`fit_bd`].
pub fn multistep_error(
    ad: &[C64],
    c: &CMat,
    bd: &CMat,
    z0: &[Vec<C64>],
    outputs: &[Vec<Vec<f64>>],
    inputs: &[Vec<Vec<f64>>],
    k_max: usize,
) -> f64 {
    let mut total = 0.0;
    for j in 0..z0.len() {
        let mut z = z0[j].clone();
        for k in 1..=k_max {
            for (l, zl) in z.iter_mut().enumerate() {
                *zl *= ad[l];
                for (cidx, &u) in inputs[j][k - 1].iter().enumerate() {
                    *zl += bd[(l, cidx)] * u;
                }
            }
            for r in 0..c.rows() {
                let y: C64 = c.row(r).iter().zip(&z).map(|(a, b)| a * b).sum();
                total += (C64::new(outputs[j][k][r], 0.0) - y).norm_sqr();
            }
        }
    }
    total
}

/// Lifted initial states, measured outputs and inputs of a controlled dataset.
pub type RegressionData = (Vec<Vec<C64>>, Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>);

pub fn regression_data(
    pred: &LinearPredictor,
    ds_c: &TrajectoryDataset,
    h: &Observable,
) -> Result<RegressionData> {
    if !ds_c.has_inputs() {
        return Err(Error::Missing("controlled dataset required".into()));
    }
    let x0 = ds_c.initial_conditions();
    let z0 = pred.lift.evaluate_many(&x0)?;
    let outputs = (0..ds_c.n_traj())
        .map(|j| {
            (0..=ds_c.n_steps())
                .map(|k| h.eval(ds_c.state(j, k)))
                .collect()
        })
        .collect();
    let inputs = (0..ds_c.n_traj())
        .map(|j| {
            (0..ds_c.n_steps())
                .map(|k| ds_c.input(j, k).expect("inputs present").to_vec())
                .collect()
        })
        .collect();
    Ok((z0, outputs, inputs))
}

/// Fits `Bd` (and `B`) of `pred` from controlled data and installs them.
pub fn fit_b(
    pred: &mut LinearPredictor,
    ds_c: &TrajectoryDataset,
    h: &Observable,
    max_steps: Option<usize>,
) -> Result<()> {
    let mut run = || -> Result<()> {
        if h.output_dim() != pred.n_outputs() {
            return Err(Error::dims(
                "observable outputs",
                pred.n_outputs(),
                h.output_dim(),
            ));
        }
        let (z0, outputs, inputs) = regression_data(pred, ds_c, h)?;
        let bd = fit_bd(&pred.ad, &pred.c, &z0, &outputs, &inputs, max_steps)?;
        pred.set_bd(bd)
    };
    run().map_err(|e| e.at("fit_B"))
}
