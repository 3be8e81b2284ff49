use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit_b::fit_b;
use super::model::{assemble_ac, CMode, LinearPredictor};
use super::observable::Observable;
use crate::boundary::{optimal_boundary_from_targets, OutputPartition, Regularizer};
use crate::dynamics::TrajectoryDataset;
use crate::eigfun::{propagate_values, ExtensionOptions};
use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::spectrum::{
    dmd_eigenvalues, lattice_prefix, optimize_eigenvalues, LambdaObjective, OptimizeOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMode {
    /// Lattice of the DMD eigenvalues, used as is.
    Lattice,
    /// Lattice seed refined by minimizing the projection residual.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpec {
    pub indices: Vec<usize>,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnOptions {
    /// Total eigenfunction budget, split evenly over the outputs unless `partition` is set.
    pub n: usize,
    pub partition: Option<Vec<usize>>,
    pub eigmode: EigMode,
    pub optimize: OptimizeOptions,
    /// Weight of the temporal roughness penalty on the boundary fit (0 disables it).
    pub regularization: f64,
    pub extension: ExtensionOptions,
    pub products: Vec<ProductSpec>,
    pub c_mode: CMode,
    /// Half-width of the uniform noise added to the data points used to fit `C`.
    pub c_noise: f64,
    pub c_seed: u64,
    /// Fit the input matrix from a controlled dataset.
    pub fit_b: bool,
    /// Prediction window (steps) of the input-matrix regression; full trajectories if unset.
    pub b_max_steps: Option<usize>,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            n: 20,
            partition: None,
            eigmode: EigMode::Optimized,
            optimize: OptimizeOptions::default(),
            regularization: 0.0,
            extension: ExtensionOptions::default(),
            products: Vec::new(),
            c_mode: CMode::Bdiag,
            c_noise: 0.0,
            c_seed: 0,
            fit_b: false,
            b_max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentReport {
    pub output: usize,
    pub target_norm2: f64,
    pub initial_eigenvalues: Vec<C64>,
    pub eigenvalues: Vec<C64>,
    pub initial_objective: f64,
    pub objective: f64,
    pub optimizer_iterations: Option<usize>,
    pub failed_starts: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LearnReport {
    pub dmd_eigenvalues: Vec<C64>,
    pub components: Vec<ComponentReport>,
    pub seconds: Vec<(String, f64)>,
}

fn timed<T>(
    seconds: &mut Vec<(String, f64)>,
    stage: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.at(stage.to_string()))?;
    seconds.push((stage.to_string(), t.elapsed().as_secs_f64()));
    Ok(out)
}

/// Learns eigenfunctions and the linear predictor for the observable `h` from `ds`,
/// and the input matrix from `ds_c` when requested.
pub fn learn(
    ds: &TrajectoryDataset,
    ds_c: Option<&TrajectoryDataset>,
    h: &Observable,
    opts: &LearnOptions,
) -> Result<(LinearPredictor, LearnReport)> {
    if h.state_dim() != ds.state_dim() {
        return Err(
            Error::dims("observable state dimension", ds.state_dim(), h.state_dim())
                .at("configuration"),
        );
    }
    if opts.fit_b && ds_c.is_none() {
        return Err(Error::Missing("controlled dataset required".into()).at("fit_B"));
    }
    let nh = h.output_dim();
    let partition = match &opts.partition {
        Some(p) => OutputPartition::new(p.clone()),
        None => OutputPartition::even(nh, opts.n),
    }
    .map_err(|e| e.at("configuration"))?;
    if partition.n_outputs() != nh {
        return Err(Error::dims("partition outputs", nh, partition.n_outputs()).at("configuration"));
    }
    let mut report = LearnReport::default();

    let base = timed(&mut report.seconds, "dmd", || dmd_eigenvalues(ds))?;
    report.dmd_eigenvalues = base.values().to_vec();

    let targets: Vec<Vec<C64>> = {
        let mut t = vec![Vec::with_capacity(ds.n_samples()); nh];
        for x in ds.samples() {
            for (ti, v) in t.iter_mut().zip(h.eval(x)) {
                ti.push(C64::new(v, 0.0));
            }
        }
        t
    };

    let lambdas = timed(&mut report.seconds, "eigenvalues", || {
        let mut all = Vec::with_capacity(nh);
        for (i, ti) in targets.iter().enumerate() {
            let seed = lattice_prefix(&base, partition.sizes()[i]).into_values();
            let obj = LambdaObjective::new(ds.ts(), ds.n_traj(), ds.n_steps(), ti.clone())
                .map_err(|e| e.at(format!("output component {i}")))?;
            let p0 = obj
                .value(&seed)
                .map_err(|e| e.at(format!("output component {i}")))?;
            let (lam, p, iters, failed) = match opts.eigmode {
                EigMode::Lattice => (seed.clone(), p0, None, None),
                EigMode::Optimized => {
                    let r = optimize_eigenvalues(&obj, &seed, &opts.optimize)
                        .map_err(|e| e.at(format!("output component {i}")))?;
                    (
                        r.lambdas,
                        r.objective,
                        Some(r.iterations),
                        Some(r.failed_starts),
                    )
                }
            };
            log::info!(
                "output {i}: projection residual {p0:.4e} -> {p:.4e} (|h|^2 = {:.4e})",
                obj.target_norm2()
            );
            report.components.push(ComponentReport {
                output: i,
                target_norm2: obj.target_norm2(),
                initial_eigenvalues: seed,
                eigenvalues: lam.clone(),
                initial_objective: p0,
                objective: p,
                optimizer_iterations: iters,
                failed_starts: failed,
            });
            all.push(lam);
        }
        Ok(all)
    })?;

    let reg = (opts.regularization > 0.0).then_some(Regularizer {
        alpha: opts.regularization,
    });
    let g = timed(&mut report.seconds, "boundary", || {
        optimal_boundary_from_targets(
            ds.ts(),
            ds.n_traj(),
            ds.n_steps(),
            &targets,
            &partition,
            &lambdas,
            reg,
        )
    })?;

    let set = timed(&mut report.seconds, "eigenfunctions", || {
        let mut set = propagate_values(&g, ds.ts(), ds.n_steps())?;
        for p in &opts.products {
            set.add_product(&p.indices, &p.powers)?;
        }
        set.fit_extension(ds, &opts.extension)?;
        Ok(set)
    })?;

    let mut pred = timed(&mut report.seconds, "output matrix", || {
        let (a, c) = match opts.c_mode {
            CMode::Bdiag => assemble_ac(&set, CMode::Bdiag, None)?,
            mode => {
                let (mut xs, mut hs) = c_fit_samples(ds, h, opts.c_noise, opts.c_seed);
                // Perturbed points the extension only clamps would bias the fit.
                if let Some(ext) = set.extension() {
                    let keep: Vec<bool> = xs.iter().map(|x| ext.covers(x)).collect();
                    let dropped = keep.iter().filter(|k| !**k).count();
                    if dropped > 0 && dropped < keep.len() {
                        log::info!("output matrix fit: {dropped} of {} perturbed samples outside the interpolation domain dropped", keep.len());
                        let mut it = keep.iter();
                        xs.retain(|_| *it.next().unwrap());
                        let mut it = keep.iter();
                        hs.retain(|_| *it.next().unwrap());
                    }
                }
                assemble_ac(&set, mode, Some((&xs, &hs)))?
            }
        };
        LinearPredictor::new(ds.ts(), a, c, set)
    })?;

    if opts.fit_b {
        let dsc = ds_c.expect("checked above");
        if (dsc.ts() - ds.ts()).abs() > 1e-12 * ds.ts() {
            return Err(Error::InvalidArgument(format!(
                "controlled data sampled at {} s, uncontrolled at {} s",
                dsc.ts(),
                ds.ts()
            ))
            .at("fit_B"));
        }
        let t = Instant::now();
        fit_b(&mut pred, dsc, h, opts.b_max_steps)?;
        report
            .seconds
            .push(("fit_B".into(), t.elapsed().as_secs_f64()));
    }
    Ok((pred, report))
}

/// Data points perturbed by uniform noise in `[−noise, noise]` per coordinate, with
/// the observable evaluated at the perturbed points.
pub fn c_fit_samples(
    ds: &TrajectoryDataset,
    h: &Observable,
    noise: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = ds
        .samples()
        .map(|x| {
            x.iter()
                .map(|v| {
                    if noise > 0.0 {
                        v + rng.random_range(-noise..=noise)
                    } else {
                        *v
                    }
                })
                .collect()
        })
        .collect();
    let hs = xs.iter().map(|x| h.eval(x)).collect();
    (xs, hs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generate_dataset, GenerateOptions, InputPolicy, Sampler, VectorField};

    fn scalar_data(policy: InputPolicy) -> TrajectoryDataset {
        let opts = GenerateOptions {
            n_traj: 6,
            duration: 1.0,
            ts: 0.05,
            policy,
            seed: 3,
        };
        generate_dataset(
            &VectorField::scalar_linear(-0.8),
            &Sampler::Disk { radius: 1.0 },
            &opts,
        )
        .unwrap()
    }

    #[test]
    fn scalar_linear_pipeline_is_near_exact() {
        let ds = scalar_data(InputPolicy::None);
        let h = Observable::state(1);
        let opts = LearnOptions {
            n: 1,
            extension: ExtensionOptions {
                kind: Some(crate::eigfun::ExtensionKind::RbfRidge),
                ..Default::default()
            },
            ..Default::default()
        };
        let (pred, rep) = learn(&ds, None, &h, &opts).unwrap();
        assert!(rep.components[0].objective < 1e-12 * rep.components[0].target_norm2);
        assert!((pred.a[0].re + 0.8).abs() < 1e-6);
        let y = pred.predict(&[0.5], None, 20).unwrap();
        for (k, yk) in y.iter().enumerate() {
            assert!((yk[0] - 0.5 * (-0.8 * k as f64 * 0.05).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_linear_input_matrix() {
        let ds = scalar_data(InputPolicy::None);
        let dsc = scalar_data(InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 });
        let h = Observable::state(1);
        let opts = LearnOptions {
            n: 1,
            fit_b: true,
            extension: ExtensionOptions {
                kind: Some(crate::eigfun::ExtensionKind::RbfRidge),
                ..Default::default()
            },
            ..Default::default()
        };
        let (pred, _) = learn(&ds, Some(&dsc), &h, &opts).unwrap();
        // ẋ = a x + u held over Ts: Bd = (e^{aTs} − 1)/a.
        let a: f64 = -0.8;
        let want = ((a * 0.05).exp() - 1.0) / a;
        assert!((pred.bd.as_ref().unwrap()[(0, 0)].re - want).abs() < 1e-6);
        // B = diag(λ/(1 − e^{−λTs})) Bd.
        let b = pred.b.as_ref().unwrap()[(0, 0)].re;
        assert!((b - a / (1.0 - (-a * 0.05).exp()) * want).abs() < 1e-6);
    }

    #[test]
    fn missing_controlled_data_is_a_stage_error() {
        let ds = scalar_data(InputPolicy::None);
        let opts = LearnOptions {
            n: 1,
            fit_b: true,
            ..Default::default()
        };
        let err = learn(&ds, None, &Observable::state(1), &opts).unwrap_err();
        assert_eq!(err.to_string(), "fit_B: controlled dataset required");
    }

    #[test]
    fn bad_partition_rejected() {
        let ds = scalar_data(InputPolicy::None);
        let opts = LearnOptions {
            n: 3,
            partition: Some(vec![1, 2]),
            ..Default::default()
        };
        assert!(learn(&ds, None, &Observable::state(1), &opts).is_err());
    }
}
