use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::condense::{condense, DenseQp};
use super::qp::{AdmmSettings, QpSolver, WarmStart};
use super::spec::{stack_observable, MpcSpec, Reference, StackParts};
use crate::dynamics::{
    generate_dataset, steps_for, GenerateOptions, InputPolicy, Rk4, Sampler, VectorField,
};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::predictor::{learn, CMode, EigMode, LearnOptions, LinearPredictor, Observable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopOptions {
    pub admm: AdmmSettings,
    /// Consecutive solver failures tolerated before aborting.
    pub max_failures: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            admm: AdmmSettings::default(),
            max_failures: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub reference: Vec<f64>,
    pub qp_iters: usize,
    pub converged: bool,
    pub lift_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopTiming {
    pub lift_mean_ms: f64,
    pub lift_max_ms: f64,
    pub solve_mean_ms: f64,
    pub solve_max_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClosedLoopLog {
    pub state_dim: usize,
    pub input_dim: usize,
    pub reference_dim: usize,
    pub records: Vec<LoopRecord>,
    /// State after the last applied input.
    pub final_state: Vec<f64>,
}

impl ClosedLoopLog {
    /// `t, x1..xn, u1..um, ref1..ref_nh, qp_iters`. Wall-clock timings are left out so the
    /// file is reproducible; see [`ClosedLoopLog::timing`].
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = vec!["t".to_string()];
        head.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        head.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        head.extend((1..=self.reference_dim).map(|i| format!("ref{i}")));
        head.push("qp_iters".into());
        writeln!(w, "{}", head.join(","))?;
        for r in &self.records {
            let mut cols = vec![format!("{:.6}", r.t)];
            cols.extend(
                r.x.iter()
                    .chain(&r.u)
                    .chain(&r.reference)
                    .map(|v| format!("{v:.17e}")),
            );
            cols.push(r.qp_iters.to_string());
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    /// Mean and maximum of the lifting and solve times in milliseconds.
    pub fn timing(&self) -> LoopTiming {
        let n = self.records.len().max(1) as f64;
        let fold = |f: fn(&LoopRecord) -> f64| {
            let mean = self.records.iter().map(f).sum::<f64>() / n;
            let max = self.records.iter().map(f).fold(0.0, f64::max);
            (mean, max)
        };
        let (lift_mean_ms, lift_max_ms) = fold(|r| r.lift_ms);
        let (solve_mean_ms, solve_max_ms) = fold(|r| r.solve_ms);
        LoopTiming {
            lift_mean_ms,
            lift_max_ms,
            solve_mean_ms,
            solve_max_ms,
        }
    }

    pub fn max_input_abs(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.u.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn shift_warm(prev: &WarmStart, qp: &DenseQp) -> WarmStart {
    let m = qp.n_inputs;
    let n = prev.u.len();
    let mut u = prev.u[m.min(n)..].to_vec();
    u.extend_from_slice(&prev.u[n.saturating_sub(m)..]);
    let rows = &qp.stage_rows;
    let y = prev.y.as_ref().and_then(|y| {
        let per = rows[0];
        if rows[..rows.len() - 1].iter().any(|&r| r != per) {
            return None;
        }
        let stages = per * qp.np;
        let mut s = y[per.min(stages)..stages].to_vec();
        s.extend_from_slice(&y[stages.saturating_sub(per)..stages]);
        s.extend_from_slice(&y[stages..]);
        Some(s)
    });
    WarmStart { u, y }
}

/// Sampled-data closed loop: measure, lift, solve the condensed problem warm-started from
/// the shifted previous plan, apply the first input to `vf` for one sampling period.
pub fn closed_loop(
    vf: &VectorField,
    pred: &LinearPredictor,
    spec: &MpcSpec,
    x0: &[f64],
    duration: f64,
    opts: &LoopOptions,
) -> Result<ClosedLoopLog> {
    if x0.len() != vf.state_dim() {
        return Err(Error::dims("initial state", vf.state_dim(), x0.len()));
    }
    if vf.input_dim() != pred.n_inputs() {
        return Err(Error::dims("plant inputs", pred.n_inputs(), vf.input_dim()));
    }
    let steps = steps_for(duration, pred.ts)?;
    let qp = condense(spec, pred).map_err(|e| e.at("condense"))?;
    let mut solver = QpSolver::for_dense(&qp, opts.admm.clone())?;
    let rk = Rk4::default();
    let m = qp.n_inputs;
    let mut x = x0.to_vec();
    let mut warm: Option<WarmStart> = None;
    let mut failures = 0;
    let reference_dim = spec.reference.as_ref().map_or(0, Reference::dim);
    let mut log = ClosedLoopLog {
        state_dim: x.len(),
        input_dim: m,
        reference_dim,
        records: Vec::with_capacity(steps),
        final_state: Vec::new(),
    };
    for k in 0..steps {
        let t = k as f64 * pred.ts;
        let t0 = Instant::now();
        let z0 = pred.lift(&x).map_err(|e| e.at("lift"))?;
        let lift_ms = t0.elapsed().as_secs_f64() * 1e3;
        let reference = spec.reference.as_ref().map(|r| r.at(t).to_vec());
        let shifted = warm.as_ref().map(|w| shift_warm(w, &qp));
        let t1 = Instant::now();
        let g = qp.linear_term(&z0, reference.as_deref())?;
        let b = qp.rhs(&z0);
        let outcome = solver.solve(&g, &b, shifted.as_ref());
        let solve_ms = t1.elapsed().as_secs_f64() * 1e3;
        let (u0, iters, ok) = match outcome {
            Ok(sol) => {
                let u0 = sol.u[..m].to_vec();
                let ok = sol.converged;
                if !ok {
                    log::warn!(
                        "t = {t:.2}: QP not converged after {} iterations; applying best iterate",
                        sol.iterations
                    );
                }
                let it = sol.iterations;
                warm = Some(WarmStart {
                    u: sol.u,
                    y: Some(sol.duals),
                });
                (u0, it, ok)
            }
            Err(e @ (Error::Infeasible | Error::Unbounded)) if shifted.is_none() => {
                return Err(e.at(format!("solve_qp at t = {t:.2}")));
            }
            Err(e @ (Error::Infeasible | Error::Unbounded)) => {
                log::warn!("t = {t:.2}: {e}; applying the shifted previous plan");
                let u0 = shifted.as_ref().map_or(vec![0.0; m], |w| w.u[..m].to_vec());
                warm = shifted;
                (u0, 0, false)
            }
            Err(e) => return Err(e.at("solve_qp")),
        };
        failures = if ok { 0 } else { failures + 1 };
        if failures > opts.max_failures {
            return Err(Error::SolverFailures(failures));
        }
        log.records.push(LoopRecord {
            t,
            x: x.clone(),
            u: u0.clone(),
            reference: reference.unwrap_or_default(),
            qp_iters: iters,
            converged: ok,
            lift_ms,
            solve_ms,
        });
        rk.step(vf, &mut x, &u0, pred.ts);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowup {
                step: k + 1,
                trajectory: None,
            });
        }
    }
    log.final_state = x;
    Ok(log)
}

/// Learning data, predictor budget and controller settings of a set-point tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingExperiment {
    pub system: String,
    pub n_traj: usize,
    pub duration: f64,
    pub controlled_duration: f64,
    pub ts: f64,
    pub sampler: Sampler,
    pub seed: u64,
    /// Eigenfunctions per state component.
    pub per_state: usize,
    pub learn: LearnOptions,
    pub np: usize,
    pub q_diag: Vec<f64>,
    pub r: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Set points on the state; one switch time per value.
    pub switch_times: Vec<f64>,
    pub setpoints: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub horizon_s: f64,
}

impl TrackingExperiment {
    /// Duffing: 20 eigenfunctions, `Q = diag(1, 0.1)`, `R = 1e-4`, `u ∈ [−1, 1]`, one-second horizon,
    /// set points (0.5, 0), (−0.5, 0), (0, 0), (0.25, 0) held for 7.5 s each.
    pub fn duffing() -> Self {
        TrackingExperiment {
            system: "duffing".into(),
            n_traj: 100,
            duration: 8.0,
            controlled_duration: 2.0,
            ts: 0.01,
            sampler: Sampler::Circle { radius: 1.0 },
            seed: 1,
            per_state: 10,
            learn: LearnOptions {
                c_mode: CMode::Bdiag,
                eigmode: EigMode::Optimized,
                ..Default::default()
            },
            np: 100,
            q_diag: vec![1.0, 0.1],
            r: 1e-4,
            u_min: -1.0,
            u_max: 1.0,
            switch_times: vec![0.0, 7.5, 15.0, 22.5],
            setpoints: vec![
                vec![0.5, 0.0],
                vec![-0.5, 0.0],
                vec![0.0, 0.0],
                vec![0.25, 0.0],
            ],
            x0: vec![0.0, 0.0],
            horizon_s: 30.0,
        }
    }

    pub fn vector_field(&self) -> Result<VectorField> {
        VectorField::preset(&self.system)
    }

    /// The state observable extended with constant outputs encoding the input bounds.
    pub fn stacked(&self) -> Result<super::spec::StackedObservable> {
        let vf = self.vector_field()?;
        let m = vf.input_dim();
        let parts = StackParts {
            input_bounds: Some((vec![self.u_min; m], vec![self.u_max; m])),
            ..Default::default()
        };
        stack_observable(&Observable::state(vf.state_dim()), m, &parts)
    }

    /// Generates data and learns the predictor for the stacked observable.
    pub fn train(&self) -> Result<LinearPredictor> {
        let vf = self.vector_field()?;
        let stacked = self.stacked()?;
        let n = vf.state_dim();
        let gen = |duration: f64, sampler: &Sampler, policy| {
            generate_dataset(
                &vf,
                sampler,
                &GenerateOptions {
                    n_traj: self.n_traj,
                    duration,
                    ts: self.ts,
                    policy,
                    seed: self.seed,
                },
            )
            .map_err(|e| e.at("generate"))
        };
        let ds = gen(self.duration, &self.sampler, InputPolicy::None)?;
        let ds_c = gen(
            self.controlled_duration,
            &Sampler::List {
                points: ds.initial_conditions(),
            },
            InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 },
        )?;
        let mut sizes = vec![self.per_state; n];
        sizes.extend(std::iter::repeat_n(1, stacked.n_outputs() - n));
        let opts = LearnOptions {
            partition: Some(sizes),
            fit_b: true,
            ..self.learn.clone()
        };
        let (pred, _) = learn(&ds, Some(&ds_c), &stacked.h, &opts)?;
        Ok(pred)
    }

    pub fn spec(&self) -> Result<MpcSpec> {
        let reference = Reference::new(self.switch_times.clone(), self.setpoints.clone())?;
        let vf = self.vector_field()?;
        let m = vf.input_dim();
        self.stacked()?.tracking_spec(
            self.np,
            &self.q_diag,
            Mat::diag(&vec![self.r; m]),
            Some(reference),
        )
    }

    pub fn run(&self, pred: &LinearPredictor, opts: &LoopOptions) -> Result<ClosedLoopLog> {
        closed_loop(
            &self.vector_field()?,
            pred,
            &self.spec()?,
            &self.x0,
            self.horizon_s,
            opts,
        )
    }

    /// Largest `|x₁ − ref₁|` over the last `window` seconds before each switch (and the end).
    pub fn settle_errors(&self, log: &ClosedLoopLog, window: f64) -> Vec<f64> {
        let mut ends: Vec<f64> = self.switch_times[1..].to_vec();
        ends.push(self.horizon_s);
        ends.iter()
            .map(|&end| {
                log.records
                    .iter()
                    .filter(|r| r.t < end - 1e-9 && r.t >= end - window - 1e-9)
                    .map(|r| (r.x[0] - r.reference[0]).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}
