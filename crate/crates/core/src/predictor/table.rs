use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learn::{learn, EigMode, LearnOptions};
use super::model::{rmse_error, CMode};
use super::observable::Observable;
use super::regions::{limit_cycle, TestRegion};
use crate::dynamics::{
    generate_dataset, steps_for, GenerateOptions, InputPolicy, Rk4, Sampler, Signal, VectorField,
};
use crate::error::{Error, Result};

/// Where test initial conditions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Disk {
        radius: f64,
    },
    /// Disk intersected with the interior of the attracting cycle reached from `start`.
    LimitCycleInterior {
        radius: f64,
        start: [f64; 2],
    },
}

impl RegionSpec {
    pub fn resolve(&self, vf: &VectorField) -> Result<TestRegion> {
        match *self {
            RegionSpec::Disk { radius } => Ok(TestRegion::Disk { radius }),
            RegionSpec::LimitCycleInterior { radius, start } => {
                let polygon = limit_cycle(vf, start, 30.0, 1e-3)?;
                Ok(TestRegion::DiskInPolygon { radius, polygon })
            }
        }
    }
}

/// Forcing applied along a test rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Control {
    None,
    Square { amplitude: f64, period: f64 },
    Sine { amplitude: f64, period: f64 },
}

impl Control {
    pub fn label(&self) -> &'static str {
        match self {
            Control::None => "uncontrolled",
            Control::Square { .. } => "square wave control",
            Control::Sine { .. } => "sine wave control",
        }
    }

    pub fn signal(&self) -> Option<Signal> {
        match *self {
            Control::None => None,
            Control::Square { amplitude, period } => Some(Signal::Square { amplitude, period }),
            Control::Sine { amplitude, period } => Some(Signal::Sine { amplitude, period }),
        }
    }

    /// Unit square wave with a 0.3 s period.
    pub fn square() -> Self {
        Control::Square {
            amplitude: 1.0,
            period: 0.3,
        }
    }

    /// Unit sine with a 0.06 s period.
    pub fn sine() -> Self {
        Control::Sine {
            amplitude: 1.0,
            period: 0.06,
        }
    }
}

/// Data generation, learning settings and test setup of a prediction-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub system: String,
    pub n_traj: usize,
    pub duration: f64,
    pub ts: f64,
    pub sampler: Sampler,
    pub seed: u64,
    /// Length of the randomly forced trajectories used for the input matrix.
    pub controlled_duration: f64,
    pub input_range: [f64; 2],
    pub learn: LearnOptions,
    pub region: RegionSpec,
    pub n_test: usize,
    pub horizon: f64,
    pub test_seed: u64,
    pub ns: Vec<usize>,
}

impl Protocol {
    pub fn vanderpol() -> Self {
        Protocol {
            system: "vanderpol".into(),
            n_traj: 100,
            duration: 5.0,
            ts: 0.01,
            sampler: Sampler::Circle { radius: 0.05 },
            seed: 1,
            controlled_duration: 2.0,
            input_range: [-1.0, 1.0],
            learn: LearnOptions {
                c_mode: CMode::L2Fit,
                c_noise: 0.05,
                ..Default::default()
            },
            region: RegionSpec::LimitCycleInterior {
                radius: 0.25,
                start: [0.1, 0.0],
            },
            n_test: 500,
            horizon: 1.0,
            test_seed: 2,
            ns: vec![4, 8, 12, 16, 20],
        }
    }

    pub fn duffing() -> Self {
        Protocol {
            system: "duffing".into(),
            n_traj: 100,
            duration: 8.0,
            ts: 0.01,
            sampler: Sampler::Circle { radius: 1.0 },
            seed: 1,
            controlled_duration: 2.0,
            input_range: [-1.0, 1.0],
            learn: LearnOptions {
                c_mode: CMode::Bdiag,
                ..Default::default()
            },
            region: RegionSpec::Disk { radius: 1.0 },
            n_test: 500,
            horizon: 1.0,
            test_seed: 2,
            ns: vec![12, 16, 20, 24, 28],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vanderpol" => Ok(Self::vanderpol()),
            "duffing" => Ok(Self::duffing()),
            other => Err(Error::InvalidArgument(format!(
                "no table protocol for '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableCell {
    pub n: usize,
    pub eigmode: EigMode,
    pub control: Control,
    pub mean: f64,
    pub std: f64,
    /// Error per test initial condition, in the order of [`ErrorTable::test_points`].
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorTable {
    pub system: String,
    pub ns: Vec<usize>,
    pub test_points: Vec<Vec<f64>>,
    pub cells: Vec<TableCell>,
}

impl ErrorTable {
    pub fn cell(&self, n: usize, eigmode: EigMode, control: Control) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.eigmode == eigmode && c.control == control)
    }

    /// Mean errors, one row per (mode, control), one column per `N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "eigenvalues,control")?;
        for n in &self.ns {
            write!(w, ",N={n}")?;
        }
        writeln!(w)?;
        let mut rows: Vec<(EigMode, Control)> = Vec::new();
        for c in &self.cells {
            if !rows.contains(&(c.eigmode, c.control)) {
                rows.push((c.eigmode, c.control));
            }
        }
        for (mode, ctl) in rows {
            let m = match mode {
                EigMode::Lattice => "not optimized",
                EigMode::Optimized => "optimized",
            };
            write!(w, "{m},{}", ctl.label())?;
            for &n in &self.ns {
                match self.cell(n, mode, ctl) {
                    Some(c) => write!(w, ",{:.4}", c.mean)?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// One line per (cell, test point) with the initial condition and the error.
    pub fn write_trials_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.test_points.first().map_or(0, Vec::len);
        write!(w, "N,eigenvalues,control")?;
        for i in 0..dim {
            write!(w, ",x0_{}", i + 1)?;
        }
        writeln!(w, ",error_percent")?;
        for c in &self.cells {
            let mode = serde_json::to_value(c.eigmode)?;
            for (x, e) in self.test_points.iter().zip(&c.errors) {
                write!(
                    w,
                    "{},{},{}",
                    c.n,
                    mode.as_str().unwrap_or(""),
                    c.control.label()
                )?;
                for v in x {
                    write!(w, ",{v:.17e}")?;
                }
                writeln!(w, ",{e:.6e}")?;
            }
        }
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Trains one predictor per (`N`, eigenvalue mode) on data generated from `protocol` and
/// reports the prediction error over `trials` test initial conditions for every control.
///
/// Data and test points depend only on the protocol seeds, so each cell sees the same inputs.
pub fn evaluate_table(
    protocol: &Protocol,
    ns: &[usize],
    modes: &[EigMode],
    controls: &[Control],
    trials: usize,
) -> Result<ErrorTable> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial required".into()));
    }
    let vf = VectorField::preset(&protocol.system)?;
    let gen = |duration: f64, policy| GenerateOptions {
        n_traj: protocol.n_traj,
        duration,
        ts: protocol.ts,
        policy,
        seed: protocol.seed,
    };
    let ds = generate_dataset(
        &vf,
        &protocol.sampler,
        &gen(protocol.duration, InputPolicy::None),
    )
    .map_err(|e| e.at("generate"))?;
    let needs_b = controls.iter().any(|c| *c != Control::None);
    let ds_c = if needs_b {
        let [lo, hi] = protocol.input_range;
        // Same initial conditions as the uncontrolled set.
        let sampler = Sampler::List {
            points: ds.initial_conditions(),
        };
        Some(
            generate_dataset(
                &vf,
                &sampler,
                &gen(
                    protocol.controlled_duration,
                    InputPolicy::UniformRandom { lo, hi },
                ),
            )
            .map_err(|e| e.at("generate"))?,
        )
    } else {
        None
    };

    let region = protocol.region.resolve(&vf)?;
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.test_seed);
    let test_points = region.sample(&mut rng, trials);
    let steps = steps_for(protocol.horizon, protocol.ts)?;
    let m = vf.input_dim();
    let h = Observable::state(vf.state_dim());

    let rk = Rk4::default();
    let truth: Vec<(Control, Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> = controls
        .iter()
        .map(|&ctl| {
            let u = match ctl.signal() {
                Some(s) => s.sequence(steps, protocol.ts, m),
                None => vec![vec![0.0; m]; steps],
            };
            let xs = test_points
                .par_iter()
                .map(|x0| rk.simulate(&vf, x0, &u, protocol.ts))
                .collect::<Result<Vec<_>>>()?;
            Ok((ctl, u, xs))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, EigMode)> = ns
        .iter()
        .flat_map(|&n| modes.iter().map(move |&md| (n, md)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(n, eigmode)| {
            let opts = LearnOptions {
                n,
                eigmode,
                fit_b: needs_b,
                ..protocol.learn.clone()
            };
            let (pred, _) =
                learn(&ds, ds_c.as_ref(), &h, &opts).map_err(|e| e.at(format!("N={n}")))?;
            let mut out = Vec::with_capacity(truth.len());
            for (ctl, u, xs) in &truth {
                let inputs = (*ctl != Control::None).then_some(u.as_slice());
                let errors = test_points
                    .par_iter()
                    .zip(xs)
                    .map(|(x0, xt)| rmse_error(xt, &pred.predict(x0, inputs, steps)?))
                    .collect::<Result<Vec<f64>>>()?;
                let (mean, std) = mean_std(&errors);
                log::info!(
                    "{} N={n} {eigmode:?} {}: {mean:.3}% (std {std:.3})",
                    protocol.system,
                    ctl.label()
                );
                out.push(TableCell {
                    n,
                    eigmode,
                    control: *ctl,
                    mean,
                    std,
                    errors,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorTable {
        system: protocol.system.clone(),
        ns: ns.to_vec(),
        test_points,
        cells: cells.into_iter().flatten().collect(),
    })
}

/// [`evaluate_table`] over the protocol's own `N` grid and test-set size.
pub fn evaluate_protocol(
    protocol: &Protocol,
    modes: &[EigMode],
    controls: &[Control],
) -> Result<ErrorTable> {
    evaluate_table(protocol, &protocol.ns, modes, controls, protocol.n_test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn small_duffing_table() {
        let mut p = Protocol::duffing();
        p.n_traj = 10;
        p.duration = 2.0;
        p.learn.optimize.restarts = 0;
        p.learn.optimize.max_iter = 20;
        let t = evaluate_table(
            &p,
            &[4],
            &[EigMode::Lattice, EigMode::Optimized],
            &[Control::None, Control::square()],
            5,
        )
        .unwrap();
        assert_eq!(t.cells.len(), 4);
        assert!(t
            .cells
            .iter()
            .all(|c| c.errors.len() == 5 && c.mean.is_finite()));
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let s = String::from_utf8(csv).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.starts_with("eigenvalues,control,N=4\n"));
        let mut trials = Vec::new();
        t.write_trials_csv(&mut trials).unwrap();
        assert_eq!(String::from_utf8(trials).unwrap().lines().count(), 21);
    }

    #[test]
    fn protocol_json_round_trip() {
        let p = Protocol::vanderpol();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Protocol>(&s).unwrap(), p);
        assert!(Protocol::preset("lorenz").is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(evaluate_table(
            &Protocol::duffing(),
            &[4],
            &[EigMode::Lattice],
            &[Control::None],
            0
        )
        .is_err());
    }
}
