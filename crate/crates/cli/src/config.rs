//! Run configuration: a single JSON document, checked in full before anything runs.

use std::path::{Path, PathBuf};

use koopeig::dynamics::{steps_for, InputPolicy, Sampler};
use koopeig::eigfun::ExtensionOptions;
use koopeig::mpc::{stack_observable, AdmmSettings, LoopOptions, MpcSpec, Reference, StackParts};
use koopeig::predictor::{
    CMode, Control, EigMode, LearnOptions, Observable, ObservableTerm, ProductSpec, Protocol,
    RegionSpec,
};
use koopeig::spectrum::OptimizeOptions;
use koopeig::{Mat, VectorField};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub system: SystemConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub lift: LiftConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub predict: Option<PredictConfig>,
    #[serde(default)]
    pub table: Option<TableConfig>,
    #[serde(default)]
    pub mpc: Option<MpcConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

/// `{"preset": "duffing"}` or `{"linear": {"a": [[..]], "b": [[..]]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Preset(String),
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

/// Unset fields fall back to the preset's table protocol.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub trajectories: Option<usize>,
    pub duration: Option<f64>,
    pub ts: Option<f64>,
    pub sampler: Option<Sampler>,
    pub seed: Option<u64>,
    /// Forced trajectories from the same initial conditions, for the input matrix.
    pub controlled: Option<ControlledConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlledConfig {
    pub duration: f64,
    #[serde(default = "default_excitation")]
    pub input: InputPolicy,
}

fn default_excitation() -> InputPolicy {
    InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    pub n: Option<usize>,
    pub partition: Option<Vec<usize>>,
    pub eigmode: Option<EigMode>,
    #[serde(default)]
    pub products: Vec<ProductSpec>,
    pub extension: Option<ExtensionOptions>,
    pub regularization: Option<f64>,
    pub optimize: Option<OptimizeOptions>,
    /// Defaults to the full state.
    pub observable: Option<Vec<ObservableTerm>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub c_mode: Option<CMode>,
    pub c_noise: Option<f64>,
    pub c_seed: Option<u64>,
    /// Defaults to true when controlled data is configured.
    pub fit_b: Option<bool>,
    /// Prediction window (steps) of the input-matrix regression.
    pub b_horizon: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub x0: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_control")]
    pub control: Control,
}

fn default_steps() -> usize {
    100
}

fn default_control() -> Control {
    Control::None
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub ns: Option<Vec<usize>>,
    pub test_points: Option<usize>,
    pub horizon: Option<f64>,
    pub test_seed: Option<u64>,
    pub region: Option<RegionSpec>,
    pub modes: Option<Vec<EigMode>>,
    pub controls: Option<Vec<Control>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub np: usize,
    /// Diagonal of the output weight.
    pub q: Vec<f64>,
    /// Diagonal of the input weight.
    pub r: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub x0: Vec<f64>,
    pub duration: f64,
    pub reference: ReferenceConfig,
    /// Extra rows `coef · u ≤ bound` on every stage.
    #[serde(default)]
    pub input_constraints: Vec<InputConstraint>,
    #[serde(default)]
    pub admm: AdmmSettings,
    #[serde(default = "default_max_failures")]
    pub max_failures: usize,
}

fn default_max_failures() -> usize {
    LoopOptions::default().max_failures
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConstraint {
    pub coef: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            dir: None,
            plots: true,
        }
    }
}

fn yes() -> bool {
    true
}

/// Data generation settings after defaults are applied.
#[derive(Debug, Clone)]
pub struct DataPlan {
    pub n_traj: usize,
    pub duration: f64,
    pub ts: f64,
    pub sampler: Sampler,
    pub seed: u64,
    pub controlled: Option<(f64, InputPolicy)>,
}

#[derive(Debug, Clone)]
pub struct MpcPlan {
    pub spec: MpcSpec,
    pub x0: Vec<f64>,
    pub duration: f64,
    pub loop_opts: LoopOptions,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TablePlan {
    pub protocol: Protocol,
    pub modes: Vec<EigMode>,
    pub controls: Vec<Control>,
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub system: String,
    pub vf: VectorField,
    pub data: DataPlan,
    /// Observable the predictor is learned for (state outputs first).
    pub observable: Observable,
    pub n_base: usize,
    pub learn: LearnOptions,
    pub predict: Option<PredictConfig>,
    pub table: Option<TablePlan>,
    pub mpc: Option<MpcPlan>,
    pub out_dir: PathBuf,
    pub plots: bool,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

/// Reads and validates a configuration file.
pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, &path.display().to_string(), seed, out)
}

pub fn parse(
    text: &str,
    origin: &str,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Plan, CliError> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    cfg.validate(seed, out)
}

impl RunConfig {
    pub fn validate(&self, seed: Option<u64>, out: Option<&Path>) -> Result<Plan, CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(bad(
                "version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.version
                ),
            ));
        }
        let (system, vf) = self.system.build()?;
        let preset = Protocol::preset(&system).ok();
        let n = vf.state_dim();
        let m = vf.input_dim();

        let data = self.data.resolve(preset.as_ref(), seed)?;

        let terms = self
            .lift
            .observable
            .clone()
            .unwrap_or_else(|| vec![ObservableTerm::State]);
        let base = Observable::from_terms(n, &terms).map_err(|e| bad("lift.observable", e))?;
        let n_base = base.output_dim();

        let mut learn = preset.as_ref().map(|p| p.learn.clone()).unwrap_or_default();
        self.lift.apply(&mut learn)?;
        self.predictor
            .apply(&mut learn, data.controlled.is_some())?;
        if learn.fit_b && m == 0 {
            return Err(bad("predictor.fit_b", "the system has no inputs"));
        }

        let (observable, mpc) = match &self.mpc {
            None => (base, None),
            Some(mc) => {
                let (obs, plan) = mc.resolve(&base, &vf, data.ts)?;
                (obs, Some(plan))
            }
        };
        let n_out = observable.output_dim();
        let partition = match (&self.lift.partition, &mpc) {
            (Some(p), _) => {
                if p.len() != n_out {
                    return Err(bad(
                        "lift.partition",
                        format!("{} entries for {n_out} outputs", p.len()),
                    ));
                }
                if p.contains(&0) {
                    return Err(bad("lift.partition", "entries must be >= 1"));
                }
                p.clone()
            }
            (None, Some(_)) => {
                if !learn.n.is_multiple_of(n_base) {
                    return Err(bad(
                        "lift.n",
                        format!("{} does not split evenly over {n_base} outputs", learn.n),
                    ));
                }
                // One constant eigenfunction per extra (constant) output.
                let mut sizes = vec![learn.n / n_base; n_base];
                sizes.resize(n_out, 1);
                sizes
            }
            (None, None) => {
                if learn.n == 0 || !learn.n.is_multiple_of(n_out) {
                    return Err(bad(
                        "lift.n",
                        format!("{} does not split evenly over {n_out} outputs", learn.n),
                    ));
                }
                vec![learn.n / n_out; n_out]
            }
        };
        // `lift.n` counts eigenfunctions of the base observable only.
        if let (Some(p), Some(n_cfg)) = (&self.lift.partition, self.lift.n) {
            let total: usize = p[..n_base].iter().sum();
            if total != n_cfg {
                return Err(bad(
                    "lift.n",
                    format!("{n_cfg} differs from the base-output partition total {total}"),
                ));
            }
        }
        learn.n = partition.iter().sum();
        learn.partition = Some(partition);

        if let Some(p) = &self.predict {
            if p.x0.len() != n {
                return Err(bad(
                    "predict.x0",
                    format!("{} entries for a {n}-dimensional state", p.x0.len()),
                ));
            }
            if p.control != Control::None && m == 0 {
                return Err(bad("predict.control", "the system has no inputs"));
            }
        }

        let table = match &self.table {
            None => None,
            Some(t) => Some(t.resolve(preset.as_ref(), &system, &data, &self.lift, &learn)?),
        };

        let out_dir = out
            .map(Path::to_path_buf)
            .or_else(|| self.outputs.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Plan {
            system,
            vf,
            data,
            observable,
            n_base,
            learn,
            predict: self.predict.clone(),
            table,
            mpc,
            out_dir,
            plots: self.outputs.plots,
        })
    }
}

impl SystemConfig {
    fn build(&self) -> Result<(String, VectorField), CliError> {
        match self {
            SystemConfig::Preset(name) => Ok((
                name.clone(),
                VectorField::preset(name).map_err(|e| bad("system.preset", e))?,
            )),
            SystemConfig::Linear { a, b } => {
                let n = a.len();
                if n == 0 || a.iter().any(|r| r.len() != n) {
                    return Err(bad("system.linear.a", "must be a non-empty square matrix"));
                }
                if b.len() != n {
                    return Err(bad(
                        "system.linear.b",
                        format!("{} rows, expected {n}", b.len()),
                    ));
                }
                let m = b.first().map_or(0, Vec::len);
                if b.iter().any(|r| r.len() != m) {
                    return Err(bad("system.linear.b", "rows differ in length"));
                }
                if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
                    return Err(bad("system.linear", "non-finite entry"));
                }
                let vf = VectorField::linear(n, m, a.concat(), b.concat())
                    .map_err(|e| bad("system.linear", e))?;
                Ok(("linear".into(), vf))
            }
        }
    }
}

impl DataConfig {
    fn resolve(&self, preset: Option<&Protocol>, seed: Option<u64>) -> Result<DataPlan, CliError> {
        let plan = DataPlan {
            n_traj: self
                .trajectories
                .or(preset.map(|p| p.n_traj))
                .unwrap_or(100),
            duration: self.duration.or(preset.map(|p| p.duration)).unwrap_or(5.0),
            ts: self.ts.or(preset.map(|p| p.ts)).unwrap_or(0.01),
            sampler: self
                .sampler
                .clone()
                .or(preset.map(|p| p.sampler.clone()))
                .unwrap_or(Sampler::Circle { radius: 1.0 }),
            seed: seed.or(self.seed).or(preset.map(|p| p.seed)).unwrap_or(1),
            controlled: self.controlled.as_ref().map(|c| (c.duration, c.input)),
        };
        if plan.n_traj == 0 {
            return Err(bad("data.trajectories", "must be >= 1"));
        }
        match steps_for(plan.duration, plan.ts) {
            Ok(0) => {
                return Err(bad(
                    "data.duration",
                    "must cover at least one sampling period",
                ))
            }
            Ok(_) => {}
            Err(e) => return Err(bad("data.duration", e)),
        }
        match &plan.sampler {
            Sampler::Circle { radius } | Sampler::Disk { radius } if !(*radius > 0.0) => {
                return Err(bad("data.sampler.radius", "must be > 0"));
            }
            Sampler::List { points } if points.len() < plan.n_traj => {
                return Err(bad(
                    "data.sampler.points",
                    format!("{} points for {} trajectories", points.len(), plan.n_traj),
                ));
            }
            _ => {}
        }
        if let Some((d, policy)) = plan.controlled {
            match steps_for(d, plan.ts) {
                Ok(0) => {
                    return Err(bad(
                        "data.controlled.duration",
                        "must cover at least one sampling period",
                    ))
                }
                Ok(_) => {}
                Err(e) => return Err(bad("data.controlled.duration", e)),
            }
            if let InputPolicy::UniformRandom { lo, hi } = policy {
                if !(lo < hi) {
                    return Err(bad(
                        "data.controlled.input",
                        format!("empty range [{lo}, {hi}]"),
                    ));
                }
            }
            if policy == InputPolicy::None {
                return Err(bad(
                    "data.controlled.input",
                    "controlled data needs an input policy",
                ));
            }
        }
        Ok(plan)
    }
}

impl LiftConfig {
    fn apply(&self, o: &mut LearnOptions) -> Result<(), CliError> {
        if let Some(n) = self.n {
            if n == 0 {
                return Err(bad("lift.n", "must be >= 1"));
            }
            o.n = n;
        }
        if let Some(e) = self.eigmode {
            o.eigmode = e;
        }
        o.products = self.products.clone();
        if let Some(e) = &self.extension {
            if !(e.delta2 >= 0.0) {
                return Err(bad("lift.extension.delta2", "must be >= 0"));
            }
            if e.delta1 != 0.0 {
                return Err(bad("lift.extension.delta1", "only 0 is supported"));
            }
            o.extension = e.clone();
        }
        if let Some(r) = self.regularization {
            if !(r >= 0.0) {
                return Err(bad("lift.regularization", "must be >= 0"));
            }
            o.regularization = r;
        }
        if let Some(opt) = &self.optimize {
            o.optimize = opt.clone();
        }
        Ok(())
    }
}

impl PredictorConfig {
    fn apply(&self, o: &mut LearnOptions, has_controlled: bool) -> Result<(), CliError> {
        if let Some(c) = self.c_mode {
            o.c_mode = c;
        }
        if let Some(noise) = self.c_noise {
            if !(noise >= 0.0) {
                return Err(bad("predictor.c_noise", "must be >= 0"));
            }
            o.c_noise = noise;
        }
        if let Some(s) = self.c_seed {
            o.c_seed = s;
        }
        o.fit_b = self.fit_b.unwrap_or(has_controlled);
        if self.b_horizon == Some(0) {
            return Err(bad("predictor.b_horizon", "must be >= 1"));
        }
        o.b_max_steps = self.b_horizon;
        Ok(())
    }
}

impl TableConfig {
    fn resolve(
        &self,
        preset: Option<&Protocol>,
        system: &str,
        data: &DataPlan,
        lift: &LiftConfig,
        learn: &LearnOptions,
    ) -> Result<TablePlan, CliError> {
        let Some(base) = preset else {
            return Err(bad(
                "table",
                format!("table sweeps need a preset system, not '{system}'"),
            ));
        };
        if lift.partition.is_some() {
            return Err(bad(
                "lift.partition",
                "cannot be combined with a table sweep over N",
            ));
        }
        if lift.observable.is_some() {
            return Err(bad("lift.observable", "table sweeps predict the state"));
        }
        let mut p = base.clone();
        p.n_traj = data.n_traj;
        p.duration = data.duration;
        p.ts = data.ts;
        p.sampler = data.sampler.clone();
        p.seed = data.seed;
        if let Some((d, policy)) = data.controlled {
            p.controlled_duration = d;
            match policy {
                InputPolicy::UniformRandom { lo, hi } => p.input_range = [lo, hi],
                _ => {
                    return Err(bad(
                        "data.controlled.input",
                        "table sweeps use uniform random excitation",
                    ))
                }
            }
        }
        p.learn = LearnOptions {
            partition: None,
            ..learn.clone()
        };
        if let Some(ns) = &self.ns {
            p.ns = ns.clone();
        }
        if p.ns.is_empty() || p.ns.iter().any(|&n| n == 0 || n % 2 != 0) {
            return Err(bad(
                "table.ns",
                "entries must be positive and even (split over two states)",
            ));
        }
        if let Some(t) = self.test_points {
            if t == 0 {
                return Err(bad("table.test_points", "must be >= 1"));
            }
            p.n_test = t;
        }
        if let Some(h) = self.horizon {
            match steps_for(h, p.ts) {
                Ok(k) if k >= 1 => p.horizon = h,
                _ => return Err(bad("table.horizon", "must be a positive multiple of Ts")),
            }
        }
        if let Some(s) = self.test_seed {
            p.test_seed = s;
        }
        if let Some(r) = &self.region {
            p.region = r.clone();
        }
        let modes = self
            .modes
            .clone()
            .unwrap_or_else(|| vec![EigMode::Lattice, EigMode::Optimized]);
        let controls = self.controls.clone().unwrap_or_else(|| vec![Control::None]);
        if modes.is_empty() || controls.is_empty() {
            return Err(bad("table", "modes and controls must not be empty"));
        }
        Ok(TablePlan {
            protocol: p,
            modes,
            controls,
        })
    }
}

impl MpcConfig {
    fn resolve(
        &self,
        base: &Observable,
        vf: &VectorField,
        ts: f64,
    ) -> Result<(Observable, MpcPlan), CliError> {
        let n = vf.state_dim();
        let m = vf.input_dim();
        let n_base = base.output_dim();
        if m == 0 {
            return Err(bad("mpc", "the system has no inputs"));
        }
        if self.np == 0 {
            return Err(bad("mpc.np", "must be >= 1"));
        }
        let check_len = |key: &str, v: &[f64], want: usize| {
            if v.len() != want {
                Err(bad(key, format!("{} entries, expected {want}", v.len())))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(bad(key, "non-finite entry"))
            } else {
                Ok(())
            }
        };
        check_len("mpc.q", &self.q, n_base)?;
        check_len("mpc.r", &self.r, m)?;
        check_len("mpc.u_min", &self.u_min, m)?;
        check_len("mpc.u_max", &self.u_max, m)?;
        check_len("mpc.x0", &self.x0, n)?;
        if self.q.iter().chain(&self.r).any(|&w| w < 0.0) {
            return Err(bad("mpc.q", "weights must be >= 0"));
        }
        if self.r.iter().any(|&w| w <= 0.0) {
            return Err(bad("mpc.r", "input weights must be > 0"));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| lo > hi) {
            return Err(bad("mpc.u_min", "exceeds u_max"));
        }
        if steps_for(self.duration, ts).is_err() {
            return Err(bad(
                "mpc.duration",
                format!("must be a non-negative multiple of Ts = {ts}"),
            ));
        }
        if self.reference.values.iter().any(|v| v.len() != n_base) {
            return Err(bad(
                "mpc.reference.values",
                format!("entries must have {n_base} components"),
            ));
        }
        let reference = Reference::new(self.reference.times.clone(), self.reference.values.clone())
            .map_err(|e| bad("mpc.reference", e))?;
        for (i, c) in self.input_constraints.iter().enumerate() {
            check_len(&format!("mpc.input_constraints[{i}].coef"), &c.coef, m)?;
        }

        let parts = StackParts {
            input_bounds: Some((self.u_min.clone(), self.u_max.clone())),
            ..Default::default()
        };
        let stacked = stack_observable(base, m, &parts).map_err(|e| bad("mpc", e))?;
        let mut spec = stacked
            .tracking_spec(self.np, &self.q, Mat::diag(&self.r), Some(reference))
            .map_err(|e| bad("mpc", e))?;
        if !self.input_constraints.is_empty() {
            let k = self.input_constraints.len();
            let stage = &mut spec.stages[0];
            let nh = stage.e.cols();
            stage.e = stage.e.vstack(&Mat::zeros(k, nh));
            stage.f = stage.f.vstack(&Mat::from_fn(k, m, |r, c| {
                self.input_constraints[r].coef[c]
            }));
            stage
                .b
                .extend(self.input_constraints.iter().map(|c| c.bound));
        }
        let plan = MpcPlan {
            spec,
            x0: self.x0.clone(),
            duration: self.duration,
            loop_opts: LoopOptions {
                admm: self.admm.clone(),
                max_failures: self.max_failures,
            },
            u_min: self.u_min.clone(),
            u_max: self.u_max.clone(),
        };
        Ok((stacked.h, plan))
    }
}
