use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::field::VectorField;
use super::integrate::Rk4;

/// Minimum separation between two initial conditions.
const DISTINCT_TOL: f64 = 1e-12;
const MAX_RESAMPLES: usize = 1000;

/// Initial-condition sampler. For `n > 2` the circle and disk generalize to sphere and ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    /// Uniform on the circle of the given radius around the origin.
    Circle { radius: f64 },
    /// Uniform in the disk of the given radius around the origin.
    Disk { radius: f64 },
    /// Fixed list; the first `Mt` entries are used.
    List { points: Vec<Vec<f64>> },
}

impl Sampler {
    /// Draws one point of dimension `n`.
    pub fn draw(&self, rng: &mut impl Rng, n: usize) -> Vec<f64> {
        match self {
            Sampler::Circle { radius } => {
                let mut v = unit_direction(rng, n);
                v.iter_mut().for_each(|x| *x *= radius);
                v
            }
            Sampler::Disk { radius } => {
                let mut v = unit_direction(rng, n);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                v.iter_mut().for_each(|x| *x *= r);
                v
            }
            Sampler::List { .. } => panic!("list sampler has no random draw"),
        }
    }

    /// Draws `count` pairwise distinct initial conditions.
    pub fn sample(&self, rng: &mut impl Rng, n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
        let distinct = |pts: &[Vec<f64>], p: &[f64]| {
            pts.iter().all(|q| {
                q.iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    > DISTINCT_TOL
            })
        };
        match self {
            Sampler::List { points } => {
                if points.len() < count {
                    return Err(Error::InvalidArgument(format!(
                        "initial-condition list has {} points, {count} requested",
                        points.len()
                    )));
                }
                let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
                for p in &points[..count] {
                    if p.len() != n {
                        return Err(Error::dims("initial condition", n, p.len()));
                    }
                    if !distinct(&out, p) {
                        return Err(Error::InvalidArgument(
                            "duplicate initial conditions in list".into(),
                        ));
                    }
                    out.push(p.clone());
                }
                Ok(out)
            }
            Sampler::Circle { radius } | Sampler::Disk { radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "sampler radius must be positive, got {radius}"
                    )));
                }
                let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
                while out.len() < count {
                    let mut tries = 0;
                    let p = loop {
                        let p = self.draw(rng, n);
                        if distinct(&out, &p) {
                            break p;
                        }
                        tries += 1;
                        if tries > MAX_RESAMPLES {
                            return Err(Error::InvalidArgument(
                                "could not draw distinct initial conditions".into(),
                            ));
                        }
                    };
                    out.push(p);
                }
                Ok(out)
            }
        }
    }
}

fn unit_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    if n == 2 {
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        return vec![th.cos(), th.sin()];
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Deterministic test signal, sampled at the start of every sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    /// `+amplitude` on the first half of each period, `−amplitude` on the second.
    Square {
        amplitude: f64,
        period: f64,
    },
    Sine {
        amplitude: f64,
        period: f64,
    },
    Constant {
        value: f64,
    },
}

impl Signal {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Signal::Square { amplitude, period } => {
                let phase = (t / period + 1e-9).fract();
                if phase < 0.5 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            Signal::Sine { amplitude, period } => {
                amplitude * (std::f64::consts::TAU * t / period).sin()
            }
            Signal::Constant { value } => value,
        }
    }

    /// `steps` held values at `t = k ts`, repeated over `m` channels.
    pub fn sequence(&self, steps: usize, ts: f64, m: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|k| vec![self.value(k as f64 * ts); m])
            .collect()
    }
}

/// How inputs are chosen while generating data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputPolicy {
    #[default]
    None,
    /// A fresh uniform value per sampling interval and channel.
    UniformRandom {
        lo: f64,
        hi: f64,
    },
    Signal {
        signal: Signal,
    },
}

/// Equidistantly sampled trajectories of equal length.
///
/// `states` is laid out trajectory-major, then time, then state coordinate. Inputs, when
/// present, hold `Ms` values per trajectory (input `k` acts on `[k Ts, (k+1) Ts)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    n: usize,
    m: usize,
    ts: f64,
    mt: usize,
    ms: usize,
    states: Vec<f64>,
    inputs: Option<Vec<f64>>,
}

impl TrajectoryDataset {
    /// Builds a dataset from per-trajectory state sequences and optional input sequences.
    pub fn new(
        ts: f64,
        trajectories: Vec<Vec<Vec<f64>>>,
        inputs: Option<Vec<Vec<Vec<f64>>>>,
    ) -> Result<Self> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Ts must be positive, got {ts}"
            )));
        }
        let mt = trajectories.len();
        if mt == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one trajectory".into(),
            ));
        }
        let len = trajectories[0].len();
        if len < 2 {
            return Err(Error::InvalidArgument(
                "trajectories need at least two samples".into(),
            ));
        }
        let ms = len - 1;
        let n = trajectories[0][0].len();
        let mut states = Vec::with_capacity(mt * len * n);
        for traj in &trajectories {
            if traj.len() != len {
                return Err(Error::dims("trajectory length", len, traj.len()));
            }
            for x in traj {
                if x.len() != n {
                    return Err(Error::dims("state dimension", n, x.len()));
                }
                states.extend_from_slice(x);
            }
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset states".into()));
        }
        let mut m = 0;
        let inputs = match inputs {
            None => None,
            Some(us) => {
                if us.len() != mt {
                    return Err(Error::dims("input trajectories", mt, us.len()));
                }
                m = us[0].first().map_or(0, |u| u.len());
                let mut flat = Vec::with_capacity(mt * ms * m);
                for u in &us {
                    if u.len() != ms {
                        return Err(Error::dims("input sequence length", ms, u.len()));
                    }
                    for v in u {
                        if v.len() != m {
                            return Err(Error::dims("input dimension", m, v.len()));
                        }
                        flat.extend_from_slice(v);
                    }
                }
                if flat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("dataset inputs".into()));
                }
                Some(flat)
            }
        };
        let ds = TrajectoryDataset {
            n,
            m,
            ts,
            mt,
            ms,
            states,
            inputs,
        };
        let ics = ds.initial_conditions();
        for a in 0..mt {
            for b in (a + 1)..mt {
                let d = ics[a]
                    .iter()
                    .zip(&ics[b])
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if d <= DISTINCT_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "initial conditions {a} and {b} coincide"
                    )));
                }
            }
        }
        Ok(ds)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Trajectory count `Mt`.
    pub fn n_traj(&self) -> usize {
        self.mt
    }

    /// Steps per trajectory `Ms` (samples are `Ms + 1`).
    pub fn n_steps(&self) -> usize {
        self.ms
    }

    pub fn n_samples(&self) -> usize {
        self.mt * (self.ms + 1)
    }

    pub fn has_inputs(&self) -> bool {
        self.inputs.is_some()
    }

    #[inline]
    pub fn state(&self, j: usize, k: usize) -> &[f64] {
        let o = (j * (self.ms + 1) + k) * self.n;
        &self.states[o..o + self.n]
    }

    /// Input held over step `k` of trajectory `j`; `None` for uncontrolled data.
    #[inline]
    pub fn input(&self, j: usize, k: usize) -> Option<&[f64]> {
        self.inputs.as_ref().map(|u| {
            let o = (j * self.ms + k) * self.m;
            &u[o..o + self.m]
        })
    }

    pub fn initial_conditions(&self) -> Vec<Vec<f64>> {
        (0..self.mt).map(|j| self.state(j, 0).to_vec()).collect()
    }

    /// All states in sample order (trajectory-major, time-minor).
    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.n)
    }

    /// Writes the dataset as CSV with header `traj,k,t,x1..xn[,u1..um]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["traj".to_string(), "k".into(), "t".into()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        if self.has_inputs() {
            header.extend((1..=self.m).map(|i| format!("u{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for j in 0..self.mt {
            for k in 0..=self.ms {
                line.clear();
                line.push_str(&format!("{j},{k},{}", fmt17(k as f64 * self.ts)));
                for v in self.state(j, k) {
                    line.push(',');
                    line.push_str(&fmt17(*v));
                }
                if self.has_inputs() {
                    match (k < self.ms).then(|| self.input(j, k)).flatten() {
                        Some(u) => u.iter().for_each(|v| {
                            line.push(',');
                            line.push_str(&fmt17(*v));
                        }),
                        None => (0..self.m).for_each(|_| line.push(',')),
                    }
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 4 || cols[0] != "traj" || cols[1] != "k" || cols[2] != "t" {
            return Err(Error::Parse(format!(
                "unexpected dataset header '{header}'"
            )));
        }
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        let m = cols.iter().filter(|c| c.starts_with('u')).count();
        if n == 0 || 3 + n + m != cols.len() {
            return Err(Error::Parse(format!(
                "unexpected dataset header '{header}'"
            )));
        }
        let mut trajs: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut ins: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut ts = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 2));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != cols.len() {
                return Err(bad("wrong field count"));
            }
            let j: usize = f[0].parse().map_err(|_| bad("bad trajectory index"))?;
            let k: usize = f[1].parse().map_err(|_| bad("bad step index"))?;
            let t: f64 = f[2].parse().map_err(|_| bad("bad time"))?;
            if j == trajs.len() {
                trajs.push(Vec::new());
                ins.push(Vec::new());
            }
            if j + 1 != trajs.len() || k != trajs[j].len() {
                return Err(bad("rows out of order"));
            }
            if j == 0 && k == 1 {
                ts = Some(t);
            }
            let x: Vec<f64> = f[3..3 + n]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad state value"))?;
            trajs[j].push(x);
            if m > 0 && !f[3 + n].is_empty() {
                let u: Vec<f64> = f[3 + n..]
                    .iter()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad input value"))?;
                ins[j].push(u);
            }
        }
        let ts = ts.ok_or_else(|| Error::Parse("dataset needs at least two samples".into()))?;
        TrajectoryDataset::new(ts, trajs, (m > 0).then_some(ins))
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Number of sampling steps covering `duration`, which must be an integer multiple of `ts`.
pub fn steps_for(duration: f64, ts: f64) -> Result<usize> {
    if !(ts > 0.0) || !ts.is_finite() || !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bad duration/Ts pair {duration}/{ts}"
        )));
    }
    let r = duration / ts;
    if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} is not an integer multiple of Ts {ts}"
        )));
    }
    Ok(r.round() as usize)
}

/// Options for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub n_traj: usize,
    pub duration: f64,
    pub ts: f64,
    pub policy: InputPolicy,
    pub seed: u64,
}

/// Simulates `n_traj` trajectories from sampled initial conditions.
///
/// Initial conditions come from stream 0 of a `ChaCha8Rng` seeded with `seed`; random
/// inputs of trajectory `j` come from stream `j + 1`, so results do not depend on the
/// thread count.
pub fn generate_dataset(
    vf: &VectorField,
    sampler: &Sampler,
    opts: &GenerateOptions,
) -> Result<TrajectoryDataset> {
    if opts.n_traj == 0 {
        return Err(Error::InvalidArgument("Mt must be >= 1".into()));
    }
    let ms = steps_for(opts.duration, opts.ts)?;
    if ms == 0 {
        return Err(Error::InvalidArgument(
            "duration must cover at least one sampling period".into(),
        ));
    }
    let n = vf.state_dim();
    let m = vf.input_dim();
    if opts.policy != InputPolicy::None && m == 0 {
        return Err(Error::InvalidArgument(
            "input policy given for a field without inputs".into(),
        ));
    }
    if let InputPolicy::UniformRandom { lo, hi } = opts.policy {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "empty input range [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ics = sampler.sample(&mut rng, n, opts.n_traj)?;
    let rk = Rk4::default();
    let results: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> = ics
        .par_iter()
        .enumerate()
        .map(|(j, x0)| {
            let inputs: Vec<Vec<f64>> = match opts.policy {
                InputPolicy::None => vec![vec![0.0; m]; ms],
                InputPolicy::UniformRandom { lo, hi } => {
                    let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
                    r.set_stream(j as u64 + 1);
                    (0..ms)
                        .map(|_| (0..m).map(|_| r.random_range(lo..hi)).collect())
                        .collect()
                }
                InputPolicy::Signal { signal } => signal.sequence(ms, opts.ts, m),
            };
            let xs = rk.simulate(vf, x0, &inputs, opts.ts).map_err(|e| match e {
                Error::IntegrationBlowup { step, .. } => Error::IntegrationBlowup {
                    step,
                    trajectory: Some(j),
                },
                e => e,
            })?;
            Ok((xs, inputs))
        })
        .collect();
    let mut trajs = Vec::with_capacity(opts.n_traj);
    let mut ins = Vec::with_capacity(opts.n_traj);
    for r in results {
        let (x, u) = r?;
        trajs.push(x);
        ins.push(u);
    }
    let inputs = (opts.policy != InputPolicy::None).then_some(ins);
    TrajectoryDataset::new(opts.ts, trajs, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(
        n_traj: usize,
        duration: f64,
        ts: f64,
        policy: InputPolicy,
        seed: u64,
    ) -> GenerateOptions {
        GenerateOptions {
            n_traj,
            duration,
            ts,
            policy,
            seed,
        }
    }

    #[test]
    fn vanderpol_protocol_shape() {
        let ds = generate_dataset(
            &VectorField::vanderpol(),
            &Sampler::Circle { radius: 0.05 },
            &opts(100, 5.0, 0.01, InputPolicy::None, 1),
        )
        .unwrap();
        assert_eq!(ds.n_traj(), 100);
        assert_eq!(ds.n_steps(), 500);
        for x0 in ds.initial_conditions() {
            assert!(((x0[0] * x0[0] + x0[1] * x0[1]).sqrt() - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn duffing_protocol_shape() {
        let ds = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Circle { radius: 1.0 },
            &opts(4, 8.0, 0.01, InputPolicy::None, 1),
        )
        .unwrap();
        assert_eq!(ds.n_steps(), 800);
    }

    #[test]
    fn minimal_shape() {
        let ds = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Disk { radius: 1.0 },
            &opts(1, 0.01, 0.01, InputPolicy::None, 0),
        )
        .unwrap();
        assert_eq!(ds.n_samples(), 2);
    }

    #[test]
    fn rejects_non_integral_duration() {
        let r = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Disk { radius: 1.0 },
            &opts(1, 0.015, 0.01, InputPolicy::None, 0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let o = opts(
            12,
            0.5,
            0.01,
            InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 },
            42,
        );
        let a = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Circle { radius: 1.0 },
            &o,
        )
        .unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| {
                generate_dataset(
                    &VectorField::duffing(),
                    &Sampler::Circle { radius: 1.0 },
                    &o,
                )
            })
            .unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Circle { radius: 1.0 },
            &GenerateOptions {
                seed: 43,
                ..o.clone()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_inputs_are_held_and_bounded() {
        let o = opts(
            3,
            0.2,
            0.01,
            InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 },
            5,
        );
        let ds = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Circle { radius: 1.0 },
            &o,
        )
        .unwrap();
        assert!(ds.has_inputs());
        for j in 0..3 {
            for k in 0..ds.n_steps() {
                let u = ds.input(j, k).unwrap()[0];
                assert!((-1.0..1.0).contains(&u));
            }
        }
        // Each trajectory has its own input stream.
        assert_ne!(ds.input(0, 0), ds.input(1, 0));
    }

    #[test]
    fn duplicate_list_rejected() {
        let s = Sampler::List {
            points: vec![vec![0.1, 0.2], vec![0.1, 0.2]],
        };
        let r = generate_dataset(
            &VectorField::duffing(),
            &s,
            &opts(2, 0.1, 0.01, InputPolicy::None, 0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn resampling_keeps_draws_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = Sampler::Disk { radius: 1.0 }
            .sample(&mut rng, 2, 500)
            .unwrap();
        for a in 0..pts.len() {
            for b in (a + 1)..pts.len() {
                assert_ne!(pts[a], pts[b]);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let o = opts(
            3,
            0.05,
            0.01,
            InputPolicy::UniformRandom { lo: -1.0, hi: 1.0 },
            7,
        );
        let ds = generate_dataset(
            &VectorField::vanderpol(),
            &Sampler::Circle { radius: 0.05 },
            &o,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = TrajectoryDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(ds, back);

        let o = opts(2, 0.03, 0.01, InputPolicy::None, 7);
        let ds = generate_dataset(
            &VectorField::duffing(),
            &Sampler::Circle { radius: 1.0 },
            &o,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("traj,k,t,x1,x2\n"));
        assert_eq!(ds, TrajectoryDataset::read_csv(&buf[..]).unwrap());
    }

    #[test]
    fn square_and_sine_signals() {
        let sq = Signal::Square {
            amplitude: 1.0,
            period: 0.3,
        };
        let seq = sq.sequence(30, 0.01, 1);
        assert!(seq[..15].iter().all(|u| u[0] == 1.0));
        assert!(seq[15..].iter().all(|u| u[0] == -1.0));
        let s = Signal::Sine {
            amplitude: 1.0,
            period: 0.06,
        };
        assert!((s.value(0.015) - 1.0).abs() < 1e-12);
    }
}
