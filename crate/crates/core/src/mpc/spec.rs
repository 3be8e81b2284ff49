use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, Mat};
use crate::predictor::{Observable, ObservableTerm};

/// Cost and constraint data of one prediction stage: `ŷᵀQŷ + uᵀRu + qᵀŷ + rᵀu`
/// subject to `E ŷ + F u ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub q: Mat,
    pub r: Mat,
    pub q_lin: Vec<f64>,
    pub r_lin: Vec<f64>,
    pub e: Mat,
    pub f: Mat,
    pub b: Vec<f64>,
}

/// Terminal cost `ŷᵀQŷ + qᵀŷ` and constraint `E ŷ ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub q: Mat,
    pub q_lin: Vec<f64>,
    pub e: Mat,
    pub b: Vec<f64>,
}

/// Piecewise-constant output reference: `values[i]` holds from `times[i]` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Reference {
    pub fn constant(value: Vec<f64>) -> Self {
        Reference {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument(
                "reference needs as many switch times as values (at least one)".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "reference switch times must increase".into(),
            ));
        }
        if values.iter().any(|v| v.len() != values[0].len()) {
            return Err(Error::InvalidArgument(
                "reference values differ in length".into(),
            ));
        }
        Ok(Reference { times, values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let i = self.times.partition_point(|&s| s <= t + 1e-12).max(1) - 1;
        &self.values[i]
    }
}

/// Horizon, stage data (one entry shared by all stages or one per stage), terminal data
/// and an optional reference on the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSpec {
    pub np: usize,
    pub stages: Vec<Stage>,
    pub terminal: Terminal,
    /// Tracked as `‖ŷᵢ − ref‖²_Qᵢ` by adding `−2 Qᵢ ref` to the linear output terms.
    pub reference: Option<Reference>,
}

const PSD_FLOOR: f64 = -1e-10;

fn check_psd(m: &Mat, what: &str) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::InvalidArgument(format!("{what} must be square")));
    }
    let asym = (0..m.rows())
        .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let (ev, _) = sym_eigen(m);
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if m.rows() > 0 && lo < PSD_FLOOR * m.max_abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not positive semidefinite (eigenvalue {lo:.3e})"
        )));
    }
    Ok(())
}

impl MpcSpec {
    pub fn stage(&self, i: usize) -> &Stage {
        if self.stages.len() == 1 {
            &self.stages[0]
        } else {
            &self.stages[i]
        }
    }

    /// Checks shapes against `n_h` outputs and `m` inputs, and the PSD cost matrices.
    pub fn validate(&self, n_h: usize, m: usize) -> Result<()> {
        if self.np == 0 {
            return Err(Error::InvalidArgument(
                "prediction horizon must be >= 1".into(),
            ));
        }
        if self.stages.len() != 1 && self.stages.len() != self.np {
            return Err(Error::InvalidArgument(format!(
                "{} stages given for a horizon of {}",
                self.stages.len(),
                self.np
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            let at = |what: &str| format!("stage {i} {what}");
            if s.q.rows() != n_h || s.r.rows() != m {
                return Err(Error::dims(
                    "stage cost",
                    format!("Q {n_h}x{n_h}, R {m}x{m}"),
                    format!(
                        "Q {}x{}, R {}x{}",
                        s.q.rows(),
                        s.q.cols(),
                        s.r.rows(),
                        s.r.cols()
                    ),
                ));
            }
            check_psd(&s.q, &at("Q"))?;
            check_psd(&s.r, &at("R"))?;
            if s.q_lin.len() != n_h || s.r_lin.len() != m {
                return Err(Error::dims(
                    "stage linear cost",
                    format!("{n_h} and {m}"),
                    format!("{} and {}", s.q_lin.len(), s.r_lin.len()),
                ));
            }
            let nc = s.b.len();
            if s.e.rows() != nc || s.f.rows() != nc || s.e.cols() != n_h || s.f.cols() != m {
                return Err(Error::dims(
                    "stage constraints",
                    format!("E {nc}x{n_h}, F {nc}x{m}"),
                    format!(
                        "E {}x{}, F {}x{}",
                        s.e.rows(),
                        s.e.cols(),
                        s.f.rows(),
                        s.f.cols()
                    ),
                ));
            }
        }
        let t = &self.terminal;
        if t.q.rows() != n_h || t.q_lin.len() != n_h {
            return Err(Error::dims("terminal cost", n_h, t.q.rows()));
        }
        check_psd(&t.q, "terminal Q")?;
        if t.e.rows() != t.b.len() || t.e.cols() != n_h {
            return Err(Error::dims(
                "terminal constraints",
                format!("E {}x{n_h}", t.b.len()),
                format!("E {}x{}", t.e.rows(), t.e.cols()),
            ));
        }
        if let Some(r) = &self.reference {
            if r.dim() != n_h {
                return Err(Error::dims("reference", n_h, r.dim()));
            }
        }
        Ok(())
    }
}

/// Layout of an observable extended with cost and constraint outputs.
///
/// Outputs are `[base; l; l_N; c; c_N]`, where `c` starts with the constants
/// `−u_max` and `u_min` when input bounds are given.
#[derive(Clone)]
pub struct StackedObservable {
    pub h: Observable,
    pub n_base: usize,
    pub n_inputs: usize,
    pub stage_cost: Option<usize>,
    pub terminal_cost: Option<usize>,
    /// First output and count of the stage constraint functions `c`.
    pub stage_rows: (usize, usize),
    pub terminal_rows: (usize, usize),
    /// Input coupling `D` of `c(x) + D u ≤ 0`.
    pub d: Mat,
}

impl std::fmt::Debug for StackedObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StackedObservable")
            .field("n_base", &self.n_base)
            .field("n_outputs", &self.h.output_dim())
            .field("stage_rows", &self.stage_rows)
            .field("terminal_rows", &self.terminal_rows)
            .finish()
    }
}

/// Pieces added to a base observable.
#[derive(Clone, Default)]
pub struct StackParts {
    pub stage_cost: Option<Observable>,
    pub terminal_cost: Option<Observable>,
    /// `(u_min, u_max)`.
    pub input_bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Extra stage constraints `c̃(x) + D̃ u ≤ 0`.
    pub constraint: Option<(Observable, Mat)>,
    pub terminal_constraint: Option<Observable>,
}

/// Concatenates the base observable with cost and constraint outputs so that nonlinear
/// costs become linear and nonlinear constraints affine in the predicted outputs.
pub fn stack_observable(
    base: &Observable,
    n_inputs: usize,
    parts: &StackParts,
) -> Result<StackedObservable> {
    let n = base.state_dim();
    let mut list = vec![base.clone()];
    let mut next = base.output_dim();
    let mut scalar =
        |o: &Option<Observable>, what: &str, list: &mut Vec<Observable>| -> Result<Option<usize>> {
            match o {
                None => Ok(None),
                Some(o) => {
                    if o.output_dim() != 1 || o.state_dim() != n {
                        return Err(Error::InvalidArgument(format!(
                            "{what} must map the state to a scalar"
                        )));
                    }
                    list.push(o.clone());
                    next += 1;
                    Ok(Some(next - 1))
                }
            }
        };
    let stage_cost = scalar(&parts.stage_cost, "stage cost", &mut list)?;
    let terminal_cost = scalar(&parts.terminal_cost, "terminal cost", &mut list)?;

    let start = next;
    let mut d_rows: Vec<Vec<f64>> = Vec::new();
    if let Some((lo, hi)) = &parts.input_bounds {
        if lo.len() != n_inputs || hi.len() != n_inputs {
            return Err(Error::dims(
                "input bounds",
                n_inputs,
                lo.len().max(hi.len()),
            ));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument(
                "input lower bound exceeds upper bound".into(),
            ));
        }
        let consts: Vec<ObservableTerm> = hi
            .iter()
            .map(|v| ObservableTerm::Constant { value: -v })
            .chain(lo.iter().map(|&v| ObservableTerm::Constant { value: v }))
            .collect();
        list.push(Observable::from_terms(n, &consts)?);
        for j in 0..n_inputs {
            d_rows.push(
                (0..n_inputs)
                    .map(|c| if c == j { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        for j in 0..n_inputs {
            d_rows.push(
                (0..n_inputs)
                    .map(|c| if c == j { -1.0 } else { 0.0 })
                    .collect(),
            );
        }
    }
    if let Some((c, dm)) = &parts.constraint {
        if c.state_dim() != n || dm.rows() != c.output_dim() || dm.cols() != n_inputs {
            return Err(Error::dims(
                "stage constraint coupling",
                format!("{}x{n_inputs}", c.output_dim()),
                format!("{}x{}", dm.rows(), dm.cols()),
            ));
        }
        list.push(c.clone());
        for i in 0..dm.rows() {
            d_rows.push(dm.row(i).to_vec());
        }
    }
    let n_stage = d_rows.len();
    next = start + n_stage;
    let terminal_rows = match &parts.terminal_constraint {
        Some(c) => {
            if c.state_dim() != n {
                return Err(Error::dims("terminal constraint state", n, c.state_dim()));
            }
            list.push(c.clone());
            (next, c.output_dim())
        }
        None => (next, 0),
    };
    let d = Mat::from_fn(n_stage, n_inputs, |i, j| d_rows[i][j]);
    Ok(StackedObservable {
        h: if list.len() == 1 {
            base.clone()
        } else {
            Observable::stack(&list)?
        },
        n_base: base.output_dim(),
        n_inputs,
        stage_cost,
        terminal_cost,
        stage_rows: (start, n_stage),
        terminal_rows,
        d,
    })
}

impl StackedObservable {
    pub fn n_outputs(&self) -> usize {
        self.h.output_dim()
    }

    /// `E`, `F`, `b` of the stage constraint `c(ŷ) + D u ≤ 0`.
    pub fn stage_constraints(&self) -> (Mat, Mat, Vec<f64>) {
        let (s, k) = self.stage_rows;
        let e = Mat::from_fn(
            k,
            self.n_outputs(),
            |i, j| if j == s + i { 1.0 } else { 0.0 },
        );
        (e, self.d.clone(), vec![0.0; k])
    }

    pub fn terminal_constraints(&self) -> (Mat, Vec<f64>) {
        let (s, k) = self.terminal_rows;
        (
            Mat::from_fn(
                k,
                self.n_outputs(),
                |i, j| if j == s + i { 1.0 } else { 0.0 },
            ),
            vec![0.0; k],
        )
    }

    /// Tracking spec: `Q = diag(q_diag)` on the base outputs (zero elsewhere), input
    /// weight `r`, the stacked costs with unit weight, `Q_N = Q`.
    pub fn tracking_spec(
        &self,
        np: usize,
        q_diag: &[f64],
        r: Mat,
        reference: Option<Reference>,
    ) -> Result<MpcSpec> {
        let nh = self.n_outputs();
        if q_diag.len() != self.n_base {
            return Err(Error::dims("tracking weights", self.n_base, q_diag.len()));
        }
        let q = Mat::from_fn(nh, nh, |i, j| {
            if i == j && i < self.n_base {
                q_diag[i]
            } else {
                0.0
            }
        });
        let mut q_lin = vec![0.0; nh];
        if let Some(i) = self.stage_cost {
            q_lin[i] = 1.0;
        }
        let mut qn_lin = vec![0.0; nh];
        if let Some(i) = self.terminal_cost {
            qn_lin[i] = 1.0;
        }
        let (e, f, b) = self.stage_constraints();
        let (en, bn) = self.terminal_constraints();
        let reference = match reference {
            Some(r) if r.dim() == self.n_base && nh > self.n_base => {
                let values = r
                    .values
                    .iter()
                    .map(|v| {
                        v.iter()
                            .copied()
                            .chain(std::iter::repeat_n(0.0, nh - self.n_base))
                            .collect()
                    })
                    .collect();
                Some(Reference::new(r.times, values)?)
            }
            other => other,
        };
        let spec = MpcSpec {
            np,
            stages: vec![Stage {
                q: q.clone(),
                r: r.clone(),
                q_lin,
                r_lin: vec![0.0; self.n_inputs],
                e,
                f,
                b,
            }],
            terminal: Terminal {
                q,
                q_lin: qn_lin,
                e: en,
                b: bn,
            },
            reference,
        };
        spec.validate(nh, self.n_inputs)?;
        Ok(spec)
    }
}
