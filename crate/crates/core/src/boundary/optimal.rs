use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::{CMat, C64};

use super::lmat::{LMatrix, Projector};

/// Split of the eigenfunction budget `N` over the output components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPartition {
    sizes: Vec<usize>,
}

impl OutputPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "partition sizes must all be >= 1, got {sizes:?}"
            )));
        }
        Ok(OutputPartition { sizes })
    }

    /// `N` split evenly over `n_h` outputs.
    pub fn even(n_h: usize, total: usize) -> Result<Self> {
        if n_h == 0 || !total.is_multiple_of(n_h) {
            return Err(Error::InvalidArgument(format!(
                "cannot split {total} eigenfunctions evenly over {n_h} outputs"
            )));
        }
        Self::new(vec![total / n_h; n_h])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_outputs(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// First row of output `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.sizes[..i].iter().sum()
    }
}

/// Temporal roughness penalty `α ‖D L g‖²`, `D` the first difference along each
/// trajectory divided by `Ts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub alpha: f64,
}

/// Boundary-function values `G(i, j) = gᵢ(x₀ʲ)`, one row per eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatrix {
    pub g: CMat,
    pub partition: OutputPartition,
    pub eigenvalues: Vec<C64>,
}

impl BoundaryMatrix {
    /// Writes `G` as CSV with `re+imj` entries; rows are functions, columns trajectories.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.g.rows() {
            let row: Vec<String> = self.g.row(i).iter().map(|z| format_complex(*z)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a `G` CSV as written by [`BoundaryMatrix::write_csv`].
    pub fn read_g_csv<R: BufRead>(r: R) -> Result<CMat> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .trim()
                .split(',')
                .map(parse_complex)
                .collect::<Result<Vec<_>>>()?;
            if *cols.get_or_insert(vals.len()) != vals.len() {
                return Err(Error::Parse(format!(
                    "row {rows} has {} entries",
                    vals.len()
                )));
            }
            data.extend(vals);
            rows += 1;
        }
        CMat::from_vec(rows, cols.unwrap_or(0), data)
    }
}

pub fn format_complex(z: C64) -> String {
    format!("{:.16e}{:+.16e}j", z.re, z.im)
}

pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::Parse(format!("bad complex entry '{s}'"));
    let body = s.trim().strip_suffix('j').ok_or_else(bad)?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re = body[..split].parse::<f64>().map_err(|_| bad())?;
    let im = body[split..].parse::<f64>().map_err(|_| bad())?;
    Ok(C64::new(re, im))
}

/// Minimizes `‖hᵢ − L_Λᵢ gᵢ‖²` (plus the optional penalty) for every output component.
///
/// `targets[i]` holds output `i` on every sample, trajectory by trajectory. Without
/// regularization the problem is solved by the pseudoinverse trajectory by trajectory;
/// the penalty acts along time within each trajectory, so the blocks still decouple.
pub fn optimal_boundary_from_targets(
    ts: f64,
    mt: usize,
    ms: usize,
    targets: &[Vec<C64>],
    partition: &OutputPartition,
    lambdas: &[Vec<C64>],
    regularizer: Option<Regularizer>,
) -> Result<BoundaryMatrix> {
    if targets.len() != partition.n_outputs() || lambdas.len() != partition.n_outputs() {
        return Err(Error::dims(
            "optimal_boundary outputs",
            partition.n_outputs(),
            format!(
                "{} targets, {} eigenvalue sets",
                targets.len(),
                lambdas.len()
            ),
        ));
    }
    let n = partition.total();
    let mut g = CMat::zeros(n, mt);
    let mut eigenvalues = Vec::with_capacity(n);
    for (i, (h, lam)) in targets.iter().zip(lambdas).enumerate() {
        if lam.len() != partition.sizes()[i] {
            return Err(Error::dims(
                "eigenvalues per output",
                partition.sizes()[i],
                lam.len(),
            ));
        }
        if h.len() != mt * (ms + 1) {
            return Err(Error::dims("output targets", mt * (ms + 1), h.len()));
        }
        let coef = solve_component(ts, mt, ms, h, lam, regularizer)
            .map_err(|e| e.at(format!("output component {i}")))?;
        let off = partition.offset(i);
        for (j, q) in coef.iter().enumerate() {
            for (l, v) in q.iter().enumerate() {
                g[(off + l, j)] = *v;
            }
        }
        eigenvalues.extend_from_slice(lam);
    }
    Ok(BoundaryMatrix {
        g,
        partition: partition.clone(),
        eigenvalues,
    })
}

/// Per-trajectory coefficient vectors for one output.
fn solve_component(
    ts: f64,
    mt: usize,
    ms: usize,
    h: &[C64],
    lam: &[C64],
    reg: Option<Regularizer>,
) -> Result<Vec<Vec<C64>>> {
    let l = LMatrix::new(lam, mt, ms, ts)?;
    let v = l.block();
    let alpha = reg.map_or(0.0, |r| r.alpha);
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularization weight must be >= 0, got {alpha}"
        )));
    }
    let (block, pad) = if alpha > 0.0 {
        let w = alpha.sqrt() / ts;
        let dv = CMat::from_fn(ms, lam.len(), |k, c| (v[(k + 1, c)] - v[(k, c)]) * w);
        (v.vstack(&dv)?, ms)
    } else {
        (v.clone(), 0)
    };
    let p = Projector::new(&block);
    Ok((0..mt)
        .into_par_iter()
        .map(|j| {
            let mut rhs = h[j * (ms + 1)..(j + 1) * (ms + 1)].to_vec();
            rhs.resize(ms + 1 + pad, C64::new(0.0, 0.0));
            p.coefficients(&rhs)
        })
        .collect())
}

/// Optimal boundary values for an observable `h` evaluated on every sample of `ds`.
pub fn optimal_boundary(
    ds: &TrajectoryDataset,
    h: &dyn Fn(&[f64]) -> Vec<f64>,
    partition: &OutputPartition,
    lambdas: &[Vec<C64>],
    regularizer: Option<Regularizer>,
) -> Result<BoundaryMatrix> {
    let nh = partition.n_outputs();
    let mut targets = vec![Vec::with_capacity(ds.n_samples()); nh];
    for x in ds.samples() {
        let y = h(x);
        if y.len() != nh {
            return Err(Error::dims("observable output", nh, y.len()));
        }
        for (t, v) in targets.iter_mut().zip(y) {
            t.push(C64::new(v, 0.0));
        }
    }
    optimal_boundary_from_targets(
        ds.ts(),
        ds.n_traj(),
        ds.n_steps(),
        &targets,
        partition,
        lambdas,
        regularizer,
    )
}
