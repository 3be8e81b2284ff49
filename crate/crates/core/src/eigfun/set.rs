use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extension::{ExtensionModel, ExtensionOptions};
use crate::boundary::{exp_powers, BoundaryMatrix, OutputPartition};
use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::{jordan_exp, CMat, JordanBlock, C64};

/// How a row of the set is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    /// Row of the fitted extension model.
    Primitive(usize),
    /// Pointwise product of earlier rows raised to the given powers.
    Product { factors: Vec<(usize, f64)> },
}

/// Eigenfunctions known on the trajectory data, optionally extended to the state space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenfunctionSet {
    ts: f64,
    mt: usize,
    ms: usize,
    eigenvalues: Vec<C64>,
    sources: Vec<RowSource>,
    partition: Option<OutputPartition>,
    /// On-data values, `N × Mt(Ms+1)`. Not persisted.
    #[serde(skip)]
    values: Option<CMat>,
    extension: Option<ExtensionModel>,
}

/// Fills `value(i, j(Ms+1)+k) = e^{λᵢ k Ts} G(i, j)`.
pub fn propagate_values(g: &BoundaryMatrix, ts: f64, ms: usize) -> Result<EigenfunctionSet> {
    let n = g.g.rows();
    let mt = g.g.cols();
    if g.eigenvalues.len() != n {
        return Err(Error::dims("boundary eigenvalues", n, g.eigenvalues.len()));
    }
    if !g.g.is_finite() {
        return Err(Error::NonFinite("boundary values".into()));
    }
    let mut values = CMat::zeros(n, mt * (ms + 1));
    for (i, &lam) in g.eigenvalues.iter().enumerate() {
        let w = exp_powers(lam, ms, ts).map_err(|e| e.at(format!("eigenfunction {i}")))?;
        let row = values.row_mut(i);
        for j in 0..mt {
            let gij = g.g[(i, j)];
            for (k, wk) in w.iter().enumerate() {
                row[j * (ms + 1) + k] = wk * gij;
            }
        }
    }
    Ok(EigenfunctionSet {
        ts,
        mt,
        ms,
        eigenvalues: g.eigenvalues.clone(),
        sources: (0..n).map(RowSource::Primitive).collect(),
        partition: Some(g.partition.clone()),
        values: Some(values),
        extension: None,
    })
}

/// Propagates stacked boundary values of a Jordan chain: column `j(Ms+1)+k` is
/// `e^{J k Ts}` applied to column `j` of `gblock`, built by repeated one-step products.
pub fn propagate_generalized(
    block: &JordanBlock,
    gblock: &CMat,
    ts: f64,
    ms: usize,
) -> Result<CMat> {
    let s = block.size;
    if gblock.rows() != s {
        return Err(Error::dims("Jordan boundary block rows", s, gblock.rows()));
    }
    exp_powers(block.lambda, ms, ts)?;
    let step = jordan_exp(block, ts)?;
    let mt = gblock.cols();
    let mut out = CMat::zeros(s, mt * (ms + 1));
    let mut power = CMat::identity(s);
    for k in 0..=ms {
        if k > 0 {
            power = power.matmul(&step)?;
        }
        for j in 0..mt {
            for r in 0..s {
                let mut acc = C64::new(0.0, 0.0);
                for c in r..s {
                    acc += power[(r, c)] * gblock[(c, j)];
                }
                out[(r, j * (ms + 1) + k)] = acc;
            }
        }
    }
    Ok(out)
}

fn is_integer(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() < 2f64.powi(31)
}

fn power(z: C64, p: f64) -> C64 {
    if is_integer(p) {
        z.powi(p as i32)
    } else {
        z.powf(p)
    }
}

/// Pointwise product of powered on-data rows and its eigenvalue `Σ pᵢ λᵢ`.
///
/// Non-integer powers are only accepted on rows with a real eigenvalue and no value
/// on the non-positive real axis, so the principal branch is consistent along each
/// trajectory.
pub fn product_eigenfunction(
    set: &EigenfunctionSet,
    indices: &[usize],
    powers: &[f64],
) -> Result<(Vec<C64>, C64)> {
    let values = set
        .values
        .as_ref()
        .ok_or_else(|| Error::Missing("on-data eigenfunction values".into()))?;
    check_factors(set, indices, powers)?;
    for (&i, &p) in indices.iter().zip(powers) {
        if !is_integer(p) {
            if set.eigenvalues[i].im != 0.0 {
                return Err(Error::BranchCut(format!(
                    "non-integer power {p} of row {i} with complex eigenvalue {}",
                    set.eigenvalues[i]
                )));
            }
            if values.row(i).iter().any(|z| z.im == 0.0 && z.re <= 0.0) {
                return Err(Error::BranchCut(format!(
                    "row {i} has values on the non-positive real axis; power {p} is ambiguous"
                )));
            }
        }
    }
    let mut row = vec![C64::new(1.0, 0.0); values.cols()];
    let mut lambda = C64::new(0.0, 0.0);
    for (&i, &p) in indices.iter().zip(powers) {
        for (o, &v) in row.iter_mut().zip(values.row(i)) {
            *o *= power(v, p);
        }
        lambda += set.eigenvalues[i] * p;
    }
    Ok((row, lambda))
}

fn check_factors(set: &EigenfunctionSet, indices: &[usize], powers: &[f64]) -> Result<()> {
    if indices.is_empty() || indices.len() != powers.len() {
        return Err(Error::InvalidArgument(
            "product needs matching, non-empty index and power lists".into(),
        ));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= set.len()) {
        return Err(Error::InvalidArgument(format!(
            "row index {i} out of range"
        )));
    }
    if let Some(&p) = powers.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "powers must be finite and >= 0, got {p}"
        )));
    }
    Ok(())
}

impl EigenfunctionSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn sources(&self) -> &[RowSource] {
        &self.sources
    }

    pub fn partition(&self) -> Option<&OutputPartition> {
        self.partition.as_ref()
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn values(&self) -> Option<&CMat> {
        self.values.as_ref()
    }

    pub fn extension(&self) -> Option<&ExtensionModel> {
        self.extension.as_ref()
    }

    /// Appends a product row; the partition no longer describes the set afterwards.
    pub fn add_product(&mut self, indices: &[usize], powers: &[f64]) -> Result<usize> {
        let (row, lambda) = product_eigenfunction(self, indices, powers)?;
        let values = self
            .values
            .take()
            .expect("checked by product_eigenfunction");
        let grown = values.vstack(&CMat::from_vec(1, row.len(), row)?)?;
        self.values = Some(grown);
        self.eigenvalues.push(lambda);
        self.sources.push(RowSource::Product {
            factors: indices
                .iter()
                .copied()
                .zip(powers.iter().copied())
                .collect(),
        });
        self.partition = None;
        Ok(self.len() - 1)
    }

    /// Fits one shared extension model for all primitive rows on the samples of `ds`.
    pub fn fit_extension(&mut self, ds: &TrajectoryDataset, opts: &ExtensionOptions) -> Result<()> {
        let values = self
            .values
            .as_ref()
            .ok_or_else(|| Error::Missing("on-data eigenfunction values".into()))?;
        if ds.n_traj() != self.mt || ds.n_steps() != self.ms {
            return Err(Error::dims(
                "dataset shape",
                format!("{} x {}", self.mt, self.ms + 1),
                format!("{} x {}", ds.n_traj(), ds.n_steps() + 1),
            ));
        }
        let points: Vec<f64> = ds.samples().flatten().copied().collect();
        let rows: Vec<Vec<C64>> = self
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, RowSource::Primitive(_)))
            .map(|(i, _)| values.row(i).to_vec())
            .collect();
        self.extension = Some(ExtensionModel::fit(ds.state_dim(), &points, &rows, opts)?);
        Ok(())
    }

    /// `Φ̂(x)`: extensions of the primitive rows, products formed from them.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<C64>> {
        let ext = self
            .extension
            .as_ref()
            .ok_or_else(|| Error::Missing("eigenfunction extension".into()))?;
        if x.len() != ext.dim() {
            return Err(Error::dims("state", ext.dim(), x.len()));
        }
        let prim = ext.evaluate(x);
        let mut out = Vec::with_capacity(self.len());
        for src in &self.sources {
            let v = match src {
                RowSource::Primitive(p) => prim[*p],
                RowSource::Product { factors } => factors
                    .iter()
                    .fold(C64::new(1.0, 0.0), |acc, &(i, p)| acc * power(out[i], p)),
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Evaluates many states in parallel.
    pub fn evaluate_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<C64>>> {
        xs.par_iter().map(|x| self.evaluate(x)).collect()
    }

    /// Largest deviation from `value(j, k+1) = e^{λTs} value(j, k)`, in units of the
    /// spacing of floating-point numbers at the compared value.
    pub fn defining_property_ulps(&self) -> Option<f64> {
        let values = self.values.as_ref()?;
        let mut worst: f64 = 0.0;
        for (i, lam) in self.eigenvalues.iter().enumerate() {
            let w = (lam * self.ts).exp();
            let row = values.row(i);
            for j in 0..self.mt {
                for k in 0..self.ms {
                    let a = row[j * (self.ms + 1) + k + 1];
                    let b = w * row[j * (self.ms + 1) + k];
                    let scale = a.norm().max(b.norm());
                    if scale == 0.0 {
                        continue;
                    }
                    worst = worst.max((a - b).norm() / (scale * f64::EPSILON));
                }
            }
        }
        Some(worst)
    }
}
