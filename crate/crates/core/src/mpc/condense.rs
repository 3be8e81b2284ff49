use serde::{Deserialize, Serialize};

use super::spec::MpcSpec;
use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, CMat, Mat, C64};
use crate::predictor::LinearPredictor;

/// The MPC problem in the inputs `u = [u₀ … u_{Np−1}]` only:
/// minimize `uᵀH₁u + (h + h_ref·ref + Re(z₀ᵀH₂))ᵀu` subject to `L u + Re(M z₀) ≤ d`.
///
/// Complex lifted states enter only through `Re(·)`, so all matrices acting on `u` are real.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseQp {
    pub h1: Mat,
    pub h: Vec<f64>,
    /// Linear term per unit reference (`−2 𝐁ᵀ𝐐` summed over stages); empty without a reference.
    pub h_ref: Option<Mat>,
    pub h2: CMat,
    pub l: Mat,
    pub m: CMat,
    pub d: Vec<f64>,
    pub n_inputs: usize,
    pub np: usize,
    /// Constraint rows of each stage (the terminal rows come last).
    pub stage_rows: Vec<usize>,
    /// Output prediction matrices `𝐀` (complex) and `𝐁`: stacked `ŷ = Re(𝐀 z₀) + 𝐁 u`.
    pub a_bar: CMat,
    pub b_bar: Mat,
}

/// Output-prediction matrices over `np` steps: `𝐀` stacks `C A_dᵏ`, `𝐁` is the block lower
/// triangular Toeplitz matrix of `Re(C A_dᵏ B_d)`.
pub fn prediction_matrices(pred: &LinearPredictor, np: usize) -> Result<(CMat, Mat)> {
    let bd = pred.bd.as_ref().ok_or_else(|| {
        Error::Missing("input matrix Bd; the predictor was built without control data".into())
    })?;
    let nh = pred.n_outputs();
    let n = pred.n_lift();
    let m = bd.cols();
    let mut a_bar = CMat::zeros(nh * (np + 1), n);
    let mut w = pred.c.clone();
    let mut markov: Vec<Mat> = Vec::with_capacity(np);
    for k in 0..=np {
        for i in 0..nh {
            for l in 0..n {
                a_bar[(k * nh + i, l)] = w[(i, l)];
            }
        }
        if k < np {
            let wb = w.matmul(bd)?;
            markov.push(Mat::from_fn(nh, m, |i, j| wb[(i, j)].re));
            for i in 0..nh {
                for l in 0..n {
                    w[(i, l)] *= pred.ad[l];
                }
            }
        }
    }
    let mut b_bar = Mat::zeros(nh * (np + 1), m * np);
    for k in 1..=np {
        for j in 0..k {
            let blk = &markov[k - j - 1];
            for i in 0..nh {
                for c in 0..m {
                    b_bar[(k * nh + i, j * m + c)] = blk[(i, c)];
                }
            }
        }
    }
    Ok((a_bar, b_bar))
}

/// Condenses the stage-form problem of `spec` on the predictor `pred`.
pub fn condense(spec: &MpcSpec, pred: &LinearPredictor) -> Result<DenseQp> {
    let nh = pred.n_outputs();
    let m = pred.n_inputs();
    spec.validate(nh, m)?;
    let np = spec.np;
    let n = pred.n_lift();
    let (a_bar, b_bar) = prediction_matrices(pred, np)?;
    let nu = m * np;

    // 𝐐𝐁 block by block.
    let q_of = |k: usize| {
        if k < np {
            &spec.stage(k).q
        } else {
            &spec.terminal.q
        }
    };
    let mut qb = Mat::zeros(nh * (np + 1), nu);
    for k in 0..=np {
        let q = q_of(k);
        for i in 0..nh {
            for c in 0..nu {
                let mut s = 0.0;
                for j in 0..nh {
                    s += q[(i, j)] * b_bar[(k * nh + j, c)];
                }
                qb[(k * nh + i, c)] = s;
            }
        }
    }
    let mut h1 = b_bar.transpose().matmul(&qb);
    for k in 0..np {
        let r = &spec.stage(k).r;
        for i in 0..m {
            for j in 0..m {
                h1[(k * m + i, k * m + j)] += r[(i, j)];
            }
        }
    }
    h1.symmetrize();
    let (ev, vecs) = sym_eigen(&h1);
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if lo < 0.0 {
        log::warn!("condensed Hessian has eigenvalue {lo:.3e}; clipping to zero");
        let clipped: Vec<f64> = ev.iter().map(|v| v.max(0.0)).collect();
        h1 = Mat::from_fn(nu, nu, |i, j| {
            (0..nu)
                .map(|k| vecs[(i, k)] * clipped[k] * vecs[(j, k)])
                .sum()
        });
        h1.symmetrize();
    }

    let mut q_stack = Vec::with_capacity(nh * (np + 1));
    for k in 0..np {
        q_stack.extend_from_slice(&spec.stage(k).q_lin);
    }
    q_stack.extend_from_slice(&spec.terminal.q_lin);
    let mut h = b_bar.tr_mul_vec(&q_stack);
    for k in 0..np {
        for (c, r) in spec.stage(k).r_lin.iter().enumerate() {
            h[k * m + c] += r;
        }
    }
    let h_ref = spec.reference.as_ref().map(|_| {
        Mat::from_fn(nu, nh, |c, j| {
            (0..=np).map(|k| -2.0 * qb[(k * nh + j, c)]).sum()
        })
    });

    // H₂ = 2 𝐀ᵀ 𝐐 𝐁 (plain transpose: z₀ multiplies from the left).
    let mut h2 = CMat::zeros(n, nu);
    for r in 0..nh * (np + 1) {
        for l in 0..n {
            let a = a_bar[(r, l)] * 2.0;
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..nu {
                h2[(l, c)] += a * qb[(r, c)];
            }
        }
    }

    let mut stage_rows: Vec<usize> = (0..np).map(|k| spec.stage(k).b.len()).collect();
    stage_rows.push(spec.terminal.b.len());
    let nc: usize = stage_rows.iter().sum();
    let mut l = Mat::zeros(nc, nu);
    let mut mm = CMat::zeros(nc, n);
    let mut d = Vec::with_capacity(nc);
    let mut row = 0;
    for k in 0..=np {
        let (e, f, b) = if k < np {
            let s = spec.stage(k);
            (&s.e, Some(&s.f), &s.b)
        } else {
            (&spec.terminal.e, None, &spec.terminal.b)
        };
        for i in 0..b.len() {
            if let Some(f) = f {
                for c in 0..m {
                    l[(row, k * m + c)] += f[(i, c)];
                }
            }
            for j in 0..nh {
                let eij = e[(i, j)];
                if eij == 0.0 {
                    continue;
                }
                for c in 0..nu {
                    l[(row, c)] += eij * b_bar[(k * nh + j, c)];
                }
                for t in 0..n {
                    mm[(row, t)] += a_bar[(k * nh + j, t)] * eij;
                }
            }
            d.push(b[i]);
            row += 1;
        }
    }
    Ok(DenseQp {
        h1,
        h,
        h_ref,
        h2,
        l,
        m: mm,
        d,
        n_inputs: m,
        np,
        stage_rows,
        a_bar,
        b_bar,
    })
}

impl DenseQp {
    pub fn n_vars(&self) -> usize {
        self.h1.rows()
    }

    pub fn n_constraints(&self) -> usize {
        self.l.rows()
    }

    /// `h + h_ref·ref + Re(z₀ᵀH₂)`.
    pub fn linear_term(&self, z0: &[C64], reference: Option<&[f64]>) -> Result<Vec<f64>> {
        if z0.len() != self.h2.rows() {
            return Err(Error::dims("lifted state", self.h2.rows(), z0.len()));
        }
        let mut g = self.h.clone();
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += (0..z0.len())
                .map(|l| (z0[l] * self.h2[(l, c)]).re)
                .sum::<f64>();
        }
        if let (Some(hr), Some(r)) = (&self.h_ref, reference) {
            if r.len() != hr.cols() {
                return Err(Error::dims("reference", hr.cols(), r.len()));
            }
            for (gc, v) in g.iter_mut().zip(hr.mul_vec(r)) {
                *gc += v;
            }
        }
        Ok(g)
    }

    /// `d − Re(M z₀)`.
    pub fn rhs(&self, z0: &[C64]) -> Vec<f64> {
        (0..self.d.len())
            .map(|i| {
                self.d[i]
                    - (0..z0.len())
                        .map(|l| (self.m[(i, l)] * z0[l]).re)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Stacked predicted outputs for a lifted state and input sequence.
    pub fn predicted_outputs(&self, z0: &[C64], u: &[f64]) -> Vec<f64> {
        let bu = self.b_bar.mul_vec(u);
        (0..bu.len())
            .map(|r| {
                bu[r]
                    + (0..z0.len())
                        .map(|l| (self.a_bar[(r, l)] * z0[l]).re)
                        .sum::<f64>()
            })
            .collect()
    }
}
