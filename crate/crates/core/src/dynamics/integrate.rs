use crate::error::{Error, Result};

use super::field::VectorField;

/// Largest internal RK4 step, in seconds.
pub const MAX_SUBSTEP: f64 = 1e-3;

/// Fixed-step classical RK4.
#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    max_substep: f64,
}

impl Default for Rk4 {
    fn default() -> Self {
        Rk4 {
            max_substep: MAX_SUBSTEP,
        }
    }
}

impl Rk4 {
    pub fn with_max_substep(max_substep: f64) -> Result<Self> {
        if !(max_substep > 0.0) || !max_substep.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "substep must be positive, got {max_substep}"
            )));
        }
        Ok(Rk4 { max_substep })
    }

    /// Number of equal substeps used to cover `dt`.
    pub fn substeps(&self, dt: f64) -> usize {
        ((dt / self.max_substep) - 1e-9).ceil().max(1.0) as usize
    }

    /// Advances `x` in place over `dt` with the input held at `u`.
    pub fn step(&self, vf: &VectorField, x: &mut [f64], u: &[f64], dt: f64) {
        let n = x.len();
        let ns = self.substeps(dt);
        let h = dt / ns as f64;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for _ in 0..ns {
            vf.eval_into(x, u, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            vf.eval_into(&tmp, u, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            vf.eval_into(&tmp, u, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            vf.eval_into(&tmp, u, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }

    /// Simulates with a piecewise-constant input: `inputs[k]` is held over `[k dt, (k+1) dt)`.
    /// Returns `inputs.len() + 1` states including `x0`.
    pub fn simulate(
        &self,
        vf: &VectorField,
        x0: &[f64],
        inputs: &[Vec<f64>],
        dt: f64,
    ) -> Result<Vec<Vec<f64>>> {
        check_args(vf, x0, dt, inputs.len())?;
        let mut out = Vec::with_capacity(inputs.len() + 1);
        let mut x = x0.to_vec();
        out.push(x.clone());
        for (k, u) in inputs.iter().enumerate() {
            self.step(vf, &mut x, u, dt);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup {
                    step: k + 1,
                    trajectory: None,
                });
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}

fn check_args(vf: &VectorField, x0: &[f64], dt: f64, steps: usize) -> Result<()> {
    if x0.len() != vf.state_dim() {
        return Err(Error::dims("integrate (x0)", vf.state_dim(), x0.len()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    Ok(())
}

/// Integrates `vf` from `x0` for `steps` samples of length `dt` under a constant input
/// (zero when `u` is `None`). Returns `steps + 1` states including `x0`.
pub fn integrate(
    vf: &VectorField,
    x0: &[f64],
    u: Option<&[f64]>,
    dt: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    check_args(vf, x0, dt, steps)?;
    let u = u
        .map(|u| u.to_vec())
        .unwrap_or_else(|| vec![0.0; vf.input_dim()]);
    if u.len() != vf.input_dim() {
        return Err(Error::dims("integrate (u)", vf.input_dim(), u.len()));
    }
    Rk4::default().simulate(vf, x0, &vec![u; steps], dt)
}
