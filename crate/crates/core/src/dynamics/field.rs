use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type FieldFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Kind {
    VanDerPol,
    Duffing,
    /// `ẋ = A x + B u` with row-major `A` (n×n) and `B` (n×m).
    Linear {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Inflated(Box<VectorField>),
    Custom(Arc<FieldFn>),
}

/// Right-hand side `ẋ = f(x, u)` of a (possibly controlled) ODE.
#[derive(Clone)]
pub struct VectorField {
    state_dim: usize,
    input_dim: usize,
    name: String,
    kind: Kind,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

impl VectorField {
    /// Forced Van der Pol oscillator: `ẋ₁ = 2x₂`, `ẋ₂ = −0.8x₁ + 2x₂ − 10x₁²x₂ + u`.
    pub fn vanderpol() -> Self {
        VectorField {
            state_dim: 2,
            input_dim: 1,
            name: "vanderpol".into(),
            kind: Kind::VanDerPol,
        }
    }

    /// Damped forced Duffing oscillator: `ẋ₁ = x₂`, `ẋ₂ = −0.5x₂ − x₁(4x₁² − 1) + 0.5u`.
    pub fn duffing() -> Self {
        VectorField {
            state_dim: 2,
            input_dim: 1,
            name: "duffing".into(),
            kind: Kind::Duffing,
        }
    }

    pub fn linear(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::dims("VectorField::linear (A)", n * n, a.len()));
        }
        if b.len() != n * m {
            return Err(Error::dims("VectorField::linear (B)", n * m, b.len()));
        }
        Ok(VectorField {
            state_dim: n,
            input_dim: m,
            name: "linear".into(),
            kind: Kind::Linear { a, b },
        })
    }

    /// Scalar `ẋ = a x (+ u)`.
    pub fn scalar_linear(a: f64) -> Self {
        Self::linear(1, 1, vec![a], vec![1.0]).expect("scalar dims")
    }

    pub fn zero(n: usize) -> Self {
        Self::linear(n, 0, vec![0.0; n * n], Vec::new()).expect("zero dims")
    }

    pub fn custom<F>(name: &str, state_dim: usize, input_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorField {
            state_dim,
            input_dim,
            name: name.into(),
            kind: Kind::Custom(Arc::new(f)),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vanderpol" => Ok(Self::vanderpol()),
            "duffing" => Ok(Self::duffing()),
            other => Err(Error::InvalidArgument(format!(
                "unknown system preset '{other}'"
            ))),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Writes `f(x, u)` into `dx`. A shorter (or empty) `u` is zero-padded.
    pub fn eval_into(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let ui = |i: usize| u.get(i).copied().unwrap_or(0.0);
        match &self.kind {
            Kind::VanDerPol => {
                dx[0] = 2.0 * x[1];
                dx[1] = -0.8 * x[0] + 2.0 * x[1] - 10.0 * x[0] * x[0] * x[1] + ui(0);
            }
            Kind::Duffing => {
                dx[0] = x[1];
                dx[1] = -0.5 * x[1] - x[0] * (4.0 * x[0] * x[0] - 1.0) + 0.5 * ui(0);
            }
            Kind::Linear { a, b } => {
                let n = self.state_dim;
                let m = self.input_dim;
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += a[i * n + j] * x[j];
                    }
                    for c in 0..m {
                        s += b[i * m + c] * ui(c);
                    }
                    dx[i] = s;
                }
            }
            Kind::Inflated(inner) => {
                let n = inner.state_dim;
                let (orig, held) = x.split_at(n);
                inner.eval_into(orig, held, &mut dx[..n]);
                for c in 0..self.input_dim {
                    dx[n + c] = ui(c);
                }
            }
            Kind::Custom(f) => {
                if u.len() >= self.input_dim {
                    f(x, u, dx)
                } else {
                    let padded: Vec<f64> = (0..self.input_dim).map(ui).collect();
                    f(x, &padded, dx)
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.state_dim];
        self.eval_into(x, u, &mut dx);
        dx
    }
}

/// State inflation `x = [x̃; v]`, `v̇ = u`: the original inputs read the appended
/// coordinates and the new input drives their derivative.
pub fn inflate_state(vf: &VectorField) -> Result<VectorField> {
    if vf.input_dim == 0 {
        return Err(Error::Unsupported(
            "state inflation needs a field with at least one input".into(),
        ));
    }
    Ok(VectorField {
        state_dim: vf.state_dim + vf.input_dim,
        input_dim: vf.input_dim,
        name: format!("{}-inflated", vf.name),
        kind: Kind::Inflated(Box::new(vf.clone())),
    })
}
