use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scalar output built from the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableTerm {
    /// All state coordinates, in order (expands to `n` outputs).
    State,
    Component {
        index: usize,
    },
    /// `coef · Π xᵢ^{powers[i]}`.
    Monomial {
        powers: Vec<u32>,
        #[serde(default = "one")]
        coef: f64,
    },
    Constant {
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

type ObsFn = dyn Fn(&[f64], &mut Vec<f64>) + Send + Sync;

/// Vector-valued output map `h(x)`.
#[derive(Clone)]
pub struct Observable {
    state_dim: usize,
    output_dim: usize,
    f: Arc<ObsFn>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("state_dim", &self.state_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl Observable {
    /// `h(x) = x`.
    pub fn state(n: usize) -> Self {
        Observable {
            state_dim: n,
            output_dim: n,
            f: Arc::new(|x, out| out.extend_from_slice(x)),
        }
    }

    pub fn custom<F>(state_dim: usize, output_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Observable {
            state_dim,
            output_dim,
            f: Arc::new(move |x, out| out.extend(f(x))),
        }
    }

    pub fn from_terms(state_dim: usize, terms: &[ObservableTerm]) -> Result<Self> {
        let mut output_dim = 0;
        for t in terms {
            output_dim += match t {
                ObservableTerm::State => state_dim,
                ObservableTerm::Component { index } if *index >= state_dim => {
                    return Err(Error::InvalidArgument(format!(
                        "observable component {index} out of range for state dimension {state_dim}"
                    )))
                }
                ObservableTerm::Monomial { powers, .. } if powers.len() != state_dim => {
                    return Err(Error::dims("monomial powers", state_dim, powers.len()))
                }
                _ => 1,
            };
        }
        let terms = terms.to_vec();
        Ok(Observable {
            state_dim,
            output_dim,
            f: Arc::new(move |x, out| {
                for t in &terms {
                    match t {
                        ObservableTerm::State => out.extend_from_slice(x),
                        ObservableTerm::Component { index } => out.push(x[*index]),
                        ObservableTerm::Monomial { powers, coef } => out.push(
                            coef * x
                                .iter()
                                .zip(powers)
                                .map(|(v, &p)| v.powi(p as i32))
                                .product::<f64>(),
                        ),
                        ObservableTerm::Constant { value } => out.push(*value),
                    }
                }
            }),
        })
    }

    /// Concatenation `[h₁(x); h₂(x); …]`.
    pub fn stack(parts: &[Observable]) -> Result<Self> {
        let state_dim = parts.first().map_or(0, |p| p.state_dim);
        if parts.iter().any(|p| p.state_dim != state_dim) {
            return Err(Error::InvalidArgument(
                "stacked observables must share the state dimension".into(),
            ));
        }
        let parts = parts.to_vec();
        Ok(Observable {
            state_dim,
            output_dim: parts.iter().map(|p| p.output_dim).sum(),
            f: Arc::new(move |x, out| {
                for p in &parts {
                    (p.f)(x, out);
                }
            }),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim);
        (self.f)(x, &mut out);
        debug_assert_eq!(out.len(), self.output_dim);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_expand_in_order() {
        let terms = vec![
            ObservableTerm::State,
            ObservableTerm::Monomial {
                powers: vec![2, 0],
                coef: 1.0,
            },
            ObservableTerm::Constant { value: -1.0 },
            ObservableTerm::Component { index: 1 },
        ];
        let h = Observable::from_terms(2, &terms).unwrap();
        assert_eq!(h.output_dim(), 5);
        assert_eq!(h.eval(&[3.0, 4.0]), vec![3.0, 4.0, 9.0, -1.0, 4.0]);
    }

    #[test]
    fn stacking_and_validation() {
        let h = Observable::stack(&[
            Observable::state(2),
            Observable::custom(2, 1, |x| vec![x[0] * x[1]]),
        ])
        .unwrap();
        assert_eq!(h.eval(&[2.0, 5.0]), vec![2.0, 5.0, 10.0]);
        assert!(Observable::from_terms(2, &[ObservableTerm::Component { index: 2 }]).is_err());
        assert!(Observable::stack(&[Observable::state(2), Observable::state(3)]).is_err());
        let json = r#"[{"kind":"state"},{"kind":"monomial","powers":[2,0]}]"#;
        let terms: Vec<ObservableTerm> = serde_json::from_str(json).unwrap();
        assert_eq!(
            Observable::from_terms(2, &terms).unwrap().eval(&[3.0, 1.0]),
            vec![3.0, 1.0, 9.0]
        );
    }
}
