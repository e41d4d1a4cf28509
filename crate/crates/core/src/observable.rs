//! Named test functions `f` used by the estimators.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Observable registry. Every variant knows its sup-norm (when bounded) and
/// the highest coordinate it reads, which makes cylinder checks possible.
#[derive(Clone)]
pub enum Observable {
    /// `f = c`
    Const(f64),
    /// `f(z) = exp(<a, z>)`
    ExpLinear(Vec<f64>),
    /// `f(z) = offset + sin(z_coord)`
    Sin { coord: usize, offset: f64 },
    /// `f(z) = exp(-|z|^2)`
    Bump,
    /// `f(z) = min(1, |z|)`
    MinNorm,
    Custom {
        name: String,
        sup_norm: Option<f64>,
        cylinder: Option<usize>,
        f: CustomFn,
    },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.name())
    }
}

impl Observable {
    pub fn sin1() -> Self {
        Observable::Sin { coord: 0, offset: 0.0 }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom {
            name: name.into(),
            sup_norm: None,
            cylinder: None,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::Const(c) => format!("const({c})"),
            Observable::ExpLinear(a) => format!("exp_a({a:?})"),
            Observable::Sin { coord, offset } => format!("{offset}+sin(z{})", coord + 1),
            Observable::Bump => "bump".into(),
            Observable::MinNorm => "min_norm".into(),
            Observable::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Observable::Const(c) => *c,
            Observable::ExpLinear(a) => a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>().exp(),
            Observable::Sin { coord, offset } => offset + z[*coord].sin(),
            Observable::Bump => (-z.iter().map(|x| x * x).sum::<f64>()).exp(),
            Observable::MinNorm => z.iter().map(|x| x * x).sum::<f64>().sqrt().min(1.0),
            Observable::Custom { f, .. } => f(z),
        }
    }

    /// `‖f‖_∞` when known.
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            Observable::Const(c) => Some(c.abs()),
            Observable::ExpLinear(a) => a.iter().all(|&x| x == 0.0).then_some(1.0),
            Observable::Sin { offset, .. } => Some(offset.abs() + 1.0),
            Observable::Bump | Observable::MinNorm => Some(1.0),
            Observable::Custom { sup_norm, .. } => *sup_norm,
        }
    }

    /// `inf f`, when known; used to reject non-positive observables early.
    pub fn lower_bound(&self) -> Option<f64> {
        match self {
            Observable::Const(c) => Some(*c),
            Observable::ExpLinear(_) => Some(0.0),
            Observable::Sin { offset, .. } => Some(offset - 1.0),
            Observable::Bump | Observable::MinNorm => Some(0.0),
            Observable::Custom { .. } => None,
        }
    }

    /// Number of leading coordinates the observable depends on, `None` if
    /// unknown. A constant depends on none.
    pub fn cylinder_dim(&self) -> Option<usize> {
        match self {
            Observable::Const(_) => Some(0),
            Observable::ExpLinear(a) => Some(a.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1)),
            Observable::Sin { coord, .. } => Some(coord + 1),
            Observable::Bump | Observable::MinNorm => None,
            Observable::Custom { cylinder, .. } => *cylinder,
        }
    }

    /// `f^p`
    pub fn powf(&self, p: f64) -> Observable {
        match self {
            Observable::ExpLinear(a) => Observable::ExpLinear(a.iter().map(|x| x * p).collect()),
            Observable::Const(c) => Observable::Const(c.powf(p)),
            other => {
                let inner = other.clone();
                Observable::Custom {
                    name: format!("({})^{p}", other.name()),
                    sup_norm: other.sup_norm().map(|s| s.powf(p)),
                    cylinder: other.cylinder_dim(),
                    f: Arc::new(move |z| inner.eval(z).powf(p)),
                }
            }
        }
    }

    /// `log f`, evaluated with a positivity check at call sites.
    pub fn ln(&self) -> Observable {
        let inner = self.clone();
        Observable::Custom {
            name: format!("log({})", self.name()),
            sup_norm: None,
            cylinder: self.cylinder_dim(),
            f: Arc::new(move |z| inner.eval(z).ln()),
        }
    }

    pub fn require_positive(&self, value: f64) -> Result<f64> {
        if value > 0.0 {
            Ok(value)
        } else {
            Err(Error::NonPositiveObservable {
                name: self.name(),
                value,
            })
        }
    }
}

/// Serialized form used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    ExpA { a: Vec<f64> },
    Sin1 {
        #[serde(default)]
        offset: f64,
    },
    Bump,
    Const {
        #[serde(default = "one")]
        value: f64,
    },
    MinNorm,
}

fn one() -> f64 {
    1.0
}

impl From<&ObservableSpec> for Observable {
    fn from(s: &ObservableSpec) -> Self {
        match s {
            ObservableSpec::ExpA { a } => Observable::ExpLinear(a.clone()),
            ObservableSpec::Sin1 { offset } => Observable::Sin { coord: 0, offset: *offset },
            ObservableSpec::Bump => Observable::Bump,
            ObservableSpec::Const { value } => Observable::Const(*value),
            ObservableSpec::MinNorm => Observable::MinNorm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_values() {
        assert_eq!(Observable::Const(2.0).eval(&[5.0]), 2.0);
        assert!((Observable::ExpLinear(vec![1.0, 0.0]).eval(&[1.0, 9.0]) - 1f64.exp()).abs() < 1e-15);
        assert_eq!(Observable::MinNorm.eval(&[3.0, 4.0]), 1.0);
        assert_eq!(Observable::MinNorm.eval(&[0.3, 0.4]), 0.5);
        assert_eq!(Observable::Bump.eval(&[0.0, 0.0]), 1.0);
        let f = Observable::Sin { coord: 0, offset: 2.0 };
        assert_eq!(f.sup_norm(), Some(3.0));
        assert_eq!(f.lower_bound(), Some(1.0));
    }

    #[test]
    fn powers_and_logs() {
        let f = Observable::ExpLinear(vec![1.0, 0.0]);
        assert!((f.powf(2.0).eval(&[0.5, 0.0]) - 1f64.exp()).abs() < 1e-15);
        assert!((f.ln().eval(&[0.7, 3.0]) - 0.7).abs() < 1e-15);
        let s = Observable::Sin { coord: 0, offset: 2.0 };
        assert!((s.powf(2.0).eval(&[1.0]) - (2.0 + 1f64.sin()).powi(2)).abs() < 1e-15);
        assert_eq!(s.powf(2.0).cylinder_dim(), Some(1));
    }

    #[test]
    fn cylinder_dims() {
        assert_eq!(Observable::ExpLinear(vec![1.0, 0.0, 0.0]).cylinder_dim(), Some(1));
        assert_eq!(Observable::Bump.cylinder_dim(), None);
        assert_eq!(Observable::custom("g", |z| z[0]).cylinder_dim(), None);
    }

    #[test]
    fn spec_parsing() {
        let s: ObservableSpec = serde_json::from_str(r#"{"name": "exp_a", "a": [1, 0]}"#).unwrap();
        assert_eq!(s, ObservableSpec::ExpA { a: vec![1.0, 0.0] });
        let s: ObservableSpec = serde_json::from_str(r#"{"name": "const"}"#).unwrap();
        assert_eq!(s, ObservableSpec::Const { value: 1.0 });
        assert!(serde_json::from_str::<ObservableSpec>(r#"{"name": "sin1", "phase": 1}"#).is_err());
    }
}
