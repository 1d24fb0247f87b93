//! JSON model configuration.
//!
//! ```json
//! {"kind": "mm1", "lambda": 1, "nu": 4, "weight": {"kind": "geometric", "kappa": 2}}
//! {"kind": "table", "lambda": [1, 1, 0.5], "nu": [0, 2, 3], "tail": "hold_last"}
//! ```

use serde::{Deserialize, Serialize};

use super::{make_builtin, BuiltinKind, RateSpec, TailRule, Weight, WeightTail};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MmInfty,
    Mm1,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Scalar(f64),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Const {
        #[serde(default = "one")]
        value: f64,
    },
    Geometric {
        kappa: f64,
    },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        tail: WeightTail,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub lambda: RateValue,
    pub nu: RateValue,
    #[serde(default)]
    pub tail: TailRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
}

impl WeightConfig {
    pub fn build(&self) -> Result<Weight> {
        match self {
            WeightConfig::Const { value } => {
                if *value > 0.0 && value.is_finite() {
                    Ok(Weight::Constant(*value))
                } else {
                    Err(Error::Config(format!(
                        "constant weight must be positive, got {value}"
                    )))
                }
            }
            WeightConfig::Geometric { kappa } => {
                if *kappa > 0.0 && kappa.is_finite() {
                    Ok(Weight::Geometric(*kappa))
                } else {
                    Err(Error::Config(format!(
                        "geometric kappa must be positive, got {kappa}"
                    )))
                }
            }
            WeightConfig::Table { values, tail } => Weight::table(values.clone(), *tail),
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_spec(&self) -> Result<RateSpec> {
        let scalar = |v: &RateValue, name: &str| match v {
            RateValue::Scalar(x) => Ok(*x),
            RateValue::Table(_) => Err(Error::Config(format!(
                "{name} must be a number for a builtin model"
            ))),
        };
        match self.kind {
            ModelKind::MmInfty => make_builtin(
                BuiltinKind::MmInfty,
                scalar(&self.lambda, "lambda")?,
                scalar(&self.nu, "nu")?,
            ),
            ModelKind::Mm1 => make_builtin(
                BuiltinKind::Mm1,
                scalar(&self.lambda, "lambda")?,
                scalar(&self.nu, "nu")?,
            ),
            ModelKind::Table => {
                let (RateValue::Table(l), RateValue::Table(v)) = (&self.lambda, &self.nu) else {
                    return Err(Error::Config(
                        "table models need lambda and nu arrays".into(),
                    ));
                };
                RateSpec::tabulated(l.clone(), v.clone(), self.tail)
            }
        }
    }

    /// The configured weight, or `u = 1` when absent.
    pub fn build_weight(&self) -> Result<Weight> {
        self.weight
            .as_ref()
            .map_or(Ok(Weight::unit()), WeightConfig::build)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builtin_with_weight() {
        let c = ModelConfig::from_json(
            r#"{"kind":"mm1","lambda":1,"nu":4,"weight":{"kind":"geometric","kappa":2}}"#,
        )
        .unwrap();
        let s = c.build_spec().unwrap();
        assert_eq!(s.nu(3), 4.0);
        assert_eq!(c.build_weight().unwrap().u(3), 8.0);
    }

    #[test]
    fn parses_table() {
        let c = ModelConfig::from_json(
            r#"{"kind":"table","lambda":[1,2],"nu":[0,1,3],"tail":"linear_extrapolate"}"#,
        )
        .unwrap();
        let s = c.build_spec().unwrap();
        assert_eq!(s.lambda(3), 4.0);
        assert_eq!(c.build_weight().unwrap().u(5), 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::from_json(r#"{"kind":"mm2","lambda":1,"nu":1}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"kind":"mm1","lambda":1,"nu":1,"extra":0}"#).is_err());
        let c = ModelConfig::from_json(r#"{"kind":"table","lambda":1,"nu":[0,1]}"#).unwrap();
        assert_eq!(c.build_spec().unwrap_err().code(), "config-error");
    }

    #[test]
    fn round_trips() {
        let c = ModelConfig {
            kind: ModelKind::Table,
            lambda: RateValue::Table(vec![1.0, 0.5]),
            nu: RateValue::Table(vec![0.0, 2.0]),
            tail: TailRule::HoldLast,
            weight: Some(WeightConfig::Table {
                values: vec![1.0, 2.0],
                tail: WeightTail::HoldRatio,
            }),
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ModelConfig::from_json(&text).unwrap(), c);
    }
}
