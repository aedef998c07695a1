//! Polynomial parameter expressions in `p_i` and `|p_i|`.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::serde_inf::ExtReal;

pub const MAX_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    Param(usize),
    AbsParam(usize),
}

impl Factor {
    pub fn index(self) -> usize {
        match self {
            Factor::Param(i) | Factor::AbsParam(i) => i,
        }
    }

    fn eval(self, p: &[f64]) -> f64 {
        match self {
            Factor::Param(i) => p[i],
            Factor::AbsParam(i) => p[i].abs(),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Param(i) => write!(f, "p{i}"),
            Factor::AbsParam(i) => write!(f, "abs(p{i})"),
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse_index = |t: &str| -> Result<usize, String> {
            t.strip_prefix('p')
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| format!("invalid parameter factor {s:?}"))
        };
        if let Some(inner) = s.strip_prefix("abs(").and_then(|r| r.strip_suffix(')')) {
            Ok(Factor::AbsParam(parse_index(inner.trim())?))
        } else {
            Ok(Factor::Param(parse_index(s)?))
        }
    }
}

impl Serialize for Factor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Factor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    #[serde(with = "crate::serde_inf")]
    pub coef: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

/// `Σ coef · Π factor`, each monomial of degree at most [`MAX_DEGREE`].
///
/// An infinite coefficient is only allowed on a constant term; it encodes
/// the `±∞` sentinel of an unbounded box side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamExpr {
    terms: Vec<Term>,
}

impl ParamExpr {
    pub fn new(terms: Vec<Term>) -> Result<Self, String> {
        for t in &terms {
            if t.coef.is_nan() {
                return Err("expression coefficient is NaN".into());
            }
            if t.factors.len() > MAX_DEGREE {
                return Err(format!(
                    "monomial of degree {} exceeds the cap {MAX_DEGREE}",
                    t.factors.len()
                ));
            }
            if t.coef.is_infinite() && !t.factors.is_empty() {
                return Err("infinite coefficients are only allowed on constant terms".into());
            }
        }
        if terms.iter().filter(|t| t.coef.is_infinite()).count() > 1 {
            return Err("at most one infinite term per expression".into());
        }
        Ok(Self { terms })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Term {
                coef: c,
                factors: Vec::new(),
            }],
        }
    }

    /// `coef · Π factors`. Panics on an invalid monomial; meant for literals.
    pub fn monomial(coef: f64, factors: &[Factor]) -> Self {
        Self::new(vec![Term {
            coef,
            factors: factors.to_vec(),
        }])
        .expect("valid monomial")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn plus(mut self, other: ParamExpr) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// Largest parameter index referenced, if any.
    pub fn max_param_index(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.index()))
            .max()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.factors.is_empty())
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                if t.factors.is_empty() {
                    t.coef
                } else {
                    t.coef * t.factors.iter().map(|f| f.eval(p)).product::<f64>()
                }
            })
            .sum()
    }
}

impl Serialize for ParamExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.terms.serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Number(ExtReal),
    Terms(Vec<Term>),
}

impl<'de> Deserialize<'de> for ParamExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ExprRepr::deserialize(d)? {
            ExprRepr::Number(v) => Ok(ParamExpr::constant(v.0)),
            ExprRepr::Terms(t) => ParamExpr::new(t).map_err(de::Error::custom),
        }
    }
}

impl From<f64> for ParamExpr {
    fn from(c: f64) -> Self {
        ParamExpr::constant(c)
    }
}
