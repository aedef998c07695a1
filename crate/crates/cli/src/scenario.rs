//! Scenario files: one JSON document describing a family, the analyses to
//! run on it and where to put the results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfp_core::corpus::CorpusId;
use sfp_core::family::{FamilySpec, ReferencePair};
use sfp_core::moduli::{ConvexityPlan, DataModuli, ModulusKind, ModulusPlan};
use sfp_core::regularity::SamplingPlan;
use sfp_core::solver::SolverConfig;

use crate::error::CliError;

/// Where the family comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySource {
    Corpus(CorpusId),
    Inline(FamilySpec),
}

/// Distances from closed forms (corpus only) or from the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Oracle,
    Solver,
}

/// Default sample count of the τ analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub count: usize,
    /// Defaults to a value derived from the scenario seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            count: 10_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// JSON report path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    /// Directory for the per-kind CSV tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_dir: Option<PathBuf>,
}

fn default_delta() -> f64 {
    0.5
}

fn default_box() -> f64 {
    10.0
}

fn default_one() -> f64 {
    1.0
}

fn default_density() -> usize {
    41
}

fn default_etas() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}

fn default_iso_samples() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub kind: ModulusKind,
    pub c: f64,
    pub a: f64,
    pub q: f64,
}

impl BoundSpec {
    pub fn data(&self) -> DataModuli {
        DataModuli {
            c: self.c,
            a: self.a,
            q: self.q,
        }
    }
}

/// Overrides of the modulus plan; absent fields keep the defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solutions_per_param: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_box_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<OracleMode>,
}

impl ModulusOptions {
    pub fn plan(&self, seed: u64) -> ModulusPlan {
        let d = ModulusPlan::default();
        ModulusPlan {
            radii: self.radii.clone().unwrap_or(d.radii),
            samples_per_radius: self.samples_per_radius.unwrap_or(d.samples_per_radius),
            solutions_per_param: self.solutions_per_param.unwrap_or(d.solutions_per_param),
            seed,
            x_radius: self.x_radius.unwrap_or(d.x_radius),
            x_box_radius: self.x_box_radius.unwrap_or(d.x_box_radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    /// Defaults to `p̄`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Defaults to `x̄`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauParams {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overrides `sampling.count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauGlobalParams {
    /// Defaults to `p̄`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fixed: Option<Vec<f64>>,
    #[serde(default = "default_box")]
    pub x_box_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBoundParams {
    #[serde(default = "default_one")]
    pub constant: f64,
    #[serde(default = "default_one")]
    pub p_radius: f64,
    #[serde(default = "default_one")]
    pub x_radius: f64,
    #[serde(default = "default_density")]
    pub grid_density: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<OracleMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatedCalmnessParams {
    #[serde(default = "default_etas")]
    pub eta_schedule: Vec<f64>,
    #[serde(default = "default_iso_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<OracleMode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<OracleMode>,
}

impl ConvexityParams {
    pub fn plan(&self, seed: u64) -> ConvexityPlan {
        let d = ConvexityPlan::default();
        ConvexityPlan {
            pair_samples: self.pair_samples.unwrap_or(d.pair_samples),
            seed,
            p_radius: self.p_radius.unwrap_or(d.p_radius),
            x_radius: self.x_radius.unwrap_or(d.x_radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBoundsParams {
    pub bounds: Vec<BoundSpec>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Plan of the modulus estimates being compared.
    #[serde(default)]
    pub moduli: ModulusOptions,
}

/// One requested analysis. In a scenario file either an object with a
/// `"kind"` key or the bare kind name, which takes every default.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analysis {
    Solve(SolveParams),
    Tau(TauParams),
    TauGlobal(TauGlobalParams),
    ErrorBound(ErrorBoundParams),
    Liplsc(ModulusOptions),
    Calm(ModulusOptions),
    Lipusc(ModulusOptions),
    Aubin(ModulusOptions),
    IsolatedCalmness(IsolatedCalmnessParams),
    Convexity(ConvexityParams),
    CompareBounds(CompareBoundsParams),
}

pub const ANALYSIS_KINDS: [&str; 11] = [
    "solve",
    "tau",
    "tau_global",
    "error_bound",
    "liplsc",
    "calm",
    "lipusc",
    "aubin",
    "isolated_calmness",
    "convexity",
    "compare_bounds",
];

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::Solve(_) => "solve",
            Analysis::Tau(_) => "tau",
            Analysis::TauGlobal(_) => "tau_global",
            Analysis::ErrorBound(_) => "error_bound",
            Analysis::Liplsc(_) => "liplsc",
            Analysis::Calm(_) => "calm",
            Analysis::Lipusc(_) => "lipusc",
            Analysis::Aubin(_) => "aubin",
            Analysis::IsolatedCalmness(_) => "isolated_calmness",
            Analysis::Convexity(_) => "convexity",
            Analysis::CompareBounds(_) => "compare_bounds",
        }
    }

    /// Builds the analysis `kind` from its parameter object. Errors name
    /// the offending field.
    fn from_parts(kind: &str, params: serde_json::Value) -> Result<Self, String> {
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, String> {
            serde_path_to_error::deserialize(v).map_err(|e| {
                let path = e.path().to_string();
                let inner = e.into_inner();
                if path == "." {
                    inner.to_string()
                } else {
                    format!("field `{path}`: {inner}")
                }
            })
        }
        Ok(match kind {
            "solve" => Analysis::Solve(parse(params)?),
            "tau" => Analysis::Tau(parse(params)?),
            "tau_global" => Analysis::TauGlobal(parse(params)?),
            "error_bound" => Analysis::ErrorBound(parse(params)?),
            "liplsc" => Analysis::Liplsc(parse(params)?),
            "calm" => Analysis::Calm(parse(params)?),
            "lipusc" => Analysis::Lipusc(parse(params)?),
            "aubin" => Analysis::Aubin(parse(params)?),
            "isolated_calmness" => Analysis::IsolatedCalmness(parse(params)?),
            "convexity" => Analysis::Convexity(parse(params)?),
            "compare_bounds" => Analysis::CompareBounds(parse(params)?),
            other => {
                return Err(format!(
                    "unknown analysis kind {other:?}, expected one of {}",
                    ANALYSIS_KINDS.join(", ")
                ))
            }
        })
    }
}

impl<'de> Deserialize<'de> for Analysis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(kind) => {
                Analysis::from_parts(&kind, serde_json::json!({})).map_err(D::Error::custom)
            }
            serde_json::Value::Object(mut map) => {
                let kind = match map.remove("kind") {
                    Some(serde_json::Value::String(k)) => k,
                    Some(_) => return Err(D::Error::custom("`kind` must be a string")),
                    None => return Err(D::Error::missing_field("kind")),
                };
                Analysis::from_parts(&kind, serde_json::Value::Object(map)).map_err(D::Error::custom)
            }
            _ => Err(D::Error::custom(
                "an analysis is a kind name or an object with a `kind` key",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub family: FamilySource,
    /// Required for inline families; corpus families default to theirs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferencePair>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn sampling_plan(&self, count: Option<usize>, derived_seed: u64) -> SamplingPlan {
        SamplingPlan {
            count: count.unwrap_or(self.sampling.count),
            seed: self.sampling.seed.unwrap_or(derived_seed),
        }
    }
}
