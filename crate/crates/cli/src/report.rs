//! Report layout and its JSON and CSV renderings.
//!
//! The JSON report has two top-level sections: `payload`, which is
//! byte-stable for a fixed scenario and seed, and `timing`, which is not.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sfp_core::regularity::{RegionSample, RegularityEstimate};
use sfp_core::SfpFamily;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::runner::AnalysisResult;
use crate::scenario::Scenario;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRecord {
    pub index: usize,
    pub kind: String,
    pub seed: u64,
    pub status: AnalysisStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<AnalysisResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportPayload {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the compact JSON serialization of `scenario`.
    pub scenario_sha256: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub param_dim: usize,
    pub decision_dim: usize,
    pub analyses: Vec<AnalysisRecord>,
}

impl ReportPayload {
    pub fn new(scenario: &Scenario, family: &SfpFamily, analyses: Vec<AnalysisRecord>) -> Self {
        let canonical = serde_json::to_string(scenario).expect("scenarios serialize");
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            scenario_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
            scenario: scenario.clone(),
            seed: scenario.seed,
            param_dim: family.param_dim(),
            decision_dim: family.decision_dim(),
            analyses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingEntry {
    pub index: usize,
    pub kind: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub analyses: Vec<TimingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub payload: ReportPayload,
    pub timing: Timing,
}

impl Report {
    pub fn all_ok(&self) -> bool {
        self.payload.analyses.iter().all(|a| a.status == AnalysisStatus::Ok)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// The deterministic section alone.
    pub fn payload_json(&self) -> String {
        serde_json::to_string_pretty(&self.payload).expect("reports serialize")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &(self.to_json() + "\n"))
    }

    /// One table per analysis kind, keyed by file name.
    pub fn csv_tables(&self) -> Result<BTreeMap<String, String>, CliError> {
        let m = self.payload.param_dim;
        let n = self.payload.decision_dim;
        let mut tables: BTreeMap<String, Table> = BTreeMap::new();
        let mut errors = Table::new(vec!["analysis".into(), "index".into(), "error".into()]);
        for rec in &self.payload.analyses {
            match (&rec.result, &rec.error) {
                (Some(result), _) => {
                    let rows = rows_for(rec, result, m, n);
                    let table = tables
                        .entry(rec.kind.clone())
                        .or_insert_with(|| Table::new(header_for(&rec.kind, m, n)));
                    table.rows.extend(rows);
                }
                (None, error) => errors.rows.push(vec![
                    rec.kind.clone(),
                    rec.index.to_string(),
                    error.clone().unwrap_or_default(),
                ]),
            }
        }
        if !errors.rows.is_empty() {
            tables.insert("errors".into(), errors);
        }
        tables
            .into_iter()
            .map(|(k, t)| Ok((format!("{k}.csv"), t.render()?)))
            .collect()
    }

    pub fn write_csv(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for (name, body) in self.csv_tables()? {
            let path = dir.join(name);
            write_file(&path, &body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    fn render(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            debug_assert_eq!(row.len(), self.header.len());
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip decimal; infinities as `inf` and `-inf`.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn vec_cols(prefix: &str, len: usize) -> Vec<String> {
    (0..len).map(|i| format!("{prefix}_{i}")).collect()
}

fn vec_vals(v: Option<&[f64]>, len: usize) -> Vec<String> {
    match v {
        Some(v) => v.iter().map(|x| num(*x)).collect(),
        None => vec![String::new(); len],
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Frozen column order of each table. `m` and `n` are the parameter and
/// decision dimensions; vector columns are suffixed `_0`, `_1`, ….
pub fn header_for(kind: &str, m: usize, n: usize) -> Vec<String> {
    let mut h = cols(&["analysis", "index"]);
    match kind {
        "solve" => {
            h.extend(vec_cols("p", m));
            h.extend(vec_cols("x0", n));
            h.extend(cols(&["status", "residual", "iters"]));
            h.extend(vec_cols("point", n));
        }
        "tau" | "tau_global" => {
            h.extend(cols(&[
                "delta",
                "tau_aq",
                "tau_c",
                "tau",
                "samples",
                "seed",
                "aq_region_count",
                "c_region_count",
                "global",
            ]));
            h.extend(vec_cols("witness_p", m));
            h.extend(vec_cols("witness_x", n));
            h.push("witness_value".into());
        }
        "error_bound" => {
            h.extend(cols(&[
                "mode",
                "constant",
                "p_radius",
                "x_radius",
                "grid_size",
                "max_violation",
                "passed",
            ]));
            h.extend(vec_cols("witness_p", m));
            h.extend(vec_cols("witness_x", n));
            h.extend(cols(&["witness_dist", "witness_merit"]));
        }
        "liplsc" | "calm" | "lipusc" | "aubin" => {
            h.extend(cols(&[
                "mode",
                "value",
                "radius",
                "radius_value",
                "samples_per_radius",
                "feasible_count",
                "empty_params",
                "witness_ratio",
            ]));
            h.extend(vec_cols("witness_p", m));
            h.extend(vec_cols("witness_p2", m));
            h.extend(vec_cols("witness_x", n));
        }
        "isolated_calmness" => {
            h.extend(cols(&[
                "isolated",
                "eta",
                "found",
                "max_distance",
                "v1",
                "v2",
                "min_singular_value",
            ]));
        }
        "convexity" => {
            h.extend(cols(&[
                "convex",
                "max_midpoint_violation",
                "pairs_used",
                "linearity_residual",
            ]));
        }
        "compare_bounds" => {
            h.extend(cols(&[
                "kind",
                "c",
                "a",
                "q",
                "tau",
                "tau_global",
                "bound",
                "estimated",
                "flagged",
            ]));
        }
        _ => unreachable!("unknown analysis kind {kind}"),
    }
    h
}

fn tau_row(head: Vec<String>, t: &RegularityEstimate, m: usize, n: usize) -> Vec<String> {
    let mut r = head;
    r.extend([
        num(t.delta),
        num(t.tau_aq),
        num(t.tau_c),
        num(t.tau),
        t.sample_count.to_string(),
        t.seed.to_string(),
        t.aq_region_count.to_string(),
        t.c_region_count.to_string(),
        t.global.to_string(),
    ]);
    let w: Option<&RegionSample> = t.min_witness.as_ref();
    r.extend(vec_vals(w.map(|w| w.p.as_slice()), m));
    r.extend(vec_vals(w.map(|w| w.x.as_slice()), n));
    r.push(w.map(|w| num(w.slope_value)).unwrap_or_default());
    r
}

fn rows_for(rec: &AnalysisRecord, result: &AnalysisResult, m: usize, n: usize) -> Vec<Vec<String>> {
    let head = || vec![rec.kind.clone(), rec.index.to_string()];
    match result {
        AnalysisResult::Solve(s) => {
            let mut r = head();
            r.extend(vec_vals(Some(&s.p), m));
            r.extend(vec_vals(Some(&s.x0), n));
            let status = serde_json::to_value(s.outcome.status).expect("status serializes");
            r.extend([
                status.as_str().unwrap_or_default().to_string(),
                num(s.outcome.residual),
                s.outcome.iters.to_string(),
            ]);
            r.extend(vec_vals(Some(&s.outcome.point), n));
            vec![r]
        }
        AnalysisResult::Tau(t) => vec![tau_row(head(), t, m, n)],
        AnalysisResult::ErrorBound(e) => {
            let mut r = head();
            r.extend([
                e.mode.clone(),
                num(e.constant_used),
                num(e.p_radius),
                num(e.x_radius),
                e.grid_size.to_string(),
                num(e.max_violation),
                e.passed().to_string(),
            ]);
            let w = e.violation_witness.as_ref();
            r.extend(vec_vals(w.map(|w| w.p.as_slice()), m));
            r.extend(vec_vals(w.map(|w| w.x.as_slice()), n));
            r.push(w.map(|w| num(w.dist)).unwrap_or_default());
            r.push(w.map(|w| num(w.merit)).unwrap_or_default());
            vec![r]
        }
        AnalysisResult::Modulus(est) => est
            .radii
            .iter()
            .enumerate()
            .map(|(j, radius)| {
                let mut r = head();
                r.extend([
                    est.mode.clone(),
                    num(est.value),
                    num(*radius),
                    num(est.per_radius_values[j]),
                    est.samples_per_radius.to_string(),
                    est.feasible_counts.get(j).map(|c| c.to_string()).unwrap_or_default(),
                    est.empty_params.get(j).map(|c| c.to_string()).unwrap_or_default(),
                ]);
                let w = est.witness.as_ref();
                r.push(w.map(|w| num(w.ratio)).unwrap_or_default());
                r.extend(vec_vals(w.map(|w| w.p.as_slice()), m));
                r.extend(vec_vals(w.and_then(|w| w.p2.as_deref()), m));
                r.extend(vec_vals(w.map(|w| w.x.as_slice()), n));
                r
            })
            .collect(),
        AnalysisResult::IsolatedCalmness(c) => {
            let mut r = head();
            r.extend([
                c.isolated.to_string(),
                num(c.eta),
                c.found.to_string(),
                num(c.max_distance),
                c.v1.to_string(),
                c.v2.to_string(),
                num(c.min_singular_value),
            ]);
            vec![r]
        }
        AnalysisResult::Convexity(c) => {
            let mut r = head();
            r.extend([
                c.convex.to_string(),
                num(c.max_midpoint_violation),
                c.pairs_used.to_string(),
                num(c.linearity_residual),
            ]);
            vec![r]
        }
        AnalysisResult::CompareBounds(c) => c
            .local
            .iter()
            .chain(&c.global)
            .flat_map(|report| {
                report.checks.iter().map(move |chk| {
                    let mut r = head();
                    r.extend([
                        chk.kind.as_str().to_string(),
                        num(chk.data.c),
                        num(chk.data.a),
                        num(chk.data.q),
                        num(report.tau),
                        report.tau_global.to_string(),
                        num(chk.bound),
                        num(chk.estimated),
                        chk.flagged.to_string(),
                    ]);
                    r
                })
            })
            .collect(),
    }
}
