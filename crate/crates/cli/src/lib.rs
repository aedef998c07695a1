//! Scenario-driven batch runner for parameterized split feasibility
//! analyses: load a family, run the requested analyses, emit JSON and CSV
//! reports.

pub mod error;
pub mod report;
pub mod runner;
pub mod scenario;

pub use error::CliError;
pub use report::{AnalysisStatus, Report};
pub use runner::{run_scenario, run_with_threads};
pub use scenario::{Analysis, Scenario};
