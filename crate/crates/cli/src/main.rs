use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sfp_cli::{run_with_threads, CliError, Scenario};
use sfp_core::corpus::{all_examples, corpus_example, CorpusId};

#[derive(Parser)]
#[command(name = "sfp", version, about = "Parameterized split feasibility analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses of a scenario file.
    Run {
        scenario: PathBuf,
        /// Report file (json) or directory (csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `solver.max_iters`.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Overrides `solver.tol_feas`.
        #[arg(long)]
        tol_feas: Option<f64>,
        /// Overrides `solver.multistart_count`.
        #[arg(long)]
        multistart_count: Option<usize>,
    },
    /// Built-in example families.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// List the built-in examples.
    List,
    /// Print an example as an inline family with its reference pair.
    Show { id: String },
}

/// Exit status of an analysis that ran but failed.
const ANALYSIS_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Corpus {
            command: CorpusCommand::List,
        } => {
            let text: String = all_examples()
                .iter()
                .map(|ex| format!("{}\t{}\n", ex.id, ex.notes.first().copied().unwrap_or("")))
                .collect();
            print_stdout(&text);
            Ok(0)
        }
        Command::Corpus {
            command: CorpusCommand::Show { id },
        } => {
            let id: CorpusId = id
                .parse()
                .map_err(|e: sfp_core::corpus::CorpusError| CliError::Invalid(e.to_string()))?;
            let ex = corpus_example(id);
            let doc = serde_json::json!({
                "id": id,
                "notes": ex.notes,
                "family": { "inline": ex.family.spec() },
                "reference": ex.family.reference(),
            });
            print_stdout(&(serde_json::to_string_pretty(&doc).expect("json") + "\n"));
            Ok(0)
        }
        Command::Run {
            scenario,
            out,
            format,
            seed,
            threads,
            max_iters,
            tol_feas,
            multistart_count,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(v) = max_iters {
                sc.solver.max_iters = v;
            }
            if let Some(v) = tol_feas {
                sc.solver.tol_feas = v;
            }
            if let Some(v) = multistart_count {
                sc.solver.multistart_count = v;
            }
            if threads == Some(0) {
                return Err(CliError::Invalid("--threads must be at least 1".into()));
            }
            let report = run_with_threads(&sc, threads)?;
            let (json_path, csv_dir) = match format {
                Some(Format::Json) => (out.or(sc.output.json.clone()), None),
                Some(Format::Csv) => {
                    let dir = out
                        .or(sc.output.csv_dir.clone())
                        .ok_or_else(|| CliError::Invalid("csv output needs --out <dir>".into()))?;
                    (None, Some(dir))
                }
                None => (out.or(sc.output.json.clone()), sc.output.csv_dir.clone()),
            };
            let print_json = json_path.is_none() && csv_dir.is_none();
            if let Some(path) = json_path {
                report.write_json(&path)?;
            }
            if let Some(dir) = csv_dir {
                report.write_csv(&dir)?;
            }
            if print_json {
                print_stdout(&(report.to_json() + "\n"));
            }
            for rec in report.payload.analyses.iter().filter(|a| a.error.is_some()) {
                eprintln!(
                    "analysis {} ({}) failed: {}",
                    rec.index,
                    rec.kind,
                    rec.error.as_deref().unwrap_or("")
                );
            }
            Ok(if report.all_ok() { 0 } else { ANALYSIS_FAILED })
        }
    }
}

/// Writes to stdout, treating a closed pipe as a normal end of output.
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing to stdout: {e}");
        }
    }
}
