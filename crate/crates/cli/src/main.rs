use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use collusion_core::batch::{run_metrics, SweepGrid};
use collusion_core::config::ScenarioConfig;
use collusion_core::metrics::{summarize, CellSummary, MetricRow, CSV_SCHEMA_VERSION};
use collusion_core::sim::{run, Scheme};
use serde::Serialize;

const SUMMARY_SCHEMA: &str = "collusion-summary";

#[derive(Parser, Debug)]
#[command(name = "collusion-sim", version, about = "Collusion detection and mitigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace as JSON lines.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "serene")]
        scheme: String,
        /// Trace file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of scenarios and write runs.csv and summary.json.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated scheme names (default: all five).
        #[arg(long)]
        scheme: Option<String>,
        /// SERENE ablation: full, partitioning-only or group-identification-only.
        #[arg(long)]
        variant: Option<String>,
        /// CVT lengths as fractions of N, e.g. 0.1,0.25,0.7.
        #[arg(long)]
        l_sweep: Option<String>,
        /// Values of e, e.g. 5,10,20.
        #[arg(long)]
        e_sweep: Option<String>,
        #[arg(long, default_value_t = 100)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        base_seed: u64,
        /// Skip the |C| = 0 control cells.
        #[arg(long)]
        no_controls: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate existing runs.csv files into a summary.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Summary file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scenario overrides. In `sweep`, `--colluding` and `--pc` take
/// comma-separated lists that span the grid.
#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// File of `key = value` lines applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    colluding: Option<String>,
    #[arg(long)]
    naive: Option<String>,
    #[arg(long)]
    pc: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    e: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Any config key, repeatable: --set sim_end=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
}

impl From<collusion_core::error::ConfigError> for Failure {
    fn from(e: collusion_core::error::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| Failure::Usage(format!("--{flag}: cannot parse `{s}`"))))
        .collect()
}

impl ScenarioArgs {
    /// Builds the base config. Grid flags listed in `skip` are left to the
    /// caller.
    fn config(&self, skip: &[&str]) -> Result<ScenarioConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                ScenarioConfig::from_kv_str(&text)?
            }
            None => ScenarioConfig::default(),
        };
        let flags = [
            ("n", &self.n),
            ("k", &self.k),
            ("colluding", &self.colluding),
            ("naive", &self.naive),
            ("pc", &self.pc),
            ("eps", &self.eps),
            ("l", &self.l),
            ("dt", &self.dt),
            ("e", &self.e),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                if !skip.contains(&key) {
                    cfg.set(key, v)?;
                }
            }
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, Failure> {
    s.parse().map_err(Failure::Usage)
}

fn simulate(scenario: &ScenarioArgs, scheme: &str, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = scenario.config(&[])?;
    let scheme = parse_scheme(scheme)?;
    let trace = run(&cfg, scheme, cfg.rng_seed)?;
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
            let mut w = BufWriter::new(file);
            trace.write_jsonl(&mut w).map_err(|e| io_err(path, e))?;
            w.flush().map_err(|e| io_err(path, e))?;
        }
        None => {
            let stdout = io::stdout();
            trace
                .write_jsonl(stdout.lock())
                .map_err(|e| Failure::Io(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'a str,
    version: u32,
    runs: usize,
    cells: Vec<CellSummary>,
}

fn write_summary(rows: &[MetricRow], out: Option<&Path>) -> Result<(), Failure> {
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        version: CSV_SCHEMA_VERSION,
        runs: rows.len(),
        cells: summarize(rows),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| io_err(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_runs(rows: &[MetricRow], path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    scenario: &ScenarioArgs,
    scheme: Option<&str>,
    variant: Option<&str>,
    l_sweep: Option<&str>,
    e_sweep: Option<&str>,
    reps: u64,
    base_seed: u64,
    controls: bool,
    out: &Path,
) -> Result<(), Failure> {
    let base = scenario.config(&["colluding", "pc"])?;
    let defaults = SweepGrid::default();
    let schemes = match (variant, scheme) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--variant and --scheme are exclusive".into())),
        (Some("full"), None) => vec![Scheme::Serene],
        (Some(v), None) => vec![parse_scheme(v)?],
        (None, Some(s)) => s.split(',').map(parse_scheme).collect::<Result<_, _>>()?,
        (None, None) => defaults.schemes.clone(),
    };
    let grid = SweepGrid {
        colluding: match &scenario.colluding {
            Some(s) => list("colluding", s)?,
            None => defaults.colluding,
        },
        p_collude: match &scenario.pc {
            Some(s) => list("pc", s)?,
            None => defaults.p_collude,
        },
        schemes,
        cvt_fractions: l_sweep.map(|s| list("l-sweep", s)).transpose()?.unwrap_or_default(),
        es: e_sweep.map(|s| list("e-sweep", s)).transpose()?.unwrap_or_default(),
        reps,
        base_seed,
        controls,
    };
    let specs = grid.expand(&base);
    for s in &specs {
        s.cfg.validate()?;
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let started = Instant::now();
    let rows = run_metrics(&specs)?;
    eprintln!("{} runs in {:.1}s", rows.len(), started.elapsed().as_secs_f64());
    write_runs(&rows, &out.join("runs.csv"))?;
    write_summary(&rows, Some(&out.join("summary.json")))
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for path in inputs {
        let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
        for row in r.deserialize::<MetricRow>() {
            let row = row.map_err(|e| io_err(path, e))?;
            if row.schema_version != CSV_SCHEMA_VERSION {
                return Err(io_err(path, format!("unsupported schema version {}", row.schema_version)));
            }
            rows.push(row);
        }
    }
    write_summary(&rows, out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate { scenario, scheme, out } => simulate(scenario, scheme, out.as_deref()),
        Command::Sweep {
            scenario,
            scheme,
            variant,
            l_sweep,
            e_sweep,
            reps,
            base_seed,
            no_controls,
            out,
        } => sweep(
            scenario,
            scheme.as_deref(),
            variant.as_deref(),
            l_sweep.as_deref(),
            e_sweep.as_deref(),
            *reps,
            *base_seed,
            !no_controls,
            out,
        ),
        Command::Report { inputs, out } => report(inputs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
