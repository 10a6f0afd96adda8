use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cutbench_core::config::{CliConfig, KEYS};
use cutbench_core::harness::{self, Family, Strategy};
use cutbench_core::CutError;

const OUT_ENV: &str = "CUTBENCH_OUT";
const DEFAULT_OUT: &str = "cutbench-out";

#[derive(Parser)]
#[command(name = "cutbench", version, about = "Circuit cutting benchmark harness")]
#[command(after_help = "Any config key can be overridden on the command line, e.g. `--noise.p2 0`.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one (family, width, seed, strategy) cell and print its record as JSON.
    Run {
        #[arg(long)]
        family: String,
        #[arg(long)]
        qubits: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include the top cut candidates in the output.
        #[arg(long)]
        explain: bool,
        /// Include the nominal circuit text in the output.
        #[arg(long)]
        dump_circuit: bool,
        /// Include the generated subexperiments (circuit, weight, terms).
        #[arg(long)]
        dump_subexperiments: bool,
    },
    /// Run a full sweep and write results.csv, summary.json and runs/.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory [default: $CUTBENCH_OUT, then ./cutbench-out]
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the summary tables from a results CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the summary JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CutError> for Failure {
    fn from(e: CutError) -> Self {
        let code = match e {
            CutError::Config(_) | CutError::Csv(..) | CutError::Parse { .. } | CutError::InvalidArgument(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

/// Pulls `--<config key> value` and `--<config key>=value` pairs out of the
/// argument list, leaving the rest for clap.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), Failure> {
    let own = ["workers", "explain"];
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !KEYS.contains(&key.as_str()) || own.contains(&key.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| usage(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<CliConfig, Failure> {
    let mut cfg = CliConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v).map_err(|e| usage(format!("--{k}: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { family, qubits, seed, strategy, config, explain, dump_circuit, dump_subexperiments } => {
            let family: Family = family.parse()?;
            let strategy: Strategy = strategy.parse()?;
            let mut cfg = load_config(config.as_deref(), overrides)?;
            cfg.explain |= explain;
            cfg.sweep.widths = vec![qubits];
            cfg.sweep.seeds = vec![seed];
            cfg.validate()?;
            let mut record = harness::run_one(family, qubits, seed, strategy, &cfg.sweep);
            if !cfg.explain {
                record.candidates.clear();
            }
            let mut json = serde_json::to_value(&record).map_err(CutError::from)?;
            if dump_circuit {
                json["circuit"] = cfg.sweep.circuit(family, qubits, seed)?.to_text().into();
            }
            if dump_subexperiments {
                let set = harness::subexperiment_set(family, qubits, seed, strategy, &cfg.sweep)?;
                json["subexperiments"] = match set {
                    Some(set) => serde_json::to_value(&set.subexperiments).map_err(CutError::from)?,
                    None => serde_json::Value::Array(vec![]),
                };
            }
            println!("{}", serde_json::to_string_pretty(&json).map_err(CutError::from)?);
        }
        Cmd::Sweep { config, out, workers } => {
            let mut cfg = load_config(config.as_deref(), overrides)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let dir = out
                .or(cfg.output_dir.clone())
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let records = harness::run_sweep(&cfg.sweep, cfg.workers)?;
            let summary = harness::write_outputs(&dir, &records)?;
            for (family, by_strategy) in &summary.family_mae {
                for (strategy, s) in by_strategy {
                    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |m| format!("{m:.5}"));
                    println!(
                        "{family:<10} {strategy:<7} mean MAE {} median {} skipped {}/{}",
                        fmt(s.mean_mae),
                        fmt(s.median_mae),
                        s.skipped,
                        s.runs
                    );
                }
            }
            println!("{} records written to {}", records.len(), dir.display());
        }
        Cmd::Report { input, out } => {
            if !overrides.is_empty() {
                return Err(usage("report takes no config overrides"));
            }
            let file = std::fs::File::open(&input).map_err(|e| usage(format!("cannot read {}: {e}", input.display())))?;
            let records = harness::read_csv(file)?;
            let text = serde_json::to_string_pretty(&harness::summarize(&records)).map_err(CutError::from)?;
            if let Some(p) = out {
                std::fs::write(&p, &text).map_err(CutError::from)?;
            }
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = split_overrides(std::env::args().collect()).and_then(|(args, overrides)| {
        let cli = Cli::try_parse_from(args).map_err(|e| {
            let _ = e.print();
            Failure { code: if e.use_stderr() { 2 } else { 0 }, message: String::new() }
        })?;
        run(cli, &overrides)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("cutbench: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
