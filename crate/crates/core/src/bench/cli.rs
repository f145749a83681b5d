use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, DEFAULT_CONFIG_TOML};
use super::output::emit_csv;
use super::runner::run_case;
use crate::analysis::{compute_zeta, lambda_sweep, ZetaModel};
use crate::conic::{spark_bound, SolverConfig, SparkMode};
use crate::dictionary::{DictionaryKind, ParametricDictionary};
use crate::error::{Error, Result};
use crate::signal::{PulseSpec, SamplingGrid};

#[derive(Debug, Parser)]
#[command(name = "polarest", version, about = "Compressive delay estimation experiments")]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a config file and write CSV.
    Run(RunArgs),
    /// Arc approximation error versus dictionary redundancy.
    Zeta(ZetaArgs),
    /// Upper bound on the spark of a dictionary.
    Spark(SparkArgs),
    /// CCBP error across sparsity weights.
    LambdaSweep(SweepArgs),
    /// Write a commented default config.
    GenConfig {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(short, long)]
    jobs: Option<usize>,
    /// Overrides the config output path.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Record zero elapsed time for byte-reproducible output.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct ZetaArgs {
    #[arg(long, value_parser = parse_kind)]
    problem: DictionaryKind,
    /// Redundancy factors: `3`, `1..10` or `1,2,4`.
    #[arg(long, value_parser = parse_range, default_value = "1..10")]
    c: Factors,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Signal length (default 500 for tde, 100 for fe).
    #[arg(long)]
    n: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SparkArgs {
    #[arg(long, value_parser = parse_kind)]
    problem: DictionaryKind,
    #[arg(long, default_value_t = 1)]
    c: usize,
    #[arg(long, value_parser = parse_mode, default_value = "complex")]
    mode: SparkMode,
    #[arg(long, default_value_t = 10)]
    probes: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Base experiment (default: case A, K = 1).
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,1000,1000000")]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    kappas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    snrs: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    #[arg(short, long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<DictionaryKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<SparkMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parsed `--c` list; a plain `Vec` would make clap treat the flag as repeatable.
#[derive(Debug, Clone)]
struct Factors(Vec<usize>);

fn parse_range(s: &str) -> std::result::Result<Factors, String> {
    let bad = || format!("expected N, A..B or a comma list, got '{s}'");
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse::<usize>().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(Factors(out))
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Parses `args` (program name first), runs the command and returns the exit code:
/// 0 on success, 1 on configuration or runtime errors, 2 on usage errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.no_timing {
                cfg.record_timing = false;
            }
            let records = run_case(&cfg, a.jobs)?;
            emit_csv(&records, sink(a.output.as_ref().or(cfg.output.as_ref()))?)
        }
        Command::Zeta(a) => {
            let mut w = sink(a.output.as_ref())?;
            writeln!(w, "problem,c,zeta,b_worst,bomp_max_error,samples")?;
            let model = match a.problem {
                DictionaryKind::Tde => ZetaModel::Tde {
                    spec: PulseSpec::reference(),
                    grid: SamplingGrid::new(a.n.unwrap_or(500), SamplingGrid::reference().ts)?,
                },
                DictionaryKind::Fe => ZetaModel::Fe { n: a.n.unwrap_or(100) },
            };
            let name = if a.problem == DictionaryKind::Tde { "tde" } else { "fe" };
            for c in a.c.0 {
                let r = compute_zeta(model, c, a.samples)?;
                writeln!(w, "{name},{},{:e},{:e},{:e},{}", r.c, r.zeta, r.b_worst, r.bomp_max_error, r.samples)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Spark(a) => {
            let dict = match a.problem {
                DictionaryKind::Tde => {
                    ParametricDictionary::tde(PulseSpec::reference(), SamplingGrid::new(a.n, SamplingGrid::reference().ts)?, a.c)?
                }
                DictionaryKind::Fe => ParametricDictionary::fe(a.n, a.c)?,
            };
            if a.probes == 0 || a.probes > dict.len() {
                return Err(Error::config(format!("probes must lie in 1..={}", dict.len())));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut probes = sample(&mut rng, dict.len(), a.probes).into_vec();
            probes.sort_unstable();
            let rep = spark_bound(&dict, a.mode, &probes, &SolverConfig::default())?;
            for p in &rep.probes {
                let nz = p.nonzeros.map_or("-".to_string(), |v| v.to_string());
                eprintln!("probe {:>5}  {:<10}  nonzeros {nz}", p.index, p.status);
            }
            let note = if rep.all_infeasible { " (all probes infeasible)" } else { "" };
            println!("spark bound: {}{note}", rep.bound);
            Ok(())
        }
        Command::LambdaSweep(a) => {
            let base = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig { k: 1, ..ExperimentConfig::default() },
            };
            let (cells, records) = lambda_sweep(&base, &a.lambdas, &a.kappas, &a.snrs, a.trials, a.jobs)?;
            eprintln!("{:>10} {:>6} {:>10} {:>14} {:>7}", "lambda", "kappa", "snr", "b_mse_us2", "flagged");
            for c in &cells {
                eprintln!("{:>10e} {:>6} {:>10e} {:>14.4e} {:>4}/{}", c.lambda, c.kappa, c.snr, c.b_mse_us2, c.flagged, c.trials);
            }
            emit_csv(&records, sink(a.output.as_ref())?)
        }
        Command::GenConfig { output } => {
            let mut w = sink(output.as_ref())?;
            w.write_all(DEFAULT_CONFIG_TOML.as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}
