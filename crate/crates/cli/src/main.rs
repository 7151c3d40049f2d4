use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use phaseret::combinatorial::algorithm1;
use phaseret::experiment::{run_experiment, write_csv, ExperimentConfig, ExperimentError};
use phaseret::oracle::enumerate_factorizations;
use phaseret::sdp_recovery::{algorithm2, Algorithm2Config};
use phaseret::{
    autocorrelation, equivalent, random_sparse_signal, Autocorrelation, FormatError, RecoveryError, Signal,
    SparseModelParams, ValueDist,
};

const EXIT_NOT_EQUIVALENT: u8 = 1;
const EXIT_IO: u8 = 3;
const EXIT_MALFORMED: u8 = 4;
const EXIT_DIMENSION: u8 = 5;
const EXIT_RECOVERY: u8 = 6;

/// Sparse signal recovery from autocorrelation data.
#[derive(Parser)]
#[command(name = "phaseret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random sparse signal.
    Generate {
        #[arg(long)]
        n: usize,
        /// Expected sparsity; each index is kept with probability s/n.
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "standard_normal")]
        dist: ValueDist,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Signal file to autocorrelation file.
    Autocorr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover a signal from an autocorrelation file.
    Recover {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long = "in")]
        input: PathBuf,
        /// Sparsity; required by `sdp`.
        #[arg(long)]
        k: Option<usize>,
        /// Seed of the support-program bias matrix.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every signal class sharing an autocorrelation (small inputs).
    Factorize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exit 0 when two signals agree up to sign, shift and reversal, else 1.
    CheckEqual {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Run a success-rate sweep described by a key = value config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Comb,
    Sdp,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let code = match &e {
            FormatError::Io(_) => EXIT_IO,
            FormatError::LengthMismatch { .. } => EXIT_DIMENSION,
            _ => EXIT_MALFORMED,
        };
        Failure::new(code, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::new(EXIT_IO, anyhow!("{}: {e}", path.display())))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::new(EXIT_IO, anyhow!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_signal(path: &Path) -> Result<Signal, Failure> {
    Ok(Signal::from_json(open(path)?)?)
}

fn read_autocorrelation(path: &Path) -> Result<Autocorrelation, Failure> {
    Ok(Autocorrelation::from_json(open(path)?)?)
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::new(EXIT_IO, e))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn recover(algo: Algo, a: &Autocorrelation, k: Option<usize>, seed: u64) -> Result<Result<Signal, RecoveryError>, Failure> {
    if let Some(k) = k.filter(|&k| k > a.n()) {
        return Err(Failure::new(
            EXIT_DIMENSION,
            anyhow!("k = {k} exceeds the signal length {}", a.n()),
        ));
    }
    Ok(match algo {
        Algo::Comb => algorithm1(a, a.default_tol()),
        Algo::Sdp => {
            let k = k.ok_or_else(|| Failure::new(EXIT_MALFORMED, anyhow!("--k is required for --algo sdp")))?;
            let cfg = Algorithm2Config {
                bias_seed: seed,
                ..Algorithm2Config::default()
            };
            algorithm2(a, k, &cfg)
        }
    })
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Generate { n, s, seed, dist, out } => {
            let params = SparseModelParams {
                value_dist: dist,
                ..SparseModelParams::new(n, s, seed)
            };
            params.validate().map_err(|e| Failure::new(EXIT_MALFORMED, anyhow!(e)))?;
            let mut w = sink(out.as_deref())?;
            random_sparse_signal(&params).to_json(&mut w)?;
            w.flush()?;
        }
        Command::Autocorr { input, out } => {
            let x = read_signal(&input)?;
            let mut w = sink(out.as_deref())?;
            autocorrelation(&x).to_json(&mut w)?;
            w.flush()?;
        }
        Command::Recover {
            algo,
            input,
            k,
            seed,
            out,
        } => {
            let a = read_autocorrelation(&input)?;
            match recover(algo, &a, k, seed)? {
                Ok(x) => {
                    let mut w = sink(out.as_deref())?;
                    x.to_json(&mut w)?;
                    w.flush()?;
                }
                Err(e) => {
                    let report = serde_json::json!({
                        "status": "failure",
                        "kind": e.kind(),
                        "message": e.to_string(),
                    });
                    write_json(out.as_deref(), &report)?;
                    eprintln!("recovery failed: {e}");
                    return Ok(ExitCode::from(EXIT_RECOVERY));
                }
            }
        }
        Command::Factorize { input, out } => {
            let a = read_autocorrelation(&input)?;
            let set = enumerate_factorizations(&a, a.default_tol())
                .map_err(|e| Failure::new(EXIT_RECOVERY, e))?;
            let classes: Vec<_> = set
                .signals
                .iter()
                .map(|x| serde_json::json!({ "n": x.n(), "entries": x.entries() }))
                .collect();
            write_json(
                out.as_deref(),
                &serde_json::json!({ "n": a.n(), "count": classes.len(), "classes": classes }),
            )?;
        }
        Command::CheckEqual { a, b, tol } => {
            let (x, y) = (read_signal(&a)?, read_signal(&b)?);
            if x.n() != y.n() {
                return Err(Failure::new(
                    EXIT_DIMENSION,
                    anyhow!("lengths differ: {} vs {}", x.n(), y.n()),
                ));
            }
            return Ok(if equivalent(&x, &y, tol) {
                println!("equivalent");
                ExitCode::SUCCESS
            } else {
                println!("not equivalent");
                ExitCode::from(EXIT_NOT_EQUIVALENT)
            });
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| match e {
                ExperimentError::Io(_) => Failure::new(EXIT_IO, e),
                _ => Failure::new(EXIT_MALFORMED, e),
            })?;
            let rows = run_experiment(&cfg).map_err(|e| Failure::new(EXIT_IO, e))?;
            print!("{}", write_csv(&rows));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
