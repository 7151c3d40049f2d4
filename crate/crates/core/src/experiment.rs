//! Seeded Monte Carlo success-rate sweeps over the sparsity.
//!
//! Config files are flat `key = value` text; `#` starts a comment.
//!
//! | key                | default         |
//! |--------------------|-----------------|
//! | `n`                | required        |
//! | `sparsities`       | required, comma-separated `s` values |
//! | `trials_per_point` | 100             |
//! | `algorithm`        | `combinatorial` (`sdp`, `both`) |
//! | `seed`             | 0               |
//! | `tol`              | 1e-6            |
//! | `output_path`      | none            |
//! | `value_dist`       | `standard_normal` (`uniform_pm1_magnitude`) |
//! | `record_timing`    | false           |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::combinatorial::algorithm1;
use crate::error::RecoveryError;
use crate::sdp_recovery::{algorithm2, Algorithm2Config};
use crate::signal::{autocorrelation, equivalent, random_sparse_signal, support_set, SparseModelParams, ValueDist};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "PHASERET_THREADS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    Combinatorial,
    Sdp,
    Both,
}

impl AlgorithmChoice {
    fn runs(self) -> &'static [&'static str] {
        match self {
            AlgorithmChoice::Combinatorial => &["combinatorial"],
            AlgorithmChoice::Sdp => &["sdp"],
            AlgorithmChoice::Both => &["combinatorial", "sdp"],
        }
    }
}

impl FromStr for AlgorithmChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "combinatorial" | "comb" => Ok(AlgorithmChoice::Combinatorial),
            "sdp" => Ok(AlgorithmChoice::Sdp),
            "both" => Ok(AlgorithmChoice::Both),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub sparsities: Vec<f64>,
    pub trials_per_point: usize,
    pub algorithm: AlgorithmChoice,
    pub seed: u64,
    /// Success tolerance, relative to the largest entry of the source.
    pub tol: f64,
    pub output_path: Option<PathBuf>,
    pub value_dist: ValueDist,
    /// Measure wall-clock time per trial. Off by default so that reports
    /// are byte-reproducible.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, sparsities: Vec<f64>) -> Self {
        Self {
            n,
            sparsities,
            trials_per_point: 100,
            algorithm: AlgorithmChoice::Combinatorial,
            seed: 0,
            tol: 1e-6,
            output_path: None,
            value_dist: ValueDist::StandardNormal,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.sparsities.is_empty() {
            return bad("sparsities must be nonempty".into());
        }
        if let Some(s) = self.sparsities.iter().find(|&&s| !(s > 0.0 && s <= self.n as f64)) {
            return bad(format!("sparsity {s} outside (0, {}]", self.n));
        }
        if self.trials_per_point == 0 {
            return bad("trials_per_point must be at least 1".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut n = None;
        let mut sparsities = None;
        let mut cfg = ExperimentConfig::new(0, Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ExperimentError::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
            }
            let parsed: Result<(), String> = (|| {
                match key {
                    "n" => n = Some(num(value)?),
                    "sparsities" => {
                        sparsities = Some(
                            value
                                .split(',')
                                .map(|s| num::<f64>(s.trim()))
                                .collect::<Result<Vec<_>, _>>()?,
                        )
                    }
                    "trials_per_point" => cfg.trials_per_point = num(value)?,
                    "algorithm" => cfg.algorithm = value.parse()?,
                    "seed" => cfg.seed = num(value)?,
                    "tol" => cfg.tol = num(value)?,
                    "output_path" => cfg.output_path = Some(PathBuf::from(value)),
                    "value_dist" => cfg.value_dist = value.parse()?,
                    "record_timing" => cfg.record_timing = num(value)?,
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            parsed.map_err(err)?;
        }
        cfg.n = n.ok_or_else(|| ExperimentError::InvalidConfig("missing `n`".into()))?;
        cfg.sparsities = sparsities.ok_or_else(|| ExperimentError::InvalidConfig("missing `sparsities`".into()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Aggregate over the trials of one `(algorithm, s)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub algorithm: &'static str,
    pub n: usize,
    pub s: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// `None` unless timing was recorded.
    pub mean_runtime_ms: Option<f64>,
    /// Slowest single trial; not written to the CSV.
    pub max_runtime_ms: Option<f64>,
    /// Counts per [`RecoveryError::KINDS`] entry.
    pub failures: Vec<usize>,
    /// Returned signals that are not equivalent to the source.
    pub wrong_answers: usize,
}

pub fn csv_header() -> String {
    let mut h = String::from("algorithm,n,s,trials,successes,success_rate,mean_runtime_ms");
    for kind in RecoveryError::KINDS {
        write!(h, ",failures_{kind}").expect("string write");
    }
    h.push_str(",failures_wrong_answer");
    h
}

pub fn write_csv(rows: &[ExperimentRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        let runtime = r.mean_runtime_ms.map_or_else(|| "na".to_string(), |t| format!("{t:.3}"));
        write!(
            out,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.n, r.s, r.trials, r.successes, r.success_rate, runtime
        )
        .expect("string write");
        for c in &r.failures {
            write!(out, ",{c}").expect("string write");
        }
        writeln!(out, ",{}", r.wrong_answers).expect("string write");
    }
    out
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial; depends only on the base seed, the sparsity value and
/// the trial index.
pub fn trial_seed(seed: u64, s: f64, trial: usize) -> u64 {
    mix(mix(mix(seed) ^ s.to_bits()) ^ trial as u64)
}

enum Outcome {
    Success,
    Wrong,
    Failed(&'static str),
}

fn run_trial(cfg: &ExperimentConfig, algorithm: &str, s: f64, trial: usize) -> (Outcome, f64) {
    let seed = trial_seed(cfg.seed, s, trial);
    let params = SparseModelParams {
        value_dist: cfg.value_dist,
        ..SparseModelParams::new(cfg.n, s, seed)
    };
    let x = random_sparse_signal(&params);
    let a = autocorrelation(&x);
    let start = Instant::now();
    let result = match algorithm {
        "combinatorial" => algorithm1(&a, a.default_tol()),
        _ => {
            let k = support_set(&x, 0.0).sparsity();
            let sdp = Algorithm2Config {
                bias_seed: mix(seed),
                ..Algorithm2Config::default()
            };
            algorithm2(&a, k, &sdp)
        }
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let outcome = match result {
        Ok(y) if equivalent(&y, &x, cfg.tol * x.max_abs()) => Outcome::Success,
        Ok(_) => Outcome::Wrong,
        Err(e) => Outcome::Failed(e.kind()),
    };
    (outcome, elapsed)
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Runs every `(algorithm, s, trial)` combination; writes the CSV when an
/// output path is configured. Results do not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>, ExperimentError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count() {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))?;

    let mut rows = Vec::new();
    for &algorithm in cfg.algorithm.runs() {
        for &s in &cfg.sparsities {
            let outcomes: Vec<(Outcome, f64)> = pool.install(|| {
                (0..cfg.trials_per_point)
                    .into_par_iter()
                    .map(|t| run_trial(cfg, algorithm, s, t))
                    .collect()
            });
            let mut failures = vec![0; RecoveryError::KINDS.len()];
            let (mut successes, mut wrong, mut total_ms, mut max_ms) = (0, 0, 0.0, 0.0f64);
            for (outcome, ms) in &outcomes {
                total_ms += ms;
                max_ms = max_ms.max(*ms);
                match outcome {
                    Outcome::Success => successes += 1,
                    Outcome::Wrong => wrong += 1,
                    Outcome::Failed(kind) => {
                        let i = RecoveryError::KINDS.iter().position(|k| k == kind).expect("known kind");
                        failures[i] += 1;
                    }
                }
            }
            let trials = cfg.trials_per_point;
            rows.push(ExperimentRow {
                algorithm,
                n: cfg.n,
                s,
                trials,
                successes,
                success_rate: successes as f64 / trials as f64,
                mean_runtime_ms: cfg.record_timing.then(|| total_ms / trials as f64),
                max_runtime_ms: cfg.record_timing.then_some(max_ms),
                failures,
                wrong_answers: wrong,
            });
        }
    }
    if let Some(path) = &cfg.output_path {
        std::fs::write(path, write_csv(&rows))?;
    }
    Ok(rows)
}
