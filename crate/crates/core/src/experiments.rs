//! Seeded Monte-Carlo sweeps over the comparison schemes.
//!
//! Every trial samples one scenario from seed `base ^ trial` and runs all
//! five schemes on it. Trials run in parallel and are aggregated in trial
//! order, so the CSV output depends only on the settings and the seed. Wall-clock
//! times are recorded only when timing is enabled; otherwise the runtime
//! column is zero.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{epa_scheme, gale_shapley_scheme, random_pairing_scheme, Scheme, SchemeOutcome};
use crate::optimizer::{optimize, LpBackend, OptimizerParams};
use crate::pairing_lp::TraceRow;
use crate::scenario::{sample_scenario, trial_seed, SystemConfig};
use crate::{Error, Result};

pub const DEFAULT_TRIALS: usize = 200;
/// Largest fraction of failed trials tolerated before a run is reported as
/// failed.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
pub const CSV_HEADER: [&str; 6] = ["scheme", "sweep", "mean_rate", "std_rate", "mean_iters", "runtime_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Sum secrecy rate per outer iteration.
    Iters,
    /// Sum secrecy rate against the number of users.
    Users,
    /// Sum secrecy rate against the power budget.
    Power,
    /// Median wall-clock time against the number of users.
    Runtime,
    /// Sum secrecy rate against the barrier gap tolerance.
    Epsilon,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Iters,
        ExperimentKind::Users,
        ExperimentKind::Power,
        ExperimentKind::Runtime,
        ExperimentKind::Epsilon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Iters => "iters",
            ExperimentKind::Users => "users",
            ExperimentKind::Power => "power",
            ExperimentKind::Runtime => "runtime",
            ExperimentKind::Epsilon => "epsilon",
        }
    }

    /// Sweep values: user counts `2K`, power in dBm, or gap tolerances.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentKind::Iters => vec![6.0, 8.0, 10.0],
            ExperimentKind::Users | ExperimentKind::Runtime => vec![4.0, 6.0, 8.0, 10.0, 12.0],
            ExperimentKind::Power => vec![10.0, 15.0, 20.0, 25.0, 30.0],
            ExperimentKind::Epsilon => vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
        }
    }

    /// Whether the sweep value is a user count `2K`.
    pub fn sweeps_users(self) -> bool {
        matches!(self, ExperimentKind::Iters | ExperimentKind::Users | ExperimentKind::Runtime)
    }

    pub fn times_by_default(self) -> bool {
        self == ExperimentKind::Runtime
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment `{s}`; expected iters, users, power, runtime or epsilon")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sweep: Vec<f64>,
    pub trials: usize,
    /// Base configuration; `rng_seed` is the base seed of the trials.
    pub base: SystemConfig,
    pub params: OptimizerParams,
    pub out: PathBuf,
    pub timing: bool,
    /// Record barrier Newton traces of the proposed scheme.
    pub trace: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, base: SystemConfig, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            kind,
            sweep: kind.default_sweep(),
            trials: DEFAULT_TRIALS,
            base,
            params: OptimizerParams::default(),
            out: out.into(),
            timing: kind.times_by_default(),
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.sweep.is_empty() {
            return Err(Error::invalid("sweep must not be empty"));
        }
        self.base.validate()?;
        self.params.validate()?;
        for &v in &self.sweep {
            self.point(v)?;
        }
        Ok(())
    }

    /// Configuration and solver parameters at one sweep value.
    pub fn point(&self, value: f64) -> Result<(SystemConfig, OptimizerParams)> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("sweep value {value} is not finite")));
        }
        let mut config = self.base.clone();
        let mut params = self.params;
        match self.kind {
            k if k.sweeps_users() => {
                if value < 2.0 || value.fract() != 0.0 || value as u64 % 2 != 0 {
                    return Err(Error::invalid(format!("user count {value} must be an even integer >= 2")));
                }
                config.num_pairs = value as usize / 2;
            }
            ExperimentKind::Power => config.total_power_dbm = value,
            ExperimentKind::Epsilon => {
                if value <= 0.0 {
                    return Err(Error::invalid(format!("epsilon {value} must be positive")));
                }
                params.barrier.epsilon = value;
            }
            _ => unreachable!("user sweeps handled above"),
        }
        params.barrier.trace = self.trace;
        config.validate()?;
        params.validate()?;
        Ok((config, params))
    }

    /// Path of a companion output, e.g. `out.csv` -> `out.trace.csv`.
    pub fn sibling(&self, tag: &str) -> PathBuf {
        sibling_path(&self.out, tag)
    }
}

pub fn sibling_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.{tag}.{ext}"))
}

/// Aggregate of one scheme at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: &'static str,
    pub sweep: f64,
    pub mean_rate: f64,
    /// Sample standard deviation over trials.
    pub std_rate: f64,
    pub mean_iters: f64,
    /// Median wall-clock seconds per call, zero when timing is off.
    pub runtime_s: f64,
}

impl ResultRow {
    /// Standard error of `mean_rate`.
    pub fn std_error(&self, trials: usize) -> f64 {
        self.std_rate / (trials as f64).sqrt()
    }
}

/// Mean sum secrecy rate of the proposed scheme after each outer iteration.
/// Trajectories that stopped early are padded with their final value.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub sweep: f64,
    pub iteration: usize,
    pub mean_rate: f64,
}

/// Per-trial difference `proposed - scheme` at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedGap {
    pub scheme: &'static str,
    pub sweep: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub trials: usize,
}

impl PairedGap {
    pub fn std_error(&self) -> f64 {
        self.std_gap / (self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub sweep: f64,
    pub trial: usize,
    /// Outer iteration whose LP produced the row.
    pub outer: usize,
    pub row: TraceRow,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub sweep: f64,
    pub trial: usize,
    pub scheme: Scheme,
    pub message: String,
}

impl fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sweep {} trial {}: {} failed: {}",
            self.sweep,
            self.trial,
            self.scheme.name(),
            self.message
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub gaps: Vec<PairedGap>,
    pub trajectory: Vec<TrajectoryRow>,
    pub trace: Vec<TraceRecord>,
    pub failures: Vec<TrialFailure>,
    /// Successful trials per sweep value, in sweep order.
    pub successes: Vec<usize>,
    /// Trials attempted over all sweep values.
    pub trials_run: usize,
}

impl ExperimentReport {
    pub fn failure_fraction(&self) -> f64 {
        if self.trials_run == 0 {
            return 0.0;
        }
        self.failures.len() as f64 / self.trials_run as f64
    }

    pub fn exceeds_failure_limit(&self) -> bool {
        self.failure_fraction() > MAX_FAILURE_FRACTION
    }

    pub fn row(&self, scheme: Scheme, sweep: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.scheme == scheme.name() && r.sweep == sweep)
    }

    pub fn gap(&self, scheme: Scheme, sweep: f64) -> Option<&PairedGap> {
        self.gaps.iter().find(|g| g.scheme == scheme.name() && g.sweep == sweep)
    }
}

/// Per-scheme result of one trial, in [`Scheme::ALL`] order.
struct TrialOutcome {
    rates: [f64; 5],
    iterations: [usize; 5],
    seconds: [f64; 5],
    trajectory: Vec<f64>,
    trace: Vec<(usize, TraceRow)>,
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if timing {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_secs_f64())
    } else {
        (f(), 0.0)
    }
}

fn run_trial(
    config: &SystemConfig,
    params: &OptimizerParams,
    timing: bool,
) -> std::result::Result<TrialOutcome, (Scheme, Error)> {
    let scenario = sample_scenario(config).map_err(|e| (Scheme::Proposed, e))?;
    let (proposed, t_prop) = timed(timing, || optimize(&scenario, params));
    let proposed = proposed.map_err(|e| (Scheme::Proposed, e))?;
    let (epa, t_epa) = timed(timing, || epa_scheme(&scenario, proposed.pairing.clone()));
    let epa = epa.map_err(|e| (Scheme::Epa, e))?;
    let (rp, t_rp) = timed(timing, || random_pairing_scheme(&scenario));
    let rp = rp.map_err(|e| (Scheme::RandomPairing, e))?;
    let (gs, t_gs) = timed(timing, || gale_shapley_scheme(&scenario));
    let gs = gs.map_err(|e| (Scheme::GaleShapley, e))?;
    let simplex_params = OptimizerParams {
        backend: LpBackend::Simplex,
        ..*params
    };
    let (sx, t_sx) = timed(timing, || optimize(&scenario, &simplex_params));
    let sx: SchemeOutcome = sx.map_err(|e| (Scheme::Simplex, e))?.into();

    let trace = proposed
        .lp_diagnostics
        .iter()
        .enumerate()
        .flat_map(|(q, d)| d.trace.iter().map(move |row| (q + 1, row.clone())))
        .collect();
    Ok(TrialOutcome {
        rates: [proposed.sum_secrecy, epa.sum_secrecy, rp.sum_secrecy, gs.sum_secrecy, sx.sum_secrecy],
        iterations: [proposed.iterations, epa.iterations, rp.iterations, gs.iterations, sx.iterations],
        // EPA reuses the proposed pairing, so its cost includes that run.
        seconds: [t_prop, t_prop + t_epa, t_rp, t_gs, t_sx],
        trajectory: proposed.trajectory,
        trace,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every sweep point without writing anything.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut report = ExperimentReport::default();
    for &value in &spec.sweep {
        let (config, params) = spec.point(value)?;
        let outcomes: Vec<_> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| {
                let cfg = SystemConfig {
                    rng_seed: trial_seed(spec.base.rng_seed, trial as u64),
                    ..config.clone()
                };
                run_trial(&cfg, &params, spec.timing)
            })
            .collect();
        report.trials_run += spec.trials;

        let mut ok = Vec::with_capacity(outcomes.len());
        for (trial, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(o) => ok.push((trial, o)),
                Err((scheme, e)) => report.failures.push(TrialFailure {
                    sweep: value,
                    trial,
                    scheme,
                    message: e.to_string(),
                }),
            }
        }
        report.successes.push(ok.len());
        if ok.is_empty() {
            continue;
        }

        for (s, scheme) in Scheme::ALL.into_iter().enumerate() {
            let rates: Vec<f64> = ok.iter().map(|(_, o)| o.rates[s]).collect();
            let iters: Vec<f64> = ok.iter().map(|(_, o)| o.iterations[s] as f64).collect();
            let secs: Vec<f64> = ok.iter().map(|(_, o)| o.seconds[s]).collect();
            report.rows.push(ResultRow {
                scheme: scheme.name(),
                sweep: value,
                mean_rate: mean(&rates),
                std_rate: sample_std(&rates),
                mean_iters: mean(&iters),
                runtime_s: if spec.timing { median(&secs) } else { 0.0 },
            });
            let gaps: Vec<f64> = ok.iter().map(|(_, o)| o.rates[0] - o.rates[s]).collect();
            report.gaps.push(PairedGap {
                scheme: scheme.name(),
                sweep: value,
                mean_gap: mean(&gaps),
                std_gap: sample_std(&gaps),
                trials: gaps.len(),
            });
        }

        if spec.kind == ExperimentKind::Iters {
            let len = ok.iter().map(|(_, o)| o.trajectory.len()).max().unwrap_or(0);
            for iteration in 0..len {
                let at: Vec<f64> = ok
                    .iter()
                    .map(|(_, o)| o.trajectory[iteration.min(o.trajectory.len() - 1)])
                    .collect();
                report.trajectory.push(TrajectoryRow {
                    sweep: value,
                    iteration,
                    mean_rate: mean(&at),
                });
            }
        }

        if spec.trace {
            for (trial, o) in &ok {
                report.trace.extend(o.trace.iter().map(|(outer, row)| TraceRecord {
                    sweep: value,
                    trial: *trial,
                    outer: *outer,
                    row: row.clone(),
                }));
            }
        }
    }
    Ok(report)
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.sweep.to_string(),
            r.mean_rate.to_string(),
            r.std_rate.to_string(),
            r.mean_iters.to_string(),
            r.runtime_s.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep", "iteration", "mean_rate"])?;
    for r in rows {
        w.write_record([r.sweep.to_string(), r.iteration.to_string(), r.mean_rate.to_string()])?;
    }
    w.flush()
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRecord], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep", "trial", "outer", "centering", "t", "residual", "step", "min_slack"])?;
    for r in rows {
        w.write_record([
            r.sweep.to_string(),
            r.trial.to_string(),
            r.outer.to_string(),
            r.row.centering.to_string(),
            r.row.t.to_string(),
            r.row.residual.to_string(),
            r.row.step.to_string(),
            r.row.min_slack.to_string(),
        ])?;
    }
    w.flush()
}

fn write_file(path: &Path, write: impl FnOnce(BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write(BufWriter::new(file)).map_err(io_err)
}

/// Writes the results CSV to `spec.out`, plus `<stem>.trajectory.csv` for
/// the iteration experiment and `<stem>.trace.csv` when tracing.
pub fn write_report(spec: &ExperimentSpec, report: &ExperimentReport) -> Result<()> {
    write_file(&spec.out, |w| write_results_csv(&report.rows, w))?;
    if spec.kind == ExperimentKind::Iters {
        write_file(&spec.sibling("trajectory"), |w| write_trajectory_csv(&report.trajectory, w))?;
    }
    if spec.trace {
        write_file(&spec.sibling("trace"), |w| write_trace_csv(&report.trace, w))?;
    }
    Ok(())
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let report = run_sweep(spec)?;
    write_report(spec, &report)?;
    Ok(report)
}
