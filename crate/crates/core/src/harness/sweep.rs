//! Seeded Monte-Carlo sweeps of the AO reconstruction against the
//! single-pass baseline.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Cell, ExperimentConfig};
use super::metrics::{compute_metrics, Summary, TrialMetrics};
use crate::ao::{power_ratio, run_ao, run_baseline, AoRun, StopReason};
use crate::channel::{apply_doppler, ChannelSet};
use crate::error::{Error, Result};
use crate::measure::{synthesize, MeasurementBatch};
use crate::scene::{sample_scene, GroundTruth, RoiGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ao,
    Baseline,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ao, Method::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ao => "ao",
            Method::Baseline => "baseline",
        }
    }
}

fn seed_digest(master: u64, cell: usize, trial: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((cell as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    h.finalize().into()
}

/// Scene seed of one trial: the first eight bytes of
/// `sha256(master ‖ cell ‖ trial)`, little-endian.
pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    let d = seed_digest(master, cell, trial);
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

/// Noise seed of one trial: the next eight bytes of the same digest.
pub fn noise_seed(master: u64, cell: usize, trial: usize) -> u64 {
    let d = seed_digest(master, cell, trial);
    u64::from_le_bytes(d[8..16].try_into().expect("eight bytes"))
}

/// Metrics of one estimate after outer iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: usize,
    pub residual: f64,
    pub delta: f64,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub metrics: TrialMetrics,
    pub iterations: usize,
    pub stop: StopReason,
    pub per_iteration: Vec<IterationMetrics>,
}

/// Both methods on the same scene and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPair {
    pub trial: usize,
    pub seed: u64,
    /// Power ratio of the all-ones initial occupancy.
    pub delta0: f64,
    /// `Err` holds the abort message.
    pub ao: std::result::Result<TrialRecord, String>,
    pub baseline: std::result::Result<TrialRecord, String>,
}

impl TrialPair {
    pub fn get(&self, method: Method) -> &std::result::Result<TrialRecord, String> {
        match method {
            Method::Ao => &self.ao,
            Method::Baseline => &self.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub trials: Vec<TrialPair>,
}

impl CellOutcome {
    /// Per-trial values of `f` for trials where both methods finished.
    pub fn paired<F: Fn(&TrialRecord) -> f64>(&self, f: F) -> Vec<(f64, f64)> {
        self.trials
            .iter()
            .filter_map(|t| match (&t.ao, &t.baseline) {
                (Ok(a), Ok(b)) => Some((f(a), f(b))),
                _ => None,
            })
            .collect()
    }

    pub fn completed(&self, method: Method) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter_map(move |t| t.get(method).as_ref().ok())
    }
}

/// One `metrics.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    pub snr_db: f64,
    pub target_density: f64,
    pub n_vehicles: usize,
    pub speed: f64,
    pub trials: usize,
    pub aborted: usize,
    pub detection_rate_paper: Summary,
    pub detection_tpr: Summary,
    pub ser: Summary,
    pub mse: Summary,
    pub mean_iterations: f64,
    /// Mean over trials with a finite ratio.
    pub mean_delta0: f64,
    /// Wall-clock seconds for the cell; kept out of the CSV files.
    pub runtime_s: f64,
}

pub const METRIC_COLUMNS: [&str; 17] = [
    "method",
    "snr_db",
    "target_density",
    "n_vehicles",
    "speed",
    "trials",
    "aborted",
    "detection_rate_paper",
    "detection_rate_paper_se",
    "detection_tpr",
    "detection_tpr_se",
    "ser",
    "ser_se",
    "mse",
    "mse_se",
    "mean_iterations",
    "mean_delta0",
];

/// Trial-averaged state after outer iteration `iteration`; finished runs
/// carry their last iteration forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: Method,
    pub cell: Cell,
    pub iteration: usize,
    pub trials: usize,
    /// Share of trials still iterating.
    pub active: f64,
    pub ser: f64,
    pub mse: f64,
    pub detection_tpr: f64,
    pub residual: f64,
    pub delta: f64,
}

pub const CONVERGENCE_COLUMNS: [&str; 13] = [
    "method",
    "snr_db",
    "target_density",
    "n_vehicles",
    "speed",
    "iteration",
    "trials",
    "active",
    "ser",
    "mse",
    "detection_tpr",
    "residual",
    "delta",
];

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<CellOutcome>,
    pub rows: Vec<MetricRow>,
    pub convergence: Vec<ConvergenceRow>,
    pub runtime_s: f64,
}

/// Geometry and nominal channels shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub geometry: RoiGeometry,
    pub channels: ChannelSet,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry()?;
        let channels = ChannelSet::build(&geometry, config.channel.carrier_hz, config.channel.vehicle_scattering)?;
        Ok(Experiment { config, geometry, channels })
    }

    /// Like [`Experiment::new`], reusing a channel cache under `dir`.
    pub fn with_cache(config: ExperimentConfig, dir: &Path) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry()?;
        let channels =
            ChannelSet::load_or_build(&geometry, config.channel.carrier_hz, config.channel.vehicle_scattering, dir)?;
        Ok(Experiment { config, geometry, channels })
    }

    /// Scene and received symbols of one trial.
    pub fn trial_inputs(&self, cell: &Cell, trial: usize) -> Result<(GroundTruth, MeasurementBatch)> {
        let seed = trial_seed(self.config.seed, cell.index, trial);
        let truth = sample_scene(&self.geometry, &self.config.scene_spec(cell), seed)?;
        let doppler = self.config.doppler();
        let mut batch = if doppler.enabled {
            let moved = apply_doppler(&self.channels, &doppler, &truth, &self.geometry)?;
            synthesize(&truth, &moved, cell.snr_db, noise_seed(self.config.seed, cell.index, trial))?
        } else {
            synthesize(&truth, &self.channels, cell.snr_db, noise_seed(self.config.seed, cell.index, trial))?
        };
        batch.doppler = doppler.enabled;
        Ok((truth, batch))
    }

    pub fn run_trial(&self, cell: &Cell, trial: usize) -> TrialPair {
        let seed = trial_seed(self.config.seed, cell.index, trial);
        let failed = |e: &Error| TrialPair {
            trial,
            seed,
            delta0: f64::NAN,
            ao: Err(e.to_string()),
            baseline: Err(e.to_string()),
        };
        let (truth, batch) = match self.trial_inputs(cell, trial) {
            Ok(v) => v,
            Err(e) => return failed(&e),
        };
        let priors = match self.config.priors(cell, &self.geometry) {
            Ok(p) => p,
            Err(e) => return failed(&e),
        };
        let options = self.config.ao_options();
        let schedule = self.config.threshold;
        let ones = vec![1u8; self.geometry.n_positioning()];
        let delta0 = power_ratio(&truth, &ones, &self.channels);
        let record = |run: std::result::Result<AoRun, crate::ao::AoFailure>| {
            run.map(|r| self.record(&truth, &r)).map_err(|e| e.to_string())
        };
        TrialPair {
            trial,
            seed,
            delta0,
            ao: record(run_ao(&batch, &self.channels, &priors, &schedule, &options)),
            baseline: record(run_baseline(&batch, &self.channels, &priors, &schedule, &options)),
        }
    }

    fn record(&self, truth: &GroundTruth, run: &AoRun) -> TrialRecord {
        let constellation = self.config.scene.constellation;
        let per_iteration = run
            .trace
            .iter()
            .map(|rec| IterationMetrics {
                t: rec.t,
                residual: rec.residual,
                delta: power_ratio(truth, &rec.p_hat, &self.channels),
                metrics: compute_metrics(truth, &rec.estimate(constellation)),
            })
            .collect();
        TrialRecord {
            metrics: compute_metrics(truth, &run.estimate),
            iterations: run.trace.len(),
            stop: run.stop,
            per_iteration,
        }
    }

    /// All trials of one cell, in trial order, on the current rayon pool.
    pub fn run_cell(&self, cell: &Cell) -> CellOutcome {
        let trials = (0..self.config.trials).into_par_iter().map(|t| self.run_trial(cell, t)).collect();
        CellOutcome { cell: *cell, trials }
    }

    pub fn run(&self) -> SweepResult {
        let start = Instant::now();
        let cells = self.config.cells();
        let mut outcomes = Vec::with_capacity(cells.len());
        let mut times = Vec::with_capacity(cells.len());
        for cell in &cells {
            let t0 = Instant::now();
            outcomes.push(self.run_cell(cell));
            times.push(t0.elapsed().as_secs_f64());
        }
        let mut rows = Vec::new();
        let mut convergence = Vec::new();
        for (outcome, &secs) in outcomes.iter().zip(&times) {
            for method in Method::ALL {
                let mut row = summarize(outcome, method);
                row.runtime_s = secs;
                rows.push(row);
                convergence.extend(convergence_rows(outcome, method, self.config.ao.max_outer_iters));
            }
        }
        SweepResult { cells: outcomes, rows, convergence, runtime_s: start.elapsed().as_secs_f64() }
    }
}

pub fn summarize(outcome: &CellOutcome, method: Method) -> MetricRow {
    let done: Vec<&TrialRecord> = outcome.completed(method).collect();
    let col = |f: fn(&TrialMetrics) -> f64| Summary::of(&done.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let finite_delta: Vec<f64> = outcome.trials.iter().map(|t| t.delta0).filter(|d| d.is_finite()).collect();
    let c = &outcome.cell;
    MetricRow {
        method,
        snr_db: c.snr_db,
        target_density: c.target_density,
        n_vehicles: c.n_vehicles,
        speed: c.speed,
        trials: outcome.trials.len(),
        aborted: outcome.trials.len() - done.len(),
        detection_rate_paper: col(|m| m.detection_rate_paper),
        detection_tpr: col(|m| m.detection_tpr),
        ser: col(|m| m.ser),
        mse: col(|m| m.mse),
        mean_iterations: Summary::of(&done.iter().map(|r| r.iterations as f64).collect::<Vec<_>>()).mean,
        mean_delta0: if finite_delta.is_empty() { f64::INFINITY } else { Summary::of(&finite_delta).mean },
        runtime_s: 0.0,
    }
}

pub fn convergence_rows(outcome: &CellOutcome, method: Method, max_iters: usize) -> Vec<ConvergenceRow> {
    let done: Vec<&TrialRecord> = outcome.completed(method).filter(|r| !r.per_iteration.is_empty()).collect();
    let n = done.len();
    (1..=max_iters)
        .map(|t| {
            let at: Vec<&IterationMetrics> = done.iter().map(|r| &r.per_iteration[t.min(r.per_iteration.len()) - 1]).collect();
            let mean = |f: &dyn Fn(&IterationMetrics) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    at.iter().map(|m| f(m)).sum::<f64>() / n as f64
                }
            };
            let deltas: Vec<f64> = at.iter().map(|m| m.delta).filter(|d| d.is_finite()).collect();
            ConvergenceRow {
                method,
                cell: outcome.cell,
                iteration: t,
                trials: n,
                active: if n == 0 { 0.0 } else { done.iter().filter(|r| r.per_iteration.len() >= t).count() as f64 / n as f64 },
                ser: mean(&|m| m.metrics.ser),
                mse: mean(&|m| m.metrics.mse),
                detection_tpr: mean(&|m| m.metrics.detection_tpr),
                residual: mean(&|m| m.residual),
                delta: if deltas.is_empty() { f64::INFINITY } else { deltas.iter().sum::<f64>() / deltas.len() as f64 },
            }
        })
        .collect()
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_sweep(config: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    let experiment = Experiment::new(config.clone())?;
    with_pool(threads.or(config.threads), || experiment.run())
}

/// Float formatting for CSV cells: 13 significant digits, `inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn cell_fields(c: &Cell) -> [String; 4] {
    [num(c.snr_db), num(c.target_density), c.n_vehicles.to_string(), num(c.speed)]
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRIC_COLUMNS)?;
    for r in rows {
        let cell = Cell { index: 0, snr_db: r.snr_db, target_density: r.target_density, n_vehicles: r.n_vehicles, speed: r.speed };
        let mut rec = vec![r.method.as_str().to_string()];
        rec.extend(cell_fields(&cell));
        rec.push(r.trials.to_string());
        rec.push(r.aborted.to_string());
        for s in [r.detection_rate_paper, r.detection_tpr, r.ser, r.mse] {
            rec.push(num(s.mean));
            rec.push(num(s.stderr));
        }
        rec.push(num(r.mean_iterations));
        rec.push(num(r.mean_delta0));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CONVERGENCE_COLUMNS)?;
    for r in rows {
        let mut rec = vec![r.method.as_str().to_string()];
        rec.extend(cell_fields(&r.cell));
        rec.push(r.iteration.to_string());
        rec.push(r.trials.to_string());
        for v in [r.active, r.ser, r.mse, r.detection_tpr, r.residual, r.delta] {
            rec.push(num(v));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub const TRIAL_COLUMNS: [&str; 14] = [
    "method",
    "snr_db",
    "target_density",
    "n_vehicles",
    "speed",
    "trial",
    "seed",
    "status",
    "detection_rate_paper",
    "detection_tpr",
    "ser",
    "mse",
    "iterations",
    "delta0",
];

pub fn write_trials<W: Write>(cells: &[CellOutcome], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIAL_COLUMNS)?;
    for c in cells {
        for t in &c.trials {
            for method in Method::ALL {
                let mut rec = vec![method.as_str().to_string()];
                rec.extend(cell_fields(&c.cell));
                rec.push(t.trial.to_string());
                rec.push(t.seed.to_string());
                match t.get(method) {
                    Ok(r) => {
                        rec.push(format!("{:?}", r.stop).to_lowercase());
                        for v in [r.metrics.detection_rate_paper, r.metrics.detection_tpr, r.metrics.ser, r.metrics.mse] {
                            rec.push(num(v));
                        }
                        rec.push(r.iterations.to_string());
                    }
                    Err(_) => {
                        rec.push("aborted".into());
                        rec.extend(std::iter::repeat_n(String::new(), 5));
                    }
                }
                rec.push(num(t.delta0));
                out.write_record(&rec)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `convergence.csv`, `trials.csv`, `config.toml`
/// and `timing.txt` under `dir`.
pub fn write_outputs(result: &SweepResult, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics(&result.rows, fs::File::create(dir.join("metrics.csv"))?)?;
    write_convergence(&result.convergence, fs::File::create(dir.join("convergence.csv"))?)?;
    write_trials(&result.cells, fs::File::create(dir.join("trials.csv"))?)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let mut timing = String::new();
    timing.push_str(&format!("total_s {:.3}\n", result.runtime_s));
    for r in result.rows.iter().filter(|r| r.method == Method::Ao) {
        timing.push_str(&format!(
            "cell snr_db={} target_density={} n_vehicles={} speed={} runtime_s={:.3}\n",
            r.snr_db, r.target_density, r.n_vehicles, r.speed, r.runtime_s
        ));
    }
    fs::write(dir.join("timing.txt"), timing)?;
    Ok(())
}
