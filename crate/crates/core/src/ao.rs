//! Alternating optimisation between the symbol/occupancy sub-problem and
//! the scattering sub-problem, plus the power diagnostics used to inspect it.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};
use crate::gamp::{
    em_refine, gamp_solve, EmOptions, EmRefine, GampOptions, NoiseVar, ScatterPrior, SymbolPrior,
};
use crate::measure::{model_rows, scatter_system, symbol_system, MeasurementBatch};
use crate::scene::GroundTruth;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Occupancy threshold `β^(t)`, ramped linearly then held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSchedule {
    pub start: f64,
    pub end: f64,
    /// Iterations over which β climbs from `start` to `end`.
    pub ramp: usize,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule { start: 0.5, end: 0.9, ramp: 8 }
    }
}

impl ThresholdSchedule {
    pub fn fixed(beta: f64) -> Self {
        ThresholdSchedule { start: beta, end: beta, ramp: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(self.start) || !open(self.end) || self.start > self.end {
            return Err(Error::config("threshold", "need 0 < start <= end < 1"));
        }
        Ok(())
    }

    pub fn beta(&self, step: usize) -> f64 {
        if self.ramp == 0 || step >= self.ramp {
            return self.end.max(self.start);
        }
        self.start + (self.end - self.start) * step as f64 / self.ramp as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoPriors {
    pub symbol: SymbolPrior,
    pub scatter: ScatterPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoOptions {
    pub max_outer_iters: usize,
    /// Stopping slack as a multiple of `K σ_n²`.
    pub epsilon_margin: f64,
    /// Outer iterations without a new best residual before stopping.
    pub patience: usize,
    /// Hold β while the residual rises instead of following the ramp.
    pub hold_on_rise: bool,
    /// Refine the prior widths by EM after every inner solve.
    pub em: bool,
    /// Rescale the symbol sparsity to the number of surviving pixels.
    pub adapt_sparsity: bool,
    /// Noise variance used when the batch is noiseless, relative to `mean |y_k|²`.
    pub noise_floor: f64,
    pub constellation: ConstellationSpec,
    pub gamp: GampOptions,
    pub em_options: EmOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            max_outer_iters: 20,
            epsilon_margin: 0.5,
            patience: 5,
            hold_on_rise: false,
            em: true,
            adapt_sparsity: true,
            noise_floor: 1e-10,
            constellation: ConstellationSpec::Qpsk,
            gamp: GampOptions::default(),
            em_options: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: Vec<u8>,
    pub s_hat: Vec<Complex64>,
    pub x_hat: Vec<f64>,
    pub iteration: usize,
    /// `||y − H ŝ||²` with `H` built from `(p̂, x̂)`.
    pub residual: f64,
}

impl Estimate {
    fn initial(np: usize, ns: usize) -> Self {
        Estimate { p_hat: vec![1; np], s_hat: vec![ZERO; np], x_hat: vec![0.0; ns], iteration: 0, residual: f64::NAN }
    }
}

/// State after one outer iteration. `s_hat` holds the soft GAMP means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub beta: f64,
    pub residual: f64,
    pub p_hat: Vec<u8>,
    pub s_hat: Vec<Complex64>,
    pub x_hat: Vec<f64>,
    pub symbol_iters: usize,
    pub scatter_iters: usize,
}

impl IterationRecord {
    pub fn estimate(&self, constellation: ConstellationSpec) -> Estimate {
        Estimate {
            p_hat: self.p_hat.clone(),
            s_hat: hard_decisions(&self.p_hat, &self.s_hat, constellation),
            x_hat: self.x_hat.clone(),
            iteration: self.t,
            residual: self.residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Residual fell to the slack `ε`.
    Converged,
    MaxIters,
    /// Residual did not improve for `patience` iterations.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoRun {
    pub estimate: Estimate,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub epsilon: f64,
    pub noise_var: f64,
}

/// A failed run with the iterations completed before the failure.
#[derive(Debug)]
pub struct AoFailure {
    pub error: Error,
    pub trace: Vec<IterationRecord>,
}

impl fmt::Display for AoFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} outer iterations", self.error, self.trace.len())
    }
}

impl std::error::Error for AoFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<AoFailure> for Error {
    fn from(f: AoFailure) -> Self {
        f.error
    }
}

pub fn hard_decisions(p_hat: &[u8], s_hat: &[Complex64], constellation: ConstellationSpec) -> Vec<Complex64> {
    p_hat
        .iter()
        .zip(s_hat)
        .map(|(&p, &s)| if p != 0 { constellation.hard_decision(s) } else { ZERO })
        .collect()
}

/// `||y − H ŝ||²` with `h_k^T = p̂^T H^V_k + x̂^T H^s_k`.
pub fn model_residual(channels: &ChannelSet, p_hat: &[u8], x_hat: &[f64], s_hat: &[Complex64], y: &[Complex64]) -> f64 {
    let h = model_rows(channels, p_hat, x_hat);
    y.iter()
        .enumerate()
        .map(|(k, &yk)| {
            let fit: Complex64 = h.row(k).iter().zip(s_hat).map(|(a, s)| a * s).sum();
            (yk - fit).norm_sqr()
        })
        .sum()
}

fn check_inputs(y: &MeasurementBatch, channels: &ChannelSet, priors: &AoPriors) -> Result<()> {
    if y.y.len() != channels.n_base_stations() {
        return Err(Error::Dimension(format!(
            "{} measurements for {} base stations",
            y.y.len(),
            channels.n_base_stations()
        )));
    }
    if channels.n_positioning() == 0 {
        return Err(Error::Dimension("no positioning pixels".into()));
    }
    if priors.symbol.weights.is_empty() {
        return Err(Error::config("symbol_prior", "empty mixture"));
    }
    Ok(())
}

/// Alternating reconstruction from an all-ones occupancy, zero map and zero symbols.
pub fn run_ao(
    y: &MeasurementBatch,
    channels: &ChannelSet,
    priors: &AoPriors,
    schedule: &ThresholdSchedule,
    options: &AoOptions,
) -> std::result::Result<AoRun, AoFailure> {
    let mut trace = Vec::new();
    macro_rules! bail {
        ($e:expr) => {
            return Err(AoFailure { error: $e, trace })
        };
    }
    if let Err(e) = check_inputs(y, channels, priors).and_then(|_| schedule.validate()) {
        bail!(e);
    }

    let k = channels.n_base_stations();
    let np = channels.n_positioning();
    let ns = channels.n_sensing();
    let noise_var = if y.noise_var > 0.0 {
        y.noise_var
    } else {
        let power = y.y.iter().map(|z| z.norm_sqr()).sum::<f64>() / k as f64;
        (power * options.noise_floor).max(f64::MIN_POSITIVE)
    };
    let epsilon = options.epsilon_margin * k as f64 * noise_var;
    let expected_vehicles = priors.symbol.sparsity * np as f64;

    let mut est = Estimate::initial(np, ns);
    est.residual = y.y.iter().map(|z| z.norm_sqr()).sum();
    let mut symbol_prior = priors.symbol.clone();
    let mut scatter_prior = priors.scatter;
    let mut best = est.residual;
    let mut since_best = 0;
    let mut ramp_step = 0;
    let mut stop = StopReason::MaxIters;

    for t in 0..options.max_outer_iters {
        if est.residual <= epsilon {
            stop = StopReason::Converged;
            break;
        }

        // symbols on the surviving pixels
        let sys = symbol_system(channels, &est.p_hat, &est.x_hat, &y.y);
        let active = sys.columns.clone();
        let prior_t = if options.adapt_sparsity {
            symbol_prior.with_sparsity((expected_vehicles / active.len() as f64).clamp(symbol_prior.sparsity, 0.95))
        } else {
            symbol_prior.clone()
        };
        let sym = match gamp_solve(&sys, &prior_t, &NoiseVar::Scalar(noise_var), &options.gamp) {
            Ok(st) => st,
            Err(e) => bail!(e.into_error("symbol detection")),
        };
        if options.em {
            let refined = em_refine(&prior_t, &sym, &options.em_options).prior;
            symbol_prior = SymbolPrior { sparsity: symbol_prior.sparsity, ..refined };
        }
        let mut s_soft = vec![ZERO; np];
        let mut s_var = vec![0.0; np];
        for (c, &n) in active.iter().enumerate() {
            s_soft[n] = sym.estimate[c];
            s_var[n] = sym.variance[c];
        }

        // occupancy update
        let beta = schedule.beta(ramp_step);
        let mut p_next = est.p_hat.clone();
        for &n in &active {
            if s_soft[n].norm() <= beta {
                p_next[n] = 0;
            }
        }
        if p_next.iter().all(|&b| b == 0) {
            if let Some(&keep) = active.iter().max_by(|&&a, &&b| s_soft[a].norm().total_cmp(&s_soft[b].norm())) {
                p_next[keep] = 1;
            }
        }
        for n in 0..np {
            if p_next[n] == 0 {
                s_soft[n] = ZERO;
                s_var[n] = 0.0;
            }
        }

        // scattering map against the symbol-compensated residual
        let complex = scatter_system(channels, &p_next, &s_soft, &y.y);
        let hv_rows = model_rows(channels, &p_next, &vec![0.0; ns]);
        let row_var: Vec<f64> = (0..k)
            .map(|kk| {
                let extra: f64 = (0..np).map(|n| hv_rows[(kk, n)].norm_sqr() * s_var[n]).sum();
                0.5 * (noise_var + extra)
            })
            .collect();
        let real_var: Vec<f64> = row_var.iter().chain(&row_var).copied().collect();
        let scat = match gamp_solve(&complex.stack_real(), &scatter_prior, &NoiseVar::PerRow(real_var), &options.gamp) {
            Ok(st) => st,
            Err(e) => bail!(e.into_error("scattering reconstruction")),
        };
        if options.em {
            scatter_prior = scatter_prior.em_step(&scat.pseudo, &scat.pseudo_var, &options.em_options).prior;
        }
        let x_next: Vec<f64> = scat.estimate.iter().map(|x| x.clamp(0.0, 1.0)).collect();

        let residual = model_residual(channels, &p_next, &x_next, &s_soft, &y.y);
        if !residual.is_finite() {
            bail!(Error::Diverged { stage: "outer loop", iteration: t + 1 });
        }
        let rose = residual > est.residual;
        est = Estimate { p_hat: p_next, s_hat: s_soft, x_hat: x_next, iteration: t + 1, residual };
        trace.push(IterationRecord {
            t: t + 1,
            beta,
            residual,
            p_hat: est.p_hat.clone(),
            s_hat: est.s_hat.clone(),
            x_hat: est.x_hat.clone(),
            symbol_iters: sym.iterations,
            scatter_iters: scat.iterations,
        });
        if !(options.hold_on_rise && rose) {
            ramp_step += 1;
        }

        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if options.patience > 0 && since_best >= options.patience {
                stop = StopReason::Stalled;
                break;
            }
        }
    }
    if stop == StopReason::MaxIters && est.residual <= epsilon {
        stop = StopReason::Converged;
    }

    est.s_hat = hard_decisions(&est.p_hat, &est.s_hat, options.constellation);
    Ok(AoRun { estimate: est, trace, stop, epsilon, noise_var })
}

/// Single pass from the all-ones occupancy with the first threshold.
pub fn run_baseline(
    y: &MeasurementBatch,
    channels: &ChannelSet,
    priors: &AoPriors,
    schedule: &ThresholdSchedule,
    options: &AoOptions,
) -> std::result::Result<AoRun, AoFailure> {
    let single = AoOptions { max_outer_iters: 1, ..*options };
    run_ao(y, channels, priors, &ThresholdSchedule::fixed(schedule.start), &single)
}

/// Numerator and denominator powers of the power ratio at BS `k`.
pub fn power_terms(truth: &GroundTruth, p_hat: &[u8], channels: &ChannelSet, k: usize) -> (f64, f64) {
    let hv = &channels.vehicle[k];
    let hs = &channels.sensing[k];
    let mut known = ZERO;
    let mut unknown = ZERO;
    for j in truth.occupied() {
        let sj = truth.s[j];
        for i in 0..p_hat.len() {
            known += hv[(i, j)] * sj * p_hat[i] as f64;
            let q = p_hat[i] as f64 - truth.p[i] as f64;
            unknown -= hv[(i, j)] * sj * q;
        }
        for (m, &xm) in truth.x.iter().enumerate() {
            unknown += hs[(m, j)] * sj * xm;
        }
    }
    (known.norm_sqr(), unknown.norm_sqr())
}

/// Power ratio at BS `k`: `|(p + q)^T H^V_k s|² / |x^T H^s_k s − q^T H^V_k s|²`.
/// Infinite when the denominator vanishes.
pub fn power_ratio_at(truth: &GroundTruth, p_hat: &[u8], channels: &ChannelSet, k: usize) -> f64 {
    let (num, den) = power_terms(truth, p_hat, channels, k);
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Power ratio averaged over all base stations.
pub fn power_ratio(truth: &GroundTruth, p_hat: &[u8], channels: &ChannelSet) -> f64 {
    let k = channels.n_base_stations();
    let mut acc = 0.0;
    for kk in 0..k {
        let d = power_ratio_at(truth, p_hat, channels, kk);
        if d.is_infinite() {
            return f64::INFINITY;
        }
        acc += d;
    }
    acc / k as f64
}

/// Mean-over-BS powers of the three interference terms that corrupt the
/// scattering sub-problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    /// `x^T H^s_k r`: symbol errors seen through the targets.
    pub target_symbol: f64,
    /// `q^T H^V_k ŝ`: positioning errors.
    pub positioning: f64,
    /// `p^T H^V_k r`: symbol errors on the LOS-dominated vehicle paths.
    pub vehicle_symbol: f64,
}

pub fn error_decomposition(truth: &GroundTruth, estimate: &Estimate, channels: &ChannelSet) -> ErrorTerms {
    let np = truth.p.len();
    let r: Vec<Complex64> = (0..np).map(|j| estimate.s_hat[j] - truth.s[j]).collect();
    let q: Vec<f64> = (0..np).map(|i| estimate.p_hat[i] as f64 - truth.p[i] as f64).collect();
    let k = channels.n_base_stations();
    let mut out = ErrorTerms { target_symbol: 0.0, positioning: 0.0, vehicle_symbol: 0.0 };
    for kk in 0..k {
        let hv = &channels.vehicle[kk];
        let hs = &channels.sensing[kk];
        let (mut a, mut b, mut c) = (ZERO, ZERO, ZERO);
        for j in 0..np {
            for (m, &xm) in truth.x.iter().enumerate() {
                if xm != 0.0 && r[j] != ZERO {
                    a += hs[(m, j)] * r[j] * xm;
                }
            }
            for i in 0..np {
                b += hv[(i, j)] * estimate.s_hat[j] * q[i];
                c += hv[(i, j)] * r[j] * truth.p[i] as f64;
            }
        }
        out.target_symbol += a.norm_sqr();
        out.positioning += b.norm_sqr();
        out.vehicle_symbol += c.norm_sqr();
    }
    let kf = k as f64;
    out.target_symbol /= kf;
    out.positioning /= kf;
    out.vehicle_symbol /= kf;
    out
}
