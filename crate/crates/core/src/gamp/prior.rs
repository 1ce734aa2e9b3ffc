//! Scalar priors and their MMSE denoisers.
//!
//! Each denoiser returns the posterior mean and variance of `u` observed
//! through `r = u + w`, where `w` is `CN(0, τ)` for complex unknowns and
//! `N(0, τ)` for real ones.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::normal::{ln_normal_pdf, logsumexp, truncated_standard};
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior<T> {
    pub mean: T,
    pub var: f64,
    /// Set when a numerical fallback replaced the exact moments.
    pub clipped: bool,
}

pub trait Denoiser<T>: Sync {
    fn denoise(&self, r: T, tau: f64) -> Result<Posterior<T>>;

    /// Prior mean and variance, used to initialise the solver.
    fn prior_moments(&self) -> (T, f64);
}

fn check_input(finite: bool, tau: f64, who: &'static str) -> Result<()> {
    if !finite || !tau.is_finite() || !(tau > 0.0) {
        return Err(Error::NonFinite(who));
    }
    Ok(())
}

/// Spike at zero plus a mixture of circular complex Gaussians
/// `CN(θ_m, σ_m²)` with `E|u − θ_m|² = σ_m²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolPrior {
    pub sparsity: f64,
    pub weights: Vec<f64>,
    pub means: Vec<Complex64>,
    pub std_devs: Vec<f64>,
}

impl SymbolPrior {
    pub fn new(sparsity: f64, weights: Vec<f64>, means: Vec<Complex64>, std_devs: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || std_devs.len() != m {
            return Err(Error::config("symbol_prior", "weights, means and std_devs need equal non-zero length"));
        }
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(Error::config("symbol_prior.sparsity", "must lie in [0, 1]"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("symbol_prior.weights", "must form a probability simplex"));
        }
        if std_devs.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::config("symbol_prior.std_devs", "must be positive"));
        }
        Ok(SymbolPrior { sparsity, weights, means, std_devs })
    }

    /// Uniform mixture over the constellation points with a shared width.
    pub fn for_constellation(spec: ConstellationSpec, sparsity: f64, std_dev: f64) -> Result<Self> {
        let points = spec.points();
        let m = points.len();
        Self::new(sparsity, vec![1.0 / m as f64; m], points, vec![std_dev; m])
    }

    pub fn with_sparsity(&self, sparsity: f64) -> Self {
        SymbolPrior { sparsity: sparsity.clamp(0.0, 1.0), ..self.clone() }
    }

    /// Log evidence of the spike (index 0) and each component, plus the
    /// per-component posterior mean and variance.
    pub(crate) fn components(&self, r: Complex64, tau: f64) -> (Vec<f64>, Vec<Complex64>, Vec<f64>) {
        let m = self.weights.len();
        let mut logw = Vec::with_capacity(m + 1);
        let mut mu = Vec::with_capacity(m);
        let mut var = Vec::with_capacity(m);
        logw.push(if self.sparsity < 1.0 {
            (1.0 - self.sparsity).ln() - r.norm_sqr() / tau - (PI * tau).ln()
        } else {
            f64::NEG_INFINITY
        });
        for c in 0..m {
            let s2 = self.std_devs[c] * self.std_devs[c];
            let total = s2 + tau;
            let w = self.sparsity * self.weights[c];
            logw.push(if w > 0.0 {
                w.ln() - (r - self.means[c]).norm_sqr() / total - (PI * total).ln()
            } else {
                f64::NEG_INFINITY
            });
            mu.push((r * s2 + self.means[c] * tau) / total);
            var.push(s2 * tau / total);
        }
        (logw, mu, var)
    }
}

impl Denoiser<Complex64> for SymbolPrior {
    fn denoise(&self, r: Complex64, tau: f64) -> Result<Posterior<Complex64>> {
        check_input(r.re.is_finite() && r.im.is_finite(), tau, "denoise_symbol")?;
        let zero = Complex64::new(0.0, 0.0);
        if self.sparsity == 0.0 {
            return Ok(Posterior { mean: zero, var: 0.0, clipped: false });
        }
        let (logw, mu, var) = self.components(r, tau);
        let norm = logsumexp(&logw);
        let mut mean = zero;
        let mut second = 0.0;
        for c in 0..mu.len() {
            let w = (logw[c + 1] - norm).exp();
            mean += mu[c] * w;
            second += w * (var[c] + mu[c].norm_sqr());
        }
        let v = (second - mean.norm_sqr()).max(0.0);
        Ok(Posterior { mean, var: v, clipped: false })
    }

    fn prior_moments(&self) -> (Complex64, f64) {
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for c in 0..self.weights.len() {
            let w = self.sparsity * self.weights[c];
            mean += self.means[c] * w;
            second += w * (self.std_devs[c].powi(2) + self.means[c].norm_sqr());
        }
        (mean, (second - mean.norm_sqr()).max(0.0))
    }
}

/// Spike at zero plus a Gaussian restricted to `(0, 1]`; the Gaussian mass
/// falling outside the window is moved onto the spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPrior {
    pub sparsity: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl ScatterPrior {
    pub fn new(sparsity: f64, mean: f64, std_dev: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(Error::config("scatter_prior.sparsity", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::config("scatter_prior.mean", "must lie in [0, 1]"));
        }
        if !(std_dev > 0.0) || !std_dev.is_finite() {
            return Err(Error::config("scatter_prior.std_dev", "must be positive"));
        }
        Ok(ScatterPrior { sparsity, mean, std_dev })
    }

    /// Gaussian mass inside `(0, 1]`.
    pub fn window_mass(&self) -> f64 {
        let s = self.std_dev;
        truncated_standard(-self.mean / s, (1.0 - self.mean) / s).log_mass.exp()
    }

    /// Renormalisation mass `λ_s = γ_s · P(x ∉ (0, 1])`.
    pub fn lambda(&self) -> f64 {
        self.sparsity * (1.0 - self.window_mass())
    }

    /// Total weight of the spike, `1 − γ_s + λ_s`.
    pub fn spike_mass(&self) -> f64 {
        1.0 - self.sparsity + self.lambda()
    }

    /// Slab posterior (`ln evidence`, mean, variance) of `u` given `r`.
    pub(crate) fn slab_posterior(&self, r: f64, tau: f64) -> (f64, f64, f64) {
        let s2 = self.std_dev * self.std_dev;
        let total = s2 + tau;
        let mu = (s2 * r + tau * self.mean) / total;
        let v = s2 * tau / total;
        let sd = v.sqrt();
        let tm = truncated_standard(-mu / sd, (1.0 - mu) / sd);
        let log_ev = self.sparsity.ln() + ln_normal_pdf(r, self.mean, total) + tm.log_mass;
        (log_ev, mu + sd * tm.mean, v * tm.var)
    }

    /// Weight of the slab component under the posterior.
    pub(crate) fn slab_responsibility(&self, r: f64, tau: f64) -> (f64, f64, f64) {
        let (log_slab, m1, v1) = self.slab_posterior(r, tau);
        let log_spike = self.spike_mass().ln() + ln_normal_pdf(r, 0.0, tau);
        let pi = 1.0 / (1.0 + (log_spike - log_slab).exp());
        (pi, m1, v1)
    }
}

impl Denoiser<f64> for ScatterPrior {
    fn denoise(&self, r: f64, tau: f64) -> Result<Posterior<f64>> {
        check_input(r.is_finite(), tau, "denoise_scatter")?;
        if self.sparsity == 0.0 {
            return Ok(Posterior { mean: 0.0, var: 0.0, clipped: false });
        }
        let (pi, m1, v1) = self.slab_responsibility(r, tau);
        if !(pi.is_finite() && m1.is_finite() && v1.is_finite()) {
            // clipped MAP of the slab
            let s2 = self.std_dev * self.std_dev;
            let mu = ((s2 * r + tau * self.mean) / (s2 + tau)).clamp(0.0, 1.0);
            return Ok(Posterior { mean: mu, var: s2 * tau / (s2 + tau), clipped: true });
        }
        let mean = (pi * m1).clamp(0.0, 1.0);
        let var = (pi * (v1 + m1 * m1) - mean * mean).max(0.0);
        Ok(Posterior { mean, var, clipped: false })
    }

    fn prior_moments(&self) -> (f64, f64) {
        let s = self.std_dev;
        let tm = truncated_standard(-self.mean / s, (1.0 - self.mean) / s);
        let slab = self.sparsity * tm.log_mass.exp();
        let m1 = self.mean + s * tm.mean;
        let v1 = s * s * tm.var;
        let mean = slab * m1;
        (mean, (slab * (v1 + m1 * m1) - mean * mean).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qpsk(gamma: f64, sigma: f64) -> SymbolPrior {
        SymbolPrior::for_constellation(ConstellationSpec::Qpsk, gamma, sigma).unwrap()
    }

    #[test]
    fn pure_spike_priors() {
        let p = qpsk(0.0, 0.1);
        let out = p.denoise(Complex64::new(0.7, -0.2), 0.3).unwrap();
        assert_eq!((out.mean, out.var), (Complex64::new(0.0, 0.0), 0.0));
        let s = ScatterPrior::new(0.0, 0.5, 0.3).unwrap();
        let out = s.denoise(0.8, 0.1).unwrap();
        assert_eq!((out.mean, out.var), (0.0, 0.0));
    }

    #[test]
    fn point_mass_prior() {
        let c = Complex64::new(0.3, -0.8);
        let p = SymbolPrior::new(1.0, vec![1.0], vec![c], vec![1e-9]).unwrap();
        let out = p.denoise(Complex64::new(2.0, 1.0), 0.5).unwrap();
        assert!((out.mean - c).norm() < 1e-12);
        assert!(out.var < 1e-15);
    }

    #[test]
    fn symmetric_scatter_prior() {
        let s = ScatterPrior::new(0.3, 0.5, 0.2).unwrap();
        let (pi, m1, _) = s.slab_responsibility(0.5, 0.05);
        assert!((m1 - 0.5).abs() < 1e-14);
        let out = s.denoise(0.5, 0.05).unwrap();
        assert!((out.mean - 0.5 * pi).abs() < 1e-14);
    }

    #[test]
    fn lambda_definition() {
        let s = ScatterPrior::new(0.2, 0.5, 0.3).unwrap();
        // mass of N(0.5, 0.3²) outside [0, 1]
        let outside = 0.095_580_704_545_629_40;
        assert!((s.lambda() - 0.2 * outside).abs() < 1e-14);
        assert!((s.spike_mass() + 0.2 * s.window_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        let p = qpsk(0.1, 0.05);
        assert!(matches!(p.denoise(Complex64::new(f64::NAN, 0.0), 0.1), Err(Error::NonFinite(_))));
        assert!(p.denoise(Complex64::new(0.0, 0.0), 0.0).is_err());
        let s = ScatterPrior::new(0.1, 0.5, 0.3).unwrap();
        assert!(s.denoise(0.2, f64::INFINITY).is_err());
        assert!(SymbolPrior::new(0.1, vec![0.5, 0.4], vec![Complex64::new(1.0, 0.0); 2], vec![0.1; 2]).is_err());
        assert!(ScatterPrior::new(0.1, 1.5, 0.3).is_err());
    }

    #[test]
    fn far_tail_scatter_inputs_stay_in_window() {
        let s = ScatterPrior::new(0.2, 0.5, 0.3).unwrap();
        for r in [-1e3, -40.0, -8.0, 9.0, 55.0, 1e4] {
            for tau in [1e-6, 1e-3, 0.1, 10.0] {
                let out = s.denoise(r, tau).unwrap();
                assert!((0.0..=1.0).contains(&out.mean), "r={r} tau={tau} mean={}", out.mean);
                assert!(out.var.is_finite() && out.var >= 0.0);
            }
        }
    }

    #[test]
    fn prior_moments_match_uninformative_posterior() {
        let s = ScatterPrior::new(0.25, 0.6, 0.2).unwrap();
        let out = s.denoise(0.3, 1e12).unwrap();
        let (m, v) = s.prior_moments();
        assert!((out.mean - m).abs() < 1e-9 && (out.var - v).abs() < 1e-9);
        let p = qpsk(0.2, 0.05);
        let out = p.denoise(Complex64::new(0.1, 0.1), 1e12).unwrap();
        let (m, v) = p.prior_moments();
        assert!((out.mean - m).norm() < 1e-9 && (out.var - v).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn scatter_mean_in_window(r in -5.0f64..6.0, tau in 1e-4f64..10.0, g in 0.01f64..1.0, th in 0.0f64..=1.0, sd in 0.05f64..2.0) {
            let s = ScatterPrior::new(g, th, sd).unwrap();
            let out = s.denoise(r, tau).unwrap();
            prop_assert!((0.0..=1.0).contains(&out.mean));
            let (pm, pv) = s.prior_moments();
            prop_assert!(out.var >= 0.0 && out.var <= tau + pv + pm * pm + 1e-12);
        }

        #[test]
        fn symbol_mean_bounded(re in -4.0f64..4.0, im in -4.0f64..4.0, tau in 1e-4f64..10.0, g in 0.01f64..1.0, sd in 0.01f64..0.5) {
            let p = qpsk(g, sd);
            let out = p.denoise(Complex64::new(re, im), tau).unwrap();
            prop_assert!(out.mean.norm() <= (re * re + im * im).sqrt().max(1.0) + 1e-12);
            let (pm, pv) = p.prior_moments();
            prop_assert!(out.var >= 0.0 && out.var <= tau + pv + pm.norm_sqr() + 1e-12);
        }

        #[test]
        fn small_noise_trusts_observation(r in 0.05f64..0.95) {
            let s = ScatterPrior::new(0.3, 0.5, 0.3).unwrap();
            let out = s.denoise(r, 1e-10).unwrap();
            prop_assert!((out.mean - r).abs() < 1e-4);
            let p = SymbolPrior::new(1.0, vec![1.0], vec![Complex64::new(0.0, 0.0)], vec![1.0]).unwrap();
            let z = Complex64::new(r, -r);
            prop_assert!((p.denoise(z, 1e-10).unwrap().mean - z).norm() < 1e-8);
        }
    }
}
