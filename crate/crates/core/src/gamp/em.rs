//! EM refinement of prior widths from the denoiser inputs of a finished solve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::normal::truncated_standard;
use super::prior::{ScatterPrior, SymbolPrior};
use super::solver::GampState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    /// Also re-estimate the sparsity.
    pub update_sparsity: bool,
    pub min_std_dev: f64,
    pub max_std_dev: f64,
    /// Responsibility mass below which a component is left untouched.
    pub min_mass: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { update_sparsity: false, min_std_dev: 1e-3, max_std_dev: 10.0, min_mass: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome<P> {
    pub prior: P,
    /// No component had enough responsibility mass to update its width.
    pub degenerate: bool,
}

pub trait EmRefine<T>: Sized {
    /// One EM step given denoiser inputs `r` with variances `tau`.
    fn em_step(&self, r: &[T], tau: &[f64], options: &EmOptions) -> EmOutcome<Self>;
}

pub fn em_refine<T, P: EmRefine<T>>(prior: &P, state: &GampState<T>, options: &EmOptions) -> EmOutcome<P> {
    prior.em_step(&state.pseudo, &state.pseudo_var, options)
}

impl EmRefine<Complex64> for SymbolPrior {
    fn em_step(&self, r: &[Complex64], tau: &[f64], options: &EmOptions) -> EmOutcome<Self> {
        let m = self.weights.len();
        let mut mass = vec![0.0; m];
        let mut spread = vec![0.0; m];
        let mut active = 0.0;
        for (&rn, &tn) in r.iter().zip(tau) {
            if self.sparsity == 0.0 {
                break;
            }
            let (logw, mu, var) = self.components(rn, tn);
            let norm = super::normal::logsumexp(&logw);
            for c in 0..m {
                let w = (logw[c + 1] - norm).exp();
                mass[c] += w;
                spread[c] += w * ((mu[c] - self.means[c]).norm_sqr() + var[c]);
                active += w;
            }
        }
        let mut next = self.clone();
        let mut updated = false;
        for c in 0..m {
            if mass[c] > options.min_mass {
                next.std_devs[c] = (spread[c] / mass[c]).sqrt().clamp(options.min_std_dev, options.max_std_dev);
                updated = true;
            }
        }
        if options.update_sparsity && !r.is_empty() {
            next.sparsity = (active / r.len() as f64).clamp(0.0, 1.0);
        }
        EmOutcome { prior: next, degenerate: !updated }
    }
}

/// Second moment about `mean` of `N(mean, sd²)` restricted to `[0, 1]`.
fn window_spread(mean: f64, sd: f64) -> f64 {
    let tm = truncated_standard(-mean / sd, (1.0 - mean) / sd);
    let shift = sd * tm.mean;
    sd * sd * tm.var + shift * shift
}

impl EmRefine<f64> for ScatterPrior {
    fn em_step(&self, r: &[f64], tau: &[f64], options: &EmOptions) -> EmOutcome<Self> {
        let mut mass = 0.0;
        let mut spread = 0.0;
        if self.sparsity > 0.0 {
            for (&rn, &tn) in r.iter().zip(tau) {
                let (pi, m1, v1) = self.slab_responsibility(rn, tn);
                if pi.is_finite() && m1.is_finite() && v1.is_finite() {
                    mass += pi;
                    spread += pi * (v1 + (m1 - self.mean).powi(2));
                }
            }
        }
        let mut next = *self;
        let degenerate = mass <= options.min_mass;
        if !degenerate {
            // the window-truncated Gaussian is an exponential family in 1/σ²,
            // so the M-step matches its model spread to the posterior spread
            let target = spread / mass;
            let (mut lo, mut hi) = (options.min_std_dev.ln(), options.max_std_dev.ln());
            if window_spread(self.mean, hi.exp()) <= target {
                lo = hi;
            } else if window_spread(self.mean, lo.exp()) >= target {
                hi = lo;
            }
            for _ in 0..200 {
                if hi - lo < 1e-14 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if window_spread(self.mean, mid.exp()) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            next.std_dev = (0.5 * (lo + hi)).exp();
        }
        if options.update_sparsity && !r.is_empty() {
            let slab = mass / r.len() as f64;
            next.sparsity = (slab / next.window_mass()).clamp(0.0, 1.0);
        }
        EmOutcome { prior: next, degenerate }
    }
}
