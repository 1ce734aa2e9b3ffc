use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::prior::Denoiser;
use crate::error::Error;
use crate::measure::EffectiveSystem;

/// Field the solver runs over: `f64` for stacked-real systems, `Complex64` otherwise.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GampOptions {
    pub max_iters: usize,
    /// Weight of the new iterate in the damped update, in `(0, 1]`.
    pub damping: f64,
    /// Stop once the relative change of the estimate drops below this.
    pub tol: f64,
}

impl Default for GampOptions {
    fn default() -> Self {
        GampOptions { max_iters: 200, damping: 0.7, tol: 1e-8 }
    }
}

/// Output-channel noise variance, shared or per measurement row.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseVar {
    Scalar(f64),
    PerRow(Vec<f64>),
}

impl NoiseVar {
    fn expand(&self, rows: usize) -> Result<Vec<f64>, String> {
        let v = match self {
            NoiseVar::Scalar(v) => vec![*v; rows],
            NoiseVar::PerRow(v) if v.len() == rows => v.clone(),
            NoiseVar::PerRow(v) => return Err(format!("{} noise variances for {rows} rows", v.len())),
        };
        if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err("noise variance must be positive and finite".into());
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual_norm: f64,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampState<T> {
    pub estimate: Vec<T>,
    pub variance: Vec<f64>,
    /// Output-side messages `ŝ` and their variances, one per row.
    pub residual: Vec<T>,
    pub residual_var: Vec<f64>,
    /// Denoiser inputs `r` and `τ` from the last iteration.
    pub pseudo: Vec<T>,
    pub pseudo_var: Vec<f64>,
    pub iterations: usize,
    pub damping: f64,
    pub converged: bool,
    /// Denoiser calls that fell back to a clipped estimate.
    pub clipped: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub enum SolveError<T> {
    Input(String),
    Diverged { iteration: usize, last: Box<GampState<T>> },
}

impl<T> fmt::Display for SolveError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Input(m) => write!(f, "invalid GAMP input: {m}"),
            SolveError::Diverged { iteration, .. } => write!(f, "GAMP diverged at iteration {iteration}"),
        }
    }
}

impl<T: fmt::Debug> std::error::Error for SolveError<T> {}

impl<T> SolveError<T> {
    pub fn into_error(self, stage: &'static str) -> Error {
        match self {
            SolveError::Input(m) => Error::Domain(m),
            SolveError::Diverged { iteration, .. } => Error::Diverged { stage, iteration },
        }
    }
}

// variance standing in for "column carries no information"
const UNINFORMED: f64 = 1e150;

/// Sum-product GAMP for `b = A u + n` with an AWGN output channel.
pub fn gamp_solve<T: Scalar, D: Denoiser<T>>(
    system: &EffectiveSystem<T>,
    prior: &D,
    noise: &NoiseVar,
    options: &GampOptions,
) -> Result<GampState<T>, SolveError<T>> {
    let (m, n) = system.a.dim();
    if system.b.len() != m {
        return Err(SolveError::Input(format!("b has {} entries for {m} rows", system.b.len())));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(SolveError::Input("damping must lie in (0, 1]".into()));
    }
    let nv = noise.expand(m).map_err(SolveError::Input)?;
    let a: Vec<T> = system.a.iter().copied().collect();
    if a.iter().chain(&system.b).any(|z| !z.finite()) {
        return Err(SolveError::Input("non-finite entries in A or b".into()));
    }
    let a2: Vec<f64> = a.iter().map(|z| z.abs2()).collect();
    let d = options.damping;

    let (m0, v0) = prior.prior_moments();
    let mut state = GampState {
        estimate: vec![m0; n],
        variance: vec![v0; n],
        residual: vec![T::zero(); m],
        residual_var: vec![0.0; m],
        pseudo: vec![m0; n],
        pseudo_var: vec![UNINFORMED; n],
        iterations: 0,
        damping: d,
        converged: false,
        clipped: 0,
        trace: Vec::new(),
    };
    if n == 0 {
        state.converged = true;
        return Ok(state);
    }

    let mut vp = vec![0.0; m];
    let mut p = vec![T::zero(); m];
    let mut col_acc = vec![T::zero(); n];
    let mut col_var = vec![0.0; n];

    for it in 1..=options.max_iters {
        let last = state.clone();
        let diverged = |s: GampState<T>| SolveError::Diverged { iteration: it, last: Box::new(s) };

        // output side
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let row2 = &a2[i * n..(i + 1) * n];
            let mut acc = T::zero();
            let mut var = 0.0;
            for j in 0..n {
                acc += row[j] * state.estimate[j];
                var += row2[j] * state.variance[j];
            }
            vp[i] = var;
            p[i] = acc - state.residual[i] * var;
        }
        for i in 0..m {
            let denom = vp[i] + nv[i];
            let s_new = (system.b[i] - p[i]) * (1.0 / denom);
            let vs_new = 1.0 / denom;
            if it == 1 {
                state.residual[i] = s_new;
                state.residual_var[i] = vs_new;
            } else {
                state.residual[i] = s_new * d + state.residual[i] * (1.0 - d);
                state.residual_var[i] = d * vs_new + (1.0 - d) * state.residual_var[i];
            }
        }

        // input side
        col_acc.iter_mut().for_each(|z| *z = T::zero());
        col_var.iter_mut().for_each(|z| *z = 0.0);
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let row2 = &a2[i * n..(i + 1) * n];
            let si = state.residual[i];
            let vsi = state.residual_var[i];
            for j in 0..n {
                col_acc[j] += row[j].conj() * si;
                col_var[j] += row2[j] * vsi;
            }
        }
        let mut change = 0.0;
        let mut norm = 0.0;
        for j in 0..n {
            let (r, tau) = if col_var[j] > 0.0 && (1.0 / col_var[j]) < UNINFORMED {
                let tau = 1.0 / col_var[j];
                (state.estimate[j] + col_acc[j] * tau, tau)
            } else {
                (m0, UNINFORMED)
            };
            if !r.finite() || !tau.is_finite() {
                return Err(diverged(last));
            }
            let post = match prior.denoise(r, tau) {
                Ok(post) => post,
                Err(_) => return Err(diverged(last)),
            };
            if post.clipped {
                state.clipped += 1;
            }
            state.pseudo[j] = r;
            state.pseudo_var[j] = tau;
            let old = state.estimate[j];
            let (x, v) = if it == 1 {
                (post.mean, post.var)
            } else {
                (post.mean * d + old * (1.0 - d), d * post.var + (1.0 - d) * state.variance[j])
            };
            state.estimate[j] = x;
            state.variance[j] = v;
            change += (x - old).abs2();
            norm += x.abs2();
        }

        let mut res = 0.0;
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let mut acc = system.b[i];
            for j in 0..n {
                acc = acc - row[j] * state.estimate[j];
            }
            res += acc.abs2();
        }
        let rel_change = if norm > 0.0 { (change / norm).sqrt() } else { change.sqrt() };
        if !res.is_finite() || !rel_change.is_finite() {
            return Err(diverged(last));
        }
        state.iterations = it;
        state.trace.push(TraceRow { iteration: it, residual_norm: res.sqrt(), change: rel_change });
        if it > 1 && rel_change < options.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
