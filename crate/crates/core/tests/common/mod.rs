//! Independent reference implementations shared by integration and
//! acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use isac_core::channel::ChannelSet;
use isac_core::constellation::ConstellationSpec;
use isac_core::scene::{build_geometry, RoiConfig, RoiGeometry};
use ndarray::Array2;
use num_complex::Complex64;
use quadrature::double_exponential::integrate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn ln_gauss(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * PI * var).ln()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `(ln ∫ e^{h}, ∫ (x−c) e^{h} / ∫ e^{h}, ∫ (x−c)² e^{h} / ∫ e^{h})` over
/// `[lo, hi]` for a log-integrand `h` peaked near `c` with width `s`.
fn moments_1d(h: &dyn Fn(f64) -> f64, c: f64, s: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let (mut a, mut b) = ((c - 40.0 * s).max(lo), (c + 40.0 * s).min(hi));
    if a >= b {
        // peak outside the interval: integrate the 40 decay lengths next to the nearer edge
        if c < lo {
            let len = (40.0 * s * s / (lo - c)).min(hi - lo);
            (a, b) = (lo, lo + len);
        } else {
            let len = (40.0 * s * s / (c - hi)).min(hi - lo);
            (a, b) = (hi - len, hi);
        }
    }
    let peak = h(c.clamp(a, b));
    let mut cuts: Vec<f64> = [-8.0, -3.0, 0.0, 3.0, 8.0].iter().map(|k| c + k * s).filter(|&x| x > a && x < b).collect();
    cuts.insert(0, a);
    cuts.push(b);
    let mut m = [0.0; 3];
    for w in cuts.windows(2) {
        for (k, acc) in m.iter_mut().enumerate() {
            let f = |x: f64| (x - c).powi(k as i32) * (h(x) - peak).exp();
            *acc += integrate(f, w[0], w[1], 1e-16).integral;
        }
    }
    (peak + m[0].ln(), m[1] / m[0], m[2] / m[0])
}

/// Posterior mean and total variance of `u` under the spike plus
/// `CN(θ_m, σ_m²)` mixture prior, observed as `r = u + CN(0, τ)`, by
/// numerical integration over each real axis.
pub fn symbol_posterior_quad(
    sparsity: f64,
    weights: &[f64],
    means: &[Complex64],
    std_devs: &[f64],
    r: Complex64,
    tau: f64,
) -> (Complex64, f64) {
    let mut log_ev = vec![(1.0 - sparsity).ln() + ln_gauss(r.re, 0.0, tau / 2.0) + ln_gauss(r.im, 0.0, tau / 2.0)];
    let mut comp = Vec::new();
    for c in 0..weights.len() {
        let half = std_devs[c].powi(2) / 2.0;
        let mut ev = (sparsity * weights[c]).ln();
        let mut mean = [0.0; 2];
        let mut second = 0.0;
        for (axis, (ra, ta)) in [(r.re, means[c].re), (r.im, means[c].im)].into_iter().enumerate() {
            let h = |u: f64| ln_gauss(u, ta, half) + ln_gauss(ra, u, tau / 2.0);
            let centre = (ta * tau + ra * std_devs[c].powi(2)) / (std_devs[c].powi(2) + tau);
            let width = (half * (tau / 2.0) / (half + tau / 2.0)).sqrt();
            let (lz, m1, m2) = moments_1d(&h, centre, width, f64::NEG_INFINITY, f64::INFINITY);
            ev += lz;
            mean[axis] = centre + m1;
            second += m2 - m1 * m1;
        }
        log_ev.push(ev);
        comp.push((Complex64::new(mean[0], mean[1]), second));
    }
    let z = logsumexp(&log_ev);
    let mut mean = Complex64::new(0.0, 0.0);
    let mut raw = 0.0;
    for (c, (m, v)) in comp.iter().enumerate() {
        let p = (log_ev[c + 1] - z).exp();
        mean += m * p;
        raw += p * (v + m.norm_sqr());
    }
    (mean, raw - mean.norm_sqr())
}

/// Posterior mean and variance of `x` under `(1 − γ·W) δ(x) + γ N(x; θ, σ²) 1{0 < x ≤ 1}`
/// with `W` the Gaussian mass on the window, observed as `r = x + N(0, τ)`.
pub fn scatter_posterior_quad(sparsity: f64, mean: f64, std_dev: f64, r: f64, tau: f64) -> (f64, f64) {
    let var = std_dev * std_dev;
    let prior = |x: f64| ln_gauss(x, mean, var);
    let (log_window, _, _) = moments_1d(&prior, mean, std_dev, 0.0, 1.0);
    let spike = (1.0 - sparsity * log_window.exp()).ln() + ln_gauss(r, 0.0, tau);
    let h = |x: f64| ln_gauss(x, mean, var) + ln_gauss(r, x, tau);
    let centre = (mean * tau + r * var) / (var + tau);
    let width = (var * tau / (var + tau)).sqrt();
    let (lz, m1, m2) = moments_1d(&h, centre, width, 0.0, 1.0);
    let slab = sparsity.ln() + lz;
    let z = logsumexp(&[spike, slab]);
    let p = (slab - z).exp();
    let slab_mean = centre + m1;
    let slab_second = m2 - m1 * m1 + slab_mean * slab_mean;
    let post_mean = p * slab_mean;
    (post_mean, p * slab_second - post_mean * post_mean)
}

/// `y_k = Σ_i Σ_j p_i H^V_k(i,j) s_j + Σ_m Σ_j x_m H^s_k(m,j) s_j`, loop by loop.
pub fn triple_loop(p: &[u8], s: &[Complex64], x: &[f64], ch: &ChannelSet) -> Vec<Complex64> {
    (0..ch.n_base_stations())
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, sj) in s.iter().enumerate() {
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi as f64 * ch.vehicle[k][(i, j)] * sj;
                }
                for (m, &xm) in x.iter().enumerate() {
                    acc += xm * ch.sensing[k][(m, j)] * sj;
                }
            }
            acc
        })
        .collect()
}

/// Brute-force `argmin ‖y − H s‖²` over one vehicle on any pixel with any symbol, no targets.
pub fn brute_force_single(ch: &ChannelSet, y: &[Complex64], constellation: ConstellationSpec) -> (usize, Complex64) {
    let np = ch.n_positioning();
    let mut best = (f64::INFINITY, 0, Complex64::new(0.0, 0.0));
    for n in 0..np {
        let mut p = vec![0u8; np];
        p[n] = 1;
        for c in constellation.points() {
            let mut s = vec![Complex64::new(0.0, 0.0); np];
            s[n] = c;
            let fit = triple_loop(&p, &s, &vec![0.0; ch.n_sensing()], ch);
            let r: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum();
            if r < best.0 {
                best = (r, n, c);
            }
        }
    }
    (best.1, best.2)
}

/// 2×2 positioning pixels of 2 m, 12 BSs.
pub fn tiny_geometry() -> RoiGeometry {
    build_geometry(&RoiConfig {
        length: 4.0,
        width: 4.0,
        positioning_pixel: [2.0, 2.0],
        sensing_pixel: [2.0, 2.0],
        n_base_stations: 12,
        bs_radius: None,
        exclusion_radius: 0.01,
    })
    .unwrap()
}

pub struct CsInstance {
    pub a: Array2<Complex64>,
    pub b: Vec<Complex64>,
    pub truth: Vec<Complex64>,
    pub noise_var: f64,
}

/// 10-sparse `CN(0, 1)` signal in dimension 200, 100 rows of i.i.d.
/// `CN(0, 1/100)`, noise 40 dB below the mean measurement power.
pub fn cs_instance(seed: u64) -> CsInstance {
    let (n, k, sparse) = (200, 100, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cn = |var: f64| {
        let sd = (var / 2.0).sqrt();
        Complex64::new(rng.sample::<f64, _>(StandardNormal) * sd, rng.sample::<f64, _>(StandardNormal) * sd)
    };
    let mut truth = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..sparse {
        truth[j * (n / sparse) + (j * 7) % (n / sparse)] = cn(1.0);
    }
    let a = Array2::from_shape_fn((k, n), |_| cn(1.0 / k as f64));
    let clean: Vec<Complex64> = (0..k).map(|i| (0..n).map(|j| a[(i, j)] * truth[j]).sum()).collect();
    let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / k as f64;
    let noise_var = power * 1e-4;
    let b = clean.into_iter().map(|z| z + cn(noise_var)).collect();
    CsInstance { a, b, truth, noise_var }
}

pub fn nmse_db(est: &[Complex64], truth: &[Complex64]) -> f64 {
    let err: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let pow: f64 = truth.iter().map(|b| b.norm_sqr()).sum();
    10.0 * (err / pow).log10()
}

/// One-sided paired t statistic of `first − second` with its degrees of freedom.
pub fn paired_t(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let t = if se > 0.0 { mean / se } else if mean > 0.0 { f64::INFINITY } else if mean < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    (t, n - 1.0)
}
