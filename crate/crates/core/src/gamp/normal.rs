//! Gaussian tail helpers that stay finite far into the tails.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use errorfunctions::RealErrorFunctions;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    RealErrorFunctions::erfcx(x)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// `Φ(b) − Φ(a)` for the standard normal.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    truncated_standard(a, b).log_mass.exp()
}

#[derive(Debug, Clone, Copy)]
pub struct TruncatedMoments {
    /// `ln(Φ(b) − Φ(a))`.
    pub log_mass: f64,
    pub mean: f64,
    pub var: f64,
}

/// Moments of a standard normal restricted to `[a, b]`, `a < b`.
pub fn truncated_standard(a: f64, b: f64) -> TruncatedMoments {
    debug_assert!(a < b);
    if b <= 0.0 {
        let m = truncated_standard(-b, -a);
        return TruncatedMoments { log_mass: m.log_mass, mean: -m.mean, var: m.var };
    }
    let (log_mass, ra, rb) = if a >= 0.0 {
        // upper tail: Z = ½ e^{-a²/2} (erfcx(a/√2) − erfcx(b/√2) e^{-(b²−a²)/2})
        let shrink = (-0.5 * (b - a) * (b + a)).exp();
        let ea = erfcx(a * FRAC_1_SQRT_2);
        let eb = if b.is_finite() { erfcx(b * FRAC_1_SQRT_2) } else { 0.0 };
        let scaled = ea - eb * shrink;
        let log_mass = -0.5 * a * a + (0.5 * scaled).ln();
        let ra = 2.0 * FRAC_1_SQRT_2PI / scaled;
        (log_mass, ra, ra * shrink)
    } else {
        let z = 0.5 * (erf_or_one(b) - erf_or_one(a));
        let pa = FRAC_1_SQRT_2PI * (-0.5 * a * a).exp();
        let pb = FRAC_1_SQRT_2PI * (-0.5 * b * b).exp();
        (z.ln(), pa / z, pb / z)
    };
    let mean = ra - rb;
    let aa = if a.is_finite() { a * ra } else { 0.0 };
    let bb = if b.is_finite() { b * rb } else { 0.0 };
    let var = (1.0 + aa - bb - mean * mean).max(0.0);
    TruncatedMoments { log_mass, mean: mean.clamp(a, b), var }
}

fn erf_or_one(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        -1.0
    } else {
        RealErrorFunctions::erf(x / SQRT_2)
    }
}

/// Log-sum-exp of a small slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}
