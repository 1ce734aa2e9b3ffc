//! Received-symbol synthesis and the two linear systems the solver consumes.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::scene::GroundTruth;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBatch {
    pub y: Vec<Complex64>,
    /// Complex noise variance `E|n_k|²`; zero when noise is disabled.
    pub noise_var: f64,
    pub snr_db: f64,
    pub doppler: bool,
    pub seed: u64,
}

/// Noiseless `p^T H^V_k s + x^T H^s_k s` for every BS.
pub fn noiseless(p: &[u8], s: &[Complex64], x: &[f64], channels: &ChannelSet) -> Vec<Complex64> {
    let hv = &channels.vehicle;
    let hs = &channels.sensing;
    (0..channels.n_base_stations())
        .map(|k| {
            let mut acc = ZERO;
            for (j, &sj) in s.iter().enumerate() {
                if sj == ZERO {
                    continue;
                }
                let mut col = ZERO;
                for (i, &pi) in p.iter().enumerate() {
                    if pi != 0 {
                        col += hv[k][(i, j)];
                    }
                }
                for (m, &xm) in x.iter().enumerate() {
                    if xm != 0.0 {
                        col += hs[k][(m, j)] * xm;
                    }
                }
                acc += col * sj;
            }
            acc
        })
        .collect()
}

fn check_dims(truth: &GroundTruth, channels: &ChannelSet) -> Result<()> {
    if truth.p.len() != channels.n_positioning() || truth.x.len() != channels.n_sensing() {
        return Err(Error::Dimension(format!(
            "scene has {}/{} pixels, channels expect {}/{}",
            truth.p.len(),
            truth.x.len(),
            channels.n_positioning(),
            channels.n_sensing()
        )));
    }
    Ok(())
}

/// Received symbols for `truth` at `snr_db` (use `f64::INFINITY` for no noise).
///
/// The noise variance is calibrated against the mean noiseless power over
/// all BSs.
pub fn synthesize(
    truth: &GroundTruth,
    channels: &ChannelSet,
    snr_db: f64,
    seed: u64,
) -> Result<MeasurementBatch> {
    check_dims(truth, channels)?;
    let signal = noiseless(&truth.p, &truth.s, &truth.x, channels);
    let power = signal.iter().map(|z| z.norm_sqr()).sum::<f64>() / signal.len() as f64;
    if snr_db == f64::INFINITY {
        return Ok(MeasurementBatch { y: signal, noise_var: 0.0, snr_db, doppler: false, seed });
    }
    if !snr_db.is_finite() {
        return Err(Error::domain(format!("invalid SNR {snr_db} dB")));
    }
    if power == 0.0 {
        return Err(Error::domain("noiseless signal is zero; cannot calibrate noise to an SNR"));
    }
    let noise_var = power / 10f64.powf(snr_db / 10.0);
    let sd = (noise_var / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = signal
        .into_iter()
        .map(|z| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            z + Complex64::new(re * sd, im * sd)
        })
        .collect();
    Ok(MeasurementBatch { y, noise_var, snr_db, doppler: false, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownKind {
    Symbols,
    Scattering,
}

/// `b ≈ A u` for one sub-problem. `columns[c]` is the pixel index of column `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSystem<T> {
    pub a: Array2<T>,
    pub b: Vec<T>,
    pub kind: UnknownKind,
    pub columns: Vec<usize>,
}

impl<T> EffectiveSystem<T> {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }
}

impl EffectiveSystem<Complex64> {
    /// Real form `[Re b; Im b] = [Re A; Im A] u` for a real unknown.
    pub fn stack_real(&self) -> EffectiveSystem<f64> {
        let (k, n) = self.a.dim();
        let a = Array2::from_shape_fn((2 * k, n), |(r, c)| {
            if r < k {
                self.a[(r, c)].re
            } else {
                self.a[(r - k, c)].im
            }
        });
        let b = self.b.iter().map(|z| z.re).chain(self.b.iter().map(|z| z.im)).collect();
        EffectiveSystem { a, b, kind: self.kind, columns: self.columns.clone() }
    }
}

/// `K × N_p` model rows `h_k^T = p̂^T H^V_k + x̂^T H^s_k`.
pub fn model_rows(channels: &ChannelSet, p_hat: &[u8], x_hat: &[f64]) -> Array2<Complex64> {
    let k = channels.n_base_stations();
    let np = channels.n_positioning();
    let mut h = Array2::<Complex64>::zeros((k, np));
    for (kk, mut row) in h.rows_mut().into_iter().enumerate() {
        for (i, &pi) in p_hat.iter().enumerate() {
            if pi != 0 {
                row += &channels.vehicle[kk].row(i);
            }
        }
        for (m, &xm) in x_hat.iter().enumerate() {
            if xm != 0.0 {
                row.scaled_add(Complex64::new(xm, 0.0), &channels.sensing[kk].row(m));
            }
        }
    }
    h
}

/// Symbol sub-problem with columns of unoccupied pixels pruned.
pub fn symbol_system(
    channels: &ChannelSet,
    p_hat: &[u8],
    x_hat: &[f64],
    y: &[Complex64],
) -> EffectiveSystem<Complex64> {
    let h = model_rows(channels, p_hat, x_hat);
    let columns: Vec<usize> = (0..p_hat.len()).filter(|&n| p_hat[n] != 0).collect();
    let a = Array2::from_shape_fn((h.nrows(), columns.len()), |(k, c)| h[(k, columns[c])]);
    EffectiveSystem { a, b: y.to_vec(), kind: UnknownKind::Symbols, columns }
}

/// Scattering sub-problem: `b_k = y_k − p̂^T H^V_k ŝ`, `A(k, ·) = (H^s_k ŝ)^T`.
pub fn scatter_system(
    channels: &ChannelSet,
    p_hat: &[u8],
    s_hat: &[Complex64],
    y: &[Complex64],
) -> EffectiveSystem<Complex64> {
    let k = channels.n_base_stations();
    let ns = channels.n_sensing();
    let mut a = Array2::<Complex64>::zeros((k, ns));
    let mut b = y.to_vec();
    let active: Vec<usize> = (0..s_hat.len()).filter(|&j| s_hat[j] != ZERO).collect();
    for kk in 0..k {
        let hv = &channels.vehicle[kk];
        let hs = &channels.sensing[kk];
        for &j in &active {
            let sj = s_hat[j];
            let mut known = ZERO;
            for (i, &pi) in p_hat.iter().enumerate() {
                if pi != 0 {
                    known += hv[(i, j)];
                }
            }
            b[kk] -= known * sj;
            for m in 0..ns {
                a[(kk, m)] += hs[(m, j)] * sj;
            }
        }
    }
    EffectiveSystem { a, b, kind: UnknownKind::Scattering, columns: (0..ns).collect() }
}
