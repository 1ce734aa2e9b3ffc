//! Exhaustive search on tiny single-vehicle instances, used to check the
//! alternating solver where brute force is still affordable.

use num_complex::Complex64;

use crate::ao::{model_residual, run_ao, AoOptions, AoPriors, ThresholdSchedule};
use crate::channel::ChannelSet;
use crate::constellation::ConstellationSpec;
use crate::error::Result;
use crate::gamp::{ScatterPrior, SymbolPrior};
use crate::measure::synthesize;
use crate::scene::{build_geometry, sample_scene, RoiConfig, RoiGeometry, SceneSpec};

/// Best `(pixel, symbol)` pair for a single transmitter and no targets.
pub fn exhaustive_single_vehicle(
    channels: &ChannelSet,
    y: &[Complex64],
    constellation: ConstellationSpec,
) -> (usize, Complex64, f64) {
    let np = channels.n_positioning();
    let zeros = vec![0.0; channels.n_sensing()];
    let mut best = (0, Complex64::new(0.0, 0.0), f64::INFINITY);
    for n in 0..np {
        let mut p = vec![0u8; np];
        p[n] = 1;
        for c in constellation.points() {
            let mut s = vec![Complex64::new(0.0, 0.0); np];
            s[n] = c;
            let r = model_residual(channels, &p, &zeros, &s, y);
            if r < best.2 {
                best = (n, c, r);
            }
        }
    }
    best
}

/// 4 m square split into 2×2 positioning pixels, 12 BSs.
pub fn oracle_geometry() -> Result<RoiGeometry> {
    build_geometry(&RoiConfig {
        length: 4.0,
        width: 4.0,
        positioning_pixel: [2.0, 2.0],
        sensing_pixel: [2.0, 2.0],
        n_base_stations: 12,
        bs_radius: None,
        exclusion_radius: 0.01,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub trials: usize,
    pub agreements: usize,
}

/// Noiseless QPSK, one vehicle, no targets: AO against brute force.
pub fn oracle_agreement(seed: u64, trials: usize) -> Result<OracleReport> {
    let geometry = oracle_geometry()?;
    let channels = ChannelSet::build(&geometry, 30e9, 1.0)?;
    let np = geometry.n_positioning();
    let priors = AoPriors {
        symbol: SymbolPrior::for_constellation(ConstellationSpec::Qpsk, 1.0 / np as f64, 0.1)?,
        scatter: ScatterPrior::new(1.0 / geometry.n_sensing() as f64, 1.0, 0.3)?,
    };
    let spec = SceneSpec::new(1, 0.0, ConstellationSpec::Qpsk);
    let mut agreements = 0;
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let truth = sample_scene(&geometry, &spec, s)?;
        let batch = synthesize(&truth, &channels, f64::INFINITY, s)?;
        let (n, sym, _) = exhaustive_single_vehicle(&channels, &batch.y, ConstellationSpec::Qpsk);
        let run = run_ao(&batch, &channels, &priors, &ThresholdSchedule::default(), &AoOptions::default())?;
        let agrees = run.estimate.p_hat.iter().enumerate().all(|(i, &p)| p == u8::from(i == n))
            && run.estimate.s_hat[n] == sym;
        agreements += usize::from(agrees);
    }
    Ok(OracleReport { trials, agreements })
}
