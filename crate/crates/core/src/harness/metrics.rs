//! Per-trial metrics and their aggregation.

use serde::{Deserialize, Serialize};

use crate::ao::Estimate;
use crate::scene::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// `pᵀp̂ / N_p`.
    pub detection_rate_paper: f64,
    /// `pᵀp̂ / ‖p‖₁`, 1 when there are no vehicles.
    pub detection_tpr: f64,
    /// Share of vehicles whose symbol is wrong or missed.
    pub ser: f64,
    /// `‖x − x̂‖² / N_s`.
    pub mse: f64,
}

pub fn compute_metrics(truth: &GroundTruth, estimate: &Estimate) -> TrialMetrics {
    let np = truth.p.len();
    let nv = truth.n_vehicles();
    let hits = truth.p.iter().zip(&estimate.p_hat).filter(|(&p, &q)| p == 1 && q == 1).count();
    let errors = truth
        .occupied()
        .filter(|&n| estimate.p_hat[n] == 0 || (estimate.s_hat[n] - truth.s[n]).norm() > 1e-9)
        .count();
    let mse = truth.x.iter().zip(&estimate.x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.x.len().max(1) as f64;
    TrialMetrics {
        detection_rate_paper: hits as f64 / np as f64,
        detection_tpr: if nv == 0 { 1.0 } else { hits as f64 / nv as f64 },
        ser: if nv == 0 { 0.0 } else { errors as f64 / nv as f64 },
        mse,
    }
}

/// Sample mean and its standard error `sd / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { mean, stderr: 0.0, n };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Summary { mean, stderr: (var / n as f64).sqrt(), n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn truth() -> GroundTruth {
        let mut t = GroundTruth::empty(4, 3);
        t.p = vec![1, 0, 1, 0];
        t.s[0] = Complex64::new(1.0, 0.0);
        t.s[2] = Complex64::new(0.0, 1.0);
        t.x = vec![1.0, 0.0, 0.0];
        t
    }

    fn estimate(p: Vec<u8>, s: Vec<Complex64>, x: Vec<f64>) -> Estimate {
        Estimate { p_hat: p, s_hat: s, x_hat: x, iteration: 1, residual: 0.0 }
    }

    #[test]
    fn perfect_estimate() {
        let t = truth();
        let m = compute_metrics(&t, &estimate(t.p.clone(), t.s.clone(), t.x.clone()));
        assert_eq!(m, TrialMetrics { detection_rate_paper: 0.5, detection_tpr: 1.0, ser: 0.0, mse: 0.0 });
    }

    #[test]
    fn empty_detection() {
        let t = truth();
        let m = compute_metrics(&t, &estimate(vec![0; 4], vec![Complex64::new(0.0, 0.0); 4], vec![0.0; 3]));
        assert_eq!((m.detection_tpr, m.ser, m.detection_rate_paper), (0.0, 1.0, 0.0));
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missed_vehicle_counts_as_symbol_error() {
        let t = truth();
        let mut s = t.s.clone();
        s[2] = Complex64::new(0.0, 0.0);
        let m = compute_metrics(&t, &estimate(vec![1, 0, 0, 0], s, t.x.clone()));
        assert_eq!((m.ser, m.detection_tpr), (0.5, 0.5));
    }

    #[test]
    fn no_vehicles_gives_unit_tpr() {
        let t = GroundTruth::empty(4, 3);
        let m = compute_metrics(&t, &estimate(vec![1; 4], vec![Complex64::new(1.0, 0.0); 4], vec![0.0; 3]));
        assert_eq!((m.detection_tpr, m.ser, m.detection_rate_paper), (1.0, 0.0, 0.0));
    }

    #[test]
    fn summary_stderr() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.stderr - sd / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).stderr, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
    }
}
