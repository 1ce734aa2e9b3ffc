use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Unit-modulus phase-shift keying alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationSpec {
    Bpsk,
    Qpsk,
    Psk8,
}

impl ConstellationSpec {
    pub fn order(self) -> usize {
        match self {
            ConstellationSpec::Bpsk => 2,
            ConstellationSpec::Qpsk => 4,
            ConstellationSpec::Psk8 => 8,
        }
    }

    /// Constellation points. QPSK sits on the diagonals, `(±1 ± j)/√2`.
    pub fn points(self) -> Vec<Complex64> {
        let m = self.order();
        let offset = match self {
            ConstellationSpec::Bpsk | ConstellationSpec::Psk8 => 0.0,
            ConstellationSpec::Qpsk => PI / 4.0,
        };
        (0..m)
            .map(|i| Complex64::from_polar(1.0, offset + 2.0 * PI * i as f64 / m as f64))
            .collect()
    }

    /// Index of the nearest constellation point.
    pub fn nearest_index(self, s: Complex64) -> usize {
        self.points()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).norm_sqr().total_cmp(&(b.1 - s).norm_sqr()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn hard_decision(self, s: Complex64) -> Complex64 {
        self.points()[self.nearest_index(s)]
    }
}

impl std::str::FromStr for ConstellationSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationSpec::Bpsk),
            "qpsk" => Ok(ConstellationSpec::Qpsk),
            "psk8" | "8psk" => Ok(ConstellationSpec::Psk8),
            other => Err(format!("unknown constellation `{other}`")),
        }
    }
}
