use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::subroutines::Tier;

/// Keys accepted in [`QnpeConfig::t_bits`].
pub const T_BITS_KEYS: [&str; 5] = ["neighbor_estimation", "difference", "inversion", "qsve", "ridge"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QnpeConfig {
    /// Neighbor radius.
    pub r: f64,
    /// Target dimension.
    pub d: usize,
    /// Ridge constant; `None` uses the classical default.
    pub alpha: Option<f64>,
    /// Global error ε.
    pub eps: f64,
    /// Minimum-distance floor ε₀; `None` takes the smallest nonzero pairwise
    /// distance of the data.
    pub eps0: Option<f64>,
    /// Distance-write error ε₁; `None` means ε²ε₀².
    pub eps1: Option<f64>,
    /// Fixed-point search target δ′.
    pub delta_prime: f64,
    /// Estimation-register widths overriding the derived defaults.
    pub t_bits: BTreeMap<String, u32>,
    pub tier: Tier,
    pub seed: u64,
    /// ℓ₂ precision of the weight-row tomography.
    pub tomography_delta: f64,
    /// ℓ₂ precision of the classical readout of each |a_j>.
    pub readout_delta: f64,
    /// Absolute singular-value precision; `None` means ε/4.
    pub sigma_eps: Option<f64>,
    /// Nonzero threshold v; `None` means three grid cells, 3·sigma_eps.
    pub zero_threshold: Option<f64>,
    /// Median repetitions of singular value estimation.
    pub qsve_boost: usize,
    /// Independent minimum-finding attempts ρ.
    pub min_repetitions: usize,
    /// Neighbor readout samples per K̂ ln K̂.
    pub sample_factor: f64,
    /// Run the classical pipeline too and attach the comparison.
    pub compare: bool,
}

impl Default for QnpeConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            d: 2,
            alpha: None,
            eps: 0.05,
            eps0: None,
            eps1: None,
            delta_prime: 0.05,
            t_bits: BTreeMap::new(),
            tier: Tier::Spectral,
            seed: 0,
            tomography_delta: 0.03,
            readout_delta: 0.02,
            sigma_eps: None,
            zero_threshold: None,
            qsve_boost: 15,
            min_repetitions: 7,
            sample_factor: 3.0,
            compare: false,
        }
    }
}

/// Tolerances with every default filled in for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Oracle failure probability δ = ε₀ε.
    pub delta: f64,
    pub sigma_eps: f64,
    pub zero_threshold: f64,
    pub alpha: f64,
}

impl QnpeConfig {
    pub fn new(r: f64, d: usize) -> Self {
        Self {
            r,
            d,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r", self.r),
            ("eps", self.eps),
            ("delta_prime", self.delta_prime),
            ("tomography_delta", self.tomography_delta),
            ("readout_delta", self.readout_delta),
            ("sample_factor", self.sample_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("eps0", self.eps0),
            ("eps1", self.eps1),
            ("sigma_eps", self.sigma_eps),
            ("zero_threshold", self.zero_threshold),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Parameter(format!("alpha must be >= 0, got {a}")));
            }
        }
        if self.d == 0 {
            return Err(Error::Parameter("d must be at least 1".into()));
        }
        if self.delta_prime >= 1.0 || self.eps >= 1.0 {
            return Err(Error::Parameter(format!(
                "eps and delta_prime must be below 1, got {} and {}",
                self.eps, self.delta_prime
            )));
        }
        if self.qsve_boost == 0 || self.min_repetitions == 0 {
            return Err(Error::Parameter(
                "qsve_boost and min_repetitions must be at least 1".into(),
            ));
        }
        if let Some(k) = self.t_bits.keys().find(|k| !T_BITS_KEYS.contains(&k.as_str())) {
            return Err(Error::Parameter(format!(
                "unknown t_bits key `{k}` (expected one of {})",
                T_BITS_KEYS.join(", ")
            )));
        }
        if let Some((k, _)) = self.t_bits.iter().find(|(_, &v)| v == 0 || v > 24) {
            return Err(Error::Parameter(format!("t_bits[{k}] must lie in 1..=24")));
        }
        Ok(())
    }

    pub fn bits(&self, key: &str) -> Option<u32> {
        self.t_bits.get(key).copied()
    }

    pub fn resolve(&self, x: &DataMatrix) -> Result<ResolvedTolerances> {
        self.validate()?;
        let eps0 = match self.eps0 {
            Some(v) => v,
            None => x.min_nonzero_distance().ok_or_else(|| {
                Error::Parameter("all points coincide, ε₀ is undefined".into())
            })?,
        };
        let eps = self.eps;
        let sigma_eps = self.sigma_eps.unwrap_or(eps / 4.0);
        Ok(ResolvedTolerances {
            eps,
            eps0,
            eps1: self.eps1.unwrap_or(eps * eps * eps0 * eps0),
            delta: (eps0 * eps).min(0.5),
            sigma_eps,
            zero_threshold: self.zero_threshold.unwrap_or(3.0 * sigma_eps),
            alpha: self
                .alpha
                .unwrap_or_else(|| crate::classical::default_alpha(x)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        QnpeConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = QnpeConfig::new(1.0, 0);
        assert!(c.validate().is_err());
        c.d = 2;
        c.eps = -1.0;
        assert!(c.validate().is_err());
        c.eps = 0.05;
        c.t_bits.insert("bogus".into(), 3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn tolerance_split() {
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 2.0]]).unwrap();
        let t = QnpeConfig::new(1.0, 1).resolve(&x).unwrap();
        assert_eq!(t.eps0, 0.5);
        assert!((t.eps1 - 0.05f64.powi(2) * 0.25).abs() < 1e-15);
        assert!((t.delta - 0.025).abs() < 1e-15);
        assert!((t.zero_threshold - 3.0 * 0.0125).abs() < 1e-15);
    }
}
