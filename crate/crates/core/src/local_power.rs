//! Asymptotic local power of the split-sample encompassing test.
//!
//! Under local alternatives γ = c / T^κ the statistic converges to
//! `N(drift, 1)` with
//!
//! ```text
//! drift = √(1 − π0) · √(4μ0(1 − μ0) / ((1 − 2μ0)² φ²)) · c'(M22 − M21 M11⁻¹ M12)c
//! ```
//!
//! where `M` is the second-moment matrix `Q` of the regressors (stationary
//! predictors, κ = 1/4) or its normalized counterpart `Vᵇ` (mildly integrated
//! predictors, κ = 1/4 + α/2). The algebra is identical in both cases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::enc_test::{split_variance_factor, validate_mu0};
use crate::error::{EncError, Result};
use crate::normal;

/// Partitioned moment matrix along (x̃₁, x₂) plus the test settings.
///
/// Blocks are row-major nested vectors: `m11` is `k1 × k1`, `m12` is
/// `k1 × p2`, `m21` is `p2 × k1`, `m22` is `p2 × p2`, and `c` has `p2` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalPowerInput {
    pub c: Vec<f64>,
    pub m11: Vec<Vec<f64>>,
    pub m12: Vec<Vec<f64>>,
    pub m21: Vec<Vec<f64>>,
    pub m22: Vec<Vec<f64>>,
    pub phi2: f64,
    pub mu0: f64,
    pub pi0: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPower {
    pub drift: f64,
    pub power: f64,
}

fn block(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(EncError::DimensionMismatch(format!(
            "block {name} must be {nrows} x {ncols}"
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EncError::NonFinite("moment block"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl LocalPowerInput {
    /// `c'(M22 − M21 M11⁻¹ M12)c`.
    pub fn schur_quadratic_form(&self) -> Result<f64> {
        let k1 = self.m11.len();
        let p2 = self.c.len();
        let m11 = block(&self.m11, k1, k1, "m11")?;
        let m12 = block(&self.m12, k1, p2, "m12")?;
        let m21 = block(&self.m21, p2, k1, "m21")?;
        let m22 = block(&self.m22, p2, p2, "m22")?;
        let schur = if k1 == 0 {
            m22
        } else {
            let lu = m11.clone().lu();
            let scale = m11.abs().max().max(f64::MIN_POSITIVE);
            let smallest_pivot = lu.u().diagonal().abs().min();
            if !(smallest_pivot > 1e-12 * scale) {
                return Err(EncError::SingularBlock("m11 is not invertible".into()));
            }
            let solved = lu
                .solve(&m12)
                .ok_or_else(|| EncError::SingularBlock("m11 is not invertible".into()))?;
            m22 - m21 * solved
        };
        let c = DVector::from_column_slice(&self.c);
        Ok(c.dot(&(schur * &c)))
    }

    fn validate(&self) -> Result<()> {
        validate_mu0(self.mu0)?;
        if !(self.phi2 > 0.0) || !self.phi2.is_finite() {
            return Err(EncError::InvalidSpec(format!(
                "phi2 = {} must be positive",
                self.phi2
            )));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "pi0 = {} must lie in (0, 1)",
                self.pi0
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "level = {} must lie in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Drift multiplier `√(1 − π0) · √(4μ0(1 − μ0)/((1 − 2μ0)² φ²))`.
pub fn drift_scale(mu0: f64, pi0: f64, phi2: f64) -> f64 {
    (1.0 - pi0).sqrt() * (1.0 / (split_variance_factor(mu0) * phi2)).sqrt()
}

/// `1 − Φ(z_{1−level} − drift)`; exactly `level` when there is no drift.
pub fn power_from_drift(drift: f64, level: f64) -> f64 {
    if drift == 0.0 {
        return level;
    }
    normal::sf(normal::quantile(1.0 - level) - drift)
}

fn local_power(input: &LocalPowerInput) -> Result<LocalPower> {
    input.validate()?;
    let form = input.schur_quadratic_form()?;
    let drift = drift_scale(input.mu0, input.pi0, input.phi2) * form;
    Ok(LocalPower {
        drift,
        power: power_from_drift(drift, input.level),
    })
}

/// Local power with stationary predictors (blocks of `Q`).
pub fn local_power_stationary(input: &LocalPowerInput) -> Result<LocalPower> {
    local_power(input)
}

/// Local power with mildly integrated predictors (blocks of `Vᵇ`).
pub fn local_power_mild(input: &LocalPowerInput) -> Result<LocalPower> {
    local_power(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(c: f64, m22: f64) -> LocalPowerInput {
        LocalPowerInput {
            c: vec![c],
            m11: vec![vec![1.0]],
            m12: vec![vec![0.0]],
            m21: vec![vec![0.0]],
            m22: vec![vec![m22]],
            phi2: 1.0,
            mu0: 0.45,
            pi0: 0.25,
            level: 0.10,
        }
    }

    #[test]
    fn scalar_golden_value() {
        let r = local_power_stationary(&scalar(1.0, 1.0)).unwrap();
        let expected = 0.75f64.sqrt() * (0.99f64 / 0.01).sqrt();
        assert!((r.drift - expected).abs() < 1e-12);
        assert!((r.drift - 8.616_844).abs() < 1e-6);
        assert!(r.power > 0.999_999);
    }

    #[test]
    fn no_drift_recovers_level() {
        let r = local_power_stationary(&scalar(0.0, 1.0)).unwrap();
        assert_eq!(r.drift, 0.0);
        assert_eq!(r.power, 0.10);
        assert_eq!(local_power_mild(&scalar(0.0, 3.0)).unwrap().power, 0.10);
    }

    #[test]
    fn collinear_block_gives_zero_drift() {
        // M12 is the first column of M11, so M11⁻¹ M12 = e1 and
        // M21 M11⁻¹ M12 = M21 e1 = 2 = M22.
        let input = LocalPowerInput {
            c: vec![1.5],
            m11: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
            m12: vec![vec![2.0], vec![0.5]],
            m21: vec![vec![2.0, 0.5]],
            m22: vec![vec![2.0]],
            ..scalar(0.0, 0.0)
        };
        let r = local_power_stationary(&input).unwrap();
        assert!(r.drift.abs() < 1e-12);
        assert!((r.power - 0.10).abs() < 1e-10);
    }

    #[test]
    fn mild_matches_stationary_and_is_linear_in_block() {
        let a = local_power_stationary(&scalar(0.3, 1.0)).unwrap();
        let b = local_power_mild(&scalar(0.3, 1.0)).unwrap();
        assert_eq!(a, b);
        let doubled = local_power_mild(&scalar(0.3, 2.0)).unwrap();
        assert!((doubled.drift - 2.0 * a.drift).abs() < 1e-12);
    }

    #[test]
    fn drift_increases_toward_half() {
        let mut last = 0.0;
        for i in 0..=38 {
            let mu0 = (10 + i) as f64 / 100.0;
            let input = LocalPowerInput {
                mu0,
                ..scalar(0.5, 1.0)
            };
            let d = local_power_stationary(&input).unwrap().drift;
            assert!(d > last, "mu0 = {mu0}");
            last = d;
        }
    }

    #[test]
    fn singular_block_and_bad_settings() {
        let input = LocalPowerInput {
            m11: vec![vec![0.0]],
            ..scalar(1.0, 1.0)
        };
        assert!(matches!(
            local_power_stationary(&input),
            Err(EncError::SingularBlock(_))
        ));
        let input = LocalPowerInput {
            mu0: 0.5,
            ..scalar(1.0, 1.0)
        };
        assert!(matches!(
            local_power_stationary(&input),
            Err(EncError::InvalidSplit(_))
        ));
        let input = LocalPowerInput {
            m12: vec![vec![0.0, 1.0]],
            ..scalar(1.0, 1.0)
        };
        assert!(matches!(
            local_power_stationary(&input),
            Err(EncError::DimensionMismatch(_))
        ));
    }
}
