//! Closed-form soliton and Raman relations used to annotate sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{effective_tr_default_grid, FiberParams};
use crate::units::SECH_FWHM_RATIO;

/// Band of the Raman parameter K beyond which self-frequency shift starts to
/// destroy the squeezing.
pub const K_THRESHOLD_BAND: (f64, f64) = (0.05, 0.1);
pub const DEFAULT_K_STAR: f64 = 0.07;

fn anomalous_beta2(fiber: &FiberParams) -> Result<f64> {
    if fiber.beta2 >= 0.0 {
        return Err(Error::invalid(
            "fiber.beta2",
            "bright solitons need anomalous dispersion (beta2 < 0)",
        ));
    }
    Ok(fiber.beta2_per_m().abs())
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(field, "must be > 0"))
    }
}

/// Fundamental-soliton energy `2|β₂|/(γτ)` in pJ for intensity FWHM `fwhm` ps.
pub fn soliton_energy(fiber: &FiberParams, fwhm: f64) -> Result<f64> {
    let b2 = anomalous_beta2(fiber)?;
    let tau = positive("fwhm", fwhm)? / SECH_FWHM_RATIO;
    let gamma = positive("fiber.gamma", fiber.gamma)? * 1e-3;
    Ok(2.0 * b2 / (gamma * tau))
}

/// Soliton order `N = √(τγE/2|β₂|)`.
pub fn soliton_number(fiber: &FiberParams, fwhm: f64, energy: f64) -> Result<f64> {
    let b2 = anomalous_beta2(fiber)?;
    let tau = positive("fwhm", fwhm)? / SECH_FWHM_RATIO;
    let energy = positive("energy", energy)?;
    Ok((tau * fiber.gamma_per_m() * energy / (2.0 * b2)).sqrt())
}

/// Magnitude of the soliton self-frequency shift rate `8T_R|β₂|/(15τ⁴)` in
/// rad·ps⁻¹·m⁻¹. The centroid moves toward lower frequencies (red) at this rate.
pub fn ssfs_rate(fiber: &FiberParams, tau: f64, t_r_fs: f64) -> Result<f64> {
    let tau = positive("tau", tau)?;
    if t_r_fs < 0.0 {
        return Err(Error::invalid("T_R", "must be >= 0"));
    }
    let b2 = fiber.beta2_per_m().abs();
    Ok(8.0 * t_r_fs * 1e-3 * b2 / (15.0 * tau.powi(4)))
}

/// Raman parameter `K = |β₂|·T_R·z/T³` (dimensionless).
pub fn raman_k(fiber: &FiberParams, fwhm: f64, z: f64, t_r_fs: f64) -> Result<f64> {
    let t = positive("fwhm", fwhm)?;
    let z = positive("z", z)?;
    if t_r_fs < 0.0 {
        return Err(Error::invalid("T_R", "must be >= 0"));
    }
    Ok(fiber.beta2_per_m().abs() * t_r_fs * 1e-3 * z / t.powi(3))
}

/// Duration on the iso-K contour: `T = (|β₂|·T_R·z/K*)^{1/3}` in ps.
pub fn optimal_duration(fiber: &FiberParams, z: f64, k_star: f64, t_r_fs: f64) -> Result<f64> {
    if !(k_star > 0.0 && k_star < 1.0) {
        return Err(Error::invalid("K_star", "must lie in (0, 1)"));
    }
    let z = positive("z", z)?;
    let t_r = positive("T_R", t_r_fs)?;
    Ok((fiber.beta2_per_m().abs() * t_r * 1e-3 * z / k_star).cbrt())
}

/// Energies `E = 2·P₀·T/1.763` along a line of constant peak power.
pub fn constant_peak_power_curve(peak_power: f64, durations: &[f64]) -> Result<Vec<(f64, f64)>> {
    if peak_power < 0.0 || !peak_power.is_finite() {
        return Err(Error::invalid("P0", "must be >= 0"));
    }
    Ok(durations
        .iter()
        .map(|&t| (t, 2.0 * peak_power * t / SECH_FWHM_RATIO))
        .collect())
}

/// Convenience view bundling the soliton relations for one (T, E) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolitonRelation {
    pub tau: f64,
    pub fwhm: f64,
    pub energy: f64,
    pub peak_power: f64,
    pub n_squared: f64,
}

impl SolitonRelation {
    pub fn new(fiber: &FiberParams, fwhm: f64, energy: f64) -> Result<Self> {
        let n = soliton_number(fiber, fwhm, energy)?;
        let tau = fwhm / SECH_FWHM_RATIO;
        Ok(Self {
            tau,
            fwhm,
            energy,
            peak_power: energy / (2.0 * tau),
            n_squared: n * n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanCriterion {
    pub t_r_fs: f64,
    pub threshold_band: (f64, f64),
}

impl RamanCriterion {
    /// T_R taken from the fiber's configured Raman response.
    pub fn from_fiber(fiber: &FiberParams) -> Result<Self> {
        Ok(Self {
            t_r_fs: effective_tr_default_grid(&fiber.raman)?,
            threshold_band: K_THRESHOLD_BAND,
        })
    }

    pub fn with_tr(t_r_fs: f64) -> Self {
        Self {
            t_r_fs,
            threshold_band: K_THRESHOLD_BAND,
        }
    }

    pub fn k(&self, fiber: &FiberParams, fwhm: f64, z: f64) -> Result<f64> {
        raman_k(fiber, fwhm, z, self.t_r_fs)
    }

    /// True when K is at or below the lower edge of the threshold band.
    pub fn raman_negligible(&self, k: f64) -> bool {
        k <= self.threshold_band.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soliton_energy_examples() {
        let f = FiberParams::default();
        assert!((soliton_energy(&f, 0.2).unwrap() - 61.705).abs() < 1e-3);
        assert!((soliton_energy(&f, 0.1763).unwrap() - 70.0).abs() < 1e-9);
        let e = soliton_energy(&f, 0.3).unwrap();
        assert!((soliton_number(&f, 0.3, e).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normal_dispersion_rejected() {
        let f = FiberParams {
            beta2: 5.0,
            ..FiberParams::default()
        };
        assert!(soliton_energy(&f, 0.2).is_err());
        assert!(soliton_number(&f, 0.2, 10.0).is_err());
    }

    #[test]
    fn ssfs_examples() {
        let f = FiberParams::default();
        let r = ssfs_rate(&f, 0.1, 3.5).unwrap();
        assert!((r - 0.196).abs() < 5e-4, "{r}");
        let r2 = ssfs_rate(&f, 0.2, 3.5).unwrap();
        assert!((r / r2 - 16.0).abs() < 1e-9);
        assert_eq!(ssfs_rate(&f, 0.1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn raman_k_examples() {
        let f = FiberParams::default();
        let k = raman_k(&f, 0.2, 10.0, 3.5).unwrap();
        assert!((k - 0.0459375).abs() < 1e-12);
        assert!((raman_k(&f, 0.2, 20.0, 3.5).unwrap() / k - 2.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_duration_examples() {
        let f = FiberParams::default();
        let t30 = optimal_duration(&f, 30.0, 0.05, 3.5).unwrap();
        assert!((t30 - 0.2798).abs() < 1e-3, "{t30}");
        let t75 = optimal_duration(&f, 7.5, 0.05, 3.5).unwrap();
        assert!((t30 / t75 - 4f64.cbrt()).abs() < 1e-12);
        let tk = optimal_duration(&f, 30.0, 0.1, 3.5).unwrap();
        assert!((tk / t30 - 2f64.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!(optimal_duration(&f, 30.0, 1.5, 3.5).is_err());
    }

    #[test]
    fn constant_power_curve() {
        let c = constant_peak_power_curve(350.0, &[0.1763, 0.3526]).unwrap();
        assert!((c[0].1 - 70.0).abs() < 1e-12);
        assert!((c[1].1 - 140.0).abs() < 1e-12);
        let zero = constant_peak_power_curve(0.0, &[0.1, 0.2]).unwrap();
        assert!(zero.iter().all(|&(_, e)| e == 0.0));
    }

    #[test]
    fn criterion_uses_configured_response() {
        let c = RamanCriterion::from_fiber(&FiberParams::default()).unwrap();
        assert!((3.0..=4.0).contains(&c.t_r_fs));
        assert!(c.raman_negligible(0.01));
        assert!(!c.raman_negligible(0.2));
    }

    proptest! {
        #[test]
        fn soliton_inverse(fwhm in 0.05f64..2.0, b2 in -50.0f64..-0.1, gamma in 0.1f64..20.0) {
            let f = FiberParams { beta2: b2, gamma, ..FiberParams::default() };
            let e = soliton_energy(&f, fwhm).unwrap();
            prop_assert!((soliton_number(&f, fwhm, e).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iso_k_contour(z in 0.1f64..100.0, k in 0.01f64..0.9, tr in 0.5f64..6.0) {
            let f = FiberParams::default();
            let t = optimal_duration(&f, z, k, tr).unwrap();
            prop_assert!((raman_k(&f, t, z, tr).unwrap() - k).abs() < 1e-12 * k.max(1.0));
            let t2 = optimal_duration(&f, 2.0 * z, k, tr).unwrap();
            prop_assert!(t2 > t);
        }
    }
}
