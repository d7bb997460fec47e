//! Linear and nonlinear response of the fiber.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexEnvelope, TemporalGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamanParams {
    /// Fractional Raman contribution f_R.
    pub fraction: f64,
    /// fs
    pub tau1: f64,
    /// fs
    pub tau2: f64,
    pub enabled: bool,
}

impl Default for RamanParams {
    /// Damped-oscillator silica response with f_R set so the first moment
    /// T_R lands at ≈3.5 fs.
    fn default() -> Self {
        Self {
            fraction: 0.43,
            tau1: 12.2,
            tau2: 32.0,
            enabled: true,
        }
    }
}

impl RamanParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// f_R actually used by the nonlinear step (0 when disabled).
    pub fn effective_fraction(&self) -> f64 {
        if self.enabled {
            self.fraction
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(Error::invalid("fiber.raman.fraction", "must lie in [0, 1)"));
        }
        if !(self.tau1 > 0.0) {
            return Err(Error::invalid("fiber.raman.tau1", "must be > 0 fs"));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::invalid("fiber.raman.tau2", "must be > 0 fs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberParams {
    /// ps²/km
    pub beta2: f64,
    /// ps³/km
    pub beta3: f64,
    /// 1/(W·km)
    pub gamma: f64,
    /// dB/km
    pub intrinsic_loss: f64,
    pub raman: RamanParams,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            beta2: -10.5,
            beta3: 0.155,
            gamma: 3.0,
            intrinsic_loss: 1.0,
            raman: RamanParams::default(),
        }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fiber.beta2", self.beta2),
            ("fiber.beta3", self.beta3),
            ("fiber.gamma", self.gamma),
            ("fiber.intrinsic_loss", self.intrinsic_loss),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid("fiber.gamma", "must be >= 0"));
        }
        if self.intrinsic_loss < 0.0 {
            return Err(Error::invalid("fiber.intrinsic_loss", "must be >= 0 dB/km"));
        }
        self.raman.validate()
    }

    pub fn without_beta3(mut self) -> Self {
        self.beta3 = 0.0;
        self
    }

    pub fn without_raman(mut self) -> Self {
        self.raman.enabled = false;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn dispersionless(mut self) -> Self {
        self.beta2 = 0.0;
        self.beta3 = 0.0;
        self
    }

    /// ps²/m
    pub fn beta2_per_m(&self) -> f64 {
        self.beta2 * 1e-3
    }

    /// ps³/m
    pub fn beta3_per_m(&self) -> f64 {
        self.beta3 * 1e-3
    }

    /// 1/(W·m)
    pub fn gamma_per_m(&self) -> f64 {
        self.gamma * 1e-3
    }

    /// Power transmission after `length_m` of fiber.
    pub fn transmission(&self, length_m: f64) -> f64 {
        10f64.powf(-self.intrinsic_loss * length_m * 1e-3 / 10.0)
    }
}

/// Spectral phase factors of the linear step over a fixed `dz`.
#[derive(Debug, Clone)]
pub struct DispersionOperator {
    factors: Vec<Complex64>,
    dz: f64,
}

impl DispersionOperator {
    pub fn new(grid: &TemporalGrid, fiber: &FiberParams, dz: f64, include_loss: bool) -> Self {
        let b2 = fiber.beta2_per_m();
        let b3 = fiber.beta3_per_m();
        let amplitude = if include_loss {
            fiber.transmission(dz).sqrt()
        } else {
            1.0
        };
        let factors = grid
            .omega()
            .iter()
            .map(|&w| {
                let phase = (0.5 * b2 * w * w + b3 * w * w * w / 6.0) * dz;
                Complex64::from_polar(amplitude, phase)
            })
            .collect();
        Self { factors, dz }
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn factors(&self) -> &[Complex64] {
        &self.factors
    }

    /// Apply to a field already in the spectral domain.
    pub fn apply_spectral(&self, spectrum: &mut [Complex64]) {
        spectrum
            .iter_mut()
            .zip(&self.factors)
            .for_each(|(a, f)| *a *= f);
    }
}

pub fn dispersion_step(
    env: &ComplexEnvelope,
    fiber: &FiberParams,
    dz: f64,
    include_loss: bool,
) -> Result<ComplexEnvelope> {
    if !(dz > 0.0) {
        return Err(Error::invalid("dz", "must be > 0"));
    }
    let grid = env.grid();
    let op = DispersionOperator::new(grid, fiber, dz, include_loss);
    let mut spectrum = env.spectrum();
    op.apply_spectral(&mut spectrum);
    let mut scratch = grid.scratch();
    grid.to_time(&mut spectrum, &mut scratch);
    ComplexEnvelope::with_carrier(grid.clone(), spectrum, env.carrier_wavelength())
}

fn raman_kernel(t_fs: f64, raman: &RamanParams) -> f64 {
    if t_fs <= 0.0 {
        return 0.0;
    }
    let (t1, t2) = (raman.tau1, raman.tau2);
    (t1 * t1 + t2 * t2) / (t1 * t2 * t2) * (-t_fs / t2).exp() * (t_fs / t1).sin()
}

/// `h_R(t_j)` on the grid's time axis (1/ps), zero for `t ≤ 0`, normalized so
/// that `Σ h_R·dt = 1`.
pub fn raman_response_sampled(grid: &TemporalGrid, raman: &RamanParams) -> Result<Vec<f64>> {
    raman.validate()?;
    let dt_fs = grid.dt() * 1e3;
    if dt_fs > 0.5 * raman.tau1 {
        return Err(Error::UnderResolved(format!(
            "dt = {dt_fs:.3} fs exceeds tau1/2 = {:.3} fs",
            0.5 * raman.tau1
        )));
    }
    let mut h: Vec<f64> = grid
        .time()
        .iter()
        .map(|&t| raman_kernel(t * 1e3, raman))
        .collect();
    let norm = h.iter().sum::<f64>() * grid.dt();
    h.iter_mut().for_each(|x| *x /= norm);
    Ok(h)
}

/// Raman response rearranged by lag (index k ↔ delay k·dt) for circular
/// convolution.
pub(crate) fn raman_response_by_lag(grid: &TemporalGrid, raman: &RamanParams) -> Result<Vec<f64>> {
    let h = raman_response_sampled(grid, raman)?;
    let n = grid.n_points();
    let half = n / 2;
    // time index j holds t = (j - n/2)·dt, so lag k sits at j = k + n/2
    Ok((0..n)
        .map(|k| if k < half { h[k + half] } else { 0.0 })
        .collect())
}

/// First moment T_R = f_R·Σ t·h_R(t)·dt, in fs.
pub fn effective_tr(raman: &RamanParams, grid: &TemporalGrid) -> Result<f64> {
    let h = raman_response_sampled(grid, raman)?;
    let moment_ps: f64 = grid
        .time()
        .iter()
        .zip(&h)
        .map(|(&t, &v)| t * v)
        .sum::<f64>()
        * grid.dt();
    Ok(raman.effective_fraction() * moment_ps * 1e3)
}

/// Convenience for callers that only have fiber parameters: evaluates
/// [`effective_tr`] on a fine reference grid.
pub fn effective_tr_default_grid(raman: &RamanParams) -> Result<f64> {
    let grid = TemporalGrid::new(8192, 8.0)?;
    effective_tr(raman, &grid)
}
