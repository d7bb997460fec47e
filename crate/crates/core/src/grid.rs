//! Uniform time/frequency lattice, field envelopes and sech pulse synthesis.
//!
//! Spectra follow the propagation convention `A(t) = Σ_k Ã_k e^{-iω_k t}`,
//! so a positive `ω` is a blue-shifted component and the fiber dispersion
//! factor is `exp(i[(β₂/2)ω² + (β₃/6)ω³]z)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{DEFAULT_CARRIER_UM, SECH_FWHM_RATIO};

pub const MIN_POINTS: usize = 256;

pub struct TemporalGrid {
    n_points: usize,
    window: f64,
    dt: f64,
    time: Vec<f64>,
    omega: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TemporalGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TemporalGrid")
            .field("n_points", &self.n_points)
            .field("window", &self.window)
            .field("dt", &self.dt)
            .finish()
    }
}

impl PartialEq for TemporalGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points && self.window.to_bits() == other.window.to_bits()
    }
}

/// Build a grid of `n_points` samples spanning `window` ps.
pub fn make_grid(n_points: usize, window: f64) -> Result<Arc<TemporalGrid>> {
    TemporalGrid::new(n_points, window).map(Arc::new)
}

impl TemporalGrid {
    pub fn new(n_points: usize, window: f64) -> Result<Self> {
        if !n_points.is_power_of_two() {
            return Err(Error::invalid(
                "grid.n_points",
                format!("{n_points} is not a power of two"),
            ));
        }
        if n_points < MIN_POINTS {
            return Err(Error::invalid(
                "grid.n_points",
                format!("{n_points} < {MIN_POINTS}"),
            ));
        }
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::invalid("grid.window", "must be positive and finite"));
        }
        let dt = window / n_points as f64;
        let half = (n_points / 2) as isize;
        let time = (0..n_points as isize)
            .map(|j| (j - half) as f64 * dt)
            .collect();
        let dw = 2.0 * PI / window;
        let omega = (0..n_points)
            .map(|k| {
                if k < n_points / 2 {
                    k as f64 * dw
                } else {
                    (k as f64 - n_points as f64) * dw
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);
        Ok(Self {
            n_points,
            window,
            dt,
            time,
            omega,
            forward,
            inverse,
        })
    }

    /// Smallest power-of-two grid with `window` wide enough for a pulse of
    /// `fwhm` (at least `max(16·fwhm, min_window)`) and spacing no coarser
    /// than `max_dt`.
    pub fn for_pulse(fwhm: f64, min_window: f64, max_dt: f64) -> Result<Arc<Self>> {
        if !(fwhm > 0.0) {
            return Err(Error::invalid("pulse.fwhm", "must be positive"));
        }
        let window = (16.0 * fwhm).max(min_window);
        let max_dt = max_dt.min(fwhm / 8.0);
        let mut n = MIN_POINTS;
        while window / (n as f64) > max_dt {
            n *= 2;
        }
        make_grid(n, window)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    /// Angular-frequency offsets in FFT bin order.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.window
    }

    /// In-place time → spectrum transform (unnormalized, `e^{+iωt}` kernel).
    pub fn to_spectrum(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
    }

    /// In-place spectrum → time transform, exact inverse of [`Self::to_spectrum`].
    pub fn to_time(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
        let norm = 1.0 / self.n_points as f64;
        buf.iter_mut().for_each(|x| *x *= norm);
    }

    /// Plain forward FFT (`e^{-iωt}` kernel), used for circular convolutions.
    pub(crate) fn fft_forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    pub(crate) fn fft_inverse_normalized(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
        let norm = 1.0 / self.n_points as f64;
        buf.iter_mut().for_each(|x| *x *= norm);
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len()]
    }

    /// Bin indices ordered by increasing ω.
    pub fn ordered_bins(&self) -> impl Iterator<Item = usize> + '_ {
        let half = self.n_points / 2;
        (half..self.n_points).chain(0..half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    #[default]
    Sech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSpec {
    /// pJ
    pub energy: f64,
    /// Intensity FWHM in ps.
    pub fwhm: f64,
    pub shape: PulseShape,
    pub chirp: f64,
}

impl Default for PulseSpec {
    /// Close to the fundamental soliton of the default fiber at 200 fs.
    fn default() -> Self {
        Self::sech(61.7, 0.2)
    }
}

impl PulseSpec {
    pub fn sech(energy: f64, fwhm: f64) -> Self {
        Self {
            energy,
            fwhm,
            shape: PulseShape::Sech,
            chirp: 0.0,
        }
    }

    /// sech width parameter τ = T/1.763.
    pub fn tau(&self) -> f64 {
        self.fwhm / SECH_FWHM_RATIO
    }

    pub fn peak_power(&self) -> f64 {
        self.energy / (2.0 * self.tau())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy > 0.0) || !self.energy.is_finite() {
            return Err(Error::invalid("pulse.energy", "must be > 0 pJ"));
        }
        if !(self.fwhm > 0.0) || !self.fwhm.is_finite() {
            return Err(Error::invalid("pulse.fwhm", "must be > 0 ps"));
        }
        if !self.chirp.is_finite() {
            return Err(Error::invalid("pulse.chirp", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ComplexEnvelope {
    grid: Arc<TemporalGrid>,
    samples: Vec<Complex64>,
    carrier_wavelength: f64,
}

impl ComplexEnvelope {
    pub fn new(grid: Arc<TemporalGrid>, samples: Vec<Complex64>) -> Result<Self> {
        Self::with_carrier(grid, samples, DEFAULT_CARRIER_UM)
    }

    pub fn with_carrier(
        grid: Arc<TemporalGrid>,
        samples: Vec<Complex64>,
        carrier_wavelength: f64,
    ) -> Result<Self> {
        if samples.len() != grid.n_points() {
            return Err(Error::invalid(
                "envelope.samples",
                format!("length {} != grid size {}", samples.len(), grid.n_points()),
            ));
        }
        if !(carrier_wavelength > 0.0) {
            return Err(Error::invalid("envelope.carrier_wavelength", "must be > 0"));
        }
        Ok(Self {
            grid,
            samples,
            carrier_wavelength,
        })
    }

    pub fn zeros(grid: Arc<TemporalGrid>) -> Self {
        let n = grid.n_points();
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); n],
            carrier_wavelength: DEFAULT_CARRIER_UM,
        }
    }

    pub fn grid(&self) -> &Arc<TemporalGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Carrier wavelength in μm.
    pub fn carrier_wavelength(&self) -> f64 {
        self.carrier_wavelength
    }

    /// Σ|A|²·dt in pJ.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dt()
    }

    pub fn peak_power(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|a| *a *= factor);
        out
    }

    /// Multiply by `exp(i·phase(t))`.
    pub fn modulated(&self, phase: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (a, &t) in out.samples.iter_mut().zip(self.grid.time()) {
            *a *= Complex64::from_polar(1.0, phase(t));
        }
        out
    }

    /// Unnormalized spectrum in FFT bin order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.samples.clone();
        let mut scratch = self.grid.scratch();
        self.grid.to_spectrum(&mut buf, &mut scratch);
        buf
    }

    pub fn from_spectrum(grid: Arc<TemporalGrid>, mut spectrum: Vec<Complex64>) -> Result<Self> {
        let mut scratch = grid.scratch();
        grid.to_time(&mut spectrum, &mut scratch);
        Self::new(grid, spectrum)
    }

    /// Spectral-domain energy; equals [`Self::energy`] by Parseval.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.grid.n_points() as f64;
        self.spectrum().iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dt() / n
    }
}

/// Sample `A(t) = A₀ sech(t/τ)` with `A₀² = E/(2τ)`.
pub fn sech_pulse(grid: &Arc<TemporalGrid>, spec: &PulseSpec) -> Result<ComplexEnvelope> {
    spec.validate()?;
    let dt = grid.dt();
    if spec.fwhm < 8.0 * dt {
        return Err(Error::UnderResolved(format!(
            "fwhm {} ps < 8·dt = {} ps",
            spec.fwhm,
            8.0 * dt
        )));
    }
    if grid.window() < 16.0 * spec.fwhm {
        return Err(Error::WindowTooSmall(format!(
            "window {} ps < 16·fwhm = {} ps",
            grid.window(),
            16.0 * spec.fwhm
        )));
    }
    let tau = spec.tau();
    let amp = spec.peak_power().sqrt();
    let samples = grid
        .time()
        .iter()
        .map(|&t| {
            let x = t / tau;
            let envelope = amp / x.cosh();
            Complex64::from_polar(envelope, -0.5 * spec.chirp * x * x)
        })
        .collect();
    ComplexEnvelope::new(grid.clone(), samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseMetrics {
    /// pJ
    pub energy: f64,
    /// W
    pub peak_power: f64,
    /// ps, intensity FWHM
    pub fwhm: f64,
    /// rad/ps
    pub spectral_centroid: f64,
    /// rad/ps
    pub spectral_fwhm: f64,
}

pub fn pulse_metrics(env: &ComplexEnvelope) -> Result<PulseMetrics> {
    let grid = env.grid();
    let intensity: Vec<f64> = env.samples().iter().map(|a| a.norm_sqr()).collect();
    let peak_power = intensity.iter().cloned().fold(0.0, f64::max);
    if peak_power <= 0.0 {
        return Err(Error::ZeroEnvelope);
    }
    let energy = intensity.iter().sum::<f64>() * grid.dt();
    let fwhm = half_max_width(&intensity, grid.dt());

    let spectrum = env.spectrum();
    let (mut weight, mut moment) = (0.0, 0.0);
    let ordered: Vec<f64> = grid
        .ordered_bins()
        .map(|k| {
            let p = spectrum[k].norm_sqr();
            weight += p;
            moment += p * grid.omega()[k];
            p
        })
        .collect();
    let spectral_centroid = moment / weight;
    let spectral_fwhm = half_max_width(&ordered, grid.d_omega());
    Ok(PulseMetrics {
        energy,
        peak_power,
        fwhm,
        spectral_centroid,
        spectral_fwhm,
    })
}

/// Full width at half maximum of a sampled profile, crossing points located
/// by linear interpolation between the samples straddling the half level.
fn half_max_width(profile: &[f64], spacing: f64) -> f64 {
    let (peak_idx, peak) = profile
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let half = 0.5 * peak;
    let n = profile.len();

    let mut left = 0.0;
    let mut i = peak_idx;
    while i > 0 && profile[i - 1] >= half {
        i -= 1;
    }
    if i > 0 {
        let (a, b) = (profile[i - 1], profile[i]);
        left = (i - 1) as f64 + (half - a) / (b - a);
    }

    let mut right = (n - 1) as f64;
    let mut j = peak_idx;
    while j + 1 < n && profile[j + 1] >= half {
        j += 1;
    }
    if j + 1 < n {
        let (a, b) = (profile[j], profile[j + 1]);
        right = j as f64 + (a - half) / (a - b);
    }
    (right - left) * spacing
}
