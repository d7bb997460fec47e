//! Truncated-Wigner stochastic propagation.
//!
//! Each trajectory starts from the classical input plus half a photon of
//! complex Gaussian vacuum noise per temporal mode and is evolved with a
//! symmetric split-step scheme: half linear step, exact nonlinear phase step
//! (instantaneous Kerr plus delayed Raman response), half linear step.
//! Adjacent half steps inside a segment are fused.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector;
use crate::error::{Error, Result};
use crate::fiber::{raman_response_by_lag, DispersionOperator, FiberParams};
use crate::grid::{sech_pulse, ComplexEnvelope, PulseSpec, TemporalGrid};
use crate::units::{photon_energy_pj, BOLTZMANN_J_K, HBAR_J_S};

pub mod dump;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    /// m
    pub total_length: f64,
    /// m
    pub dz: f64,
    /// m, strictly increasing, each ≤ `total_length`.
    pub snapshot_distances: Vec<f64>,
    pub quantum_noise: bool,
    pub raman_noise: bool,
    /// Apply intrinsic loss inside the linear step instead of lumped at detection.
    pub distributed_loss: bool,
    /// K, only used by the Raman noise term.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            total_length: 30.0,
            dz: 0.01,
            snapshot_distances: vec![0.6, 1.8, 3.6, 7.2, 12.0, 18.0, 24.0, 30.0],
            quantum_noise: true,
            raman_noise: false,
            distributed_loss: false,
            temperature: 300.0,
            seed: 1,
        }
    }
}

impl PropagationConfig {
    pub fn classical(total_length: f64, dz: f64, snapshot_distances: Vec<f64>) -> Self {
        Self {
            total_length,
            dz,
            snapshot_distances,
            quantum_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_length > 0.0) || !self.total_length.is_finite() {
            return Err(Error::invalid("propagation.total_length", "must be > 0 m"));
        }
        if !(self.dz > 0.0) || !self.dz.is_finite() {
            return Err(Error::invalid("propagation.dz", "must be > 0 m"));
        }
        if self.snapshot_distances.is_empty() {
            return Err(Error::invalid(
                "propagation.snapshot_distances",
                "at least one distance required",
            ));
        }
        let mut prev = 0.0;
        for (i, &z) in self.snapshot_distances.iter().enumerate() {
            if !(z >= 0.0) || z > self.total_length {
                return Err(Error::invalid(
                    "propagation.snapshot_distances",
                    format!("{z} m outside [0, total_length]"),
                ));
            }
            if i > 0 && z <= prev {
                return Err(Error::invalid(
                    "propagation.snapshot_distances",
                    "must be strictly increasing",
                ));
            }
            if z > prev && self.dz > z - prev + 1e-12 {
                return Err(Error::invalid(
                    "propagation.dz",
                    format!("dz = {} m exceeds snapshot spacing {} m", self.dz, z - prev),
                ));
            }
            prev = z;
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("propagation.temperature", "must be >= 0 K"));
        }
        Ok(())
    }

    /// Number of nonlinear steps a single trajectory takes.
    pub fn step_count(&self) -> usize {
        let mut prev = 0.0;
        let mut steps = 0;
        for &z in &self.snapshot_distances {
            steps += segment_steps(z - prev, self.dz);
            prev = z;
        }
        steps
    }
}

fn segment_steps(length: f64, dz: f64) -> usize {
    if length <= 0.0 {
        0
    } else {
        ((length / dz) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Add truncated-Wigner vacuum noise: each sample gets an independent complex
/// Gaussian with `⟨|δA|²⟩ = ħω₀/(2·dt)`.
pub fn inject_vacuum_noise<R: Rng + ?Sized>(env: &ComplexEnvelope, rng: &mut R) -> ComplexEnvelope {
    let mut out = env.clone();
    add_vacuum_noise(out.samples_mut(), env.grid().dt(), env.carrier_wavelength(), rng);
    out
}

pub fn vacuum_variance_per_sample(dt: f64, carrier_um: f64) -> f64 {
    photon_energy_pj(carrier_um) / (2.0 * dt)
}

fn add_vacuum_noise<R: Rng + ?Sized>(samples: &mut [Complex64], dt: f64, carrier_um: f64, rng: &mut R) {
    let sigma = (0.5 * vacuum_variance_per_sample(dt, carrier_um)).sqrt();
    for a in samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *a += Complex64::new(sigma * re, sigma * im);
    }
}

/// Counter-style stream derivation: trajectory `index` always draws from the
/// same ChaCha stream regardless of which worker runs it.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

struct Segment {
    steps: usize,
    half: DispersionOperator,
    full: DispersionOperator,
}

/// Precomputed operators for one (grid, fiber, config) combination.
pub struct Propagator {
    grid: Arc<TemporalGrid>,
    fiber: FiberParams,
    cfg: PropagationConfig,
    segments: Vec<Segment>,
    exact_linear: Vec<DispersionOperator>,
    raman_spectrum: Option<Vec<Complex64>>,
    raman_noise_filter: Option<Vec<f64>>,
    linear_only: bool,
}

impl Propagator {
    pub fn new(grid: Arc<TemporalGrid>, fiber: &FiberParams, cfg: &PropagationConfig) -> Result<Self> {
        fiber.validate()?;
        cfg.validate()?;
        let linear_only = fiber.gamma == 0.0;
        let mut prev = 0.0;
        let mut segments = Vec::new();
        let mut exact_linear = Vec::new();
        for &z in &cfg.snapshot_distances {
            let length = z - prev;
            let steps = segment_steps(length, cfg.dz);
            let h = if steps > 0 { length / steps as f64 } else { 0.0 };
            segments.push(Segment {
                steps,
                half: DispersionOperator::new(&grid, fiber, 0.5 * h, cfg.distributed_loss),
                full: DispersionOperator::new(&grid, fiber, h, cfg.distributed_loss),
            });
            exact_linear.push(DispersionOperator::new(
                &grid,
                fiber,
                length,
                cfg.distributed_loss,
            ));
            prev = z;
        }

        let f_r = fiber.raman.effective_fraction();
        let (raman_spectrum, raman_noise_filter) = if f_r > 0.0 && !linear_only {
            let lag = raman_response_by_lag(&grid, &fiber.raman)?;
            let dt = grid.dt();
            let mut spec: Vec<Complex64> = lag.iter().map(|&h| Complex64::new(h * dt, 0.0)).collect();
            let mut scratch = grid.scratch();
            grid.fft_forward(&mut spec, &mut scratch);
            let noise = if cfg.raman_noise {
                Some(raman_noise_filter(&grid, &lag, fiber, cfg.temperature))
            } else {
                None
            };
            (Some(spec), noise)
        } else {
            (None, None)
        };

        Ok(Self {
            grid,
            fiber: fiber.clone(),
            cfg: cfg.clone(),
            segments,
            exact_linear,
            raman_spectrum,
            raman_noise_filter,
            linear_only,
        })
    }

    pub fn grid(&self) -> &Arc<TemporalGrid> {
        &self.grid
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.cfg
    }

    /// Evolve `samples` and return a copy at every snapshot distance.
    /// `rng` feeds the Raman noise term; it is ignored when that term is off.
    pub fn run(
        &self,
        samples: &mut [Complex64],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> std::result::Result<Vec<Vec<Complex64>>, (f64, String)> {
        let n = self.grid.n_points();
        let mut scratch = self.grid.scratch();
        let mut work = vec![Complex64::new(0.0, 0.0); n];
        let mut noise = vec![Complex64::new(0.0, 0.0); n];
        let mut snapshots = Vec::with_capacity(self.segments.len());

        for (d, seg) in self.segments.iter().enumerate() {
            let z = self.cfg.snapshot_distances[d];
            if seg.steps > 0 {
                if self.linear_only {
                    self.linear(samples, &self.exact_linear[d], &mut scratch);
                } else {
                    let h = seg.full.dz();
                    self.linear(samples, &seg.half, &mut scratch);
                    for step in 0..seg.steps {
                        let gamma_field = match (&self.raman_noise_filter, rng.as_deref_mut()) {
                            (Some(filter), Some(r)) => {
                                self.raman_noise(filter, h, r, &mut noise, &mut scratch);
                                Some(&noise[..])
                            }
                            _ => None,
                        };
                        self.nonlinear(samples, h, gamma_field, &mut work, &mut scratch);
                        let op = if step + 1 == seg.steps { &seg.half } else { &seg.full };
                        self.linear(samples, op, &mut scratch);
                    }
                }
            }
            if let Some(j) = samples.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
                return Err((z, format!("non-finite sample at index {j}; step too large")));
            }
            snapshots.push(samples.to_vec());
        }
        Ok(snapshots)
    }

    fn linear(&self, samples: &mut [Complex64], op: &DispersionOperator, scratch: &mut [Complex64]) {
        self.grid.to_spectrum(samples, scratch);
        op.apply_spectral(samples);
        self.grid.to_time(samples, scratch);
    }

    fn nonlinear(
        &self,
        samples: &mut [Complex64],
        h: f64,
        raman_noise: Option<&[Complex64]>,
        work: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let g = self.fiber.gamma_per_m() * h;
        match &self.raman_spectrum {
            Some(kernel) => {
                let f_r = self.fiber.raman.effective_fraction();
                for (w, a) in work.iter_mut().zip(samples.iter()) {
                    *w = Complex64::new(a.norm_sqr(), 0.0);
                }
                self.grid.fft_forward(work, scratch);
                work.iter_mut().zip(kernel).for_each(|(w, k)| *w *= k);
                self.grid.fft_inverse_normalized(work, scratch);
                for (j, (a, w)) in samples.iter_mut().zip(work.iter()).enumerate() {
                    let mut phase = g * ((1.0 - f_r) * a.norm_sqr() + f_r * w.re);
                    if let Some(noise) = raman_noise {
                        phase += noise[j].re * h;
                    }
                    let (s, c) = phase.sin_cos();
                    *a *= Complex64::new(c, s);
                }
            }
            None => {
                for a in samples.iter_mut() {
                    let (s, c) = (g * a.norm_sqr()).sin_cos();
                    *a *= Complex64::new(c, s);
                }
            }
        }
    }

    /// Real multiplicative Raman noise Γ(t) for one step of length `h`.
    fn raman_noise(
        &self,
        filter: &[f64],
        h: f64,
        rng: &mut ChaCha8Rng,
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let sigma = (1.0 / (self.grid.dt() * h)).sqrt();
        for x in out.iter_mut() {
            let w: f64 = rng.sample(StandardNormal);
            *x = Complex64::new(sigma * w, 0.0);
        }
        self.grid.fft_forward(out, scratch);
        out.iter_mut().zip(filter).for_each(|(x, f)| *x *= f);
        self.grid.fft_inverse_normalized(out, scratch);
    }
}

/// √S(Ω) for the Raman phase noise, with
/// `S(Ω) = 2ħω₀γf_R|Im h̃_R(Ω)|(n_th(|Ω|) + ½)` in ps/m.
fn raman_noise_filter(grid: &TemporalGrid, lag: &[f64], fiber: &FiberParams, temperature: f64) -> Vec<f64> {
    let dt = grid.dt();
    let hnu = photon_energy_pj(crate::units::DEFAULT_CARRIER_UM);
    let f_r = fiber.raman.effective_fraction();
    let gamma = fiber.gamma_per_m();
    grid.omega()
        .iter()
        .map(|&w| {
            if w == 0.0 {
                return 0.0;
            }
            let im_h: f64 = lag
                .iter()
                .enumerate()
                .map(|(k, &h)| h * dt * (w * k as f64 * dt).sin())
                .sum();
            let quantum = HBAR_J_S * w.abs() * 1e12;
            let thermal = if temperature > 0.0 {
                1.0 / ((quantum / (BOLTZMANN_J_K * temperature)).exp() - 1.0)
            } else {
                0.0
            };
            (2.0 * hnu * gamma * f_r * im_h.abs() * (thermal + 0.5)).sqrt()
        })
        .collect()
}

/// Deterministic propagation of one envelope (no vacuum noise is added).
pub fn propagate(
    env: &ComplexEnvelope,
    fiber: &FiberParams,
    cfg: &PropagationConfig,
) -> Result<Vec<ComplexEnvelope>> {
    let prop = Propagator::new(env.grid().clone(), fiber, cfg)?;
    let mut samples = env.samples().to_vec();
    let mut rng = trajectory_rng(cfg.seed, 0);
    let snaps = prop
        .run(&mut samples, Some(&mut rng))
        .map_err(|(distance_m, reason)| Error::Propagation {
            trajectory: 0,
            distance_m,
            reason,
        })?;
    snaps
        .into_iter()
        .map(|s| ComplexEnvelope::with_carrier(env.grid().clone(), s, env.carrier_wavelength()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub grid: Arc<TemporalGrid>,
    pub input_spec: PulseSpec,
    pub fiber: FiberParams,
    pub config: PropagationConfig,
    pub master_seed: u64,
    /// `snapshots[d][i]`: trajectory `i` at `config.snapshot_distances[d]`.
    pub snapshots: Vec<Vec<ComplexEnvelope>>,
}

impl TrajectoryEnsemble {
    pub fn n_traj(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.len())
    }

    pub fn distances(&self) -> &[f64] {
        &self.config.snapshot_distances
    }

    pub fn distance_index(&self, distance: f64) -> Option<usize> {
        self.config
            .snapshot_distances
            .iter()
            .position(|&z| (z - distance).abs() <= 1e-9 * z.max(1.0))
    }

    pub fn at(&self, distance: f64) -> Result<&[ComplexEnvelope]> {
        self.distance_index(distance)
            .map(|d| &self.snapshots[d][..])
            .ok_or(Error::MissingSnapshot(distance))
    }

    /// Apply the same phase rotation to every trajectory.
    pub fn rotated(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        let mut out = self.clone();
        for snap in out.snapshots.iter_mut() {
            for env in snap.iter_mut() {
                env.samples_mut().iter_mut().for_each(|a| *a *= rot);
            }
        }
        out
    }
}

/// Run `n_traj` independent trajectories starting from `start`, each with its
/// own RNG stream `(master_seed, i)`. `threads == 1` runs on the calling
/// thread; `0` uses the ambient rayon pool. Output does not depend on either.
pub fn run_ensemble_from(
    start: &ComplexEnvelope,
    spec: &PulseSpec,
    fiber: &FiberParams,
    cfg: &PropagationConfig,
    n_traj: usize,
    threads: usize,
) -> Result<TrajectoryEnsemble> {
    if n_traj < 2 {
        return Err(Error::TooFewTrajectories(n_traj));
    }
    let grid = start.grid().clone();
    let prop = Propagator::new(grid.clone(), fiber, cfg)?;
    let carrier = start.carrier_wavelength();
    let stochastic = cfg.quantum_noise || (cfg.raman_noise && prop.raman_noise_filter.is_some());

    let one = |i: usize| -> Result<Vec<Vec<Complex64>>> {
        let mut rng = trajectory_rng(cfg.seed, i as u64);
        let mut samples = start.samples().to_vec();
        if cfg.quantum_noise {
            add_vacuum_noise(&mut samples, grid.dt(), carrier, &mut rng);
        }
        prop.run(&mut samples, Some(&mut rng))
            .map_err(|(distance_m, reason)| Error::Propagation {
                trajectory: i,
                distance_m,
                reason: format!(
                    "{reason} (E = {} pJ, T = {} ps, dz = {} m)",
                    spec.energy, spec.fwhm, cfg.dz
                ),
            })
    };

    let per_traj: Vec<Vec<Vec<Complex64>>> = if !stochastic {
        let first = one(0)?;
        vec![first; n_traj]
    } else if threads == 1 {
        (0..n_traj).map(one).collect::<Result<_>>()?
    } else if threads == 0 {
        (0..n_traj).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        pool.install(|| (0..n_traj).into_par_iter().map(one).collect::<Result<_>>())?
    };

    let n_dist = cfg.snapshot_distances.len();
    let mut snapshots: Vec<Vec<ComplexEnvelope>> = (0..n_dist).map(|_| Vec::with_capacity(n_traj)).collect();
    for traj in per_traj {
        for (d, s) in traj.into_iter().enumerate() {
            snapshots[d].push(ComplexEnvelope::with_carrier(grid.clone(), s, carrier)?);
        }
    }
    Ok(TrajectoryEnsemble {
        grid,
        input_spec: spec.clone(),
        fiber: fiber.clone(),
        config: cfg.clone(),
        master_seed: cfg.seed,
        snapshots,
    })
}

/// Ensemble for a sech input pulse on `grid`.
pub fn run_ensemble(
    grid: &Arc<TemporalGrid>,
    spec: &PulseSpec,
    fiber: &FiberParams,
    cfg: &PropagationConfig,
    n_traj: usize,
    threads: usize,
) -> Result<TrajectoryEnsemble> {
    let start = sech_pulse(grid, spec)?;
    run_ensemble_from(&start, spec, fiber, cfg, n_traj, threads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub validated_dz: f64,
    /// (dz, squeezing in dB at the last snapshot) for every tested step.
    pub trials: Vec<(f64, f64)>,
}

pub const CONVERGENCE_TOL_DB: f64 = 0.1;
pub const MAX_HALVINGS: usize = 6;

/// Halve `cfg.dz` until the detected squeezing at the final snapshot changes
/// by less than 0.1 dB between successive step sizes; the coarser of the
/// agreeing pair is returned. Pilot ensembles share one seed so that the
/// comparison is not masked by sampling noise.
pub fn convergence_check(
    grid: &Arc<TemporalGrid>,
    spec: &PulseSpec,
    fiber: &FiberParams,
    cfg: &PropagationConfig,
    pilot_traj: usize,
    threads: usize,
) -> Result<ConvergenceReport> {
    let mut trial_cfg = PropagationConfig {
        snapshot_distances: vec![cfg.total_length],
        quantum_noise: true,
        ..cfg.clone()
    };
    let pilot = |c: &PropagationConfig| -> Result<f64> {
        let ens = run_ensemble(grid, spec, fiber, c, pilot_traj, threads)?;
        let samples = detector::stokes_samples(&ens, c.total_length, c.seed)?;
        Ok(detector::dark_plane_squeezing(&samples)?.squeezing_db)
    };
    let mut trials = Vec::new();
    let mut previous = pilot(&trial_cfg)?;
    trials.push((trial_cfg.dz, previous));
    if fiber.gamma == 0.0 {
        return Ok(ConvergenceReport {
            validated_dz: trial_cfg.dz,
            trials,
        });
    }
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        let coarse = trial_cfg.dz;
        trial_cfg.dz *= 0.5;
        let current = pilot(&trial_cfg)?;
        trials.push((trial_cfg.dz, current));
        last_change = (current - previous).abs();
        if last_change < CONVERGENCE_TOL_DB {
            return Ok(ConvergenceReport {
                validated_dz: coarse,
                trials,
            });
        }
        previous = current;
    }
    Err(Error::NoConvergence {
        halvings: MAX_HALVINGS,
        last_change_db: last_change,
    })
}

/// Linear dispersion length τ²/|β₂| and nonlinear length 1/(γP₀) in m.
pub fn characteristic_lengths(spec: &PulseSpec, fiber: &FiberParams) -> (f64, f64) {
    let tau = spec.tau();
    let ld = if fiber.beta2 != 0.0 {
        tau * tau / fiber.beta2_per_m().abs()
    } else {
        f64::INFINITY
    };
    let lnl = if fiber.gamma > 0.0 {
        1.0 / (fiber.gamma_per_m() * spec.peak_power())
    } else {
        f64::INFINITY
    };
    (ld, lnl)
}

/// Soliton period (π/2)·L_D in m.
pub fn soliton_period(spec: &PulseSpec, fiber: &FiberParams) -> f64 {
    0.5 * PI * characteristic_lengths(spec, fiber).0
}

/// How to choose a grid and a step size for a pulse that may shed a shorter
/// soliton and drift under the Raman self-frequency shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridPolicy {
    /// ps
    pub min_window: f64,
    /// ps
    pub max_dt: f64,
    pub max_points: usize,
    /// Upper bound on dz, m.
    pub max_dz: f64,
    /// dz ≤ `step_fraction`·min(L_D, L_NL) of the narrowest expected soliton.
    pub step_fraction: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            min_window: 8.0,
            max_dt: 0.006,
            max_points: 16384,
            max_dz: 0.04,
            step_fraction: 0.05,
        }
    }
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_window > 0.0) {
            return Err(Error::invalid("grid.min_window", "must be > 0 ps"));
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::invalid("grid.max_dt", "must be > 0 ps"));
        }
        if self.max_points < crate::grid::MIN_POINTS {
            return Err(Error::invalid(
                "grid.max_points",
                format!("must be >= {}", crate::grid::MIN_POINTS),
            ));
        }
        if !(self.max_dz > 0.0) {
            return Err(Error::invalid("grid.max_dz", "must be > 0 m"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::invalid("grid.step_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Power-of-two grid wide enough for the expected Raman walk-off over
    /// `z_max` and fine enough for the narrowest expected soliton.
    pub fn grid_for(&self, spec: &PulseSpec, fiber: &FiberParams, z_max: f64) -> Result<Arc<TemporalGrid>> {
        self.validate()?;
        spec.validate()?;
        let tau_eff = narrowest_soliton_tau(spec, fiber);
        let walkoff = estimated_walkoff(spec, fiber, z_max);
        let window = self
            .min_window
            .max(16.0 * spec.fwhm)
            .max(2.4 * (walkoff + 10.0 * spec.tau()));
        let mut max_dt = self.max_dt.min(crate::units::SECH_FWHM_RATIO * tau_eff / 8.0);
        if fiber.raman.effective_fraction() > 0.0 && fiber.gamma > 0.0 {
            max_dt = max_dt.min(0.5 * fiber.raman.tau1 * 1e-3);
        }
        let grid = TemporalGrid::for_pulse(spec.fwhm, window, max_dt)?;
        if grid.n_points() > self.max_points {
            return Err(Error::UnderResolved(format!(
                "{} points needed (window {:.2} ps, dt {:.4} ps) but max_points = {}",
                grid.n_points(),
                grid.window(),
                grid.dt(),
                self.max_points
            )));
        }
        Ok(grid)
    }

    /// Step size for this pulse, never above `max_dz`.
    pub fn step_for(&self, spec: &PulseSpec, fiber: &FiberParams) -> f64 {
        let tau_eff = narrowest_soliton_tau(spec, fiber);
        let ld = if fiber.beta2 != 0.0 {
            tau_eff * tau_eff / fiber.beta2_per_m().abs()
        } else {
            f64::INFINITY
        };
        let (_, lnl) = characteristic_lengths(spec, fiber);
        let compression = spec.tau() / tau_eff;
        let lnl = lnl / (compression * compression);
        self.max_dz.min(self.step_fraction * ld.min(lnl))
    }
}

/// Width parameter of the narrowest soliton an order-N pulse can shed,
/// τ/(2N − 1); τ itself below N = 1.
pub fn narrowest_soliton_tau(spec: &PulseSpec, fiber: &FiberParams) -> f64 {
    let tau = spec.tau();
    if fiber.beta2 >= 0.0 || fiber.gamma == 0.0 {
        return tau;
    }
    let n2 = tau * fiber.gamma_per_m() * spec.energy / (2.0 * fiber.beta2_per_m().abs());
    let n = n2.sqrt();
    if n > 1.0 {
        tau / (2.0 * n - 1.0)
    } else {
        tau
    }
}

/// Rough temporal delay (ps) accumulated by the Raman-shifted soliton over
/// `z` m: ½|β₂|·r·z² with r the self-frequency-shift rate of the narrowest
/// expected soliton. Zero without Raman or dispersion.
pub fn estimated_walkoff(spec: &PulseSpec, fiber: &FiberParams, z: f64) -> f64 {
    let f_r = fiber.raman.effective_fraction();
    if f_r == 0.0 || fiber.gamma == 0.0 || fiber.beta2 >= 0.0 {
        return 0.0;
    }
    let (t1, t2) = (fiber.raman.tau1, fiber.raman.tau2);
    let t_r = f_r * 2.0 * t1 * t1 * t2 / (t1 * t1 + t2 * t2) * 1e-3;
    let b2 = fiber.beta2_per_m().abs();
    let tau = narrowest_soliton_tau(spec, fiber);
    let rate = 8.0 * t_r * b2 / (15.0 * tau.powi(4));
    0.5 * b2 * rate * z * z
}
