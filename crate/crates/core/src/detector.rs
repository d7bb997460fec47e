//! Polarization-squeezing estimators.
//!
//! Two independent routes reduce a trajectory ensemble to shot-noise-normalized
//! variances:
//!
//! * [`dark_plane_squeezing`] pairs trajectories as H/V polarization modes,
//!   forms the Stokes samples and minimizes the variance over directions in
//!   the plane orthogonal to the mean Stokes vector.
//! * [`homodyne_squeezing`] projects each trajectory's fluctuation onto the
//!   ensemble-mean field and minimizes the quadrature variance over the local
//!   oscillator phase.
//!
//! Both report raw values normalized to the analytic shot noise; dB figures
//! are taken relative to a γ = 0 run of the same pipeline (see
//! [`shot_noise_baseline`]).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run_ensemble, trajectory_rng, PropagationConfig, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::fiber::FiberParams;
use crate::grid::{ComplexEnvelope, PulseSpec, TemporalGrid};
use crate::units::{linear_to_db, photon_energy_pj};

/// Number of independent derangements pooled into one Stokes sample set.
pub const DEFAULT_PAIRING_ROUNDS: usize = 8;
pub const THETA_SCAN_POINTS: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesSample {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingScheme {
    pub seed: u64,
    /// Each round is a uniformly random cyclic permutation σ pairing
    /// trajectory i (H) with σ(i) ≠ i (V).
    pub rounds: usize,
    pub n_traj: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesSampleSet {
    pub distance: f64,
    pub samples: Vec<StokesSample>,
    pub pairing: PairingScheme,
}

impl StokesSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> StokesSample {
        let n = self.samples.len() as f64;
        let mut m = StokesSample {
            s0: 0.0,
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
        };
        for s in &self.samples {
            m.s0 += s.s0;
            m.s1 += s.s1;
            m.s2 += s.s2;
            m.s3 += s.s3;
        }
        m.s0 /= n;
        m.s1 /= n;
        m.s2 /= n;
        m.s3 /= n;
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingResult {
    /// m
    pub distance: f64,
    /// Variances normalized to shot noise (and divided by `baseline`).
    pub v_min: f64,
    pub v_max: f64,
    pub theta_opt: f64,
    pub squeezing_db: f64,
    pub antisqueezing_db: f64,
    /// Calibration divisor applied to the raw variances (1 when uncalibrated).
    pub baseline: f64,
    /// Trajectories the estimate was built from.
    pub n_traj: usize,
}

impl SqueezingResult {
    fn from_variances(distance: f64, v_min: f64, v_max: f64, theta_opt: f64, n_traj: usize) -> Self {
        Self {
            distance,
            v_min,
            v_max,
            theta_opt,
            squeezing_db: linear_to_db(v_min),
            antisqueezing_db: linear_to_db(v_max),
            baseline: 1.0,
            n_traj,
        }
    }

    /// Divide the variances by a measured shot-noise level.
    pub fn calibrated(&self, baseline: f64) -> Self {
        let v_min = self.v_min / baseline;
        let v_max = self.v_max / baseline;
        Self {
            v_min,
            v_max,
            squeezing_db: linear_to_db(v_min),
            antisqueezing_db: linear_to_db(v_max),
            baseline: self.baseline * baseline,
            ..self.clone()
        }
    }

    /// Relative standard error of one calibrated variance.
    pub fn stat_err(&self) -> f64 {
        variance_stat_err(self.n_traj)
    }

    /// Standard error of `squeezing_db`, including the baseline's own error.
    pub fn stat_err_db(&self) -> f64 {
        10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2 * self.stat_err()
    }
}

/// Relative standard error `√(2/(n−1))` of a Gaussian sample variance.
pub fn variance_stat_err(n_traj: usize) -> f64 {
    (2.0 / (n_traj.max(2) - 1) as f64).sqrt()
}

/// Standard error of the calibrated product `V_min·V_max`: four variance
/// estimates (two raw, the baseline counted twice) each contributing `2/n`.
pub fn product_stat_err(n_traj: usize) -> f64 {
    2.0 * variance_stat_err(n_traj)
}

fn cyclic_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    // Sattolo's algorithm: uniform over n-cycles, hence fixed-point free
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

pub fn stokes_samples(
    ensemble: &TrajectoryEnsemble,
    distance: f64,
    pairing_seed: u64,
) -> Result<StokesSampleSet> {
    stokes_samples_from(ensemble.at(distance)?, distance, pairing_seed, DEFAULT_PAIRING_ROUNDS)
}

/// Stokes samples in photon-number units from trajectory pairs.
pub fn stokes_samples_from(
    trajectories: &[ComplexEnvelope],
    distance: f64,
    pairing_seed: u64,
    rounds: usize,
) -> Result<StokesSampleSet> {
    let n = trajectories.len();
    if n < 2 {
        return Err(Error::TooFewTrajectories(n));
    }
    if rounds == 0 {
        return Err(Error::invalid("detection.pairing_rounds", "must be >= 1"));
    }
    let dt = trajectories[0].grid().dt();
    let hnu = photon_energy_pj(trajectories[0].carrier_wavelength());
    let scale = dt / hnu;
    let photons: Vec<f64> = trajectories.iter().map(|e| e.energy() / hnu).collect();

    let mut rng = trajectory_rng(pairing_seed, u64::MAX);
    let mut samples = Vec::with_capacity(n * rounds);
    for _ in 0..rounds {
        let sigma = cyclic_permutation(n, &mut rng);
        for (h, &v) in sigma.iter().enumerate() {
            let overlap: Complex64 = trajectories[h]
                .samples()
                .iter()
                .zip(trajectories[v].samples())
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
                * scale;
            samples.push(StokesSample {
                s0: photons[h] + photons[v],
                s1: photons[h] - photons[v],
                s2: 2.0 * overlap.re,
                s3: 2.0 * overlap.im,
            });
        }
    }
    Ok(StokesSampleSet {
        distance,
        samples,
        pairing: PairingScheme {
            seed: pairing_seed,
            rounds,
            n_traj: n,
        },
    })
}

/// Quadratic form `V(θ) = c₁₁cos²θ + 2c₁₂ sinθcosθ + c₂₂sin²θ` scanned on a
/// uniform θ grid over [0, π) with parabolic refinement at the extrema.
#[derive(Debug, Clone, Copy)]
struct QuadForm {
    c11: f64,
    c12: f64,
    c22: f64,
}

impl QuadForm {
    fn at(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        self.c11 * c * c + 2.0 * self.c12 * s * c + self.c22 * s * s
    }

    /// (min, θ_min, max)
    fn extrema(&self) -> (f64, f64, f64) {
        let m = THETA_SCAN_POINTS;
        let step = PI / m as f64;
        let values: Vec<f64> = (0..m).map(|k| self.at(k as f64 * step)).collect();
        let refine = |k: usize, sign: f64| -> (f64, f64) {
            let y0 = values[k];
            let ym = values[(k + m - 1) % m];
            let yp = values[(k + 1) % m];
            let denom = ym - 2.0 * y0 + yp;
            if denom * sign <= 0.0 {
                return (y0, k as f64 * step);
            }
            let delta = 0.5 * (ym - yp) / denom;
            let theta = (k as f64 + delta) * step;
            (y0 - 0.25 * (ym - yp) * delta, theta.rem_euclid(PI))
        };
        let kmin = (0..m).fold(0, |b, k| if values[k] < values[b] { k } else { b });
        let kmax = (0..m).fold(0, |b, k| if values[k] > values[b] { k } else { b });
        let (vmin, tmin) = refine(kmin, 1.0);
        let (vmax, _) = refine(kmax, -1.0);
        (vmin, tmin, vmax)
    }
}

fn covariance(xs: &[(f64, f64)]) -> QuadForm {
    let n = xs.len() as f64;
    let (mx, my) = xs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut c11, mut c12, mut c22) = (0.0, 0.0, 0.0);
    for &(x, y) in xs {
        let (dx, dy) = (x - mx, y - my);
        c11 += dx * dx;
        c12 += dx * dy;
        c22 += dy * dy;
    }
    let norm = 1.0 / (n - 1.0);
    QuadForm {
        c11: c11 * norm,
        c12: c12 * norm,
        c22: c22 * norm,
    }
}

/// Orthonormal basis (e⊥₁, e⊥₂) of the plane orthogonal to `v`.
fn dark_plane_basis(v: [f64; 3]) -> Option<([f64; 3], [f64; 3])> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let e = [v[0] / norm, v[1] / norm, v[2] / norm];
    let axis = (0..3)
        .min_by(|&a, &b| e[a].abs().total_cmp(&e[b].abs()))
        .unwrap();
    let mut helper = [0.0; 3];
    helper[axis] = 1.0;
    let dot = helper[axis] * e[axis];
    let mut p1 = [helper[0] - dot * e[0], helper[1] - dot * e[1], helper[2] - dot * e[2]];
    let n1 = (p1[0] * p1[0] + p1[1] * p1[1] + p1[2] * p1[2]).sqrt();
    p1.iter_mut().for_each(|x| *x /= n1);
    let p2 = [
        e[1] * p1[2] - e[2] * p1[1],
        e[2] * p1[0] - e[0] * p1[2],
        e[0] * p1[1] - e[1] * p1[0],
    ];
    Some((p1, p2))
}

/// Dark-plane variance extrema normalized by `⟨S₀⟩` (uncalibrated).
pub fn dark_plane_squeezing(set: &StokesSampleSet) -> Result<SqueezingResult> {
    if set.len() < 2 {
        return Err(Error::TooFewTrajectories(set.len()));
    }
    let mean = set.mean();
    let (p1, p2) = dark_plane_basis([mean.s1, mean.s2, mean.s3]).ok_or(Error::NoDarkPlane)?;
    // a mean Stokes vector buried in its own fluctuations defines no plane
    let mean_len = (mean.s1 * mean.s1 + mean.s2 * mean.s2 + mean.s3 * mean.s3).sqrt();
    if mean_len < 1e-6 * mean.s0 {
        return Err(Error::NoDarkPlane);
    }
    let projected: Vec<(f64, f64)> = set
        .samples
        .iter()
        .map(|s| {
            let v = [s.s1, s.s2, s.s3];
            (
                v[0] * p1[0] + v[1] * p1[1] + v[2] * p1[2],
                v[0] * p2[0] + v[1] * p2[1] + v[2] * p2[2],
            )
        })
        .collect();
    let mut form = covariance(&projected);
    let inv = 1.0 / mean.s0;
    form.c11 *= inv;
    form.c12 *= inv;
    form.c22 *= inv;
    let (v_min, theta, v_max) = form.extrema();
    Ok(SqueezingResult::from_variances(
        set.distance,
        v_min,
        v_max,
        theta,
        set.pairing.n_traj,
    ))
}

/// θ-averaged dark-plane variance `(c₁₁ + c₂₂)/(2⟨S₀⟩)`.
pub fn dark_plane_mean_variance(set: &StokesSampleSet) -> Result<f64> {
    let r = dark_plane_squeezing(set)?;
    Ok(0.5 * (r.v_min + r.v_max))
}

fn homodyne_form(trajectories: &[ComplexEnvelope]) -> Result<QuadForm> {
    let n = trajectories.len();
    if n < 2 {
        return Err(Error::TooFewTrajectories(n));
    }
    let grid = trajectories[0].grid();
    let dt = grid.dt();
    let hnu = photon_energy_pj(trajectories[0].carrier_wavelength());
    let mut mean = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    for env in trajectories {
        mean.iter_mut().zip(env.samples()).for_each(|(m, a)| *m += a);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let lo_energy: f64 = mean.iter().map(|m| m.norm_sqr()).sum::<f64>() * dt;
    if !(lo_energy > 0.0) {
        return Err(Error::VanishingMeanField);
    }
    let projections: Vec<(f64, f64)> = trajectories
        .iter()
        .map(|env| {
            let z: Complex64 = mean
                .iter()
                .zip(env.samples())
                .map(|(u, a)| u.conj() * (a - u))
                .sum::<Complex64>()
                * dt;
            (z.re, z.im)
        })
        .collect();
    // X(θ) = 2Re[e^{iθ}Z] = 2(cosθ·Re Z − sinθ·Im Z); shot noise = ħω₀∫|u|²dt
    let mut form = covariance(&projections);
    let norm = 4.0 / (hnu * lo_energy);
    form.c11 *= norm;
    form.c12 *= -norm;
    form.c22 *= norm;
    Ok(form)
}

/// Quadrature-variance extrema with the ensemble-mean field as local oscillator.
pub fn homodyne_squeezing(ensemble: &TrajectoryEnsemble, distance: f64) -> Result<SqueezingResult> {
    homodyne_squeezing_from(ensemble.at(distance)?, distance)
}

pub fn homodyne_squeezing_from(trajectories: &[ComplexEnvelope], distance: f64) -> Result<SqueezingResult> {
    let form = homodyne_form(trajectories)?;
    let (v_min, theta, v_max) = form.extrema();
    Ok(SqueezingResult::from_variances(
        distance,
        v_min,
        v_max,
        theta,
        trajectories.len(),
    ))
}

pub fn homodyne_mean_variance(trajectories: &[ComplexEnvelope]) -> Result<f64> {
    let form = homodyne_form(trajectories)?;
    Ok(0.5 * (form.c11 + form.c22))
}

/// Shot-noise levels measured per snapshot distance by both estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseBaseline {
    pub distances: Vec<f64>,
    pub dark_plane: Vec<f64>,
    pub homodyne: Vec<f64>,
    pub n_traj: usize,
}

impl ShotNoiseBaseline {
    pub fn index(&self, distance: f64) -> Result<usize> {
        self.distances
            .iter()
            .position(|&z| (z - distance).abs() <= 1e-9 * z.max(1.0))
            .ok_or(Error::MissingSnapshot(distance))
    }

    /// Uniform unit baseline (analytic normalization only).
    pub fn unit(distances: &[f64], n_traj: usize) -> Self {
        Self {
            distances: distances.to_vec(),
            dark_plane: vec![1.0; distances.len()],
            homodyne: vec![1.0; distances.len()],
            n_traj,
        }
    }
}

/// Baseline from a γ = 0 ensemble: θ-averaged variance per estimator.
pub fn baseline_from_ensemble(ens: &TrajectoryEnsemble, pairing_seed: u64) -> Result<ShotNoiseBaseline> {
    let mut dark = Vec::new();
    let mut homo = Vec::new();
    for (d, &z) in ens.distances().iter().enumerate() {
        let set = stokes_samples_from(&ens.snapshots[d], z, pairing_seed, DEFAULT_PAIRING_ROUNDS)?;
        dark.push(dark_plane_mean_variance(&set)?);
        homo.push(homodyne_mean_variance(&ens.snapshots[d])?);
    }
    Ok(ShotNoiseBaseline {
        distances: ens.distances().to_vec(),
        dark_plane: dark,
        homodyne: homo,
        n_traj: ens.n_traj(),
    })
}

/// Run the same pipeline with γ = 0 (same seed, grid and distances).
pub fn shot_noise_baseline(
    grid: &Arc<TemporalGrid>,
    spec: &PulseSpec,
    fiber: &FiberParams,
    cfg: &PropagationConfig,
    n_traj: usize,
    pairing_seed: u64,
    threads: usize,
) -> Result<ShotNoiseBaseline> {
    let linear = fiber.clone().with_gamma(0.0);
    let cfg = PropagationConfig {
        quantum_noise: true,
        raman_noise: false,
        ..cfg.clone()
    };
    let ens = run_ensemble(grid, spec, &linear, &cfg, n_traj, threads)?;
    baseline_from_ensemble(&ens, pairing_seed)
}

/// Both estimators at one distance, calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub dark_plane: SqueezingResult,
    pub homodyne: SqueezingResult,
}

pub fn measure(
    ens: &TrajectoryEnsemble,
    baseline: &ShotNoiseBaseline,
    pairing_seed: u64,
) -> Result<Vec<Measurement>> {
    ens.distances()
        .iter()
        .enumerate()
        .map(|(d, &z)| {
            let b = baseline.index(z)?;
            let set = stokes_samples_from(&ens.snapshots[d], z, pairing_seed, DEFAULT_PAIRING_ROUNDS)?;
            let dark = dark_plane_squeezing(&set)?.calibrated(baseline.dark_plane[b]);
            let homo = homodyne_squeezing_from(&ens.snapshots[d], z)?.calibrated(baseline.homodyne[b]);
            Ok(Measurement {
                dark_plane: dark,
                homodyne: homo,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    /// m
    pub fiber_length: f64,
    /// dB/km
    pub intrinsic_loss_db_per_km: f64,
    /// Output coupling × detector efficiency, in (0, 1].
    pub external_efficiency: f64,
}

impl LossBudget {
    pub fn lossless() -> Self {
        Self {
            fiber_length: 0.0,
            intrinsic_loss_db_per_km: 0.0,
            external_efficiency: 1.0,
        }
    }

    pub fn total_efficiency(&self) -> f64 {
        self.external_efficiency
            * 10f64.powf(-self.intrinsic_loss_db_per_km * self.fiber_length * 1e-3 / 10.0)
    }
}

/// Beam-splitter loss model `V' = ηV + (1 − η)` applied to both extrema.
pub fn apply_losses(result: &SqueezingResult, budget: &LossBudget) -> Result<SqueezingResult> {
    if budget.fiber_length < 0.0 || budget.intrinsic_loss_db_per_km < 0.0 {
        return Err(Error::invalid("loss", "fiber length and loss must be >= 0"));
    }
    let eta = budget.total_efficiency();
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(
            "loss.external_efficiency",
            format!("total efficiency {eta} outside (0, 1]"),
        ));
    }
    let v_min = eta * result.v_min + (1.0 - eta);
    let v_max = eta * result.v_max + (1.0 - eta);
    Ok(SqueezingResult {
        v_min,
        v_max,
        squeezing_db: linear_to_db(v_min),
        antisqueezing_db: linear_to_db(v_max),
        ..result.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sech_pulse};
    use proptest::prelude::*;

    fn classical_pair_set(phase: f64) -> StokesSampleSet {
        let grid = make_grid(512, 5.0).unwrap();
        let h = sech_pulse(&grid, &PulseSpec::sech(60.0, 0.2)).unwrap();
        let v = h.modulated(|_| phase);
        let photons = 60.0 / photon_energy_pj(1.56);
        let scale = grid.dt() / photon_energy_pj(1.56);
        let overlap: Complex64 = h
            .samples()
            .iter()
            .zip(v.samples())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * scale;
        let s = StokesSample {
            s0: 2.0 * photons,
            s1: 0.0,
            s2: 2.0 * overlap.re,
            s3: 2.0 * overlap.im,
        };
        StokesSampleSet {
            distance: 0.0,
            samples: vec![s, s],
            pairing: PairingScheme {
                seed: 0,
                rounds: 1,
                n_traj: 2,
            },
        }
    }

    #[test]
    fn stokes_of_identical_pulses() {
        let grid = make_grid(512, 5.0).unwrap();
        let h = sech_pulse(&grid, &PulseSpec::sech(60.0, 0.2)).unwrap();
        let set = stokes_samples_from(&[h.clone(), h.clone(), h], 0.0, 3, 2).unwrap();
        let m = set.mean();
        let photons = 60.0 / photon_energy_pj(1.56);
        assert!((m.s0 / (2.0 * 4.712e8) - 1.0).abs() < 1e-3);
        assert!((m.s0 - 2.0 * photons).abs() / m.s0 < 1e-6);
        assert!(m.s1.abs() < 1e-6 * m.s0);
        assert!(m.s3.abs() < 1e-6 * m.s0);
        assert!((m.s2 - m.s0).abs() < 1e-6 * m.s0);
    }

    #[test]
    fn quarter_wave_rotation_moves_to_s3() {
        let m = classical_pair_set(PI / 2.0).mean();
        assert!(m.s2.abs() < 1e-6 * m.s0);
        assert!((m.s3 - m.s0).abs() < 1e-6 * m.s0);
    }

    #[test]
    fn pairing_is_fixed_point_free() {
        let mut rng = trajectory_rng(5, 0);
        for n in [2usize, 3, 10, 101] {
            let p = cyclic_permutation(n, &mut rng);
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
            let mut sorted = p.clone();
            sorted.sort();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn too_few_trajectories() {
        let grid = make_grid(256, 5.0).unwrap();
        let h = sech_pulse(&grid, &PulseSpec::sech(60.0, 0.2)).unwrap();
        assert!(matches!(
            stokes_samples_from(&[h], 0.0, 1, 1),
            Err(Error::TooFewTrajectories(1))
        ));
    }

    #[test]
    fn vanishing_mean_stokes_rejected() {
        let z = StokesSample {
            s0: 10.0,
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
        };
        let set = StokesSampleSet {
            distance: 0.0,
            samples: vec![z, z, z],
            pairing: PairingScheme {
                seed: 0,
                rounds: 1,
                n_traj: 3,
            },
        };
        assert!(matches!(dark_plane_squeezing(&set), Err(Error::NoDarkPlane)));
    }

    #[test]
    fn loss_examples() {
        let r = SqueezingResult::from_variances(1.0, 0.1, 10.0, 0.0, 100);
        let budget = LossBudget {
            fiber_length: 0.0,
            intrinsic_loss_db_per_km: 1.0,
            external_efficiency: 0.8,
        };
        let out = apply_losses(&r, &budget).unwrap();
        assert!((out.v_min - 0.28).abs() < 1e-15);
        assert!((out.squeezing_db - (-5.528419686577808)).abs() < 1e-12);
        let same = apply_losses(&r, &LossBudget::lossless()).unwrap();
        assert_eq!(same.v_min, r.v_min);
        assert_eq!(same.v_max, r.v_max);
        let coherent = SqueezingResult::from_variances(1.0, 1.0, 1.0, 0.0, 100);
        for eta in [0.1, 0.5, 0.99] {
            let b = LossBudget {
                external_efficiency: eta,
                ..LossBudget::lossless()
            };
            assert_eq!(apply_losses(&coherent, &b).unwrap().v_min, 1.0);
        }
        let bad = LossBudget {
            external_efficiency: 1.5,
            ..LossBudget::lossless()
        };
        assert!(apply_losses(&r, &bad).is_err());
        let zero = LossBudget {
            external_efficiency: 0.0,
            ..LossBudget::lossless()
        };
        assert!(apply_losses(&r, &zero).is_err());
    }

    #[test]
    fn total_efficiency_includes_fiber() {
        let b = LossBudget {
            fiber_length: 30.0,
            intrinsic_loss_db_per_km: 1.0,
            external_efficiency: 0.8,
        };
        assert!((b.total_efficiency() - 0.8 * 10f64.powf(-0.003)).abs() < 1e-15);
    }

    // closed-form eigenvalues of the 2×2 covariance as an independent route
    fn eigen(form: &QuadForm) -> (f64, f64) {
        let tr = form.c11 + form.c22;
        let det = form.c11 * form.c22 - form.c12 * form.c12;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - disc, 0.5 * tr + disc)
    }

    proptest! {
        #[test]
        fn theta_scan_matches_eigenvalues(a in 0.01f64..100.0, b in 0.01f64..100.0, rho in -0.99f64..0.99) {
            let form = QuadForm { c11: a, c12: rho * (a * b).sqrt(), c22: b };
            let (lo, theta, hi) = form.extrema();
            let (elo, ehi) = eigen(&form);
            prop_assert!((lo - elo).abs() <= 1e-6 * ehi);
            prop_assert!((hi - ehi).abs() <= 1e-6 * ehi);
            prop_assert!((form.at(theta) - elo).abs() <= 1e-6 * ehi);
            prop_assert!(lo <= hi);
        }

        #[test]
        fn losses_monotone(v in 0.001f64..0.999, e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
            let r = SqueezingResult::from_variances(1.0, v, 1.0 / v, 0.0, 100);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let at = |eta: f64| apply_losses(&r, &LossBudget { external_efficiency: eta, ..LossBudget::lossless() }).unwrap().v_min;
            prop_assert!(at(lo) >= at(hi));
        }
    }
}
