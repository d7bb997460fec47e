//! Squeezing over (duration × energy × length), with checkpointed cells,
//! optimum extraction and dataset export.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    constant_peak_power_curve, optimal_duration, soliton_energy, soliton_number, RamanCriterion,
    K_THRESHOLD_BAND,
};
use crate::detector::{
    apply_losses, measure, shot_noise_baseline, LossBudget, Measurement, SqueezingResult,
    DEFAULT_PAIRING_ROUNDS,
};
use crate::engine::{run_ensemble, GridPolicy, PropagationConfig};
use crate::error::{Error, Result};
use crate::fiber::FiberParams;
use crate::grid::PulseSpec;
use crate::units::{db_to_linear, SECH_FWHM_RATIO};

pub const LOSSLESS_TAG: &str = "lossless";

/// A named loss scenario applied at detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub tag: String,
    /// Include the fiber's intrinsic loss over the propagated length.
    pub fiber_loss: bool,
    /// Output coupling × detector efficiency.
    pub external_efficiency: f64,
}

impl LossSpec {
    pub fn new(tag: &str, fiber_loss: bool, external_efficiency: f64) -> Self {
        Self {
            tag: tag.to_string(),
            fiber_loss,
            external_efficiency,
        }
    }

    pub fn lossless() -> Self {
        Self::new(LOSSLESS_TAG, false, 1.0)
    }

    /// lossless, fiber, fiber+5%, fiber+20%
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::lossless(),
            Self::new("fiber", true, 1.0),
            Self::new("fiber+5%", true, 0.95),
            Self::new("fiber+20%", true, 0.8),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag.is_empty() || self.tag.contains(',') {
            return Err(Error::invalid("loss.tag", "must be non-empty and comma-free"));
        }
        if !(self.external_efficiency > 0.0 && self.external_efficiency <= 1.0) {
            return Err(Error::invalid(
                "loss.external_efficiency",
                format!("{} outside (0, 1]", self.external_efficiency),
            ));
        }
        if self.tag == LOSSLESS_TAG && (self.fiber_loss || self.external_efficiency != 1.0) {
            return Err(Error::invalid("loss.tag", "`lossless` is reserved for the loss-free budget"));
        }
        Ok(())
    }

    pub fn budget(&self, fiber: &FiberParams, z: f64) -> LossBudget {
        LossBudget {
            fiber_length: z,
            intrinsic_loss_db_per_km: if self.fiber_loss { fiber.intrinsic_loss } else { 0.0 },
            external_efficiency: self.external_efficiency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// ps, strictly increasing.
    pub durations: Vec<f64>,
    /// pJ, strictly increasing.
    pub energies: Vec<f64>,
    /// m, strictly increasing.
    pub distances: Vec<f64>,
    pub n_traj: usize,
    pub loss_budgets: Vec<LossSpec>,
    pub master_seed: u64,
    pub grid: GridPolicy,
    pub raman_noise: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            durations: linspace(0.11, 0.5, 14),
            energies: logspace(22.5, 120.0, 14),
            distances: vec![0.6, 1.8, 3.6, 7.2, 12.0, 15.0, 18.0, 24.0, 30.0],
            n_traj: 1000,
            loss_budgets: LossSpec::standard_set(),
            master_seed: 1,
            grid: GridPolicy::default(),
            raman_noise: false,
        }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

fn check_axis(field: &str, axis: &[f64], min_len: usize) -> Result<()> {
    if axis.len() < min_len {
        return Err(Error::invalid(field, format!("needs at least {min_len} points")));
    }
    if axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid(field, "values must be finite and > 0"));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(field, "must be strictly increasing"));
    }
    Ok(())
}

impl SweepSpec {
    pub fn validate(&self, fiber: &FiberParams) -> Result<()> {
        fiber.validate()?;
        if fiber.beta2 >= 0.0 {
            return Err(Error::invalid(
                "fiber.beta2",
                "sweeps annotate soliton numbers and need beta2 < 0",
            ));
        }
        check_axis("sweep.durations", &self.durations, 2)?;
        check_axis("sweep.energies", &self.energies, 2)?;
        check_axis("sweep.distances", &self.distances, 1)?;
        if self.n_traj < 2 {
            return Err(Error::invalid("sweep.n_traj", "must be >= 2"));
        }
        self.grid.validate()?;
        let mut tags: Vec<&str> = Vec::new();
        for b in &self.loss_budgets {
            b.validate()?;
            if tags.contains(&b.tag.as_str()) {
                return Err(Error::invalid("sweep.loss_budgets", format!("duplicate tag {}", b.tag)));
            }
            tags.push(&b.tag);
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.durations.len() * self.energies.len()
    }

    fn z_max(&self) -> f64 {
        *self.distances.last().unwrap_or(&0.0)
    }

    /// Seed of cell (T, E): depends only on the master seed and the cell's
    /// coordinates, never on its position in the schedule.
    pub fn cell_seed(&self, fwhm: f64, energy: f64) -> u64 {
        let mut h = Sha256::new();
        h.update(b"cell-seed");
        h.update(self.master_seed.to_le_bytes());
        h.update(fwhm.to_bits().to_le_bytes());
        h.update(energy.to_bits().to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }

    /// Checkpoint key: everything that changes the cell's lossless result.
    fn cell_key(&self, fiber: &FiberParams, fwhm: f64, energy: f64) -> String {
        let mut h = Sha256::new();
        let body = serde_json::json!({
            "T": fwhm,
            "E": energy,
            "z": self.distances,
            "n_traj": self.n_traj,
            "seed": self.cell_seed(fwhm, energy),
            "grid": self.grid,
            "raman_noise": self.raman_noise,
            "fiber": fiber,
            "pairing_rounds": DEFAULT_PAIRING_ROUNDS,
        });
        h.update(body.to_string().as_bytes());
        let d = h.finalize();
        d[..12].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Work and memory a sweep is expected to need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub cells: usize,
    pub trajectories: u64,
    pub trajectory_steps: u64,
    pub max_points: usize,
    /// Snapshot storage of the largest cell (ensemble plus baseline).
    pub peak_cell_bytes: u64,
    /// Single-core wall time, rough.
    pub est_cpu_seconds: f64,
}

/// Per-step cost model calibrated on a desktop core: ~2.2 ns·n·log₂n.
const STEP_COST_S: f64 = 2.2e-9;

pub fn estimate_resources(spec: &SweepSpec, fiber: &FiberParams) -> Result<ResourceEstimate> {
    spec.validate(fiber)?;
    let mut steps = 0u64;
    let mut seconds = 0.0;
    let mut max_points = 0;
    for &t in &spec.durations {
        for &e in &spec.energies {
            let pulse = PulseSpec::sech(e, t);
            let grid = spec.grid.grid_for(&pulse, fiber, spec.z_max())?;
            let dz = spec.grid.step_for(&pulse, fiber);
            let cfg = cell_config(spec, dz, 0);
            let n = grid.n_points();
            max_points = max_points.max(n);
            let s = (cfg.step_count() * spec.n_traj) as u64;
            steps += s;
            seconds += s as f64 * STEP_COST_S * n as f64 * (n as f64).log2();
        }
    }
    Ok(ResourceEstimate {
        cells: spec.cell_count(),
        trajectories: (spec.cell_count() * spec.n_traj) as u64 * 2,
        trajectory_steps: steps,
        max_points,
        peak_cell_bytes: 2 * (spec.n_traj * spec.distances.len() * max_points * 16) as u64,
        est_cpu_seconds: seconds,
    })
}

fn cell_config(spec: &SweepSpec, dz: f64, seed: u64) -> PropagationConfig {
    PropagationConfig {
        total_length: spec.z_max(),
        dz,
        snapshot_distances: spec.distances.clone(),
        quantum_noise: true,
        raman_noise: spec.raman_noise,
        distributed_loss: false,
        seed,
        ..PropagationConfig::default()
    }
}

/// Lossless result of one (T, E) cell, as stored in a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub key: String,
    pub fwhm: f64,
    pub energy: f64,
    pub seed: u64,
    pub n_points: usize,
    pub window: f64,
    pub dz: f64,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub fwhm: f64,
    pub energy: f64,
    pub seed: u64,
    pub n_points: usize,
    pub window: f64,
    pub dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub fwhm: f64,
    pub energy: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    pub fiber: FiberParams,
    pub master_seed: u64,
    pub n_traj: usize,
    pub pairing_rounds: usize,
    pub grid: GridPolicy,
    pub raman_noise: bool,
    /// fs, used for the K column.
    pub t_r_fs: f64,
    pub durations: Vec<f64>,
    pub energies: Vec<f64>,
    pub distances: Vec<f64>,
    pub loss_budgets: Vec<LossSpec>,
    pub cells: Vec<CellInfo>,
    pub failed_cells: Vec<CellFailure>,
}

/// One row of the dataset. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "T_ps")]
    pub fwhm: f64,
    #[serde(rename = "E_pJ")]
    pub energy: f64,
    #[serde(rename = "z_m")]
    pub distance: f64,
    pub loss_tag: String,
    pub squeezing_db: f64,
    pub antisqueezing_db: f64,
    pub theta_opt_rad: f64,
    #[serde(rename = "N")]
    pub soliton_number: f64,
    #[serde(rename = "K")]
    pub raman_k: f64,
    pub stat_err_db: f64,
    pub homodyne_db: f64,
}

impl SweepRecord {
    pub fn peak_power(&self) -> f64 {
        self.energy * SECH_FWHM_RATIO / (2.0 * self.fwhm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    pub provenance: Provenance,
    pub records: Vec<SweepRecord>,
}

impl SweepDataset {
    pub fn is_complete(&self) -> bool {
        self.provenance.failed_cells.is_empty()
    }

    pub fn loss_tags(&self) -> Vec<String> {
        self.provenance.loss_budgets.iter().map(|b| b.tag.clone()).collect()
    }

    pub fn records_for<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a SweepRecord> + 'a {
        self.records.iter().filter(move |r| r.loss_tag == tag)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads for cells; 0 uses the ambient pool.
    pub threads: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Print one line per finished cell to stderr.
    pub verbose: bool,
    /// Stop after this many newly computed cells (the dataset is then
    /// flagged incomplete). Used to split long sweeps into sessions.
    pub max_new_cells: Option<usize>,
}

/// Evaluate one (T, E) cell without losses.
pub fn run_cell(spec: &SweepSpec, fiber: &FiberParams, fwhm: f64, energy: f64) -> Result<CellOutcome> {
    let pulse = PulseSpec::sech(energy, fwhm);
    let grid = spec.grid.grid_for(&pulse, fiber, spec.z_max())?;
    let dz = spec.grid.step_for(&pulse, fiber);
    let seed = spec.cell_seed(fwhm, energy);
    let cfg = cell_config(spec, dz, seed);
    let ens = run_ensemble(&grid, &pulse, fiber, &cfg, spec.n_traj, 1)?;
    let base = shot_noise_baseline(&grid, &pulse, fiber, &cfg, spec.n_traj, seed, 1)?;
    let measurements = measure(&ens, &base, seed)?;
    Ok(CellOutcome {
        key: spec.cell_key(fiber, fwhm, energy),
        fwhm,
        energy,
        seed,
        n_points: grid.n_points(),
        window: grid.window(),
        dz,
        measurements,
    })
}

fn checkpoint_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("cell-{key}.json"))
}

fn load_checkpoint(dir: &Path, key: &str) -> Option<CellOutcome> {
    let text = fs::read_to_string(checkpoint_path(dir, key)).ok()?;
    let cell: CellOutcome = serde_json::from_str(&text).ok()?;
    (cell.key == key).then_some(cell)
}

/// Write-temp-then-rename so a crash never leaves a half-written cell.
fn store_checkpoint(dir: &Path, cell: &CellOutcome) -> Result<()> {
    let path = checkpoint_path(dir, &cell.key);
    let tmp = dir.join(format!(".cell-{}.{}.tmp", cell.key, std::process::id()));
    let text = serde_json::to_string(cell).map_err(|e| Error::Parse(e.to_string()))?;
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

enum CellState {
    Done(CellOutcome),
    Failed(String),
    Skipped,
}

/// Run every cell of the sweep, reusing checkpoints found in
/// `opts.checkpoint_dir`. Failed cells are listed in the provenance and
/// contribute no records.
pub fn run_sweep(spec: &SweepSpec, fiber: &FiberParams, opts: &SweepOptions) -> Result<SweepDataset> {
    spec.validate(fiber)?;
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cells: Vec<(f64, f64)> = spec
        .durations
        .iter()
        .flat_map(|&t| spec.energies.iter().map(move |&e| (t, e)))
        .collect();

    let budget = opts.max_new_cells.unwrap_or(usize::MAX);
    let started = std::sync::atomic::AtomicUsize::new(0);
    let one = |&(t, e): &(f64, f64)| -> CellState {
        let key = spec.cell_key(fiber, t, e);
        if let Some(dir) = &opts.checkpoint_dir {
            if let Some(cell) = load_checkpoint(dir, &key) {
                return CellState::Done(cell);
            }
        }
        if started.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= budget {
            return CellState::Skipped;
        }
        match run_cell(spec, fiber, t, e) {
            Ok(cell) => {
                if let Some(dir) = &opts.checkpoint_dir {
                    if let Err(err) = store_checkpoint(dir, &cell) {
                        return CellState::Failed(format!("checkpoint write failed: {err}"));
                    }
                }
                if opts.verbose {
                    let last = cell.measurements.last().map(|m| m.dark_plane.squeezing_db);
                    eprintln!(
                        "cell T = {t:.4} ps, E = {e:.3} pJ: {:.2} dB at {} m",
                        last.unwrap_or(f64::NAN),
                        spec.z_max()
                    );
                }
                CellState::Done(cell)
            }
            Err(err) => CellState::Failed(err.to_string()),
        }
    };

    let states: Vec<CellState> = if opts.threads == 1 {
        cells.iter().map(one).collect()
    } else if opts.threads == 0 {
        cells.par_iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        pool.install(|| cells.par_iter().map(one).collect())
    };

    let t_r_fs = RamanCriterion::from_fiber(fiber)?.t_r_fs;
    let mut records = Vec::new();
    let mut infos = Vec::new();
    let mut failed = Vec::new();
    for (&(t, e), state) in cells.iter().zip(states) {
        match state {
            CellState::Done(cell) => {
                infos.push(CellInfo {
                    fwhm: t,
                    energy: e,
                    seed: cell.seed,
                    n_points: cell.n_points,
                    window: cell.window,
                    dz: cell.dz,
                });
                records.extend(cell_records(&cell, spec, fiber, t_r_fs)?);
            }
            CellState::Failed(reason) => failed.push(CellFailure {
                fwhm: t,
                energy: e,
                reason,
            }),
            CellState::Skipped => failed.push(CellFailure {
                fwhm: t,
                energy: e,
                reason: "not run in this session".into(),
            }),
        }
    }
    Ok(SweepDataset {
        provenance: Provenance {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            fiber: fiber.clone(),
            master_seed: spec.master_seed,
            n_traj: spec.n_traj,
            pairing_rounds: DEFAULT_PAIRING_ROUNDS,
            grid: spec.grid.clone(),
            raman_noise: spec.raman_noise,
            t_r_fs,
            durations: spec.durations.clone(),
            energies: spec.energies.clone(),
            distances: spec.distances.clone(),
            loss_budgets: spec.loss_budgets.clone(),
            cells: infos,
            failed_cells: failed,
        },
        records,
    })
}

fn lossless_record(
    t: f64,
    e: f64,
    m: &Measurement,
    fiber: &FiberParams,
    t_r_fs: f64,
) -> Result<SweepRecord> {
    let dp = &m.dark_plane;
    Ok(SweepRecord {
        fwhm: t,
        energy: e,
        distance: dp.distance,
        loss_tag: LOSSLESS_TAG.to_string(),
        squeezing_db: dp.squeezing_db,
        antisqueezing_db: dp.antisqueezing_db,
        theta_opt_rad: dp.theta_opt,
        soliton_number: soliton_number(fiber, t, e)?,
        raman_k: RamanCriterion::with_tr(t_r_fs).k(fiber, t, dp.distance)?,
        stat_err_db: dp.stat_err_db(),
        homodyne_db: m.homodyne.squeezing_db,
    })
}

/// Re-derive a record under `loss` from its lossless counterpart.
pub fn lossy_record(lossless: &SweepRecord, loss: &LossSpec, fiber: &FiberParams) -> Result<SweepRecord> {
    loss.validate()?;
    let budget = loss.budget(fiber, lossless.distance);
    let eta = budget.total_efficiency();
    if eta == 1.0 {
        // skip the dB round trip so unit efficiency is an exact identity
        return Ok(SweepRecord {
            loss_tag: loss.tag.clone(),
            ..lossless.clone()
        });
    }
    let as_result = |db: f64, anti: f64| SqueezingResult {
        distance: lossless.distance,
        v_min: db_to_linear(db),
        v_max: db_to_linear(anti),
        theta_opt: lossless.theta_opt_rad,
        squeezing_db: db,
        antisqueezing_db: anti,
        baseline: 1.0,
        n_traj: 2,
    };
    let dark = apply_losses(&as_result(lossless.squeezing_db, lossless.antisqueezing_db), &budget)?;
    let homo = apply_losses(&as_result(lossless.homodyne_db, lossless.homodyne_db), &budget)?;
    // the noise on V scales with η, so its dB error shrinks by ηV/V'
    let scale = eta * db_to_linear(lossless.squeezing_db) / dark.v_min;
    Ok(SweepRecord {
        loss_tag: loss.tag.clone(),
        squeezing_db: dark.squeezing_db,
        antisqueezing_db: dark.antisqueezing_db,
        stat_err_db: lossless.stat_err_db * scale,
        homodyne_db: homo.squeezing_db,
        ..lossless.clone()
    })
}

fn cell_records(
    cell: &CellOutcome,
    spec: &SweepSpec,
    fiber: &FiberParams,
    t_r_fs: f64,
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for m in &cell.measurements {
        let base = lossless_record(cell.fwhm, cell.energy, m, fiber, t_r_fs)?;
        for loss in &spec.loss_budgets {
            if loss.tag == LOSSLESS_TAG {
                out.push(base.clone());
            } else {
                out.push(lossy_record(&base, loss, fiber)?);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// optima

/// Vertex of the parabola through three points, if the middle one is a
/// convex minimum. Returns (x*, y*) with x* inside [x0, x2].
pub fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (y[1] - y[2], y[1] - y[0]);
    let den = a * fa - b * fb;
    if !(y[1] <= y[0] && y[1] <= y[2]) || den == 0.0 || !den.is_finite() {
        return None;
    }
    let xv = x[1] - 0.5 * (a * a * fa - b * b * fb) / den;
    if !(xv >= x[0] && xv <= x[2]) {
        return None;
    }
    // Lagrange form evaluated at the vertex
    let l = |i: usize, j: usize, k: usize| (xv - x[j]) * (xv - x[k]) / ((x[i] - x[j]) * (x[i] - x[k]));
    let yv = y[0] * l(0, 1, 2) + y[1] * l(1, 0, 2) + y[2] * l(2, 0, 1);
    Some((xv, yv.min(y[1])))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptimum {
    #[serde(rename = "T_ps")]
    pub fwhm: f64,
    #[serde(rename = "E_pJ")]
    pub energy: f64,
    pub squeezing_db: f64,
    #[serde(rename = "N")]
    pub soliton_number: f64,
    /// True when `energy` comes from the quadratic refinement in ln E.
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationOptimum {
    #[serde(rename = "T_ps")]
    pub fwhm: f64,
    pub squeezing_db: f64,
    #[serde(rename = "K")]
    pub raman_k: f64,
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceOptima {
    pub z_m: f64,
    /// Grid argmin.
    pub best_cell: SweepRecord,
    /// Best cell refined along the energy axis.
    pub best: EnergyOptimum,
    /// Energy maximizing squeezing for each duration on the axis.
    pub optimal_energy: Vec<EnergyOptimum>,
    /// Duration maximizing the energy-optimized squeezing.
    pub best_duration: DurationOptimum,
    /// Spearman correlation between squeezing_db and peak power over all cells.
    pub peak_power_rank_corr: f64,
    /// Spread of the slice is within its statistical error.
    pub flat: bool,
    /// Best cell is away from every grid edge on a non-flat surface.
    pub interior_optimum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthPoint {
    pub z_m: f64,
    pub squeezing_db: f64,
    #[serde(rename = "E_pJ")]
    pub energy: f64,
    #[serde(rename = "T_ps")]
    pub fwhm: f64,
    #[serde(rename = "N")]
    pub soliton_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Max squeezing never gets worse with length beyond the allowed slack.
    pub non_increasing: bool,
    pub slack_db: f64,
    /// (z_prev, z, increase in dB) for every step that got worse.
    pub violations: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPowerLine {
    #[serde(rename = "P0_W")]
    pub peak_power: f64,
    /// (T ps, E pJ)
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoKPoint {
    pub z_m: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T_ps")]
    pub fwhm: f64,
}

/// Analytic curves for overlaying on the maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlays {
    /// (T ps, E pJ) of the fundamental soliton.
    pub soliton_line: Vec<(f64, f64)>,
    pub constant_peak_power: Vec<PeakPowerLine>,
    /// Durations on the edges of the K threshold band at every distance.
    pub iso_k: Vec<IsoKPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimaCurves {
    pub loss_tag: String,
    pub t_r_fs: f64,
    pub per_distance: Vec<DistanceOptima>,
    pub max_squeezing_vs_z: Vec<LengthPoint>,
    pub monotonicity: MonotonicityReport,
    pub overlays: Overlays,
}

struct Slice<'a> {
    /// cells[i_t][i_e]
    cells: Vec<Vec<&'a SweepRecord>>,
}

fn axis_index(axis: &[f64], v: f64) -> Option<usize> {
    axis.iter().position(|&a| a.to_bits() == v.to_bits())
}

fn build_slices<'a>(ds: &'a SweepDataset, tag: &'a str) -> Result<Vec<Slice<'a>>> {
    let p = &ds.provenance;
    let (nt, ne, nz) = (p.durations.len(), p.energies.len(), p.distances.len());
    let mut grid: Vec<Vec<Vec<Option<&SweepRecord>>>> = vec![vec![vec![None; ne]; nt]; nz];
    for r in ds.records_for(tag) {
        let (Some(i), Some(j), Some(k)) = (
            axis_index(&p.durations, r.fwhm),
            axis_index(&p.energies, r.energy),
            axis_index(&p.distances, r.distance),
        ) else {
            return Err(Error::Parse(format!(
                "record (T = {}, E = {}, z = {}) is off the dataset axes",
                r.fwhm, r.energy, r.distance
            )));
        };
        if grid[k][i][j].is_some() {
            return Err(Error::Parse(format!(
                "duplicate record (T = {}, E = {}, z = {}, {tag})",
                r.fwhm, r.energy, r.distance
            )));
        }
        grid[k][i][j] = Some(r);
    }
    let mut out = Vec::with_capacity(nz);
    for (k, slice) in grid.into_iter().enumerate() {
        let mut cells = Vec::with_capacity(nt);
        for (i, row) in slice.into_iter().enumerate() {
            let mut r = Vec::with_capacity(ne);
            for (j, c) in row.into_iter().enumerate() {
                r.push(c.ok_or_else(|| {
                    Error::Incomplete(format!(
                        "missing cell T = {}, E = {}, z = {} ({tag})",
                        p.durations[i], p.energies[j], p.distances[k]
                    ))
                })?);
            }
            cells.push(r);
        }
        out.push(Slice { cells });
    }
    Ok(out)
}

fn energy_optimum(row: &[&SweepRecord], fiber: &FiberParams) -> Result<EnergyOptimum> {
    let j = row
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.squeezing_db.total_cmp(&b.1.squeezing_db).then(a.0.cmp(&b.0)))
        .map(|(j, _)| j)
        .unwrap();
    let best = row[j];
    let refined = if j > 0 && j + 1 < row.len() {
        let x = [row[j - 1].energy.ln(), best.energy.ln(), row[j + 1].energy.ln()];
        let y = [row[j - 1].squeezing_db, best.squeezing_db, row[j + 1].squeezing_db];
        parabolic_vertex(x, y)
    } else {
        None
    };
    let (energy, sq, interpolated) = match refined {
        Some((lx, y)) => (lx.exp(), y, true),
        None => (best.energy, best.squeezing_db, false),
    };
    Ok(EnergyOptimum {
        fwhm: best.fwhm,
        energy,
        squeezing_db: sq,
        soliton_number: soliton_number(fiber, best.fwhm, energy)?,
        interpolated,
    })
}

fn duration_optimum(
    curve: &[EnergyOptimum],
    fiber: &FiberParams,
    z: f64,
    t_r_fs: f64,
) -> Result<DurationOptimum> {
    let i = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.squeezing_db.total_cmp(&b.1.squeezing_db).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let refined = if i > 0 && i + 1 < curve.len() {
        let x = [curve[i - 1].fwhm, curve[i].fwhm, curve[i + 1].fwhm];
        let y = [curve[i - 1].squeezing_db, curve[i].squeezing_db, curve[i + 1].squeezing_db];
        parabolic_vertex(x, y)
    } else {
        None
    };
    let (t, sq, interpolated) = match refined {
        Some((t, y)) => (t, y, true),
        None => (curve[i].fwhm, curve[i].squeezing_db, false),
    };
    Ok(DurationOptimum {
        fwhm: t,
        squeezing_db: sq,
        raman_k: RamanCriterion::with_tr(t_r_fs).k(fiber, t, z)?,
        interpolated,
    })
}

/// Locate optima in every distance slice of one loss budget.
pub fn extract_optima(ds: &SweepDataset, loss_tag: &str) -> Result<OptimaCurves> {
    let p = &ds.provenance;
    if !p.loss_budgets.iter().any(|b| b.tag == loss_tag) {
        return Err(Error::invalid("loss_tag", format!("no budget tagged {loss_tag}")));
    }
    let fiber = &p.fiber;
    let slices = build_slices(ds, loss_tag)?;
    let mut per_distance = Vec::with_capacity(slices.len());
    for (k, slice) in slices.iter().enumerate() {
        let z = p.distances[k];
        let all: Vec<&SweepRecord> = slice.cells.iter().flatten().copied().collect();
        // argmin with ties broken by axis order so record order never matters
        let (bi, bj) = (0..p.durations.len())
            .flat_map(|i| (0..p.energies.len()).map(move |j| (i, j)))
            .min_by(|&(i, j), &(a, b)| {
                slice.cells[i][j]
                    .squeezing_db
                    .total_cmp(&slice.cells[a][b].squeezing_db)
                    .then((i, j).cmp(&(a, b)))
            })
            .unwrap();
        let best_cell = slice.cells[bi][bj].clone();
        let best = energy_optimum(&slice.cells[bi], fiber)?;
        let optimal_energy = slice
            .cells
            .iter()
            .map(|row| energy_optimum(row, fiber))
            .collect::<Result<Vec<_>>>()?;
        let best_duration = duration_optimum(&optimal_energy, fiber, z, p.t_r_fs)?;

        let sq: Vec<f64> = all.iter().map(|r| r.squeezing_db).collect();
        let p0: Vec<f64> = all.iter().map(|r| r.peak_power()).collect();
        let lo = sq.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let err = all.iter().map(|r| r.stat_err_db).sum::<f64>() / all.len() as f64;
        let flat = hi - lo <= 2.0 * err;
        let interior = !flat
            && bi > 0
            && bi + 1 < p.durations.len()
            && bj > 0
            && bj + 1 < p.energies.len();
        per_distance.push(DistanceOptima {
            z_m: z,
            best_cell,
            best,
            optimal_energy,
            best_duration,
            peak_power_rank_corr: spearman(&sq, &p0),
            flat,
            interior_optimum: interior,
        });
    }

    let max_squeezing_vs_z: Vec<LengthPoint> = per_distance
        .iter()
        .map(|d| LengthPoint {
            z_m: d.z_m,
            squeezing_db: d.best.squeezing_db,
            energy: d.best.energy,
            fwhm: d.best.fwhm,
            soliton_number: d.best.soliton_number,
        })
        .collect();
    let slack = per_distance
        .iter()
        .map(|d| d.best_cell.stat_err_db)
        .fold(0.0, f64::max);
    let violations: Vec<(f64, f64, f64)> = max_squeezing_vs_z
        .windows(2)
        .filter_map(|w| {
            let up = w[1].squeezing_db - w[0].squeezing_db;
            (up > slack).then_some((w[0].z_m, w[1].z_m, up))
        })
        .collect();

    Ok(OptimaCurves {
        loss_tag: loss_tag.to_string(),
        t_r_fs: p.t_r_fs,
        per_distance,
        max_squeezing_vs_z,
        monotonicity: MonotonicityReport {
            non_increasing: violations.is_empty(),
            slack_db: slack,
            violations,
        },
        overlays: overlays(p)?,
    })
}

fn overlays(p: &Provenance) -> Result<Overlays> {
    let fiber = &p.fiber;
    // a linear fiber supports no soliton
    let soliton_line = if fiber.gamma > 0.0 {
        p.durations
            .iter()
            .map(|&t| Ok((t, soliton_energy(fiber, t)?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let t_mid = p.durations[p.durations.len() / 2];
    let constant_peak_power = p
        .energies
        .iter()
        .step_by((p.energies.len() / 4).max(1))
        .map(|&e| {
            let p0 = e * SECH_FWHM_RATIO / (2.0 * t_mid);
            Ok(PeakPowerLine {
                peak_power: p0,
                curve: constant_peak_power_curve(p0, &p.durations)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iso_k = Vec::new();
    if p.t_r_fs > 0.0 {
        for &z in &p.distances {
            for k in [K_THRESHOLD_BAND.0, K_THRESHOLD_BAND.1] {
                iso_k.push(IsoKPoint {
                    z_m: z,
                    k,
                    fwhm: optimal_duration(fiber, z, k, p.t_r_fs)?,
                });
            }
        }
    }
    Ok(Overlays {
        soliton_line,
        constant_peak_power,
        iso_k,
    })
}

/// Max-squeezing-vs-length curve for each budget, recomputed from the
/// lossless records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub loss: LossSpec,
    pub points: Vec<LengthPoint>,
}

pub fn loss_scan(ds: &SweepDataset, budgets: &[LossSpec]) -> Result<Vec<LossCurve>> {
    if !ds.provenance.loss_budgets.iter().any(|b| b.tag == LOSSLESS_TAG) {
        return Err(Error::Incomplete("dataset has no lossless records".into()));
    }
    let fiber = &ds.provenance.fiber;
    budgets
        .iter()
        .map(|b| {
            b.validate()?;
            let records = ds
                .records_for(LOSSLESS_TAG)
                .map(|r| lossy_record(r, b, fiber))
                .collect::<Result<Vec<_>>>()?;
            let view = SweepDataset {
                provenance: Provenance {
                    loss_budgets: vec![b.clone()],
                    ..ds.provenance.clone()
                },
                records,
            };
            Ok(LossCurve {
                loss: b.clone(),
                points: extract_optima(&view, &b.tag)?.max_squeezing_vs_z,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            _ => Err(Error::Parse(format!(
                "cannot infer format of {} (expected .csv or .json)",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Sidecar holding the provenance of a CSV export: `x.csv` → `x.provenance.json`.
pub fn provenance_sidecar(path: &Path) -> PathBuf {
    path.with_extension("provenance.json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn dataset_csv(ds: &SweepDataset) -> Result<Vec<u8>> {
    to_csv(&ds.records)
}

/// Write the dataset. CSV gets a provenance sidecar; JSON embeds it.
pub fn export_dataset(ds: &SweepDataset, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write_atomic(path, &to_json(ds)?),
        Format::Csv => {
            write_atomic(path, &dataset_csv(ds)?)?;
            write_atomic(&provenance_sidecar(path), &to_json(&ds.provenance)?)
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<SweepDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match Format::from_path(path)? {
        Format::Json => serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display()))),
        Format::Csv => {
            let side = provenance_sidecar(path);
            let prov_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let provenance: Provenance =
                serde_json::from_str(&prov_text).map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?;
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let records = rdr
                .deserialize()
                .collect::<std::result::Result<Vec<SweepRecord>, _>>()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            Ok(SweepDataset { provenance, records })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct OptimumRow {
    loss_tag: String,
    z_m: f64,
    #[serde(rename = "T_ps")]
    fwhm: f64,
    #[serde(rename = "E_opt_pJ")]
    energy: f64,
    squeezing_db: f64,
    #[serde(rename = "N")]
    soliton_number: f64,
    interpolated: bool,
}

/// JSON: all curves in one file. CSV: the optimal-energy curves, one row
/// per (budget, distance, duration).
pub fn export_optima(curves: &[OptimaCurves], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write_atomic(path, &to_json(&curves)?),
        Format::Csv => {
            let rows: Vec<OptimumRow> = curves
                .iter()
                .flat_map(|c| {
                    c.per_distance.iter().flat_map(move |d| {
                        d.optimal_energy.iter().map(move |o| OptimumRow {
                            loss_tag: c.loss_tag.clone(),
                            z_m: d.z_m,
                            fwhm: o.fwhm,
                            energy: o.energy,
                            squeezing_db: o.squeezing_db,
                            soliton_number: o.soliton_number,
                            interpolated: o.interpolated,
                        })
                    })
                })
                .collect();
            write_atomic(path, &to_csv(&rows)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::linear_to_db;
    use proptest::prelude::*;

    #[test]
    fn default_axes() {
        let s = SweepSpec::default();
        assert_eq!(s.durations.len(), 14);
        assert_eq!(s.energies.len(), 14);
        assert!((s.durations[0] - 0.11).abs() < 1e-15 && (s.durations[13] - 0.5).abs() < 1e-12);
        assert!((s.energies[0] - 22.5).abs() < 1e-12 && (s.energies[13] - 120.0).abs() < 1e-9);
        let r = s.energies[1] / s.energies[0];
        assert!(s.energies.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
        for z in [0.6, 7.2, 30.0] {
            assert!(s.distances.contains(&z));
        }
        s.validate(&FiberParams::default()).unwrap();
    }

    #[test]
    fn spec_validation() {
        let f = FiberParams::default();
        let mut s = SweepSpec::default();
        s.durations = vec![0.2];
        assert!(s.validate(&f).is_err());
        s.durations = vec![0.3, 0.2];
        assert!(s.validate(&f).is_err());
        s = SweepSpec::default();
        s.loss_budgets.push(LossSpec::new("fiber", true, 0.5));
        assert!(s.validate(&f).is_err());
        s = SweepSpec::default();
        s.loss_budgets = vec![LossSpec::new("bad", true, 1.5)];
        assert!(s.validate(&f).is_err());
        let normal = FiberParams {
            beta2: 1.0,
            ..FiberParams::default()
        };
        assert!(SweepSpec::default().validate(&normal).is_err());
    }

    #[test]
    fn cell_seeds_depend_on_coordinates_only() {
        let s = SweepSpec::default();
        let a = s.cell_seed(0.2, 50.0);
        let mut t = s.clone();
        t.durations.reverse();
        assert_eq!(a, t.cell_seed(0.2, 50.0));
        assert_ne!(a, s.cell_seed(0.2, 50.000001));
        let u = SweepSpec {
            master_seed: 2,
            ..s.clone()
        };
        assert_ne!(a, u.cell_seed(0.2, 50.0));
    }

    #[test]
    fn vertex_of_exact_parabola() {
        let f = |x: f64| 2.0 * (x - 0.37).powi(2) - 5.0;
        let (x, y) = parabolic_vertex([0.1, 0.3, 0.6], [f(0.1), f(0.3), f(0.6)]).unwrap();
        assert!((x - 0.37).abs() < 1e-12 && (y + 5.0).abs() < 1e-12);
        assert!(parabolic_vertex([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]).is_none());
        assert!(parabolic_vertex([0.0, 1.0, 2.0], [1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        // ties get average ranks
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn loss_record_matches_apply_losses() {
        let f = FiberParams::default();
        let r = SweepRecord {
            fwhm: 0.2,
            energy: 60.0,
            distance: 30.0,
            loss_tag: LOSSLESS_TAG.into(),
            squeezing_db: -10.0,
            antisqueezing_db: 20.0,
            theta_opt_rad: 0.1,
            soliton_number: 1.0,
            raman_k: 0.1,
            stat_err_db: 0.2,
            homodyne_db: -10.0,
        };
        let l = lossy_record(&r, &LossSpec::new("x", true, 0.8), &f).unwrap();
        let eta = 0.8 * 10f64.powf(-0.003);
        let expect = linear_to_db(eta * 0.1 + 1.0 - eta);
        assert!((l.squeezing_db - expect).abs() < 1e-12);
        assert_eq!(l.loss_tag, "x");
        assert!(l.stat_err_db < r.stat_err_db);
        let same = lossy_record(&r, &LossSpec::new("y", false, 1.0), &f).unwrap();
        assert!((same.squeezing_db - r.squeezing_db).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn vertex_recovers_random_parabola(
            x0 in -5.0f64..5.0, a in 0.1f64..10.0, c in -20.0f64..20.0,
            h1 in 0.05f64..2.0, h2 in 0.05f64..2.0, off in -0.5f64..0.5,
        ) {
            // middle sample nearest to the vertex keeps it a discrete minimum
            let xm = x0 + off * h1.min(h2);
            let xs = [xm - h1, xm, xm + h2];
            let f = |x: f64| a * (x - x0).powi(2) + c;
            if f(xs[1]) <= f(xs[0]) && f(xs[1]) <= f(xs[2]) {
                let (xv, yv) = parabolic_vertex(xs, [f(xs[0]), f(xs[1]), f(xs[2])]).unwrap();
                prop_assert!((xv - x0).abs() < 1e-8 * (1.0 + x0.abs()));
                prop_assert!((yv - c).abs() < 1e-8 * (1.0 + c.abs()));
            }
        }
    }
}
