//! C interface to the fibersqueeze simulator.
//!
//! Objects are opaque handles created by `fsq_*_new`/`fsq_*_run` calls and
//! released with the matching `fsq_*_free`. Every fallible call returns an
//! `FsqStatus`; the message of the most recent failure on the calling thread
//! is available from `fsq_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fibersqueeze::analytics;
use fibersqueeze::config::RunConfig;
use fibersqueeze::detector::{self, LossBudget, SqueezingResult};
use fibersqueeze::fiber::FiberParams;
use fibersqueeze::grid::pulse_metrics;
use fibersqueeze::sweep::{self, Format, SweepDataset, SweepOptions, SweepSpec};
use fibersqueeze::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsqFormat {
    Csv = 0,
    Json = 1,
}

/// Pulse metrics at one distance of a classical run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FsqMetricsRow {
    pub distance_m: f64,
    pub energy_pj: f64,
    pub peak_power_w: f64,
    pub fwhm_ps: f64,
    pub centroid_rad_per_ps: f64,
}

/// Lossless calibrated squeezing at one distance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FsqSqueezeRow {
    pub distance_m: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub squeezing_db: f64,
    pub antisqueezing_db: f64,
    pub theta_opt_rad: f64,
    pub homodyne_db: f64,
    pub stat_err_db: f64,
}

pub struct FsqConfig {
    inner: RunConfig,
}

pub struct FsqPropagation {
    rows: Vec<FsqMetricsRow>,
}

pub struct FsqSqueeze {
    rows: Vec<FsqSqueezeRow>,
    results: Vec<SqueezingResult>,
}

pub struct FsqSweep {
    dataset: SweepDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> FsqStatus {
    match err {
        Error::InvalidParameter { .. } => FsqStatus::InvalidArgument,
        Error::Io { .. } => FsqStatus::Io,
        e if e.is_config_error() => FsqStatus::Config,
        _ => FsqStatus::Runtime,
    }
}

fn fail(err: Error) -> FsqStatus {
    let s = status_of(&err);
    set_last_error(err.to_string());
    s
}

/// Run `f`, turning panics into `FsqStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), FsqStatus>) -> FsqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsqStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            FsqStatus::Panic
        }
    }
}

fn null(what: &str) -> FsqStatus {
    set_last_error(format!("{what} is null"));
    FsqStatus::NullPointer
}

unsafe fn cfg_ref<'a>(cfg: *const FsqConfig) -> Result<&'a FsqConfig, FsqStatus> {
    cfg.as_ref().ok_or_else(|| null("config"))
}

unsafe fn cfg_mut<'a>(cfg: *mut FsqConfig) -> Result<&'a mut FsqConfig, FsqStatus> {
    cfg.as_mut().ok_or_else(|| null("config"))
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, FsqStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_last_error(format!("{what} is not valid UTF-8"));
        FsqStatus::InvalidArgument
    })
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), FsqStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

/// Apply `edit` to a copy of the configuration and keep it only if it
/// still validates.
fn edit_config(cfg: &mut FsqConfig, edit: impl FnOnce(&mut RunConfig)) -> Result<(), FsqStatus> {
    let mut next = cfg.inner.clone();
    edit(&mut next);
    next.validate().map_err(fail)?;
    cfg.inner = next;
    Ok(())
}

fn fiber_of(cfg: *const FsqConfig) -> FiberParams {
    // SAFETY: caller passes null or a live handle
    unsafe { cfg.as_ref() }.map_or_else(FiberParams::default, |c| c.inner.fiber.clone())
}

fn t_r(fiber: &FiberParams, given: f64) -> Result<f64, FsqStatus> {
    if given >= 0.0 {
        Ok(given)
    } else {
        analytics::RamanCriterion::from_fiber(fiber)
            .map(|c| c.t_r_fs)
            .map_err(fail)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fsq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn fsq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New configuration with every default applied.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_new(out: *mut *mut FsqConfig) -> FsqStatus {
    guard(|| {
        let cfg = Box::new(FsqConfig {
            inner: RunConfig::default(),
        });
        write_out(out, Box::into_raw(cfg))
    })
}

/// Parse a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_from_toml(text: *const c_char, out: *mut *mut FsqConfig) -> FsqStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        let inner = RunConfig::from_toml_str(text).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(FsqConfig { inner })))
    })
}

/// Resolved configuration as TOML; release with `fsq_string_free`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_to_toml(cfg: *const FsqConfig, out: *mut *mut c_char) -> FsqStatus {
    guard(|| {
        let cfg = cfg_ref(cfg)?;
        let text = cfg.inner.to_toml().map_err(fail)?;
        let s = CString::new(text).map_err(|e| fail(Error::Parse(e.to_string())))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_free(cfg: *mut FsqConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sech pulse with `energy_pj` pJ and intensity FWHM `fwhm_ps` ps.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_pulse(cfg: *mut FsqConfig, energy_pj: f64, fwhm_ps: f64) -> FsqStatus {
    guard(|| {
        edit_config(cfg_mut(cfg)?, |c| {
            c.pulse.energy = energy_pj;
            c.pulse.fwhm = fwhm_ps;
        })
    })
}

/// β₂ (ps²/km), β₃ (ps³/km), γ (1/(W·km)), intrinsic loss (dB/km).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_fiber(
    cfg: *mut FsqConfig,
    beta2: f64,
    beta3: f64,
    gamma: f64,
    loss_db_per_km: f64,
) -> FsqStatus {
    guard(|| {
        edit_config(cfg_mut(cfg)?, |c| {
            c.fiber.beta2 = beta2;
            c.fiber.beta3 = beta3;
            c.fiber.gamma = gamma;
            c.fiber.intrinsic_loss = loss_db_per_km;
        })
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_raman(cfg: *mut FsqConfig, enabled: bool) -> FsqStatus {
    guard(|| edit_config(cfg_mut(cfg)?, |c| c.fiber.raman.enabled = enabled))
}

/// Fiber length, step and snapshot distances (m, strictly increasing).
///
/// # Safety
/// `cfg` must be a live handle; `distances` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_propagation(
    cfg: *mut FsqConfig,
    length_m: f64,
    dz_m: f64,
    distances: *const f64,
    n: usize,
) -> FsqStatus {
    guard(|| {
        let cfg = cfg_mut(cfg)?;
        if distances.is_null() && n > 0 {
            return Err(null("distances"));
        }
        let z = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(distances, n).to_vec()
        };
        edit_config(cfg, |c| {
            c.propagation.total_length = length_m;
            c.propagation.dz = dz_m;
            c.propagation.snapshot_distances = z;
        })
    })
}

/// Master seed of propagation and sweeps.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_seed(cfg: *mut FsqConfig, seed: u64) -> FsqStatus {
    guard(|| {
        edit_config(cfg_mut(cfg)?, |c| {
            c.propagation.seed = seed;
            if let Some(s) = c.sweep.as_mut() {
                s.master_seed = seed;
            }
        })
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_config_set_n_traj(cfg: *mut FsqConfig, n_traj: usize) -> FsqStatus {
    guard(|| edit_config(cfg_mut(cfg)?, |c| c.detection.n_traj = n_traj))
}

/// Noise-free propagation; row 0 is the input pulse.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_propagate_classical(cfg: *const FsqConfig, out: *mut *mut FsqPropagation) -> FsqStatus {
    guard(|| {
        let cfg = &cfg_ref(cfg)?.inner;
        let snaps = cfg.propagate_classical().map_err(fail)?;
        let z = std::iter::once(0.0).chain(cfg.propagation.snapshot_distances.iter().copied());
        let mut rows = Vec::with_capacity(snaps.len());
        for (z, env) in z.zip(&snaps) {
            let m = pulse_metrics(env).map_err(fail)?;
            rows.push(FsqMetricsRow {
                distance_m: z,
                energy_pj: m.energy,
                peak_power_w: m.peak_power,
                fwhm_ps: m.fwhm,
                centroid_rad_per_ps: m.spectral_centroid,
            });
        }
        write_out(out, Box::into_raw(Box::new(FsqPropagation { rows })))
    })
}

/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_propagation_len(p: *const FsqPropagation) -> usize {
    p.as_ref().map_or(0, |p| p.rows.len())
}

/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_propagation_row(p: *const FsqPropagation, i: usize, out: *mut FsqMetricsRow) -> FsqStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("propagation"))?;
        let row = p.rows.get(i).ok_or_else(|| {
            set_last_error(format!("row {i} out of range (len {})", p.rows.len()));
            FsqStatus::InvalidArgument
        })?;
        write_out(out, *row)
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsq_propagation_free(p: *mut FsqPropagation) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Stochastic ensemble plus shot-noise run; one lossless row per snapshot.
/// `threads` = 0 uses every core; results do not depend on it.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_squeeze(cfg: *const FsqConfig, threads: usize, out: *mut *mut FsqSqueeze) -> FsqStatus {
    guard(|| {
        let cfg = &cfg_ref(cfg)?.inner;
        let ms = cfg.squeeze(threads).map_err(fail)?;
        let rows = ms
            .iter()
            .map(|m| FsqSqueezeRow {
                distance_m: m.dark_plane.distance,
                v_min: m.dark_plane.v_min,
                v_max: m.dark_plane.v_max,
                squeezing_db: m.dark_plane.squeezing_db,
                antisqueezing_db: m.dark_plane.antisqueezing_db,
                theta_opt_rad: m.dark_plane.theta_opt,
                homodyne_db: m.homodyne.squeezing_db,
                stat_err_db: m.dark_plane.stat_err_db(),
            })
            .collect();
        let results = ms.into_iter().map(|m| m.dark_plane).collect();
        write_out(out, Box::into_raw(Box::new(FsqSqueeze { rows, results })))
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_squeeze_len(s: *const FsqSqueeze) -> usize {
    s.as_ref().map_or(0, |s| s.rows.len())
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_squeeze_row(s: *const FsqSqueeze, i: usize, out: *mut FsqSqueezeRow) -> FsqStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("squeeze"))?;
        let row = s.rows.get(i).ok_or_else(|| {
            set_last_error(format!("row {i} out of range (len {})", s.rows.len()));
            FsqStatus::InvalidArgument
        })?;
        write_out(out, *row)
    })
}

/// Row `i` after fiber loss over its own length plus an external efficiency.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_squeeze_row_with_loss(
    s: *const FsqSqueeze,
    i: usize,
    loss_db_per_km: f64,
    external_efficiency: f64,
    out: *mut FsqSqueezeRow,
) -> FsqStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("squeeze"))?;
        let (Some(row), Some(res)) = (s.rows.get(i), s.results.get(i)) else {
            set_last_error(format!("row {i} out of range (len {})", s.rows.len()));
            return Err(FsqStatus::InvalidArgument);
        };
        let budget = LossBudget {
            fiber_length: res.distance,
            intrinsic_loss_db_per_km: loss_db_per_km,
            external_efficiency,
        };
        let lossy = detector::apply_losses(res, &budget).map_err(fail)?;
        write_out(
            out,
            FsqSqueezeRow {
                v_min: lossy.v_min,
                v_max: lossy.v_max,
                squeezing_db: lossy.squeezing_db,
                antisqueezing_db: lossy.antisqueezing_db,
                ..*row
            },
        )
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsq_squeeze_free(s: *mut FsqSqueeze) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Beam-splitter loss on a normalized variance: `ηV + 1 − η`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_apply_loss(variance: f64, efficiency: f64, out: *mut f64) -> FsqStatus {
    guard(|| {
        let r = SqueezingResult {
            distance: 0.0,
            v_min: variance,
            v_max: variance,
            theta_opt: 0.0,
            squeezing_db: 0.0,
            antisqueezing_db: 0.0,
            baseline: 1.0,
            n_traj: 2,
        };
        let budget = LossBudget {
            external_efficiency: efficiency,
            ..LossBudget::lossless()
        };
        write_out(out, detector::apply_losses(&r, &budget).map_err(fail)?.v_min)
    })
}

/// Run the configuration's sweep section (defaults when absent).
/// `checkpoint_dir` may be NULL.
///
/// # Safety
/// `cfg` must be a live handle; `checkpoint_dir` NULL or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_sweep_run(
    cfg: *const FsqConfig,
    threads: usize,
    checkpoint_dir: *const c_char,
    out: *mut *mut FsqSweep,
) -> FsqStatus {
    guard(|| {
        let cfg = &cfg_ref(cfg)?.inner;
        let spec = cfg.sweep.clone().unwrap_or_else(|| SweepSpec {
            master_seed: cfg.propagation.seed,
            ..SweepSpec::default()
        });
        let dir = if checkpoint_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(c_str(checkpoint_dir, "checkpoint_dir")?))
        };
        let opts = SweepOptions {
            threads,
            checkpoint_dir: dir,
            ..SweepOptions::default()
        };
        let dataset = sweep::run_sweep(&spec, &cfg.fiber, &opts).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(FsqSweep { dataset })))
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_sweep_record_count(s: *const FsqSweep) -> usize {
    s.as_ref().map_or(0, |s| s.dataset.records.len())
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fsq_sweep_is_complete(s: *const FsqSweep) -> bool {
    s.as_ref().is_some_and(|s| s.dataset.is_complete())
}

/// # Safety
/// `s` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fsq_sweep_export(s: *const FsqSweep, path: *const c_char, format: FsqFormat) -> FsqStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("sweep"))?;
        let path = PathBuf::from(c_str(path, "path")?);
        let format = match format {
            FsqFormat::Csv => Format::Csv,
            FsqFormat::Json => Format::Json,
        };
        sweep::export_dataset(&s.dataset, &path, format).map_err(fail)
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsq_sweep_free(s: *mut FsqSweep) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Fundamental-soliton energy (pJ). `cfg` may be NULL for the default fiber.
///
/// # Safety
/// `cfg` NULL or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_soliton_energy(cfg: *const FsqConfig, fwhm_ps: f64, out: *mut f64) -> FsqStatus {
    guard(|| write_out(out, analytics::soliton_energy(&fiber_of(cfg), fwhm_ps).map_err(fail)?))
}

/// # Safety
/// `cfg` NULL or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_soliton_number(
    cfg: *const FsqConfig,
    fwhm_ps: f64,
    energy_pj: f64,
    out: *mut f64,
) -> FsqStatus {
    guard(|| {
        write_out(
            out,
            analytics::soliton_number(&fiber_of(cfg), fwhm_ps, energy_pj).map_err(fail)?,
        )
    })
}

/// Raman parameter K. A negative `t_r_fs` uses the configured response.
///
/// # Safety
/// `cfg` NULL or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_raman_k(
    cfg: *const FsqConfig,
    fwhm_ps: f64,
    z_m: f64,
    t_r_fs: f64,
    out: *mut f64,
) -> FsqStatus {
    guard(|| {
        let fiber = fiber_of(cfg);
        let tr = t_r(&fiber, t_r_fs)?;
        write_out(out, analytics::raman_k(&fiber, fwhm_ps, z_m, tr).map_err(fail)?)
    })
}

/// Self-frequency-shift rate (rad/ps/m) for sech width `tau_ps`.
///
/// # Safety
/// `cfg` NULL or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_ssfs_rate(cfg: *const FsqConfig, tau_ps: f64, t_r_fs: f64, out: *mut f64) -> FsqStatus {
    guard(|| {
        let fiber = fiber_of(cfg);
        let tr = t_r(&fiber, t_r_fs)?;
        write_out(out, analytics::ssfs_rate(&fiber, tau_ps, tr).map_err(fail)?)
    })
}

/// Duration (ps) with K = `k_star` at length `z_m`.
///
/// # Safety
/// `cfg` NULL or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsq_optimal_duration(
    cfg: *const FsqConfig,
    z_m: f64,
    k_star: f64,
    t_r_fs: f64,
    out: *mut f64,
) -> FsqStatus {
    guard(|| {
        let fiber = fiber_of(cfg);
        let tr = t_r(&fiber, t_r_fs)?;
        write_out(out, analytics::optimal_duration(&fiber, z_m, k_star, tr).map_err(fail)?)
    })
}
