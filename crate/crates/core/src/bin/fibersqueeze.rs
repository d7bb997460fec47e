use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fibersqueeze::analytics::{
    constant_peak_power_curve, optimal_duration, raman_k, soliton_energy, soliton_number, ssfs_rate,
    RamanCriterion, DEFAULT_K_STAR,
};
use fibersqueeze::config::RunConfig;
use fibersqueeze::detector::apply_losses;
use fibersqueeze::engine::{dump, TrajectoryEnsemble};
use fibersqueeze::grid::{pulse_metrics, sech_pulse, PulseMetrics};
use fibersqueeze::sweep::{
    estimate_resources, export_dataset, export_optima, extract_optima, read_dataset, run_sweep,
    Format, SweepOptions,
};
use fibersqueeze::units::SECH_FWHM_RATIO;
use fibersqueeze::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "fibersqueeze", version, about = "Polarization squeezing in nonlinear fibers")]
struct Cli {
    /// TOML configuration file; missing sections take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides propagation.seed and sweep.master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone)]
struct PulseOverrides {
    /// Pulse energy, pJ.
    #[arg(long)]
    energy: Option<f64>,
    /// Intensity FWHM, ps.
    #[arg(long)]
    fwhm: Option<f64>,
    /// Fiber length, m (the last snapshot is moved here).
    #[arg(long)]
    length: Option<f64>,
    #[arg(long, value_enum)]
    raman: Option<Switch>,
    /// Trajectories per ensemble.
    #[arg(long)]
    n_traj: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one pulse and tabulate metrics at every snapshot.
    Propagate {
        /// Deterministic run without vacuum noise.
        #[arg(long)]
        classical: bool,
        /// Also write the raw snapshots (binary).
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        pulse: PulseOverrides,
    },
    /// Squeezing at every snapshot for both estimators and all loss budgets.
    Squeeze {
        #[command(flatten)]
        pulse: PulseOverrides,
    },
    /// Run (or resume) the duration × energy × length sweep.
    Sweep {
        /// Stop after this many newly computed cells.
        #[arg(long)]
        max_cells: Option<usize>,
        /// Checkpoint directory (default: OUT/checkpoints).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Only print the resource estimate.
        #[arg(long)]
        estimate: bool,
    },
    /// Extract optima from a sweep dataset.
    Optima {
        dataset: PathBuf,
        /// Loss budget to analyze (default: every budget in the dataset).
        #[arg(long)]
        loss_tag: Option<String>,
    },
    /// Closed-form soliton and Raman relations.
    Analytics {
        #[command(subcommand)]
        query: Query,
    },
}

#[derive(Subcommand)]
enum Query {
    /// Fundamental-soliton energy (pJ) for FWHM T.
    SolitonEnergy {
        #[arg(long = "T")]
        t: f64,
    },
    /// Soliton number N for FWHM T and energy E.
    SolitonNumber {
        #[arg(long = "T")]
        t: f64,
        #[arg(long = "E")]
        e: f64,
    },
    /// Raman parameter K = |β₂|·T_R·z/T³.
    K {
        #[arg(long = "T")]
        t: f64,
        #[arg(long)]
        z: f64,
        /// T_R in fs (default: from the configured Raman response).
        #[arg(long = "TR")]
        tr: Option<f64>,
    },
    /// Self-frequency-shift rate, rad/ps/m.
    SsfsRate {
        /// sech width τ, ps (or give --T).
        #[arg(long, conflicts_with = "t")]
        tau: Option<f64>,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long = "TR")]
        tr: Option<f64>,
    },
    /// Duration (ps) on the iso-K contour at length z.
    OptimalDuration {
        #[arg(long)]
        z: f64,
        #[arg(long = "K", default_value_t = DEFAULT_K_STAR)]
        k: f64,
        #[arg(long = "TR")]
        tr: Option<f64>,
    },
    /// Energies along a constant-peak-power line.
    PeakPowerCurve {
        #[arg(long = "P0")]
        p0: f64,
        #[arg(long = "T", num_args = 1.., value_delimiter = ',')]
        t: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn resolve(cli: &Cli) -> fibersqueeze::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.propagation.seed = seed;
        if let Some(s) = cfg.sweep.as_mut() {
            s.master_seed = seed;
        }
    }
    let overrides = match &cli.command {
        Command::Propagate { pulse, .. } | Command::Squeeze { pulse } => Some(pulse),
        _ => None,
    };
    if let Some(o) = overrides {
        if let Some(e) = o.energy {
            cfg.pulse.energy = e;
        }
        if let Some(t) = o.fwhm {
            cfg.pulse.fwhm = t;
        }
        if let Some(l) = o.length {
            let p = &mut cfg.propagation;
            p.total_length = l;
            p.snapshot_distances.retain(|&z| z < l);
            p.snapshot_distances.push(l);
        }
        if let Some(r) = o.raman {
            cfg.fiber.raman.enabled = matches!(r, Switch::On);
        }
        if let Some(n) = o.n_traj {
            cfg.detection.n_traj = n;
        }
    }
    if matches!(cli.command, Command::Sweep { .. }) && cfg.sweep.is_none() {
        let mut s = fibersqueeze::sweep::SweepSpec::default();
        s.master_seed = cli.seed.unwrap_or(cfg.propagation.seed);
        cfg.sweep = Some(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> fibersqueeze::Result<ExitCode> {
    let cfg = resolve(&cli)?;
    if cli.dry_run {
        print!("{}", cfg.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let format: Format = cli.format.into();
    match &cli.command {
        Command::Propagate { classical, dump, .. } => cmd_propagate(&cli, &cfg, *classical, *dump, format),
        Command::Squeeze { .. } => cmd_squeeze(&cli, &cfg, format),
        Command::Sweep {
            max_cells,
            checkpoints,
            estimate,
        } => cmd_sweep(&cli, &cfg, *max_cells, checkpoints.clone(), *estimate, format),
        Command::Optima { dataset, loss_tag } => cmd_optima(&cli, dataset, loss_tag.as_deref(), format),
        Command::Analytics { query } => cmd_analytics(&cfg, query),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], format: Format) -> fibersqueeze::Result<()> {
    let bytes = match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(rows).map_err(|e| Error::Parse(e.to_string()))?;
            v.push(b'\n');
            v
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Parse(e.to_string()))?
        }
    };
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct MetricsRow {
    seed: u64,
    z_m: f64,
    energy_pj: f64,
    peak_power_w: f64,
    fwhm_ps: f64,
    centroid_rad_per_ps: f64,
    spectral_fwhm_rad_per_ps: f64,
}

impl MetricsRow {
    fn new(seed: u64, z: f64, m: &PulseMetrics) -> Self {
        Self {
            seed,
            z_m: z,
            energy_pj: m.energy,
            peak_power_w: m.peak_power,
            fwhm_ps: m.fwhm,
            centroid_rad_per_ps: m.spectral_centroid,
            spectral_fwhm_rad_per_ps: m.spectral_fwhm,
        }
    }
}

fn cmd_propagate(
    cli: &Cli,
    cfg: &RunConfig,
    classical: bool,
    want_dump: bool,
    format: Format,
) -> fibersqueeze::Result<ExitCode> {
    let grid = cfg.grid()?;
    let seed = cfg.propagation.seed;
    let input = sech_pulse(&grid, &cfg.pulse)?;
    let mut rows = vec![MetricsRow::new(seed, 0.0, &pulse_metrics(&input)?)];
    let ens = if classical {
        let snaps = cfg.propagate_classical()?;
        TrajectoryEnsemble {
            grid: grid.clone(),
            input_spec: cfg.pulse.clone(),
            fiber: cfg.fiber.clone(),
            config: fibersqueeze::engine::PropagationConfig {
                quantum_noise: false,
                ..cfg.propagation.clone()
            },
            master_seed: seed,
            snapshots: snaps.into_iter().skip(1).map(|s| vec![s]).collect(),
        }
    } else {
        cfg.ensemble(cli.threads)?
    };
    for (d, &z) in ens.distances().iter().enumerate() {
        // ensemble-averaged metrics (a single member when classical)
        let ms = ens.snapshots[d]
            .iter()
            .map(pulse_metrics)
            .collect::<fibersqueeze::Result<Vec<_>>>()?;
        let n = ms.len() as f64;
        let avg = |f: fn(&PulseMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
        let m = PulseMetrics {
            energy: avg(|m| m.energy),
            peak_power: avg(|m| m.peak_power),
            fwhm: avg(|m| m.fwhm),
            spectral_centroid: avg(|m| m.spectral_centroid),
            spectral_fwhm: avg(|m| m.spectral_fwhm),
        };
        rows.push(MetricsRow::new(seed, z, &m));
    }
    println!(
        "# seed {seed}, grid {} points over {:.3} ps, dz {} m",
        grid.n_points(),
        grid.window(),
        cfg.propagation.dz
    );
    println!(
        "{:>8} {:>12} {:>12} {:>10} {:>14}",
        "z_m", "energy_pJ", "peak_W", "fwhm_ps", "centroid"
    );
    for r in &rows {
        println!(
            "{:>8.3} {:>12.5} {:>12.4} {:>10.5} {:>14.6}",
            r.z_m, r.energy_pj, r.peak_power_w, r.fwhm_ps, r.centroid_rad_per_ps
        );
    }
    let path = cli.out.join(format!("propagate.{}", format.extension()));
    write_rows(&path, &rows, format)?;
    if want_dump {
        let p = cli.out.join("snapshots.bin");
        dump::write_snapshots(&ens, &p)?;
        eprintln!("snapshots written to {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SqueezeRow {
    seed: u64,
    z_m: f64,
    loss_tag: String,
    squeezing_db: f64,
    antisqueezing_db: f64,
    theta_opt_rad: f64,
    homodyne_db: f64,
    stat_err_db: f64,
    v_min: f64,
    v_max: f64,
}

fn cmd_squeeze(cli: &Cli, cfg: &RunConfig, format: Format) -> fibersqueeze::Result<ExitCode> {
    let n = cfg.detection.n_traj;
    let measurements = cfg.squeeze(cli.threads)?;
    let seed = cfg.propagation.seed;
    let mut rows = Vec::new();
    for m in &measurements {
        for loss in &cfg.detection.loss_budgets {
            let budget = loss.budget(&cfg.fiber, m.dark_plane.distance);
            let dark = apply_losses(&m.dark_plane, &budget)?;
            let homo = apply_losses(&m.homodyne, &budget)?;
            rows.push(SqueezeRow {
                seed,
                z_m: dark.distance,
                loss_tag: loss.tag.clone(),
                squeezing_db: dark.squeezing_db,
                antisqueezing_db: dark.antisqueezing_db,
                theta_opt_rad: dark.theta_opt,
                homodyne_db: homo.squeezing_db,
                stat_err_db: dark.stat_err_db(),
                v_min: dark.v_min,
                v_max: dark.v_max,
            });
        }
    }
    println!(
        "# seed {seed}, {n} trajectories, E = {} pJ, T = {} ps",
        cfg.pulse.energy, cfg.pulse.fwhm
    );
    println!(
        "{:>8} {:>11} {:>10} {:>10} {:>10} {:>8}",
        "z_m", "loss", "sq_dB", "anti_dB", "homo_dB", "err_dB"
    );
    for r in &rows {
        println!(
            "{:>8.3} {:>11} {:>10.3} {:>10.3} {:>10.3} {:>8.3}",
            r.z_m, r.loss_tag, r.squeezing_db, r.antisqueezing_db, r.homodyne_db, r.stat_err_db
        );
    }
    write_rows(&cli.out.join(format!("squeeze.{}", format.extension())), &rows, format)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    cli: &Cli,
    cfg: &RunConfig,
    max_cells: Option<usize>,
    checkpoints: Option<PathBuf>,
    estimate_only: bool,
    format: Format,
) -> fibersqueeze::Result<ExitCode> {
    let spec = cfg.sweep.as_ref().expect("sweep section resolved");
    let est = estimate_resources(spec, &cfg.fiber)?;
    eprintln!(
        "sweep: {} cells, {} trajectory steps, up to {} grid points, ~{:.0} MB per cell, ~{:.0} CPU-s",
        est.cells,
        est.trajectory_steps,
        est.max_points,
        est.peak_cell_bytes as f64 / 1e6,
        est.est_cpu_seconds
    );
    if estimate_only {
        println!("{}", serde_json::to_string_pretty(&est).map_err(|e| Error::Parse(e.to_string()))?);
        return Ok(ExitCode::SUCCESS);
    }
    let opts = SweepOptions {
        threads: cli.threads,
        checkpoint_dir: Some(checkpoints.unwrap_or_else(|| cli.out.join("checkpoints"))),
        verbose: true,
        max_new_cells: max_cells,
    };
    let ds = run_sweep(spec, &cfg.fiber, &opts)?;
    let path = cli.out.join(format!("sweep.{}", format.extension()));
    export_dataset(&ds, &path, format)?;
    println!(
        "# seed {}: {} records written to {}",
        spec.master_seed,
        ds.records.len(),
        path.display()
    );
    if ds.is_complete() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &ds.provenance.failed_cells {
            eprintln!("incomplete cell T = {} ps, E = {} pJ: {}", f.fwhm, f.energy, f.reason);
        }
        Ok(ExitCode::from(EXIT_RUNTIME))
    }
}

fn cmd_optima(cli: &Cli, dataset: &Path, tag: Option<&str>, format: Format) -> fibersqueeze::Result<ExitCode> {
    let ds = read_dataset(dataset)?;
    let tags = match tag {
        Some(t) => vec![t.to_string()],
        None => ds.loss_tags(),
    };
    let curves = tags
        .iter()
        .map(|t| extract_optima(&ds, t))
        .collect::<fibersqueeze::Result<Vec<_>>>()?;
    println!("# seed {}", ds.provenance.master_seed);
    for c in &curves {
        println!("[{}]", c.loss_tag);
        for d in &c.per_distance {
            if !d.interior_optimum {
                let why = if d.flat { "flat surface" } else { "optimum on the grid edge" };
                println!(
                    "  z = {:>6} m: no interior optimum ({why}); best {:.3} dB at T = {} ps, E = {:.2} pJ",
                    d.z_m, d.best_cell.squeezing_db, d.best_cell.fwhm, d.best_cell.energy
                );
            } else {
                println!(
                    "  z = {:>6} m: {:.3} dB at T = {} ps, E = {:.2} pJ (N = {:.3}); best T = {:.4} ps, K = {:.4}",
                    d.z_m,
                    d.best.squeezing_db,
                    d.best.fwhm,
                    d.best.energy,
                    d.best.soliton_number,
                    d.best_duration.fwhm,
                    d.best_duration.raman_k
                );
            }
        }
        let m = &c.monotonicity;
        println!(
            "  max squeezing non-increasing in z: {} ({} violations)",
            m.non_increasing,
            m.violations.len()
        );
    }
    export_optima(&curves, &cli.out.join(format!("optima.{}", format.extension())), format)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_analytics(cfg: &RunConfig, query: &Query) -> fibersqueeze::Result<ExitCode> {
    let fiber = &cfg.fiber;
    let tr = |given: Option<f64>| -> fibersqueeze::Result<f64> {
        match given {
            Some(v) => Ok(v),
            None => Ok(RamanCriterion::from_fiber(fiber)?.t_r_fs),
        }
    };
    match query {
        Query::SolitonEnergy { t } => println!("{:.6} pJ", soliton_energy(fiber, *t)?),
        Query::SolitonNumber { t, e } => println!("{:.6}", soliton_number(fiber, *t, *e)?),
        Query::K { t, z, tr: g } => println!("{:.6}", raman_k(fiber, *t, *z, tr(*g)?)?),
        Query::SsfsRate { tau, t, tr: g } => {
            let tau = match (tau, t) {
                (Some(v), _) => *v,
                (None, Some(t)) => t / SECH_FWHM_RATIO,
                (None, None) => return Err(Error::Parse("ssfs-rate needs --tau or --T".into())),
            };
            println!("{:.6} rad/ps/m (red shift)", ssfs_rate(fiber, tau, tr(*g)?)?)
        }
        Query::OptimalDuration { z, k, tr: g } => {
            println!("{:.6} ps", optimal_duration(fiber, *z, *k, tr(*g)?)?)
        }
        Query::PeakPowerCurve { p0, t } => {
            println!("T_ps,E_pJ");
            for (t, e) in constant_peak_power_curve(*p0, t)? {
                println!("{t},{e}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
