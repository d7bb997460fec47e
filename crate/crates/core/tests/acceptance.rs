//! Acceptance suite. Runs every criterion once, prints one line each and
//! exits nonzero if any of them fails. Built with `harness = false` so the
//! report is never swallowed by output capture.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;

use fibersqueeze::analytics::{raman_k, soliton_energy, soliton_number, ssfs_rate};
use fibersqueeze::config::RunConfig;
use fibersqueeze::detector::{
    apply_losses, baseline_from_ensemble, measure, product_stat_err, LossBudget, Measurement,
    ShotNoiseBaseline, SqueezingResult,
};
use fibersqueeze::engine::{propagate, run_ensemble, run_ensemble_from, GridPolicy, PropagationConfig};
use fibersqueeze::fiber::FiberParams;
use fibersqueeze::grid::{make_grid, pulse_metrics, sech_pulse, ComplexEnvelope, PulseSpec};
use fibersqueeze::sweep::{
    dataset_csv, extract_optima, logspace, run_sweep, LossSpec, SweepDataset, SweepOptions,
    SweepSpec, LOSSLESS_TAG,
};
use fibersqueeze::units::linear_to_db;

// pinned tolerances
const C1_TOL_DB: f64 = 0.15;
const C2_REL_TOL: f64 = 0.05;
const C3_REL_TOL: f64 = 0.01;
const C4_REL_TOL: f64 = 0.20;
const C6_TARGET_DB: f64 = -6.0;
const C6_TOL_DB: f64 = 1.5;
const C7_TOL_DB: f64 = 0.2;
const C8_RANK_CORR: f64 = 0.8;
const C8_N_TOL: f64 = 0.25;
const C8_K_TOL: f64 = 0.30;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn record(&mut self, id: usize, name: &'static str, started: Instant, pass: bool, detail: String) {
        let line = Line {
            id,
            name,
            pass,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        };
        print_line(&line);
        self.lines.push(line);
    }
}

fn print_line(l: &Line) {
    println!(
        "[{}] {:>2} {:<34} {} ({:.1} s)",
        if l.pass { "PASS" } else { "FAIL" },
        l.id,
        l.name,
        l.detail,
        l.seconds
    );
}

/// Every stochastic estimate produced along the way, for the suite-wide
/// consistency and uncertainty checks.
#[derive(Default)]
struct Suite {
    /// (label, dark-plane, homodyne)
    pairs: Vec<(String, SqueezingResult, SqueezingResult)>,
    /// (label, V_min·V_max, n_traj) of estimates without a homodyne partner
    products: Vec<(String, f64, usize)>,
    /// |dark-plane − homodyne| of sweep cells, reported but not judged
    sweep_gaps: Vec<(String, f64)>,
}

impl Suite {
    fn add(&mut self, label: String, m: &Measurement) {
        self.pairs.push((label, m.dark_plane.clone(), m.homodyne.clone()));
    }
}

// independent oracles ----------------------------------------------------------

/// Linearized single-mode Kerr: minimum quadrature variance after a
/// nonlinear phase Φ, in shot-noise units.
fn kerr_vmin(phi: f64) -> f64 {
    1.0 + 2.0 * phi * phi - 2.0 * phi * (1.0 + phi * phi).sqrt()
}

/// SSFS rate 8·T_R·|β₂|/(15τ⁴) with β₂ in ps²/km, T_R in fs, τ in ps;
/// result in rad/ps per m.
fn ssfs_oracle(beta2_ps2_km: f64, t_r_fs: f64, tau_ps: f64) -> f64 {
    8.0 * (t_r_fs * 1e-3) * (beta2_ps2_km.abs() * 1e-3) / (15.0 * tau_ps.powi(4))
}

fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    // ranks with ties averaged, then Pearson on ranks
    fn rank(v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; v.len()];
        for i in 0..v.len() {
            let less = v.iter().filter(|&&x| x < v[i]).count() as f64;
            let equal = v.iter().filter(|&&x| x == v[i]).count() as f64;
            r[i] = less + (equal - 1.0) / 2.0;
        }
        r
    }
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

// criteria -------------------------------------------------------------------

fn c1_shot_noise(report: &mut Report, suite: &mut Suite) {
    let started = Instant::now();
    let n = 5000;
    let fiber = FiberParams::default().with_gamma(0.0);
    let spec = PulseSpec::sech(61.7, 0.2);
    let grid = make_grid(512, 4.0).unwrap();
    let cfg = PropagationConfig {
        total_length: 30.0,
        dz: 0.05,
        snapshot_distances: vec![30.0],
        seed: 101,
        ..PropagationConfig::default()
    };
    let ens = run_ensemble(&grid, &spec, &fiber, &cfg, n, 0).unwrap();
    // analytic normalization only: this checks the injected vacuum itself
    let m = measure(&ens, &ShotNoiseBaseline::unit(&[30.0], n), 7).unwrap();
    let dp = m[0].dark_plane.squeezing_db;
    let hd = m[0].homodyne.squeezing_db;
    let measured = baseline_from_ensemble(&ens, 7).unwrap();
    suite.add("shot noise".into(), &m[0]);
    report.record(
        1,
        "shot-noise calibration",
        started,
        dp.abs() <= C1_TOL_DB && hd.abs() <= C1_TOL_DB,
        format!(
            "dark-plane {dp:+.3} dB, homodyne {hd:+.3} dB (|.| <= {C1_TOL_DB}); θ-mean levels {:.4} / {:.4}",
            measured.dark_plane[0], measured.homodyne[0]
        ),
    );
}

fn c2_kerr_oracle(report: &mut Report, suite: &mut Suite) {
    let started = Instant::now();
    let n = 20000;
    let fiber = FiberParams::default().dispersionless().without_raman();
    let p: f64 = 100.0;
    let grid = make_grid(256, 5.0).unwrap();
    let flat = ComplexEnvelope::new(grid.clone(), vec![Complex64::new(p.sqrt(), 0.0); 256]).unwrap();
    let label = PulseSpec::sech(p * grid.window(), 1.0);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, phi) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let z = phi / (fiber.gamma_per_m() * p);
        let cfg = PropagationConfig {
            total_length: z,
            dz: z / 4.0,
            snapshot_distances: vec![z],
            seed: 200 + i as u64,
            ..PropagationConfig::default()
        };
        let ens = run_ensemble_from(&flat, &label, &fiber, &cfg, n, 0).unwrap();
        let lin = run_ensemble_from(&flat, &label, &fiber.clone().with_gamma(0.0), &cfg, n, 0).unwrap();
        let base = baseline_from_ensemble(&lin, 11).unwrap();
        let m = measure(&ens, &base, 11).unwrap().remove(0);
        let oracle = kerr_vmin(phi);
        for v in [m.dark_plane.v_min, m.homodyne.v_min] {
            worst = worst.max((v / oracle - 1.0).abs());
        }
        parts.push(format!(
            "Φ={phi}: {:.4}/{:.4} vs {oracle:.4}",
            m.dark_plane.v_min, m.homodyne.v_min
        ));
        suite.add(format!("Kerr Φ={phi}"), &m);
    }
    report.record(
        2,
        "Kerr analytic oracle",
        started,
        worst <= C2_REL_TOL,
        format!("{}; worst {:.2}% (<= {:.0}%)", parts.join(", "), 100.0 * worst, 100.0 * C2_REL_TOL),
    );
}

fn c3_soliton(report: &mut Report) {
    let started = Instant::now();
    let fiber = FiberParams::default().without_raman().without_beta3();
    let e = soliton_energy(&fiber, 0.2).unwrap();
    let spec = PulseSpec::sech(e, 0.2);
    let grid = GridPolicy::default().grid_for(&spec, &fiber, 30.0).unwrap();
    let start = sech_pulse(&grid, &spec).unwrap();
    let zs: Vec<f64> = (1..=30).map(f64::from).collect();
    let out = propagate(&start, &fiber, &PropagationConfig::classical(30.0, 0.01, zs)).unwrap();
    let p0 = start.peak_power();
    let dev = out
        .iter()
        .map(|o| (o.peak_power() / p0 - 1.0).abs())
        .fold(0.0, f64::max);
    report.record(
        3,
        "classical soliton invariance",
        started,
        dev < C3_REL_TOL,
        format!("E = {e:.3} pJ, max peak-power deviation over 30 m {:.2e} (< {C3_REL_TOL})", dev),
    );
}

fn c4_ssfs(report: &mut Report) {
    let started = Instant::now();
    let fiber = FiberParams::default().without_beta3();
    let tau = 0.1;
    let t = tau * 1.763;
    let spec = PulseSpec::sech(soliton_energy(&fiber, t).unwrap(), t);
    let grid = GridPolicy::default().grid_for(&spec, &fiber, 10.0).unwrap();
    let start = sech_pulse(&grid, &spec).unwrap();
    let zs: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
    let out = propagate(&start, &fiber, &PropagationConfig::classical(10.0, 0.005, zs.clone())).unwrap();
    let c0 = pulse_metrics(&start).unwrap().spectral_centroid;
    let shift: Vec<f64> = out
        .iter()
        .map(|o| pulse_metrics(o).unwrap().spectral_centroid - c0)
        .collect();
    // least-squares slope of the centroid against z
    let n = zs.len() as f64;
    let (mz, ms) = (zs.iter().sum::<f64>() / n, shift.iter().sum::<f64>() / n);
    let slope = zs.iter().zip(&shift).map(|(z, s)| (z - mz) * (s - ms)).sum::<f64>()
        / zs.iter().map(|z| (z - mz).powi(2)).sum::<f64>();
    let oracle = ssfs_oracle(fiber.beta2, 3.5, tau);
    let lib = ssfs_rate(&fiber, tau, 3.5).unwrap();
    let rel = (-slope / oracle - 1.0).abs();
    report.record(
        4,
        "SSFS rate",
        started,
        slope < 0.0 && rel <= C4_REL_TOL && (lib - oracle).abs() < 1e-12,
        format!(
            "drift {slope:+.4} rad/ps/m vs predicted -{oracle:.4} ({:+.1}%, within {:.0}%)",
            100.0 * (-slope / oracle - 1.0),
            100.0 * C4_REL_TOL
        ),
    );
}

fn c5_loss(report: &mut Report) {
    let started = Instant::now();
    let mk = |v: f64| SqueezingResult {
        distance: 0.0,
        v_min: v,
        v_max: 1.0 / v,
        theta_opt: 0.0,
        squeezing_db: linear_to_db(v),
        antisqueezing_db: -linear_to_db(v),
        baseline: 1.0,
        n_traj: 2,
    };
    let budget = |eta: f64| LossBudget {
        fiber_length: 0.0,
        intrinsic_loss_db_per_km: 0.0,
        external_efficiency: eta,
    };
    let a = apply_losses(&mk(0.1), &budget(0.8)).unwrap();
    let expected = 0.8 * 0.1 + 0.2;
    let ok_a = (a.v_min - expected).abs() <= 2.0 * f64::EPSILON && (a.squeezing_db + 5.528).abs() < 5e-4;
    let id = apply_losses(&mk(0.1), &budget(1.0)).unwrap();
    let ok_id = id.v_min == 0.1 && id.v_max == 10.0;
    let fixed = apply_losses(&mk(1.0), &budget(0.37)).unwrap();
    let ok_fixed = (fixed.v_min - 1.0).abs() <= f64::EPSILON;
    // the lumped fiber term uses the same transform: 1 dB/km over 1 km
    let fib = LossBudget {
        fiber_length: 1000.0,
        intrinsic_loss_db_per_km: 1.0,
        external_efficiency: 1.0,
    };
    let ok_fib = (fib.total_efficiency() - 10f64.powf(-0.1)).abs() < 1e-15;
    report.record(
        5,
        "loss transformation exactness",
        started,
        ok_a && ok_id && ok_fixed && ok_fib,
        format!(
            "V'=(0.1, η=0.8) {:.17} ({:.4} dB); η=1 identity {ok_id}; V=1 fixed point {ok_fixed}",
            a.v_min, a.squeezing_db
        ),
    );
}

fn c6_saturation(report: &mut Report, suite: &mut Suite) {
    let started = Instant::now();
    let mut cfg = RunConfig::default();
    let t = 0.3;
    cfg.pulse = PulseSpec::sech(soliton_energy(&cfg.fiber, t).unwrap(), t);
    cfg.detection.n_traj = 1000;
    cfg.propagation.total_length = 30.0;
    cfg.propagation.snapshot_distances = vec![7.2, 15.0, 30.0];
    cfg.propagation.dz = cfg.grid.step_for(&cfg.pulse, &cfg.fiber);
    cfg.propagation.seed = 606;
    cfg.validate().unwrap();
    let ms = cfg.squeeze(0).unwrap();
    let loss = LossSpec::new("fiber+20%", true, 0.8);
    let mut at30 = None;
    for m in &ms {
        let z = m.dark_plane.distance;
        suite.add(format!("soliton T=0.3 z={z}"), m);
        if z == 30.0 {
            let b = loss.budget(&cfg.fiber, z);
            at30 = Some((
                apply_losses(&m.dark_plane, &b).unwrap(),
                apply_losses(&m.homodyne, &b).unwrap(),
                m.dark_plane.squeezing_db,
            ));
        }
    }
    let (dp, hd, lossless) = at30.unwrap();
    let n = soliton_number(&cfg.fiber, t, cfg.pulse.energy).unwrap();
    report.record(
        6,
        "loss-saturated squeezing at 30 m",
        started,
        (dp.squeezing_db - C6_TARGET_DB).abs() <= C6_TOL_DB,
        format!(
            "T = {t} ps, N = {n:.3}, fiber+20%: {:.2} dB (homodyne {:.2}); lossless {lossless:.2} dB; target {C6_TARGET_DB} ± {C6_TOL_DB}",
            dp.squeezing_db, hd.squeezing_db
        ),
    );
}

fn c7_consistency(report: &mut Report, suite: &Suite) {
    let started = Instant::now();
    let (mut worst, mut label) = (0.0f64, String::new());
    for (l, dp, hd) in &suite.pairs {
        let d = (dp.squeezing_db - hd.squeezing_db).abs();
        if d > worst {
            worst = d;
            label = l.clone();
        }
    }
    let sweep_worst = suite
        .sweep_gaps
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(l, d)| format!("; sweep cells (not judged) worst {d:.3} dB at {l}"))
        .unwrap_or_default();
    report.record(
        7,
        "estimator consistency",
        started,
        worst <= C7_TOL_DB,
        format!(
            "{} ensembles, worst |dark-plane − homodyne| {worst:.3} dB at {label} (<= {C7_TOL_DB}){sweep_worst}",
            suite.pairs.len()
        ),
    );
}

fn c8_sweep_spec() -> SweepSpec {
    SweepSpec {
        durations: (0..5).map(|k| 0.18 * 2f64.powf(k as f64 / 4.0)).collect(),
        energies: logspace(27.5, 86.0, 5),
        distances: vec![0.6, 15.0, 30.0],
        n_traj: 500,
        loss_budgets: vec![LossSpec::lossless()],
        master_seed: 808,
        ..SweepSpec::default()
    }
}

fn c8_optima(report: &mut Report, suite: &mut Suite) {
    let started = Instant::now();
    let spec = c8_sweep_spec();
    let fiber = FiberParams::default();
    let ds = run_sweep(&spec, &fiber, &SweepOptions::default()).unwrap();
    collect_sweep(suite, &ds, "sweep");
    let o = extract_optima(&ds, LOSSLESS_TAG).unwrap();
    let near = &o.per_distance[0];
    let (z1, z2) = (&o.per_distance[1], &o.per_distance[2]);

    // (a) rank correlation against peak power at the shortest length
    let cells: Vec<_> = ds
        .records_for(LOSSLESS_TAG)
        .filter(|r| r.distance == near.z_m)
        .collect();
    let sq: Vec<f64> = cells.iter().map(|r| -r.squeezing_db).collect();
    let p0: Vec<f64> = cells.iter().map(|r| r.energy * 1.763 / (2.0 * r.fwhm)).collect();
    let rho = spearman_oracle(&sq, &p0);
    let pass_a = rho > C8_RANK_CORR && (rho + near.peak_power_rank_corr).abs() < 1e-12;

    // (b) soliton number of the best cell at 30 m
    let best = &z2.best_cell;
    let n_best = soliton_number(&fiber, best.fwhm, best.energy).unwrap();
    let pass_b = (z2.z_m - 30.0).abs() < 1e-12 && (n_best - 1.0).abs() < C8_N_TOL;

    // (c) K at the best duration for z and 2z
    let t_r = ds.provenance.t_r_fs;
    let k1 = raman_k(&fiber, z1.best_duration.fwhm, z1.z_m, t_r).unwrap();
    let k2 = raman_k(&fiber, z2.best_duration.fwhm, z2.z_m, t_r).unwrap();
    let k_dev = (k2 / k1 - 1.0).abs();
    let pass_c = (z2.z_m / z1.z_m - 2.0).abs() < 1e-12 && k_dev <= C8_K_TOL;

    report.record(
        8,
        "optimum-location properties",
        started,
        pass_a && pass_b && pass_c && ds.is_complete(),
        format!(
            "(a) ρ(−S, P₀) at {} m = {rho:.3} (> {C8_RANK_CORR}) {}; \
             (b) best cell at 30 m T = {:.3} ps, E = {:.1} pJ, N = {n_best:.3} (|N−1| < {C8_N_TOL}) {}; \
             (c) best T {:.3} ps @ {} m (K = {k1:.4}) vs {:.3} ps @ {} m (K = {k2:.4}), ΔK {:.1}% (<= {:.0}%) {}",
            near.z_m,
            ok(pass_a),
            best.fwhm,
            best.energy,
            ok(pass_b),
            z1.best_duration.fwhm,
            z1.z_m,
            z2.best_duration.fwhm,
            z2.z_m,
            100.0 * k_dev,
            100.0 * C8_K_TOL,
            ok(pass_c),
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn collect_sweep(suite: &mut Suite, ds: &SweepDataset, label: &str) {
    for r in ds.records_for(LOSSLESS_TAG) {
        let name = format!("{label} T={:.3} E={:.1} z={}", r.fwhm, r.energy, r.distance);
        suite.products.push((
            name.clone(),
            10f64.powf((r.squeezing_db + r.antisqueezing_db) / 10.0),
            ds.provenance.n_traj,
        ));
        suite.sweep_gaps.push((name, (r.squeezing_db - r.homodyne_db).abs()));
    }
}

fn c9_determinism(report: &mut Report, suite: &mut Suite) {
    let started = Instant::now();
    let spec = SweepSpec {
        durations: vec![0.25, 0.3],
        energies: vec![35.0, 45.0],
        distances: vec![0.5, 1.0],
        n_traj: 32,
        master_seed: 909,
        ..SweepSpec::default()
    };
    let fiber = FiberParams::default();
    let run = |threads| {
        run_sweep(
            &spec,
            &fiber,
            &SweepOptions {
                threads,
                ..SweepOptions::default()
            },
        )
        .unwrap()
    };
    let one = run(1);
    let eight = run(8);
    let same = one == eight && dataset_csv(&one).unwrap() == dataset_csv(&eight).unwrap();
    collect_sweep(suite, &one, "determinism");
    report.record(
        9,
        "determinism across thread counts",
        started,
        same && one.is_complete(),
        format!(
            "{} records, 1 vs 8 threads bit-identical: {same}",
            one.records.len()
        ),
    );
}

fn c10_uncertainty(report: &mut Report, suite: &Suite) {
    let started = Instant::now();
    let mut entries: Vec<(String, f64, usize)> = Vec::new();
    for (l, dp, hd) in &suite.pairs {
        entries.push((format!("{l} dark-plane"), dp.v_min * dp.v_max, dp.n_traj));
        entries.push((format!("{l} homodyne"), hd.v_min * hd.v_max, hd.n_traj));
    }
    entries.extend(suite.products.iter().cloned());
    let mut violations = Vec::new();
    let mut tightest = (f64::INFINITY, String::new());
    for (l, prod, n) in &entries {
        let floor = 1.0 - 3.0 * product_stat_err(*n);
        let margin = prod - floor;
        if margin < tightest.0 {
            tightest = (margin, format!("{l}: {prod:.4} vs {floor:.4}"));
        }
        if margin < 0.0 {
            violations.push(l.clone());
        }
    }
    report.record(
        10,
        "uncertainty product",
        started,
        violations.is_empty(),
        format!(
            "{} estimates, {} below 1 − 3ε; tightest {}",
            entries.len(),
            violations.len(),
            tightest.1
        ),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and friends expect no work
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut report = Report::default();
    let mut suite = Suite::default();
    c1_shot_noise(&mut report, &mut suite);
    c2_kerr_oracle(&mut report, &mut suite);
    c3_soliton(&mut report);
    c4_ssfs(&mut report);
    c5_loss(&mut report);
    c6_saturation(&mut report, &mut suite);
    c9_determinism(&mut report, &mut suite);
    c8_optima(&mut report, &mut suite);
    c7_consistency(&mut report, &suite);
    c10_uncertainty(&mut report, &suite);

    report.lines.sort_by_key(|l| l.id);
    let failed = report.lines.iter().filter(|l| !l.pass).count();
    println!("\nacceptance summary");
    for l in &report.lines {
        print_line(l);
    }
    println!(
        "{} of {} criteria passed",
        report.lines.len() - failed,
        report.lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
