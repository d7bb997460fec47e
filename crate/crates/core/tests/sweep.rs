use std::fs;
use std::sync::OnceLock;

use fibersqueeze::engine::GridPolicy;
use fibersqueeze::fiber::FiberParams;
use fibersqueeze::sweep::*;
use fibersqueeze::Error;
use proptest::prelude::*;

fn fiber() -> FiberParams {
    FiberParams::default().without_raman()
}

fn tiny_spec() -> SweepSpec {
    SweepSpec {
        durations: vec![0.25, 0.3],
        energies: vec![30.0, 40.0],
        distances: vec![0.2, 0.4],
        n_traj: 12,
        master_seed: 5,
        ..SweepSpec::default()
    }
}

fn reference() -> &'static SweepDataset {
    static DS: OnceLock<SweepDataset> = OnceLock::new();
    DS.get_or_init(|| run_sweep(&tiny_spec(), &fiber(), &SweepOptions::default()).unwrap())
}

#[test]
fn dataset_layout() {
    let ds = reference();
    assert!(ds.is_complete());
    assert_eq!(ds.records.len(), 4 * 2 * 4);
    assert_eq!(ds.provenance.cells.len(), 4);
    assert_eq!(ds.loss_tags(), ["lossless", "fiber", "fiber+5%", "fiber+20%"]);
    let csv = String::from_utf8(dataset_csv(ds).unwrap()).unwrap();
    assert!(csv.starts_with(
        "T_ps,E_pJ,z_m,loss_tag,squeezing_db,antisqueezing_db,theta_opt_rad,N,K,stat_err_db"
    ));
    // lossy rows never beat their lossless counterpart
    for r in ds.records_for("fiber+20%") {
        let l = ds
            .records_for("lossless")
            .find(|l| l.fwhm == r.fwhm && l.energy == r.energy && l.distance == r.distance)
            .unwrap();
        assert!(r.squeezing_db >= l.squeezing_db);
        assert!(r.stat_err_db <= l.stat_err_db);
    }
}

#[test]
fn resume_from_checkpoints_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        max_new_cells: Some(2),
        threads: 1,
        ..SweepOptions::default()
    };
    let partial = run_sweep(&tiny_spec(), &fiber(), &opts).unwrap();
    assert!(!partial.is_complete());
    assert_eq!(partial.provenance.cells.len(), 2);
    assert_eq!(partial.provenance.failed_cells.len(), 2);
    assert!(matches!(
        extract_optima(&partial, "lossless"),
        Err(Error::Incomplete(_))
    ));

    let resumed = run_sweep(
        &tiny_spec(),
        &fiber(),
        &SweepOptions {
            max_new_cells: None,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(&resumed, reference());
    assert_eq!(dataset_csv(&resumed).unwrap(), dataset_csv(reference()).unwrap());
}

#[test]
fn checkpoints_are_keyed_by_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..SweepOptions::default()
    };
    run_sweep(&tiny_spec(), &fiber(), &opts).unwrap();
    let other = SweepSpec {
        master_seed: 6,
        ..tiny_spec()
    };
    let ds = run_sweep(&other, &fiber(), &opts).unwrap();
    assert_ne!(ds.records, reference().records);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 8);
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = reference();
    for format in [Format::Csv, Format::Json] {
        let path = dir.path().join(format!("ds.{}", format.extension()));
        export_dataset(ds, &path, format).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(&back, ds);
        let first = fs::read(&path).unwrap();
        export_dataset(&back, &path, format).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }
    assert!(dir.path().join("ds.provenance.json").exists());
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ds.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["master_seed"].as_u64(), Some(5));
    assert_eq!(prov["n_traj"].as_u64(), Some(12));
}

#[test]
fn unreadable_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.txt");
    fs::write(&p, "").unwrap();
    assert!(matches!(read_dataset(&p), Err(Error::Parse(_))));
    let p = dir.path().join("x.csv");
    fs::write(&p, "T_ps\n1\n").unwrap();
    assert!(matches!(read_dataset(&p), Err(Error::Io { .. })));
}

#[test]
fn failed_cells_are_reported_not_fatal() {
    let spec = SweepSpec {
        durations: vec![0.05, 0.25],
        grid: GridPolicy {
            max_dt: 0.05,
            max_points: 1024,
            ..GridPolicy::default()
        },
        ..tiny_spec()
    };
    let ds = run_sweep(&spec, &fiber(), &SweepOptions::default()).unwrap();
    assert!(!ds.is_complete());
    assert_eq!(ds.provenance.failed_cells.len(), 2);
    assert!(ds.provenance.failed_cells.iter().all(|f| f.fwhm == 0.05));
    assert!(ds.records.iter().all(|r| r.fwhm == 0.25));
}

#[test]
fn unit_efficiency_scan_is_the_identity() {
    let ds = reference();
    let curves = loss_scan(
        ds,
        &[
            LossSpec::new("unit", false, 1.0),
            LossSpec::new("half", true, 0.5),
        ],
    )
    .unwrap();
    let lossless = extract_optima(ds, "lossless").unwrap().max_squeezing_vs_z;
    assert_eq!(curves[0].points, lossless);
    for (a, b) in curves[1].points.iter().zip(&lossless) {
        assert!(a.squeezing_db > b.squeezing_db);
        assert!(a.squeezing_db > -3.02);
    }
}

// synthetic surfaces --------------------------------------------------------

const DURATIONS: [f64; 4] = [0.2, 0.24, 0.28, 0.32];
const ENERGIES: [f64; 5] = [30.0, 40.0, 50.0, 60.0, 70.0];
const DISTANCES: [f64; 2] = [10.0, 20.0];

fn synthetic(mut f: impl FnMut(f64, f64, f64) -> f64) -> SweepDataset {
    let fiber = FiberParams::default();
    let template = reference().provenance.clone();
    let mut records = Vec::new();
    for &t in &DURATIONS {
        for &e in &ENERGIES {
            for &z in &DISTANCES {
                let sq = f(t, e, z);
                records.push(SweepRecord {
                    fwhm: t,
                    energy: e,
                    distance: z,
                    loss_tag: "lossless".into(),
                    squeezing_db: sq,
                    antisqueezing_db: 10.0,
                    theta_opt_rad: 0.0,
                    soliton_number: 1.0,
                    raman_k: 0.05,
                    stat_err_db: 0.1,
                    homodyne_db: sq,
                });
            }
        }
    }
    SweepDataset {
        provenance: Provenance {
            fiber,
            durations: DURATIONS.to_vec(),
            energies: ENERGIES.to_vec(),
            distances: DISTANCES.to_vec(),
            loss_budgets: vec![LossSpec::lossless()],
            t_r_fs: 3.5,
            ..template
        },
        records,
    }
}

#[test]
fn separable_bowl_vertex_is_recovered() {
    // quadratic in ln E and in T: the refinement is exact
    let ds = synthetic(|t, e, z| {
        let t0 = 0.25 + 0.002 * z;
        -20.0 + 3.0 * (e / 47.0).ln().powi(2) + 400.0 * (t - t0).powi(2)
    });
    let o = extract_optima(&ds, "lossless").unwrap();
    for d in &o.per_distance {
        let t0 = 0.25 + 0.002 * d.z_m;
        assert!((d.best_duration.fwhm - t0).abs() < 1e-9, "{}", d.best_duration.fwhm);
        assert!((d.best_duration.squeezing_db + 20.0).abs() < 1e-9);
        for eo in &d.optimal_energy {
            assert!(eo.interpolated);
            assert!((eo.energy - 47.0).abs() < 1e-9);
        }
        assert!(d.interior_optimum && !d.flat);
        assert!(d.best_duration.interpolated);
    }
    // max squeezing unchanged with z
    assert!(o.monotonicity.non_increasing);
}

#[test]
fn edge_optimum_and_flat_surface() {
    let ds = synthetic(|t, e, _| -(e / 10.0) - t);
    let d = &extract_optima(&ds, "lossless").unwrap().per_distance[0];
    assert!(!d.interior_optimum && !d.flat);
    assert_eq!(d.best_cell.energy, 70.0);
    assert!(!d.best.interpolated);

    let ds = synthetic(|t, e, _| 0.01 * (t + e / 100.0));
    let d = &extract_optima(&ds, "lossless").unwrap().per_distance[0];
    assert!(d.flat && !d.interior_optimum);
}

#[test]
fn rank_correlation_tracks_peak_power() {
    let ds = synthetic(|t, e, _| -(e / t).ln());
    for d in extract_optima(&ds, "lossless").unwrap().per_distance {
        assert!(d.peak_power_rank_corr < -0.99, "{}", d.peak_power_rank_corr);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn optima_ignore_record_order(
        noise in prop::collection::vec(-1.0f64..1.0, DURATIONS.len() * ENERGIES.len() * DISTANCES.len()),
        seed in any::<u64>(),
    ) {
        let mut i = 0;
        let ds = synthetic(|t, e, _| {
            i += 1;
            -15.0 + (e / 50.0).ln().powi(2) + 100.0 * (t - 0.26).powi(2) + noise[i - 1]
        });
        let expected = extract_optima(&ds, "lossless").unwrap();
        let mut shuffled = ds.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.records.as_mut_slice(), &mut rng);
        prop_assert_eq!(extract_optima(&shuffled, "lossless").unwrap(), expected);
    }

    #[test]
    fn losses_never_improve_a_record(v_db in -25.0f64..0.0, eta in 0.05f64..1.0, z in 0.1f64..30.0) {
        let r = SweepRecord {
            fwhm: 0.2,
            energy: 60.0,
            distance: z,
            loss_tag: "lossless".into(),
            squeezing_db: v_db,
            antisqueezing_db: -v_db + 3.0,
            theta_opt_rad: 0.1,
            soliton_number: 1.0,
            raman_k: 0.05,
            stat_err_db: 0.2,
            homodyne_db: v_db,
        };
        let lossy = lossy_record(&r, &LossSpec::new("x", true, eta), &FiberParams::default()).unwrap();
        prop_assert!(lossy.squeezing_db >= v_db - 1e-12);
        prop_assert!(lossy.squeezing_db <= 0.0);
        prop_assert!(lossy.antisqueezing_db <= r.antisqueezing_db + 1e-12);
        prop_assert_eq!(lossy.loss_tag, "x");
    }
}
