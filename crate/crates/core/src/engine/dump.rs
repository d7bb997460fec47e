//! Raw snapshot dump.
//!
//! Little-endian layout:
//!
//! | field              | type            |
//! |--------------------|-----------------|
//! | magic `FSQSNAP1`   | 8 bytes         |
//! | n_points           | u64             |
//! | window (ps)        | f64             |
//! | dt (ps)            | f64             |
//! | carrier (μm)       | f64             |
//! | master_seed        | u64             |
//! | n_distances        | u64             |
//! | n_traj             | u64             |
//! | distances (m)      | f64 × n_distances |
//! | samples            | (re f64, im f64) × n_points × n_traj × n_distances |
//!
//! Samples are ordered distance-major, then trajectory, then time index, in √W.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::TrajectoryEnsemble;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FSQSNAP1";

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub n_points: usize,
    pub window: f64,
    pub dt: f64,
    pub carrier_wavelength: f64,
    pub master_seed: u64,
    pub distances: Vec<f64>,
    pub n_traj: usize,
}

pub fn write_snapshots(ens: &TrajectoryEnsemble, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let carrier = ens
        .snapshots
        .first()
        .and_then(|s| s.first())
        .map_or(crate::units::DEFAULT_CARRIER_UM, |e| e.carrier_wavelength());
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&(ens.grid.n_points() as u64).to_le_bytes())?;
    put(&ens.grid.window().to_le_bytes())?;
    put(&ens.grid.dt().to_le_bytes())?;
    put(&carrier.to_le_bytes())?;
    put(&ens.master_seed.to_le_bytes())?;
    put(&(ens.distances().len() as u64).to_le_bytes())?;
    put(&(ens.n_traj() as u64).to_le_bytes())?;
    for z in ens.distances() {
        put(&z.to_le_bytes())?;
    }
    for snap in &ens.snapshots {
        for env in snap {
            for a in env.samples() {
                put(&a.re.to_le_bytes())?;
                put(&a.im.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a dump back as its header plus `data[d][i][j]`.
pub fn read_snapshots(path: &Path) -> Result<(SnapshotHeader, Vec<Vec<Vec<Complex64>>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut buf8 = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut buf8).map_err(|e| Error::io(path, e))?;
        Ok(buf8)
    };
    if &next(&mut r)? != MAGIC {
        return Err(Error::Parse(format!("{} is not a snapshot dump", path.display())));
    }
    let n_points = u64::from_le_bytes(next(&mut r)?) as usize;
    let window = f64::from_le_bytes(next(&mut r)?);
    let dt = f64::from_le_bytes(next(&mut r)?);
    let carrier_wavelength = f64::from_le_bytes(next(&mut r)?);
    let master_seed = u64::from_le_bytes(next(&mut r)?);
    let n_dist = u64::from_le_bytes(next(&mut r)?) as usize;
    let n_traj = u64::from_le_bytes(next(&mut r)?) as usize;
    let mut distances = Vec::with_capacity(n_dist);
    for _ in 0..n_dist {
        distances.push(f64::from_le_bytes(next(&mut r)?));
    }
    let mut data = Vec::with_capacity(n_dist);
    for _ in 0..n_dist {
        let mut snap = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            let mut field = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                let re = f64::from_le_bytes(next(&mut r)?);
                let im = f64::from_le_bytes(next(&mut r)?);
                field.push(Complex64::new(re, im));
            }
            snap.push(field);
        }
        data.push(snap);
    }
    Ok((
        SnapshotHeader {
            n_points,
            window,
            dt,
            carrier_wavelength,
            master_seed,
            distances,
            n_traj,
        },
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_ensemble, PropagationConfig};
    use crate::fiber::FiberParams;
    use crate::grid::{make_grid, PulseSpec};

    #[test]
    fn dump_round_trip() {
        let grid = make_grid(256, 4.0).unwrap();
        let cfg = PropagationConfig {
            total_length: 0.1,
            dz: 0.05,
            snapshot_distances: vec![0.05, 0.1],
            ..PropagationConfig::default()
        };
        let ens = run_ensemble(
            &grid,
            &PulseSpec::sech(30.0, 0.2),
            &FiberParams::default().without_raman(),
            &cfg,
            3,
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        write_snapshots(&ens, &path).unwrap();
        let (header, data) = read_snapshots(&path).unwrap();
        assert_eq!(header.n_points, 256);
        assert_eq!(header.n_traj, 3);
        assert_eq!(header.distances, vec![0.05, 0.1]);
        assert_eq!(header.master_seed, cfg.seed);
        for (d, snap) in ens.snapshots.iter().enumerate() {
            for (i, env) in snap.iter().enumerate() {
                assert_eq!(env.samples(), &data[d][i][..]);
            }
        }
    }
}
