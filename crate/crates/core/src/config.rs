//! TOML run configuration: fiber, pulse, propagation, grid, detection and
//! an optional sweep section, each falling back to defaults.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::detector::{measure, shot_noise_baseline, Measurement};
use crate::engine::{propagate, run_ensemble, GridPolicy, PropagationConfig, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::fiber::FiberParams;
use crate::grid::{sech_pulse, ComplexEnvelope, PulseSpec, TemporalGrid};
use crate::sweep::{LossSpec, SweepSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub n_traj: usize,
    /// Seed of the trajectory pairing; the propagation seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing_seed: Option<u64>,
    pub loss_budgets: Vec<LossSpec>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            n_traj: 1000,
            pairing_seed: None,
            loss_budgets: LossSpec::standard_set(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj < 2 {
            return Err(Error::invalid("detection.n_traj", "must be >= 2"));
        }
        for (i, b) in self.loss_budgets.iter().enumerate() {
            b.validate().map_err(|e| prefix(e, &format!("detection.loss_budgets[{i}]")))?;
            if self.loss_budgets[..i].iter().any(|o| o.tag == b.tag) {
                return Err(Error::invalid(
                    format!("detection.loss_budgets[{i}].tag"),
                    format!("duplicate tag {}", b.tag),
                ));
            }
        }
        Ok(())
    }
}

fn prefix(err: Error, path: &str) -> Error {
    match err {
        Error::InvalidParameter { field, reason } => {
            let leaf = field.rsplit('.').next().unwrap_or(&field).to_string();
            Error::InvalidParameter {
                field: format!("{path}.{leaf}"),
                reason,
            }
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fiber: FiberParams,
    pub pulse: PulseSpec,
    pub propagation: PropagationConfig,
    pub grid: GridPolicy,
    pub detection: DetectionConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parse and validate. Type errors and unknown keys report the dotted
    /// path of the offending field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Parse(format!("`{path}`: {}", inner.message().trim()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.pulse.validate()?;
        self.propagation.validate()?;
        self.grid.validate()?;
        self.detection.validate()?;
        if let Some(s) = &self.sweep {
            s.validate(&self.fiber)?;
        }
        Ok(())
    }

    pub fn pairing_seed(&self) -> u64 {
        self.detection.pairing_seed.unwrap_or(self.propagation.seed)
    }

    /// Grid chosen by the grid policy for the configured pulse and length.
    pub fn grid(&self) -> Result<Arc<TemporalGrid>> {
        self.grid
            .grid_for(&self.pulse, &self.fiber, self.propagation.total_length)
    }

    /// Noise-free propagation; returns the input followed by every snapshot.
    pub fn propagate_classical(&self) -> Result<Vec<ComplexEnvelope>> {
        let input = sech_pulse(&self.grid()?, &self.pulse)?;
        let cfg = PropagationConfig {
            quantum_noise: false,
            raman_noise: false,
            ..self.propagation.clone()
        };
        let mut out = vec![input.clone()];
        out.extend(propagate(&input, &self.fiber, &cfg)?);
        Ok(out)
    }

    /// Stochastic ensemble with `detection.n_traj` trajectories.
    pub fn ensemble(&self, threads: usize) -> Result<TrajectoryEnsemble> {
        let cfg = PropagationConfig {
            quantum_noise: true,
            ..self.propagation.clone()
        };
        run_ensemble(&self.grid()?, &self.pulse, &self.fiber, &cfg, self.detection.n_traj, threads)
    }

    /// Ensemble plus its γ = 0 shot-noise run, measured by both estimators
    /// (lossless, calibrated).
    pub fn squeeze(&self, threads: usize) -> Result<Vec<Measurement>> {
        let ens = self.ensemble(threads)?;
        let base = shot_noise_baseline(
            &ens.grid,
            &self.pulse,
            &self.fiber,
            &ens.config,
            self.detection.n_traj,
            self.pairing_seed(),
            threads,
        )?;
        measure(&ens, &base, self.pairing_seed())
    }

    /// Resolved configuration as TOML, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
