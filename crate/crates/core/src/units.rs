//! Physical constants and unit helpers.
//!
//! Internal units: time in ps, power in W, energy in pJ (= W·ps), distance in
//! m, angular frequency in rad/ps. Fiber coefficients are stored per km as
//! quoted in datasheets and converted on use.

pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
pub const HBAR_J_S: f64 = PLANCK_J_S / (2.0 * std::f64::consts::PI);
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const BOLTZMANN_J_K: f64 = 1.380_649e-23;

/// Ratio between the FWHM of a sech² intensity profile and its width parameter.
pub const SECH_FWHM_RATIO: f64 = 1.763;

pub const DEFAULT_CARRIER_UM: f64 = 1.56;

/// Photon energy hc/λ in joules.
pub fn photon_energy_j(wavelength_um: f64) -> f64 {
    PLANCK_J_S * SPEED_OF_LIGHT_M_S / (wavelength_um * 1e-6)
}

/// Photon energy hc/λ in pJ, the unit of pulse energies.
pub fn photon_energy_pj(wavelength_um: f64) -> f64 {
    photon_energy_j(wavelength_um) * 1e12
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
