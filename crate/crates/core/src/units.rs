//! Physical constants and unit conversions.
//!
//! Model Hamiltonians are stored as angular frequencies in the model's own
//! time unit: rad/μs for the spin-spin model, rad/ns for the Rydberg model.

use std::f64::consts::TAU;

/// ħ in J·s
pub const HBAR: f64 = 1.054_571_817e-34;
/// k_B in J/K
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Atomic mass unit in kg
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Hartree energy in J
pub const HARTREE: f64 = 4.359_744_722_2071e-18;
/// Bohr radius in μm
pub const BOHR_UM: f64 = 5.291_772_109_03e-5;

/// Frequency `ν` in MHz (energy `E = hν`) to angular frequency in rad/μs.
pub fn mhz_to_rad_per_us(nu: f64) -> f64 {
    TAU * nu
}

/// Frequency `ν` in MHz to angular frequency in rad/ns.
pub fn mhz_to_rad_per_ns(nu: f64) -> f64 {
    TAU * nu * 1e-3
}

/// Angular frequency in rad/ns back to MHz.
pub fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w * 1e3 / TAU
}

/// Energy in J to angular frequency in rad/ns.
pub fn joule_to_rad_per_ns(e: f64) -> f64 {
    e / HBAR * 1e-9
}

/// Temperature-style energy `k_B · T` (T in mK) in J.
pub fn millikelvin_to_joule(t_mk: f64) -> f64 {
    BOLTZMANN * t_mk * 1e-3
}

/// `C3 / r³` with `C3` in `E_h a0³` and `r` in μm, as rad/ns.
pub fn c3_interaction_rad_per_ns(c3_atomic: f64, r_um: f64) -> f64 {
    let r_bohr = r_um / BOHR_UM;
    joule_to_rad_per_ns(c3_atomic * HARTREE / (r_bohr * r_bohr * r_bohr))
}

/// `ħ / (2 μ)` in μm²/ns for a mass in kg; the kinetic energy is `−ħ/(2μ) ∂²_r`
/// in rad/ns.
pub fn kinetic_prefactor_um2_per_ns(mass_kg: f64) -> f64 {
    HBAR / (2.0 * mass_kg) * 1e12 * 1e-9
}
