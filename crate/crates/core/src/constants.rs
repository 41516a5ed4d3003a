//! Physical constants, CODATA 2018 recommended values (SI).
//!
//! | symbol | value | unit |
//! |--------|-------|------|
//! | ħ | 1.054 571 817e-34 | J s |
//! | h | 6.626 070 15e-34 (exact) | J s |
//! | k_B | 1.380 649e-23 (exact) | J/K |
//! | μ_B | 9.274 010 0783e-24 | J/T |
//! | a₀ | 5.291 772 109 03e-11 | m |
//! | u | 1.660 539 066 60e-27 | kg |
//! | m(⁶Li) | 6.015 122 8874 u | kg |
//! | g | 9.806 65 (standard) | m/s² |
//! | c | 299 792 458 (exact) | m/s |

use serde::Serialize;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
pub const MU_BOHR: f64 = 9.274_010_078_3e-24;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const MASS_LI6_ATOM: f64 = 6.015_122_887_4 * ATOMIC_MASS_UNIT;
pub const GRAVITY: f64 = 9.806_65;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Name of the constant set, embedded in reports.
pub const RELEASE: &str = "CODATA-2018";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_boltzmann: f64,
    pub mu_bohr: f64,
    pub bohr_radius: f64,
    pub mass_li6_atom: f64,
    pub gravity: f64,
    pub speed_of_light: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: HBAR,
        k_boltzmann: K_BOLTZMANN,
        mu_bohr: MU_BOHR,
        bohr_radius: BOHR_RADIUS,
        mass_li6_atom: MASS_LI6_ATOM,
        gravity: GRAVITY,
        speed_of_light: SPEED_OF_LIGHT,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planck_is_two_pi_hbar() {
        let rel = (PLANCK - 2.0 * std::f64::consts::PI * HBAR).abs() / PLANCK;
        assert!(rel < 1e-9);
    }

    #[test]
    fn li6_mass() {
        assert!((MASS_LI6_ATOM - 9.988_34e-27).abs() < 1e-31);
    }
}
