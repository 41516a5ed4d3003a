//! Gaussian-beam optics and far-detuned optical dipole traps.
//!
//! Conventions:
//! - waists are 1/e² intensity radii, so the peak intensity is
//!   `I₀ = 2P / (π w_x w_y)`;
//! - the dipole potential depth is `U₀ = 2π α′ I₀ / c` for a polarizability
//!   volume α′ (SI polarizability α = 4πε₀ α′);
//! - depths and frequencies refer to a single ⁶Li *atom*, with the atomic
//!   polarizability taken as half the Li₂ molecular value. Under these
//!   conventions the guide (32.85 W, 216 μm) comes out at 30 μK / 300 Hz and
//!   the elliptic trap beam (13.1 W, 1.1 cm × 1.1 mm) at ≈46 nK, consistent
//!   with a 1.1 cm waist for 50 nK and 0.25 Hz.

use serde::{Deserialize, Serialize};

use crate::constants::{GRAVITY, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    pub power: f64,
    pub waist_x: f64,
    pub waist_y: f64,
    pub wavelength: f64,
}

impl GaussianBeam {
    pub fn new(power: f64, waist_x: f64, waist_y: f64, wavelength: f64) -> Result<Self> {
        let beam = GaussianBeam { power, waist_x, waist_y, wavelength };
        beam.validate()?;
        Ok(beam)
    }

    pub fn circular(power: f64, waist: f64, wavelength: f64) -> Result<Self> {
        Self::new(power, waist, waist, wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        // Zero power is allowed: it is the natural "beam off" limit.
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::Invariant { name: "beam power >= 0", detail: format!("power = {} W", self.power) });
        }
        for (name, v) in [("waist_x > 0", self.waist_x), ("waist_y > 0", self.waist_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invariant { name, detail: format!("{v} m") });
            }
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Invariant { name: "wavelength > 0", detail: format!("{} m", self.wavelength) });
        }
        Ok(())
    }

    pub fn is_circular(&self) -> bool {
        self.waist_x == self.waist_y
    }

    pub fn with_power(&self, power: f64) -> Self {
        GaussianBeam { power, ..*self }
    }

    fn min_waist(&self) -> f64 {
        self.waist_x.min(self.waist_y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polarizability {
    /// Polarizability volume α′ in m³.
    pub volume: f64,
    pub species: String,
}

impl Polarizability {
    pub fn new(volume: f64, species: impl Into<String>) -> Result<Self> {
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::Invariant { name: "polarizability volume > 0", detail: format!("{volume} m^3") });
        }
        Ok(Polarizability { volume, species: species.into() })
    }

    /// Per-atom polarizability of a homonuclear dimer, half the molecular value.
    pub fn atomic_from_molecular(molecular: &Polarizability, atom: impl Into<String>) -> Self {
        Polarizability { volume: molecular.volume / 2.0, species: atom.into() }
    }
}

/// Closed atomic transition used for the photon-scattering estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicLine {
    /// Natural linewidth Γ in rad/s.
    pub linewidth: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DipoleTrap {
    pub depth: f64,
    pub transverse_frequency: f64,
    pub longitudinal_frequency: Option<f64>,
    pub rayleigh_length: f64,
    pub scattering_rate: f64,
}

impl DipoleTrap {
    /// Summarise a single-beam trap; the transverse frequency refers to the
    /// `waist_x` direction.
    pub fn from_beam(beam: &GaussianBeam, pol: &Polarizability, mass: f64, line: &AtomicLine) -> Result<Self> {
        let depth = dipole_depth(beam, pol);
        let rayleigh = rayleigh_length(beam);
        Ok(DipoleTrap {
            depth,
            transverse_frequency: transverse_frequency(depth, mass, beam.waist_x),
            longitudinal_frequency: Some((2.0 * depth / (mass * rayleigh * rayleigh)).sqrt()),
            rayleigh_length: rayleigh,
            scattering_rate: scattering_rate(beam, pol, line)?,
        })
    }
}

pub fn peak_intensity(beam: &GaussianBeam) -> f64 {
    2.0 * beam.power / (PI * beam.waist_x * beam.waist_y)
}

/// Depth of the (attractive) dipole potential at the beam centre, in J.
pub fn dipole_depth(beam: &GaussianBeam, pol: &Polarizability) -> f64 {
    2.0 * PI * pol.volume / SPEED_OF_LIGHT * peak_intensity(beam)
}

/// Harmonic frequency of a Gaussian well `U₀ exp(-2r²/w²)`.
pub fn transverse_frequency(depth: f64, mass: f64, waist: f64) -> f64 {
    (4.0 * depth / (mass * waist * waist)).sqrt()
}

pub fn waist_for_frequency(depth: f64, mass: f64, frequency: f64) -> f64 {
    (4.0 * depth / mass).sqrt() / frequency
}

/// `π w₀² / λ`, using `waist_x`.
pub fn rayleigh_length(beam: &GaussianBeam) -> f64 {
    PI * beam.waist_x * beam.waist_x / beam.wavelength
}

/// Photon scattering rate of an atom held at the centre of a far-detuned beam.
///
/// Far-detuned two-level estimate with the counter-rotating term kept,
/// `Γ_sc = (U₀/ħ) Γ (ω/ω₀)³ [1/(ω₀-ω) + 1/(ω₀+ω)]`, written against the
/// depth obtained from the polarizability. Order of magnitude only.
pub fn scattering_rate(beam: &GaussianBeam, pol: &Polarizability, line: &AtomicLine) -> Result<f64> {
    let omega = 2.0 * PI * SPEED_OF_LIGHT / beam.wavelength;
    let omega0 = 2.0 * PI * SPEED_OF_LIGHT / line.wavelength;
    let detuning = omega0 - omega;
    if detuning.abs() <= 1e3 * line.linewidth {
        return Err(Error::Domain(format!(
            "detuning {detuning:.3e} rad/s is not large compared with the linewidth {:.3e} rad/s",
            line.linewidth
        )));
    }
    let depth = dipole_depth(beam, pol);
    let ratio = (omega / omega0).powi(3);
    let detuning_factor = (1.0 / detuning + 1.0 / (omega0 + omega)).abs();
    Ok(depth / HBAR * line.linewidth * ratio * detuning_factor)
}

/// Ratio of the steepest transverse dipole force to the weight `m g`.
pub fn gravity_compensation_margin(beam: &GaussianBeam, pol: &Polarizability, mass: f64) -> f64 {
    let depth = dipole_depth(beam, pol);
    // max of |d/dr U₀ exp(-2r²/w²)| sits at r = w/2
    let max_force = 2.0 * depth * (-0.5f64).exp() / beam.min_waist();
    max_force / (mass * GRAVITY)
}
