//! Dimension-checked quantities and the unit table used at the config and
//! report boundary. Everything inside the crate is plain SI `f64`; a
//! [`Quantity`] only exists while a value crosses that boundary.
//!
//! Two conventions worth knowing:
//! - temperature units (`nK`, `uK`, ...) convert to an *energy* `k_B·T`;
//! - `Hz`, `kHz`, `MHz` convert to an *angular* frequency `2π·f` in rad/s.

use std::fmt;
use std::ops::{Div, Mul};

use crate::constants::{ATOMIC_MASS_UNIT, BOHR_RADIUS, K_BOLTZMANN, MU_BOHR};
use crate::error::{Error, Result};

/// Exponents of kg, m, s and A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimension {
    pub mass: i8,
    pub length: i8,
    pub time: i8,
    pub current: i8,
}

impl Dimension {
    const fn new(mass: i8, length: i8, time: i8, current: i8) -> Self {
        Dimension { mass, length, time, current }
    }

    pub const DIMENSIONLESS: Dimension = Dimension::new(0, 0, 0, 0);
    pub const MASS: Dimension = Dimension::new(1, 0, 0, 0);
    pub const LENGTH: Dimension = Dimension::new(0, 1, 0, 0);
    pub const TIME: Dimension = Dimension::new(0, 0, 1, 0);
    pub const VELOCITY: Dimension = Dimension::new(0, 1, -1, 0);
    pub const MOMENTUM: Dimension = Dimension::new(1, 1, -1, 0);
    pub const ENERGY: Dimension = Dimension::new(1, 2, -2, 0);
    /// Angular frequency and rates share 1/s.
    pub const FREQUENCY: Dimension = Dimension::new(0, 0, -1, 0);
    pub const MAGNETIC_FIELD: Dimension = Dimension::new(1, 0, -2, -1);
    pub const MAGNETIC_MOMENT: Dimension = Dimension::new(0, 2, 0, 1);
    pub const POWER: Dimension = Dimension::new(1, 2, -3, 0);
    pub const INTENSITY: Dimension = Dimension::new(1, 0, -3, 0);
    pub const VOLUME: Dimension = Dimension::new(0, 3, 0, 0);

    fn combine(self, other: Dimension, sign: i8) -> Dimension {
        Dimension::new(
            self.mass + sign * other.mass,
            self.length + sign * other.length,
            self.time + sign * other.time,
            self.current + sign * other.current,
        )
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Dimension::DIMENSIONLESS {
            return f.write_str("1");
        }
        let parts = [("kg", self.mass), ("m", self.length), ("s", self.time), ("A", self.current)];
        let mut first = true;
        for (sym, exp) in parts {
            if exp == 0 {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            if exp == 1 {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{exp}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    /// SI magnitude.
    pub value: f64,
    pub dimension: Dimension,
}

impl Quantity {
    pub fn new(value: f64, dimension: Dimension) -> Self {
        Quantity { value, dimension }
    }

    pub fn try_add(self, rhs: Quantity) -> Result<Quantity> {
        self.check_same(rhs)?;
        Ok(Quantity::new(self.value + rhs.value, self.dimension))
    }

    pub fn try_sub(self, rhs: Quantity) -> Result<Quantity> {
        self.check_same(rhs)?;
        Ok(Quantity::new(self.value - rhs.value, self.dimension))
    }

    fn check_same(&self, rhs: Quantity) -> Result<()> {
        if self.dimension != rhs.dimension {
            return Err(Error::DimensionMismatch { left: self.dimension.to_string(), right: rhs.dimension.to_string() });
        }
        Ok(())
    }

    /// SI value, after checking the dimension.
    pub fn si(&self, expected: Dimension) -> Result<f64> {
        if self.dimension != expected {
            return Err(Error::DimensionMismatch { left: self.dimension.to_string(), right: expected.to_string() });
        }
        Ok(self.value)
    }

    /// Express the quantity in `unit`. Inverse of [`convert`].
    pub fn in_unit(&self, unit: &str) -> Result<f64> {
        let (factor, dim) = lookup(unit)?;
        self.check_same(Quantity::new(0.0, dim))?;
        Ok(self.value / factor)
    }
}

impl Mul for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: Quantity) -> Quantity {
        Quantity::new(self.value * rhs.value, self.dimension.combine(rhs.dimension, 1))
    }
}

impl Div for Quantity {
    type Output = Quantity;
    fn div(self, rhs: Quantity) -> Quantity {
        Quantity::new(self.value / rhs.value, self.dimension.combine(rhs.dimension, -1))
    }
}

impl Mul<f64> for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: f64) -> Quantity {
        Quantity::new(self.value * rhs, self.dimension)
    }
}

const TAU: f64 = std::f64::consts::TAU;

fn lookup(unit: &str) -> Result<(f64, Dimension)> {
    use Dimension as D;
    let entry = match unit {
        "T" => (1.0, D::MAGNETIC_FIELD),
        "G" => (1e-4, D::MAGNETIC_FIELD),
        "mG" => (1e-7, D::MAGNETIC_FIELD),
        "K" => (K_BOLTZMANN, D::ENERGY),
        "mK" => (K_BOLTZMANN * 1e-3, D::ENERGY),
        "uK" | "μK" | "µK" => (K_BOLTZMANN * 1e-6, D::ENERGY),
        "nK" => (K_BOLTZMANN * 1e-9, D::ENERGY),
        "J" => (1.0, D::ENERGY),
        "s" => (1.0, D::TIME),
        "ms" => (1e-3, D::TIME),
        "us" | "μs" | "µs" => (1e-6, D::TIME),
        "m" => (1.0, D::LENGTH),
        "cm" => (1e-2, D::LENGTH),
        "mm" => (1e-3, D::LENGTH),
        "um" | "μm" | "µm" => (1e-6, D::LENGTH),
        "nm" => (1e-9, D::LENGTH),
        "m/s" => (1.0, D::VELOCITY),
        "cm/s" => (1e-2, D::VELOCITY),
        "mm/s" => (1e-3, D::VELOCITY),
        "W" => (1.0, D::POWER),
        "mW" => (1e-3, D::POWER),
        "W/m^2" => (1.0, D::INTENSITY),
        "Hz" => (TAU, D::FREQUENCY),
        "kHz" => (TAU * 1e3, D::FREQUENCY),
        "MHz" => (TAU * 1e6, D::FREQUENCY),
        "rad/s" | "1/s" => (1.0, D::FREQUENCY),
        "mu_B" | "μ_B" | "µ_B" => (MU_BOHR, D::MAGNETIC_MOMENT),
        "J/T" => (1.0, D::MAGNETIC_MOMENT),
        "a0" | "a₀" => (BOHR_RADIUS, D::LENGTH),
        "A^3" | "Å³" | "Å^3" => (1e-30, D::VOLUME),
        "m^3" => (1.0, D::VOLUME),
        "kg" => (1.0, D::MASS),
        "u" => (ATOMIC_MASS_UNIT, D::MASS),
        "1" => (1.0, D::DIMENSIONLESS),
        _ => return Err(Error::UnknownUnit { token: unit.to_string() }),
    };
    Ok(entry)
}

/// Convert `value` given in `unit` to an SI quantity.
pub fn convert(value: f64, unit: &str) -> Result<Quantity> {
    let (factor, dimension) = lookup(unit)?;
    Ok(Quantity::new(value * factor, dimension))
}

/// Parse `"<number> <unit>"`, e.g. `"216 um"` or `"0.01 mu_B"`. A bare
/// number is dimensionless.
pub fn parse_quantity(input: &str) -> Result<Quantity> {
    let trimmed = input.trim();
    let mut parts = trimmed.splitn(2, char::is_whitespace);
    let number = parts.next().unwrap_or("");
    let value: f64 = number
        .parse()
        .map_err(|_| Error::MalformedQuantity { input: input.to_string(), reason: format!("`{number}` is not a number") })?;
    if !value.is_finite() {
        return Err(Error::MalformedQuantity { input: input.to_string(), reason: "value is not finite".into() });
    }
    match parts.next().map(str::trim) {
        None | Some("") => Ok(Quantity::new(value, Dimension::DIMENSIONLESS)),
        Some(unit) => convert(value, unit),
    }
}

/// Parse and require a particular dimension, returning the SI value.
pub fn parse_si(input: &str, expected: Dimension) -> Result<f64> {
    parse_quantity(input)?.si(expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn milligauss_to_tesla() {
        let q = convert(200.0, "mG").unwrap();
        assert_relative_eq!(q.value, 2.0e-5, max_relative = 1e-15);
        assert_eq!(q.dimension, Dimension::MAGNETIC_FIELD);
    }

    #[test]
    fn nanokelvin_is_an_energy() {
        let q = convert(50.0, "nK").unwrap();
        assert_relative_eq!(q.value, 6.903e-31, max_relative = 1e-4);
        assert_eq!(q.dimension, Dimension::ENERGY);
    }

    #[test]
    fn bohr_magneton_fraction() {
        let q = convert(0.01, "μ_B").unwrap();
        assert_relative_eq!(q.value, 9.274e-26, max_relative = 1e-4);
        assert_eq!(convert(0.01, "mu_B").unwrap(), q);
    }

    #[test]
    fn hertz_is_angular() {
        let q = convert(300.0, "Hz").unwrap();
        assert_relative_eq!(q.value, TAU * 300.0);
    }

    #[test]
    fn unknown_unit_names_token() {
        match convert(1.0, "furlong") {
            Err(Error::UnknownUnit { token }) => assert_eq!(token, "furlong"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_quantity("3 parsec") {
            Err(Error::UnknownUnit { token }) => assert_eq!(token, "parsec"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(parse_quantity("abc um"), Err(Error::MalformedQuantity { .. })));
        assert!(matches!(parse_quantity("inf um"), Err(Error::MalformedQuantity { .. })));
    }

    #[test]
    fn mismatched_add_is_rejected() {
        let b = convert(1.0, "G").unwrap();
        let l = convert(1.0, "mm").unwrap();
        assert!(matches!(b.try_add(l), Err(Error::DimensionMismatch { .. })));
        assert!(b.try_sub(l).is_err());
        assert!(b.try_add(convert(3.0, "mG").unwrap()).is_ok());
    }

    #[test]
    fn derived_dimensions_compose() {
        let mu = convert(0.01, "mu_B").unwrap();
        let b = convert(200.0, "mG").unwrap();
        assert_eq!((mu * b).dimension, Dimension::ENERGY);
        let p = convert(1.0, "kg").unwrap() * convert(5.0, "mm/s").unwrap();
        assert_eq!(p.dimension, Dimension::MOMENTUM);
        assert_eq!((p / p).dimension, Dimension::DIMENSIONLESS);
        assert!(parse_si("5 mm", Dimension::TIME).is_err());
    }

    const UNITS: &[&str] = &[
        "mG", "G", "T", "nK", "μK", "ms", "s", "μm", "mm", "cm", "m", "mm/s", "cm/s", "W", "Hz", "μ_B", "a₀", "Å³", "nm", "MHz",
        "u",
    ];

    proptest! {
        #[test]
        fn round_trip_every_unit(idx in 0..UNITS.len(), v in -1e6f64..1e6) {
            let unit = UNITS[idx];
            let q = convert(v, unit).unwrap();
            let back = q.in_unit(unit).unwrap();
            prop_assert!((back - v).abs() <= 4.0 * f64::EPSILON * v.abs());
        }
    }
}
