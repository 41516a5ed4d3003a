//! Magnetic pulse sequences near an isolated Feshbach resonance, the
//! closed-channel amplitude C(t), and its Fourier transform C̃(ω).
//!
//! With `ħΩ(t) = μ_res (B(t) − B_res) − 2U_T + ħω_G`, the closed-channel
//! amplitude in the weak-coupling limit is the pure phase
//! `C(t) = exp(−i ∫_{t₀}^{t} Ω)`, with `t₀` the start of the sequence.
//!
//! The transform of a pure phase is only defined up to an off-shell delta
//! at the base frequency `Ω_b`. Integrating by parts, the on-shell part is
//!
//! ```text
//! C̃(ω) = 1/(ω − Ω_b) · ∫ dt e^{iωt} C(t) μ_res (B(t) − B₀)/ħ
//! ```
//!
//! which only sees the pulse support. Both the numeric and the closed-form
//! double-square transforms use this convention with the phase of C
//! referenced to the centre of the first pulse. For the canonical sequence
//! that makes the numeric result coincide with the closed form
//!
//! ```text
//! C̃(ω) = T μ ΔB sinc[(ω − Ω_p) T/2] / (ħ(ω − Ω_b))
//!        × { e^{−iωτ} + e^{i[2U_T τ − μΔB T + μ(B_res − B₀)τ − ħω_G τ]/ħ} }
//! ```
//!
//! with no extra global phase. The relative phase φ_τ reported in
//! [`DerivedScales`] differs from the bracketed phase above by `2ω_G τ`,
//! which is absorbed into `e^{−iωτ}` once ω is written in terms of the
//! pair momenta.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, PLANCK};
use crate::error::{Error, Result};
use crate::quadrature::{Partition, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    /// Resonance width ΔB_res, T.
    pub width: f64,
    /// Magnetic moment difference μ_res, J/T.
    pub mu_res: f64,
    /// Resonance position B_res, T.
    pub b_res: f64,
    /// Background scattering length, m.
    pub a_bg: f64,
}

impl ResonanceParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("resonance width > 0", self.width), ("mu_res > 0", self.mu_res), ("B_res > 0", self.b_res), ("a_bg > 0", self.a_bg)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invariant { name, detail: format!("{v}") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquarePulse {
    pub start: f64,
    pub duration: f64,
    /// Field step above the base value, T.
    pub height: f64,
}

impl SquarePulse {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn center(&self) -> f64 {
        self.start + 0.5 * self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub b0: f64,
    pub pulses: Vec<SquarePulse>,
}

/// Two equal square pulses of height ΔB and duration T with centres τ apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleSquare {
    pub b0: f64,
    pub height: f64,
    pub duration: f64,
    pub tau: f64,
}

impl PulseSequence {
    pub fn new(b0: f64, pulses: Vec<SquarePulse>) -> Result<Self> {
        let seq = PulseSequence { b0, pulses };
        seq.validate()?;
        Ok(seq)
    }

    /// Pulses centred at `−τ` and `0`.
    pub fn double_square(b0: f64, height: f64, duration: f64, tau: f64) -> Result<Self> {
        Self::new(
            b0,
            vec![
                SquarePulse { start: -tau - 0.5 * duration, duration, height },
                SquarePulse { start: -0.5 * duration, duration, height },
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0.is_finite()) {
            return Err(Error::Invariant { name: "B0 finite", detail: format!("{}", self.b0) });
        }
        if self.pulses.is_empty() {
            return Err(Error::Invariant { name: "at least one pulse", detail: "empty sequence".into() });
        }
        for p in &self.pulses {
            if !(p.duration > 0.0 && p.duration.is_finite() && p.start.is_finite() && p.height.is_finite()) {
                return Err(Error::Invariant { name: "pulse duration > 0", detail: format!("{p:?}") });
            }
        }
        for w in self.pulses.windows(2) {
            if w[1].start < w[0].end() {
                return Err(Error::Invariant {
                    name: "pulses time-ordered and non-overlapping",
                    detail: format!("pulse at {} s starts before {} s", w[1].start, w[0].end()),
                });
            }
        }
        Ok(())
    }

    /// Base field must sit below the resonance.
    pub fn validate_against(&self, res: &ResonanceParams) -> Result<()> {
        if !(self.b0 < res.b_res) {
            return Err(Error::Invariant { name: "B0 < B_res", detail: format!("B0 = {} T, B_res = {} T", self.b0, res.b_res) });
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.pulses[0].start
    }

    pub fn end(&self) -> f64 {
        self.pulses.last().unwrap().end()
    }

    pub fn field(&self, t: f64) -> f64 {
        self.b0 + self.pulses.iter().filter(|p| t >= p.start && t < p.end()).map(|p| p.height).sum::<f64>()
    }

    /// `Some` when the sequence is two identical square pulses.
    pub fn canonical(&self) -> Option<DoubleSquare> {
        match self.pulses.as_slice() {
            [a, b] if a.duration == b.duration && a.height == b.height => {
                Some(DoubleSquare { b0: self.b0, height: a.height, duration: a.duration, tau: b.center() - a.center() })
            }
            _ => None,
        }
    }

    /// Centre separation of the canonical pair.
    pub fn separation_tau(&self) -> Option<f64> {
        self.canonical().map(|c| c.tau)
    }

    pub fn with_heights(&self, heights: &[f64]) -> PulseSequence {
        let pulses = self.pulses.iter().zip(heights).map(|(p, &h)| SquarePulse { height: h, ..*p }).collect();
        PulseSequence { b0: self.b0, pulses }
    }
}

/// Field samples with linear interpolation; `b0` outside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedField {
    pub b0: f64,
    pub times: Vec<f64>,
    pub fields: Vec<f64>,
    /// Time at which the phase of C(t) is referenced to zero in the
    /// transform.
    pub reference_time: f64,
}

impl TabulatedField {
    pub fn new(b0: f64, times: Vec<f64>, fields: Vec<f64>, reference_time: f64) -> Result<Self> {
        if times.len() != fields.len() || times.len() < 2 {
            return Err(Error::Precondition("need at least two (time, field) samples of equal count".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("sample times must be strictly increasing".into()));
        }
        Ok(TabulatedField { b0, times, fields, reference_time })
    }

    /// Sample a pulse sequence on a uniform time grid.
    pub fn sample(seq: &PulseSequence, t_start: f64, t_end: f64, samples: usize, reference_time: f64) -> Result<Self> {
        let n = samples.max(2);
        let dt = (t_end - t_start) / (n - 1) as f64;
        let times: Vec<f64> = (0..n).map(|i| t_start + dt * i as f64).collect();
        let fields = times.iter().map(|&t| seq.field(t)).collect();
        Self::new(seq.b0, times, fields, reference_time)
    }

    pub fn field(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] || t >= self.times[n - 1] {
            return self.b0;
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.fields[i] + s * (self.fields[i + 1] - self.fields[i])
    }

    /// Running integral of `B − b0` at each sample, exact for linear
    /// interpolation.
    fn excess_prefix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len());
        out.push(0.0);
        for i in 0..self.times.len() - 1 {
            let (fa, fb) = (self.fields[i] - self.b0, self.fields[i + 1] - self.b0);
            out.push(out[i] + 0.5 * (self.times[i + 1] - self.times[i]) * (fa + fb));
        }
        out
    }

    fn excess_until(&self, prefix: &[f64], t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return 0.0;
        }
        if t >= self.times[n - 1] {
            return prefix[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (ta, tb) = (self.times[i], self.times[i + 1]);
        let (fa, fb) = (self.fields[i] - self.b0, self.fields[i + 1] - self.b0);
        let s = (t - ta) / (tb - ta);
        prefix[i] + (t - ta) * (fa + 0.5 * s * (fb - fa))
    }

    fn is_base(&self, b: f64) -> bool {
        (b - self.b0).abs() <= 1e-12 * self.b0.abs().max(1e-300)
    }

    /// Support intervals where the field leaves the base value, as sample
    /// index ranges (inclusive of the bracketing base samples).
    fn features(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let n = self.times.len();
        let mut i = 0;
        while i < n {
            if self.is_base(self.fields[i]) {
                i += 1;
                continue;
            }
            let lo = i.saturating_sub(1);
            let mut j = i;
            while j < n && !self.is_base(self.fields[j]) {
                j += 1;
            }
            out.push((lo, j.min(n - 1)));
            i = j;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldProfile {
    Pulses(PulseSequence),
    Tabulated(TabulatedField),
}

impl From<PulseSequence> for FieldProfile {
    fn from(s: PulseSequence) -> Self {
        FieldProfile::Pulses(s)
    }
}

impl From<TabulatedField> for FieldProfile {
    fn from(t: TabulatedField) -> Self {
        FieldProfile::Tabulated(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOffsets {
    /// Longitudinal trap depth U_T, J.
    pub trap_depth: f64,
    /// Transverse guide frequency ω_G, rad/s.
    pub guide_frequency: f64,
}

impl EnergyOffsets {
    pub fn validate(&self) -> Result<()> {
        if !(self.trap_depth >= 0.0 && self.guide_frequency >= 0.0) {
            return Err(Error::Invariant { name: "energy offsets >= 0", detail: format!("{self:?}") });
        }
        Ok(())
    }
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Ω(t) for a given field, rad/s.
fn detuning_rate(b: f64, res: &ResonanceParams, off: &EnergyOffsets) -> f64 {
    (res.mu_res * (b - res.b_res) - 2.0 * off.trap_depth) / HBAR + off.guide_frequency
}

/// Phase of a tabulated profile given its [`TabulatedField::excess_prefix`].
fn tabulated_phase(tab: &TabulatedField, prefix: &[f64], res: &ResonanceParams, off: &EnergyOffsets, t: f64) -> f64 {
    let t0 = tab.times[0];
    if t <= t0 {
        return 0.0;
    }
    detuning_rate(tab.b0, res, off) * (t - t0) + res.mu_res * tab.excess_until(prefix, t) / HBAR
}

/// ∫_{t₀}^{t} Ω dt′ with t₀ the start of the profile.
fn accumulated_phase(profile: &FieldProfile, res: &ResonanceParams, off: &EnergyOffsets, t: f64) -> f64 {
    match profile {
        FieldProfile::Pulses(seq) => {
            let t0 = seq.start();
            if t <= t0 {
                return 0.0;
            }
            let base = detuning_rate(seq.b0, res, off) * (t - t0);
            let pulses: f64 = seq
                .pulses
                .iter()
                .map(|p| {
                    let overlap = (t.min(p.end()) - p.start).max(0.0);
                    res.mu_res * p.height / HBAR * overlap
                })
                .sum();
            base + pulses
        }
        FieldProfile::Tabulated(tab) => tabulated_phase(tab, &tab.excess_prefix(), res, off, t),
    }
}

/// Closed-channel amplitude C(t) with C(t₀) = 1. Always of unit modulus.
pub fn closed_channel_amplitude(profile: &FieldProfile, res: &ResonanceParams, off: &EnergyOffsets, t: f64) -> Complex64 {
    let phase = accumulated_phase(profile, res, off, t);
    Complex64::from_polar(1.0, -phase.rem_euclid(2.0 * PI))
}

/// Closed-form transform of a canonical double square sequence.
pub fn spectrum_analytic_double_square(
    seq: &PulseSequence,
    res: &ResonanceParams,
    off: &EnergyOffsets,
    omega: f64,
) -> Result<Complex64> {
    let c = seq
        .canonical()
        .ok_or_else(|| Error::Precondition("sequence is not a canonical double square pulse; use spectrum_numeric".into()))?;
    let mu = res.mu_res;
    let (u, wg) = (off.trap_depth, off.guide_frequency);
    let sinc_arg = (omega - mu * (c.b0 + c.height - res.b_res) / HBAR + 2.0 * u / HBAR - wg) * c.duration / 2.0;
    let denom = HBAR * omega - mu * (c.b0 - res.b_res) + 2.0 * u - HBAR * wg;
    if denom == 0.0 {
        return Err(Error::Domain(format!("ω = {omega} rad/s sits on the base-field pole")));
    }
    let envelope = c.duration * mu * c.height * sinc(sinc_arg) / denom;
    let second = (2.0 * u * c.tau - mu * c.height * c.duration + mu * (res.b_res - c.b0) * c.tau - HBAR * wg * c.tau) / HBAR;
    let paths = Complex64::from_polar(1.0, -(omega * c.tau).rem_euclid(2.0 * PI))
        + Complex64::from_polar(1.0, second.rem_euclid(2.0 * PI));
    Ok(paths * envelope)
}

/// Single-pulse transform: the `e^{−iωτ}` term of the double-pulse result
/// on its own, i.e. one pulse of height ΔB and duration T.
pub fn single_pulse_transform(
    height: f64,
    duration: f64,
    b0: f64,
    res: &ResonanceParams,
    off: &EnergyOffsets,
    omega: f64,
) -> f64 {
    let mu = res.mu_res;
    let sinc_arg = (omega - detuning_rate(b0 + height, res, off)) * duration / 2.0;
    let denom = HBAR * (omega - detuning_rate(b0, res, off));
    duration * mu * height * sinc(sinc_arg) / denom
}

/// Numeric transform on the pulse support, for pulse sequences or
/// tabulated field profiles.
pub fn spectrum_numeric(
    profile: &FieldProfile,
    res: &ResonanceParams,
    off: &EnergyOffsets,
    omegas: &[f64],
) -> Result<Vec<Complex64>> {
    let rule = Rule::gauss_legendre(10);
    // (t, weight·μ(B−B₀)/ħ) on the support, plus the accumulated phase at each node
    let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
    let (b0, reference_time) = match profile {
        FieldProfile::Pulses(seq) => {
            for p in &seq.pulses {
                if p.height == 0.0 {
                    continue;
                }
                let part = Partition::uniform(p.start, p.end(), 50);
                let (ts, ws) = part.nodes(&rule);
                for (t, w) in ts.into_iter().zip(ws) {
                    let drive = res.mu_res * p.height / HBAR;
                    nodes.push((t, w * drive, accumulated_phase(profile, res, off, t)));
                }
            }
            (seq.b0, seq.pulses[0].center())
        }
        FieldProfile::Tabulated(tab) => {
            let prefix = tab.excess_prefix();
            let features = tab.features();
            for &(lo, hi) in &features {
                let span = tab.times[hi] - tab.times[lo];
                let spacing = tab.times[lo..=hi].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                if spacing > span / 20.0 {
                    return Err(Error::Resolution { spacing, limit: span / 20.0 });
                }
                let sub = ((spacing / (span / 50.0)).ceil() as usize).max(1);
                for i in lo..hi {
                    let part = Partition::uniform(tab.times[i], tab.times[i + 1], sub);
                    let (ts, ws) = part.nodes(&rule);
                    for (t, w) in ts.into_iter().zip(ws) {
                        let drive = res.mu_res * (tab.field(t) - tab.b0) / HBAR;
                        nodes.push((t, w * drive, tabulated_phase(tab, &prefix, res, off, t)));
                    }
                }
            }
            (tab.b0, tab.reference_time)
        }
    };
    let phase_ref = accumulated_phase(profile, res, off, reference_time);
    let base_rate = detuning_rate(b0, res, off);

    omegas
        .iter()
        .map(|&omega| {
            let gap = omega - base_rate;
            if gap == 0.0 {
                return Err(Error::Domain(format!("ω = {omega} rad/s sits on the base-field pole")));
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for &(t, w, phase) in &nodes {
                let arg = (omega * t - phase + phase_ref).rem_euclid(2.0 * PI);
                acc += Complex64::from_polar(w, arg);
            }
            Ok(acc / gap)
        })
        .collect()
}

/// Momentum and length scales of a canonical double pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    /// Mean momentum p₀, `p₀²/m = μ(B₀+ΔB−B_res) − 2U_T − ħω_G`.
    pub p0: f64,
    /// Characteristic width Δp, `Δp² = 2mħ/T`.
    pub delta_p: f64,
    /// Pulse momentum p̄, `p̄²/m = μΔB`.
    pub p_bar: f64,
    /// Relative phase between early and late components.
    pub phi_tau: f64,
    /// Optimum-overlap path difference τp₀/m.
    pub ell_0: f64,
    /// de Broglie wavelength h/p₀.
    pub lambda_rel: f64,
    pub tau: f64,
    pub duration: f64,
    pub mass: f64,
}

impl DerivedScales {
    pub fn velocity(&self) -> f64 {
        self.p0 / self.mass
    }

    /// Same spectrum, different pulse separation.
    pub fn with_tau(&self, tau: f64) -> DerivedScales {
        DerivedScales { tau, ell_0: tau * self.p0 / self.mass, ..*self }
    }
}

pub fn derived_scales(seq: &PulseSequence, res: &ResonanceParams, off: &EnergyOffsets, mass: f64) -> Result<DerivedScales> {
    let c =
        seq.canonical().ok_or_else(|| Error::Precondition("derived scales need a canonical double square sequence".into()))?;
    let mu = res.mu_res;
    let mean_energy = mu * (c.b0 + c.height - res.b_res) - 2.0 * off.trap_depth - HBAR * off.guide_frequency;
    if !(mean_energy > 0.0) {
        return Err(Error::Infeasible(format!(
            "pulse cannot overcome trap depth and transverse zero-point offset (p0²/m = {mean_energy:.3e} J)"
        )));
    }
    let p0 = (mass * mean_energy).sqrt();
    let pulse_energy = mu * c.height;
    if !(pulse_energy > mean_energy) {
        return Err(Error::Infeasible(format!(
            "pulse momentum does not exceed the mean momentum (p̄²/m = {pulse_energy:.3e} J <= p0²/m = {mean_energy:.3e} J)"
        )));
    }
    let phi_tau = (2.0 * off.trap_depth * c.tau - mu * c.height * c.duration + mu * (res.b_res - c.b0) * c.tau) / HBAR
        + off.guide_frequency * c.tau;
    Ok(DerivedScales {
        p0,
        delta_p: (2.0 * mass * HBAR / c.duration).sqrt(),
        p_bar: (mass * pulse_energy).sqrt(),
        phi_tau,
        ell_0: c.tau * p0 / mass,
        lambda_rel: PLANCK / p0,
        tau: c.tau,
        duration: c.duration,
        mass,
    })
}

/// |δφ_τ| when every field offset from resonance (B₀ − B_res and ΔB) is
/// scaled by `1 + relative_field_error`. φ_τ is linear in those offsets.
pub fn phase_sensitivity(seq: &PulseSequence, res: &ResonanceParams, relative_field_error: f64) -> Result<f64> {
    let c = seq
        .canonical()
        .ok_or_else(|| Error::Precondition("phase sensitivity needs a canonical double square sequence".into()))?;
    let field_part = (res.mu_res * (res.b_res - c.b0) * c.tau - res.mu_res * c.height * c.duration) / HBAR;
    Ok((relative_field_error * field_part).abs())
}
