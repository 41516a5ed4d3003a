//! Scenario configuration, derived quantities, and the feasibility audit.
//!
//! Configs are TOML with every physical value written as a quoted
//! `"<number> <unit>"` string. Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{HBAR, RELEASE};
use crate::error::{Error, Result};
use crate::feshbach::{derived_scales, phase_sensitivity, DerivedScales, EnergyOffsets, PulseSequence, ResonanceParams};
use crate::optics::{
    dipole_depth, gravity_compensation_margin, scattering_rate, transverse_frequency, waist_for_frequency, AtomicLine,
    DipoleTrap, GaussianBeam, Polarizability,
};
use crate::spectrum::{dissociation_probability, norm_ctilde, TrapGroundState};
use crate::units::{parse_si, Dimension};

pub const BASELINE_NAME: &str = "li6_baseline";
const BASELINE_TOML: &str = include_str!("../configs/li6_baseline.toml");

/// Tool version embedded in artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeam {
    power: String,
    waist_x: String,
    waist_y: String,
    wavelength: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolarizability {
    molecular_volume: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOffsets {
    trap_depth: String,
    guide_frequency: String,
    trap_frequency: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResonance {
    width: String,
    mu_res: String,
    b_res: String,
    a_bg: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulses {
    b0: String,
    height: String,
    duration: String,
    separation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    linewidth: String,
    wavelength: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    mass: String,
    propagation_time: String,
    initial_packet_width: String,
    guide_beam: RawBeam,
    trap_beam: RawBeam,
    polarizability: RawPolarizability,
    offsets: RawOffsets,
    resonance: RawResonance,
    pulses: RawPulses,
    d_line: RawLine,
}

/// Energy offsets as configured, plus the longitudinal trap frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalOffsets {
    pub trap_depth: f64,
    pub guide_frequency: f64,
    pub trap_frequency: f64,
}

/// The canonical double pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub b0: f64,
    pub height: f64,
    pub duration: f64,
    pub separation: f64,
}

/// SI-normalized, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mass: f64,
    pub propagation_time: f64,
    pub initial_packet_width: f64,
    pub guide_beam: GaussianBeam,
    pub trap_beam: GaussianBeam,
    /// Molecular polarizability volume; single atoms see half.
    pub polarizability: Polarizability,
    pub offsets: NominalOffsets,
    pub resonance: ResonanceParams,
    pub pulse: PulseSpec,
    pub d_line: AtomicLine,
}

fn si(value: &str, dim: Dimension, key: &str) -> Result<f64> {
    parse_si(value, dim).map_err(|e| match e {
        Error::DimensionMismatch { left, right } => Error::Parse(format!("{key}: expected {right}, got {left}")),
        Error::MalformedQuantity { input, reason } => Error::MalformedQuantity { input: format!("{key} = {input:?}"), reason },
        other => other,
    })
}

fn location(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

fn beam(raw: &RawBeam, key: &str) -> Result<GaussianBeam> {
    GaussianBeam::new(
        si(&raw.power, Dimension::POWER, &format!("{key}.power"))?,
        si(&raw.waist_x, Dimension::LENGTH, &format!("{key}.waist_x"))?,
        si(&raw.waist_y, Dimension::LENGTH, &format!("{key}.waist_y"))?,
        si(&raw.wavelength, Dimension::LENGTH, &format!("{key}.wavelength"))?,
    )
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Invariant { name, detail: format!("{value}") })
    }
}

/// Parse config text. Errors carry line and column for syntax problems,
/// the offending token for unit problems, and the invariant name otherwise.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| location(text, s.start)).unwrap_or((0, 0));
        Error::Parse(format!("line {line}, column {column}: {}", e.message()))
    })?;
    let mass = si(&raw.mass, Dimension::MASS, "mass")?;
    positive("mass > 0", mass)?;
    let propagation_time = si(&raw.propagation_time, Dimension::TIME, "propagation_time")?;
    if !(propagation_time >= 0.0) {
        return Err(Error::Invariant { name: "propagation_time >= 0", detail: format!("{propagation_time}") });
    }
    let initial_packet_width = si(&raw.initial_packet_width, Dimension::LENGTH, "initial_packet_width")?;
    positive("initial_packet_width > 0", initial_packet_width)?;

    let guide_beam = beam(&raw.guide_beam, "guide_beam")?;
    let trap_beam = beam(&raw.trap_beam, "trap_beam")?;
    let polarizability = Polarizability::new(
        si(&raw.polarizability.molecular_volume, Dimension::VOLUME, "polarizability.molecular_volume")?,
        "Li2",
    )?;
    let offsets = NominalOffsets {
        trap_depth: si(&raw.offsets.trap_depth, Dimension::ENERGY, "offsets.trap_depth")?,
        guide_frequency: si(&raw.offsets.guide_frequency, Dimension::FREQUENCY, "offsets.guide_frequency")?,
        trap_frequency: si(&raw.offsets.trap_frequency, Dimension::FREQUENCY, "offsets.trap_frequency")?,
    };
    if !(offsets.trap_depth >= 0.0) {
        return Err(Error::Invariant { name: "trap depth >= 0", detail: format!("{}", offsets.trap_depth) });
    }
    positive("guide frequency > 0", offsets.guide_frequency)?;
    positive("trap frequency > 0", offsets.trap_frequency)?;

    let resonance = ResonanceParams {
        width: si(&raw.resonance.width, Dimension::MAGNETIC_FIELD, "resonance.width")?,
        mu_res: si(&raw.resonance.mu_res, Dimension::MAGNETIC_MOMENT, "resonance.mu_res")?,
        b_res: si(&raw.resonance.b_res, Dimension::MAGNETIC_FIELD, "resonance.b_res")?,
        a_bg: si(&raw.resonance.a_bg, Dimension::LENGTH, "resonance.a_bg")?,
    };
    resonance.validate()?;
    let pulse = PulseSpec {
        b0: si(&raw.pulses.b0, Dimension::MAGNETIC_FIELD, "pulses.b0")?,
        height: si(&raw.pulses.height, Dimension::MAGNETIC_FIELD, "pulses.height")?,
        duration: si(&raw.pulses.duration, Dimension::TIME, "pulses.duration")?,
        separation: si(&raw.pulses.separation, Dimension::TIME, "pulses.separation")?,
    };
    positive("pulse height > 0", pulse.height)?;
    if !(pulse.separation >= pulse.duration) {
        return Err(Error::Invariant {
            name: "pulse separation >= duration",
            detail: format!("separation {} s, duration {} s", pulse.separation, pulse.duration),
        });
    }
    let d_line = AtomicLine {
        linewidth: si(&raw.d_line.linewidth, Dimension::FREQUENCY, "d_line.linewidth")?,
        wavelength: si(&raw.d_line.wavelength, Dimension::LENGTH, "d_line.wavelength")?,
    };
    positive("line width > 0", d_line.linewidth)?;
    positive("line wavelength > 0", d_line.wavelength)?;

    let config = ScenarioConfig {
        name: raw.name,
        mass,
        propagation_time,
        initial_packet_width,
        guide_beam,
        trap_beam,
        polarizability,
        offsets,
        resonance,
        pulse,
        d_line,
    };
    config.pulses()?.validate_against(&config.resonance)?;
    Ok(config)
}

/// A bundled config by name, or a TOML file path.
pub fn load_config(name_or_path: &str) -> Result<ScenarioConfig> {
    if let Some(text) = bundled(name_or_path) {
        return parse_config(text);
    }
    let text = std::fs::read_to_string(Path::new(name_or_path))?;
    parse_config(&text)
}

pub fn bundled(name: &str) -> Option<&'static str> {
    (name == BASELINE_NAME).then_some(BASELINE_TOML)
}

pub fn baseline() -> ScenarioConfig {
    parse_config(BASELINE_TOML).expect("bundled baseline config is valid")
}

fn fmt_si(v: f64, unit: &str) -> String {
    format!("{v:?} {unit}")
}

fn raw_beam(b: &GaussianBeam) -> RawBeam {
    RawBeam {
        power: fmt_si(b.power, "W"),
        waist_x: fmt_si(b.waist_x, "m"),
        waist_y: fmt_si(b.waist_y, "m"),
        wavelength: fmt_si(b.wavelength, "m"),
    }
}

impl ScenarioConfig {
    /// SI form of the config; parses back to an identical config.
    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            name: self.name.clone(),
            mass: fmt_si(self.mass, "kg"),
            propagation_time: fmt_si(self.propagation_time, "s"),
            initial_packet_width: fmt_si(self.initial_packet_width, "m"),
            guide_beam: raw_beam(&self.guide_beam),
            trap_beam: raw_beam(&self.trap_beam),
            polarizability: RawPolarizability { molecular_volume: fmt_si(self.polarizability.volume, "m^3") },
            offsets: RawOffsets {
                trap_depth: fmt_si(self.offsets.trap_depth, "J"),
                guide_frequency: fmt_si(self.offsets.guide_frequency, "rad/s"),
                trap_frequency: fmt_si(self.offsets.trap_frequency, "rad/s"),
            },
            resonance: RawResonance {
                width: fmt_si(self.resonance.width, "T"),
                mu_res: fmt_si(self.resonance.mu_res, "J/T"),
                b_res: fmt_si(self.resonance.b_res, "T"),
                a_bg: fmt_si(self.resonance.a_bg, "m"),
            },
            pulses: RawPulses {
                b0: fmt_si(self.pulse.b0, "T"),
                height: fmt_si(self.pulse.height, "T"),
                duration: fmt_si(self.pulse.duration, "s"),
                separation: fmt_si(self.pulse.separation, "s"),
            },
            d_line: RawLine {
                linewidth: fmt_si(self.d_line.linewidth, "rad/s"),
                wavelength: fmt_si(self.d_line.wavelength, "m"),
            },
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// sha256 of the SI form, hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn pulses(&self) -> Result<PulseSequence> {
        let p = &self.pulse;
        PulseSequence::double_square(p.b0, p.height, p.duration, p.separation)
    }

    pub fn energy_offsets(&self) -> EnergyOffsets {
        EnergyOffsets { trap_depth: self.offsets.trap_depth, guide_frequency: self.offsets.guide_frequency }
    }

    pub fn trap_ground_state(&self) -> Result<TrapGroundState> {
        TrapGroundState::new(self.mass, self.offsets.trap_frequency)
    }

    pub fn derived_scales(&self) -> Result<DerivedScales> {
        derived_scales(&self.pulses()?, &self.resonance, &self.energy_offsets(), self.mass)
    }

    pub fn atomic_polarizability(&self) -> Polarizability {
        Polarizability::atomic_from_molecular(&self.polarizability, "Li")
    }

    pub fn guide_trap(&self) -> Result<DipoleTrap> {
        DipoleTrap::from_beam(&self.guide_beam, &self.atomic_polarizability(), self.mass, &self.d_line)
    }

    pub fn longitudinal_trap(&self) -> Result<DipoleTrap> {
        DipoleTrap::from_beam(&self.trap_beam, &self.atomic_polarizability(), self.mass, &self.d_line)
    }

    pub fn with_separation(&self, separation: f64) -> ScenarioConfig {
        ScenarioConfig { pulse: PulseSpec { separation, ..self.pulse }, ..self.clone() }
    }

    pub fn with_height(&self, height: f64) -> ScenarioConfig {
        ScenarioConfig { pulse: PulseSpec { height, ..self.pulse }, ..self.clone() }
    }
}

/// Metadata wrapped around every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Artifact<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub constants: &'static str,
    pub config_name: String,
    pub config_hash: String,
    pub data: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(config: &ScenarioConfig, data: T) -> Self {
        Artifact {
            tool: "dte",
            version: VERSION,
            constants: RELEASE,
            config_name: config.name.clone(),
            config_hash: config.hash(),
            data,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpticsSummary {
    pub guide: DipoleTrap,
    pub trap: DipoleTrap,
    /// Steepest guide force over the weight.
    pub gravity_margin: f64,
    /// Longitudinal frequency from the trap beam's long axis, rad/s.
    pub trap_frequency_from_beam: f64,
    /// Long-axis waist that gives the nominal depth and frequency.
    pub trap_waist_for_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedReport {
    pub scales: DerivedScales,
    pub velocity: f64,
    pub sigma_p_t: f64,
    pub sigma_p_t_over_p0: f64,
    pub delta_p_over_p0: f64,
    pub delta_p_over_p0_squared: f64,
    pub p_bar_over_p0: f64,
    pub norm_closed_form: f64,
    pub norm_numeric: f64,
    pub dissociation_probability: f64,
    pub dissociation_warning: Option<String>,
    pub phase_sensitivity_1e5: f64,
    pub nominal: NominalOffsets,
    pub optics: OpticsSummary,
}

pub fn optics_summary(config: &ScenarioConfig) -> Result<OpticsSummary> {
    let pol = config.atomic_polarizability();
    let trap = config.longitudinal_trap()?;
    Ok(OpticsSummary {
        guide: config.guide_trap()?,
        trap,
        gravity_margin: gravity_compensation_margin(&config.guide_beam, &pol, config.mass),
        trap_frequency_from_beam: transverse_frequency(trap.depth, config.mass, config.trap_beam.waist_x),
        trap_waist_for_nominal: waist_for_frequency(config.offsets.trap_depth, config.mass, config.offsets.trap_frequency),
    })
}

pub fn derived_report(config: &ScenarioConfig) -> Result<DerivedReport> {
    let scales = config.derived_scales()?;
    let trap = config.trap_ground_state()?;
    let norm = norm_ctilde(&scales, &trap)?;
    let diss = dissociation_probability(&scales, &config.resonance, config.offsets.guide_frequency);
    Ok(DerivedReport {
        velocity: scales.velocity(),
        sigma_p_t: trap.sigma_p_t,
        sigma_p_t_over_p0: trap.sigma_p_t / scales.p0,
        delta_p_over_p0: scales.delta_p / scales.p0,
        delta_p_over_p0_squared: (scales.delta_p / scales.p0).powi(2),
        p_bar_over_p0: scales.p_bar / scales.p0,
        norm_closed_form: norm.closed_form,
        norm_numeric: norm.numeric,
        dissociation_probability: diss.probability,
        dissociation_warning: diss.warning,
        phase_sensitivity_1e5: phase_sensitivity(&config.pulses()?, &config.resonance, 1e-5)?,
        nominal: config.offsets,
        optics: optics_summary(config)?,
        scales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// How `value` is compared with `bound`.
    pub relation: Relation,
    pub unit: String,
    pub pass: bool,
    /// Advisory checks are reported but never block.
    pub advisory: bool,
    /// What the check guards.
    pub anchor: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = "<=")]
    AtMost,
}

impl Relation {
    fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Relation::Below => value < bound,
            Relation::Above => value > bound,
            Relation::AtMost => value <= bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::Above => ">",
            Relation::AtMost => "<=",
        }
    }
}

impl Check {
    fn new(name: &str, value: f64, relation: Relation, bound: f64, unit: &str, anchor: &str) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation,
            unit: unit.into(),
            pass: relation.holds(value, bound),
            advisory: false,
            anchor: anchor.into(),
            note: None,
        }
    }

    fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    fn note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub checks: Vec<Check>,
    /// Conjunction of every check.
    pub overall: bool,
    /// Conjunction of the non-advisory checks.
    pub required: bool,
}

impl FeasibilityReport {
    fn from_checks(checks: Vec<Check>) -> Self {
        let overall = checks.iter().all(|c| c.pass);
        let required = checks.iter().filter(|c| !c.advisory).all(|c| c.pass);
        FeasibilityReport { checks, overall, required }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
        writeln!(f, "{:<width$}  {:>12}  {:<2}  {:>12}  {:<14}  verdict", "check", "value", "", "bound", "unit")?;
        for c in &self.checks {
            let verdict = match (c.pass, c.advisory) {
                (true, _) => "pass",
                (false, true) => "ADVISORY",
                (false, false) => "FAIL",
            };
            writeln!(
                f,
                "{:<width$}  {:>12.4e}  {:<2}  {:>12.4e}  {:<14}  {verdict}",
                c.name,
                c.value,
                c.relation.symbol(),
                c.bound,
                c.unit
            )?;
            writeln!(f, "{:<width$}  {}", "", c.anchor)?;
            if let Some(n) = &c.note {
                writeln!(f, "{:<width$}  {n}", "")?;
            }
        }
        let verdict = if self.required { "feasible" } else { "NOT feasible" };
        write!(f, "overall: {verdict} ({} of {} checks pass)", self.checks.iter().filter(|c| c.pass).count(), self.checks.len())
    }
}

/// Relative phase budget named in the phase-stability note.
pub const PHASE_BUDGET: f64 = 0.1;
/// Bound applied by the phase-stability check.
pub const PHASE_LIMIT: f64 = 0.5;

fn failed(name: &str, anchor: &str, err: &Error) -> Check {
    Check {
        name: name.into(),
        value: f64::NAN,
        bound: f64::NAN,
        relation: Relation::Below,
        unit: String::new(),
        pass: false,
        advisory: false,
        anchor: anchor.into(),
        note: Some(format!("not evaluated: {err}")),
    }
}

/// Every design constraint as a report entry. Never fails.
pub fn audit(config: &ScenarioConfig) -> FeasibilityReport {
    let mut checks = Vec::new();
    let scales = config.derived_scales();
    let pol = config.atomic_polarizability();
    let wg = config.offsets.guide_frequency;

    const FREEZE: &str = "transverse motion stays in the guide ground state: per-atom kinetic energy below one guide quantum";
    const GRAVITY: &str = "guide force holds the atoms against gravity";
    const DECOHERENCE: &str = "whole protocol finishes before one photon is scattered on average";
    const SEPARATION: &str = "early and late packets are well separated at the switch";
    const SPREADING: &str = "packet shape survives the flight to the interferometers";
    const PHASE: &str = "field stability keeps the early/late relative phase fixed";
    const POLE: &str = "single-pulse spectrum has no pole: pulse momentum exceeds mean momentum";
    const WEAK: &str = "only a small fraction of molecules dissociates per sequence";

    match &scales {
        Ok(s) => {
            let kinetic = s.p0 * s.p0 / (2.0 * config.mass);
            checks.push(
                Check::new("transverse_freezing", kinetic / (HBAR * wg), Relation::Below, 1.0, "hbar*w_G", FREEZE)
                    .note(format!("relative velocity 2p0/m = {:.3e} m/s", 2.0 * s.velocity())),
            );
        }
        Err(e) => checks.push(failed("transverse_freezing", FREEZE, e)),
    }

    checks.push(Check::new(
        "gravity_compensation",
        gravity_compensation_margin(&config.guide_beam, &pol, config.mass),
        Relation::Above,
        1.0,
        "m*g",
        GRAVITY,
    ));

    let rates =
        (scattering_rate(&config.guide_beam, &pol, &config.d_line), scattering_rate(&config.trap_beam, &pol, &config.d_line));
    match rates {
        (Ok(g), Ok(t)) => {
            let total = config.pulse.separation + config.propagation_time;
            checks.push(
                Check::new("decoherence_budget", total, Relation::Below, 1.0 / g.max(t), "s", DECOHERENCE)
                    .note(format!("scattering rates: guide {g:.3e} 1/s, trap {t:.3e} 1/s")),
            );
        }
        (Err(e), _) | (_, Err(e)) => checks.push(failed("decoherence_budget", DECOHERENCE, &e)),
    }

    match &scales {
        Ok(s) => {
            checks.push(
                Check::new(
                    "packet_separation",
                    s.ell_0 / config.initial_packet_width,
                    Relation::Above,
                    10.0,
                    "packet widths",
                    SEPARATION,
                )
                .note(format!("l0 = {:.3e} m", s.ell_0)),
            );
            let w0 = config.initial_packet_width;
            let spread = s.delta_p * config.propagation_time / config.mass;
            let width = (w0 * w0 + spread * spread).sqrt();
            checks.push(Check::new("spreading_budget", width, Relation::Below, 2.0 * w0, "m", SPREADING).advisory().note(
                format!(
                    "order-of-magnitude only. claim: packets remain essentially unchanged over {:.0} s of flight; \
                         naive estimate sqrt(w0^2 + (dp t/m)^2) = {width:.3e} m from w0 = {w0:.1e} m",
                    config.propagation_time
                ),
            ));
        }
        Err(e) => {
            checks.push(failed("packet_separation", SEPARATION, e));
            checks.push(failed("spreading_budget", SPREADING, e).advisory());
        }
    }

    match config.pulses().and_then(|p| phase_sensitivity(&p, &config.resonance, 1e-5)) {
        Ok(d) => checks.push(
            Check::new("phase_stability", d, Relation::AtMost, PHASE_LIMIT, "rad", PHASE)
                .note(format!("relative field accuracy 1e-5; budget {PHASE_BUDGET} rad, ratio {:.2}", d / PHASE_BUDGET)),
        ),
        Err(e) => checks.push(failed("phase_stability", PHASE, &e)),
    }

    match &scales {
        Ok(s) => {
            checks.push(Check::new("pole_safety", s.p_bar / s.p0, Relation::Above, 1.0, "p0", POLE));
            let p = dissociation_probability(s, &config.resonance, wg).probability;
            checks.push(Check::new("weak_coupling", p, Relation::Below, 0.1, "", WEAK));
        }
        Err(e) => {
            checks.push(failed("pole_safety", POLE, e));
            checks.push(failed("weak_coupling", WEAK, e));
        }
    }

    // the spectrum uses nominal offsets; the beams must reproduce them
    let trap_depth = dipole_depth(&config.trap_beam, &pol);
    let trap_freq = transverse_frequency(trap_depth, config.mass, config.trap_beam.waist_x);
    let guide_freq = transverse_frequency(dipole_depth(&config.guide_beam, &pol), config.mass, config.guide_beam.waist_x);
    for (name, beam_value, nominal, tol, anchor) in [
        (
            "trap_depth_consistency",
            trap_depth,
            config.offsets.trap_depth,
            0.15,
            "trap beam produces the nominal longitudinal depth",
        ),
        (
            "trap_frequency_consistency",
            trap_freq,
            config.offsets.trap_frequency,
            0.10,
            "trap beam produces the nominal longitudinal frequency",
        ),
        ("guide_frequency_consistency", guide_freq, wg, 0.10, "guide beam produces the nominal transverse frequency"),
    ] {
        let deviation = if nominal > 0.0 { (beam_value / nominal - 1.0).abs() } else { f64::INFINITY };
        checks.push(
            Check::new(name, deviation, Relation::AtMost, tol, "relative", anchor)
                .note(format!("beam {beam_value:.4e}, nominal {nominal:.4e} (SI)")),
        );
    }

    FeasibilityReport::from_checks(checks)
}

/// Angular frequency to cycles per second.
pub fn hertz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{K_BOLTZMANN, MASS_LI6_ATOM, MU_BOHR};
    use approx::assert_relative_eq;

    #[test]
    fn baseline_loads() {
        let c = baseline();
        assert_eq!(c.name, "li6_baseline");
        assert_relative_eq!(c.mass, MASS_LI6_ATOM, max_relative = 1e-12);
        assert_relative_eq!(c.resonance.mu_res, 0.01 * MU_BOHR, max_relative = 1e-12);
        assert_relative_eq!(c.offsets.trap_depth, 50e-9 * K_BOLTZMANN, max_relative = 1e-12);
        assert_relative_eq!(c.pulse.b0, 543.1e-4, max_relative = 1e-12);
        assert_relative_eq!(c.resonance.b_res - c.pulse.b0, 2e-5, max_relative = 1e-9);
        assert_relative_eq!(hertz(c.offsets.guide_frequency), 300.0, max_relative = 1e-12);
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = baseline();
        let back = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn field_above_resonance_is_rejected() {
        let text = BASELINE_TOML.replace("b0 = \"543.1 G\"", "b0 = \"543.4 G\"");
        match parse_config(&text) {
            Err(Error::Invariant { name, .. }) => assert_eq!(name, "B0 < B_res"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_power_is_rejected() {
        let text = BASELINE_TOML.replace("power = \"13.1 W\"", "power = \"-13.1 W\"");
        assert!(matches!(parse_config(&text), Err(Error::Invariant { .. })));
    }

    #[test]
    fn unknown_unit_names_token() {
        let text = BASELINE_TOML.replace("\"60 ms\"", "\"60 fortnights\"");
        match parse_config(&text) {
            Err(Error::UnknownUnit { token }) => assert_eq!(token, "fortnights"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_dimension_names_key() {
        let text = BASELINE_TOML.replace("\"60 ms\"", "\"60 mG\"");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("pulses.duration"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = BASELINE_TOML.replace("[pulses]", "[pulses\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("line ") && err.contains("column "), "{err}");
        let unknown = BASELINE_TOML.replace("[d_line]", "[d_line]\nshape = \"round\"");
        let err = parse_config(&unknown).unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }

    #[test]
    fn baseline_report() {
        let r = derived_report(&baseline()).unwrap();
        assert!((r.sigma_p_t_over_p0 / 0.024 - 1.0).abs() < 0.15);
        assert!((r.delta_p_over_p0_squared / 0.012 - 1.0).abs() < 0.20);
        assert!((r.dissociation_probability / 0.04 - 1.0).abs() < 0.15);
        assert!((hertz(r.optics.guide.transverse_frequency) / 300.0 - 1.0).abs() < 0.10);
        assert!((r.optics.guide.rayleigh_length / 0.15 - 1.0).abs() < 0.05);
        assert!((r.optics.trap_waist_for_nominal / 0.011 - 1.0).abs() < 0.10);
    }

    #[test]
    fn baseline_audit() {
        let r = audit(&baseline());
        assert!(r.required, "{r}");
        assert!(!r.overall);
        let failures: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failures, ["spreading_budget"]);
        assert!(r.checks.iter().all(|c| !c.anchor.is_empty()));
        let spread = r.check("spreading_budget").unwrap();
        assert!(spread.advisory);
        let note = spread.note.as_deref().unwrap();
        assert!(note.contains("claim") && note.contains("naive estimate"));
    }

    #[test]
    fn audit_is_pure() {
        let c = baseline();
        assert_eq!(audit(&c), audit(&c));
    }

    #[test]
    fn long_separation_breaks_decoherence_budget() {
        let r = audit(&baseline().with_separation(30.0));
        assert!(!r.check("decoherence_budget").unwrap().pass);
    }

    #[test]
    fn fast_pairs_break_freezing() {
        // raise the pulse until the relative velocity 2p0/m is ~5 cm/s
        let base = baseline();
        let s = base.derived_scales().unwrap();
        let target = 0.025 / s.velocity();
        let extra = (target * target - 1.0) * s.p0 * s.p0 / (base.mass * base.resonance.mu_res);
        let fast = base.with_height(base.pulse.height + extra);
        let v = fast.derived_scales().unwrap().velocity();
        assert!((2.0 * v / 0.05 - 1.0).abs() < 1e-6);
        assert!(!audit(&fast).check("transverse_freezing").unwrap().pass);
    }

    #[test]
    fn infeasible_pulse_is_reported_not_raised() {
        let weak = baseline().with_height(1e-5);
        let r = audit(&weak);
        assert!(!r.required);
        assert!(!r.check("pole_safety").unwrap().pass);
        assert!(r.check("transverse_freezing").unwrap().note.as_deref().unwrap().contains("not evaluated"));
    }

    #[test]
    fn artifact_embeds_hash_and_version() {
        let c = baseline();
        let a = Artifact::new(&c, serde_json::json!({"x": 1}));
        let v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(v["config_hash"], c.hash());
        assert_eq!(v["version"], VERSION);
    }
}
