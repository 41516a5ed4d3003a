//! Joint detection probabilities behind two switched Mach–Zehnder
//! interferometers, fringe scans, visibility, and CHSH values.
//!
//! For path lengths ℓ₁, ℓ₂ the correlation integral is
//!
//! ```text
//! F = ∫∫ ρ(p_cm, p_rel) exp(i[p_cm Σ/2ħ + p_rel(ℓ₁ − ℓ₂)/ħ − τ(p_cm²/4 + p_rel²)/mħ])
//! ```
//!
//! with ρ the normalized directional density and Σ = ℓ₁ + ℓ₂. Writing
//! `ℓ₁ − ℓ₂ = 2ℓ₀ + D` and `p_rel = p₀ + q`, the relative-momentum phase is
//! `τ(p₀² − q²)/mħ + p_rel D/ħ`, which keeps every phase of order a few
//! thousand radians instead of ~10⁷.
//!
//! The scan convention is ℓ₁ = ℓ₀ + Δℓ, ℓ₂ = −ℓ₀, so Σ = D = Δℓ. CHSH
//! settings offset both sides, ℓ₁ = ℓ₀ + x, ℓ₂ = −ℓ₀ + y, so Σ = x + y and
//! D = x − y.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::io::Write;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, PLANCK};
use crate::error::{Error, Result};
use crate::feshbach::DerivedScales;
use crate::quadrature::{Partition, Rule};
use crate::spectrum::SpectrumGrid;

/// Largest CHSH value allowed by quantum mechanics.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;
/// Visibility needed for a Bell violation.
pub const VISIBILITY_THRESHOLD: f64 = FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortLabel {
    Plus,
    Minus,
}

impl PortLabel {
    pub fn sign(self) -> f64 {
        match self {
            PortLabel::Plus => 1.0,
            PortLabel::Minus => -1.0,
        }
    }
}

/// (σ₁, σ₂) in CSV column order: ++, +−, −+, −−.
pub const PORT_PAIRS: [(PortLabel, PortLabel); 4] = [
    (PortLabel::Plus, PortLabel::Plus),
    (PortLabel::Plus, PortLabel::Minus),
    (PortLabel::Minus, PortLabel::Plus),
    (PortLabel::Minus, PortLabel::Minus),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub ell_1: f64,
    pub ell_2: f64,
}

impl PathSettings {
    /// ℓ₁ = ℓ₀ + Δℓ, ℓ₂ = −ℓ₀.
    pub fn scan(scales: &DerivedScales, delta_ell: f64) -> Self {
        PathSettings { ell_1: scales.ell_0 + delta_ell, ell_2: -scales.ell_0 }
    }

    /// ℓ₁ = ℓ₀ + x, ℓ₂ = −ℓ₀ + y.
    pub fn offsets(scales: &DerivedScales, x: f64, y: f64) -> Self {
        PathSettings { ell_1: scales.ell_0 + x, ell_2: -scales.ell_0 + y }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell_1.is_finite() && self.ell_2.is_finite()) {
            return Err(Error::Invariant { name: "path lengths finite", detail: format!("{self:?}") });
        }
        Ok(())
    }

    /// (Σ, D) = (ℓ₁ + ℓ₂, ℓ₁ − ℓ₂ − 2ℓ₀).
    pub fn sum_and_detuning(&self, scales: &DerivedScales) -> (f64, f64) {
        (self.ell_1 + self.ell_2, (self.ell_1 - scales.ell_0) - (self.ell_2 + scales.ell_0))
    }
}

/// How free evolution over τ enters the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DispersionModel {
    #[default]
    Full,
    /// Quadratic phase linearized about (0, p₀): a pure displacement, which
    /// the ℓ₀ path offset undoes exactly.
    DisplacementOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnginePlan {
    pub order: usize,
    /// Largest phase advance per panel, radians.
    pub guard: f64,
    pub min_panels: usize,
    /// Relative-momentum nodes per GEMM block.
    pub block: usize,
    pub dispersion: DispersionModel,
    /// Tolerance for single evaluations checked against a refined plan.
    pub tolerance: f64,
}

impl Default for EnginePlan {
    fn default() -> Self {
        EnginePlan {
            order: 10,
            guard: FRAC_PI_4,
            min_panels: 16,
            block: 2048,
            dispersion: DispersionModel::Full,
            tolerance: 1e-6,
        }
    }
}

impl EnginePlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.guard > 0.0 && self.guard <= FRAC_PI_4) {
            return Err(Error::Invariant { name: "oscillation_guard <= pi/4", detail: format!("{}", self.guard) });
        }
        if self.order == 0 || self.block == 0 {
            return Err(Error::Invariant { name: "order and block > 0", detail: format!("{self:?}") });
        }
        Ok(())
    }

    pub fn with_dispersion(self, dispersion: DispersionModel) -> Self {
        EnginePlan { dispersion, ..self }
    }
}

/// Batched evaluation of F at many (Σ, D) pairs over fixed quadrature
/// nodes. The density enters as `V[c, r] = w_c w_r ρ`, the D-dependence
/// as a dense product `V · Z(D)`, and Σ as a final sum over `p_cm`.
pub struct CorrelationEngine<'a> {
    grid: &'a SpectrumGrid,
    scales: DerivedScales,
    plan: EnginePlan,
    pc: Vec<f64>,
    wc: Vec<f64>,
    pr: Vec<f64>,
    wr: Vec<f64>,
    sigma_max: f64,
    d_max: f64,
}

impl<'a> CorrelationEngine<'a> {
    /// Nodes resolve every phase for |Σ| ≤ `sigma_max`, |D| ≤ `d_max`.
    pub fn new(grid: &'a SpectrumGrid, scales: &DerivedScales, plan: EnginePlan, sigma_max: f64, d_max: f64) -> Result<Self> {
        plan.validate()?;
        if !(sigma_max.is_finite() && d_max.is_finite()) {
            return Err(Error::Precondition("path offsets must be finite".into()));
        }
        let (sigma_max, d_max) = (sigma_max.abs(), d_max.abs());
        let ((c0, c1), (r0, r1)) = grid.bounds();
        let full = plan.dispersion == DispersionModel::Full;
        let tau_rate = if full { scales.tau / (scales.mass * HBAR) } else { 0.0 };
        let p0 = scales.p0;

        let cm_rate = |x0: f64, x1: f64| sigma_max / (2.0 * HBAR) + 0.5 * tau_rate * x0.abs().max(x1.abs());
        let pc_part = Partition::phase_guarded(c0, c1, plan.guard, plan.min_panels, cm_rate);

        // density oscillation: sinc² of (p_rel² − p₀²)/Δp², or grid cells
        let (density_rate, rel_min_panels) = match &grid.source {
            Some(src) => (4.0 / src.scales.delta_p.powi(2), plan.min_panels),
            None => (0.0, plan.min_panels.max(grid.p_rel.len() - 1)),
        };
        let rel_rate = |x0: f64, x1: f64| {
            let q = (x0 - p0).abs().max((x1 - p0).abs());
            let p = x0.abs().max(x1.abs());
            d_max / HBAR + 2.0 * tau_rate * q + density_rate * p
        };
        let pr_part = Partition::phase_guarded(r0, r1, plan.guard, rel_min_panels, rel_rate);

        let rule = Rule::gauss_legendre(plan.order);
        let (pc, wc) = pc_part.nodes(&rule);
        let (pr, wr) = pr_part.nodes(&rule);
        Ok(CorrelationEngine { grid, scales: *scales, plan, pc, wc, pr, wr, sigma_max, d_max })
    }

    /// Same bounds with every panel's phase budget halved.
    pub fn refined(&self) -> Result<Self> {
        let plan = EnginePlan { guard: 0.5 * self.plan.guard, min_panels: 2 * self.plan.min_panels, ..self.plan };
        Self::new(self.grid, &self.scales, plan, self.sigma_max, self.d_max)
    }

    /// (p_cm nodes, p_rel nodes).
    pub fn node_counts(&self) -> (usize, usize) {
        (self.pc.len(), self.pr.len())
    }

    fn full(&self) -> bool {
        self.plan.dispersion == DispersionModel::Full
    }

    /// F at each (Σ, D).
    pub fn evaluate(&self, pairs: &[(f64, f64)]) -> Result<Vec<Complex64>> {
        let slack = 1.0 + 1e-9;
        for &(s, d) in pairs {
            if !(s.abs() <= self.sigma_max * slack + 1e-18 && d.abs() <= self.d_max * slack + 1e-18) {
                return Err(Error::Precondition(format!(
                    "offsets (Σ = {s:.3e} m, D = {d:.3e} m) exceed the engine bounds ({:.3e}, {:.3e})",
                    self.sigma_max, self.d_max
                )));
            }
        }
        // distinct D values, keyed at femtometre resolution
        let mut index: HashMap<i64, usize> = HashMap::new();
        let mut ds: Vec<f64> = Vec::new();
        let columns: Vec<usize> = pairs
            .iter()
            .map(|&(_, d)| {
                let key = (d * 1e15).round() as i64;
                *index.entry(key).or_insert_with(|| {
                    ds.push(d);
                    ds.len() - 1
                })
            })
            .collect();

        let (t_re, t_im, norm) = self.transform(&ds);
        if !(norm > 0.0) {
            return Err(Error::Precondition("spectrum has no weight inside the window".into()));
        }

        let tau_m = if self.full() { self.scales.tau / (self.scales.mass * HBAR) } else { 0.0 };
        let offset = self.constant_phase();
        let out = pairs
            .par_iter()
            .zip(columns.par_iter())
            .map(|(&(s, _), &j)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, &p) in self.pc.iter().enumerate() {
                    let phase = p * s / (2.0 * HBAR) - 0.25 * tau_m * p * p;
                    let t = Complex64::new(t_re[[c, j]], t_im[[c, j]]);
                    acc += Complex64::from_polar(1.0, phase) * t;
                }
                acc * offset / norm
            })
            .collect();
        Ok(out)
    }

    /// e^{iτp₀²/mħ}, reduced before exponentiation.
    fn constant_phase(&self) -> Complex64 {
        let s = &self.scales;
        let c = (s.tau / (s.mass * HBAR) * s.p0 * s.p0).rem_euclid(2.0 * PI);
        Complex64::from_polar(1.0, c)
    }

    /// T[c, j] = Σ_r V[c, r] Z[r, j] and Σ V.
    fn transform(&self, ds: &[f64]) -> (Array2<f64>, Array2<f64>, f64) {
        let nc = self.pc.len();
        let nd = ds.len();
        let mut t_re = Array2::<f64>::zeros((nc, nd));
        let mut t_im = Array2::<f64>::zeros((nc, nd));
        let mut norm = 0.0;
        let tau_m = if self.full() { self.scales.tau / (self.scales.mass * HBAR) } else { 0.0 };
        let p0 = self.scales.p0;
        let d_over_hbar: Vec<f64> = ds.iter().map(|d| d / HBAR).collect();

        let starts: Vec<usize> = (0..self.pr.len()).step_by(self.plan.block).collect();
        for &start in &starts {
            let end = (start + self.plan.block).min(self.pr.len());
            let nb = end - start;
            let mut v =
                Array2::from_shape_vec((nc, nb), self.grid.density_block(&self.pc, &self.pr[start..end])).expect("block shape");
            for (mut row, &w) in v.rows_mut().into_iter().zip(&self.wc) {
                for (x, &wr) in row.iter_mut().zip(&self.wr[start..end]) {
                    *x *= w * wr;
                }
            }
            norm += v.sum();

            let zs: Vec<(f64, f64)> = (start..end)
                .into_par_iter()
                .flat_map_iter(|r| {
                    let p = self.pr[r];
                    let q = p - p0;
                    let base = -tau_m * q * q;
                    d_over_hbar.iter().map(move |k| (base + p * k).sin_cos())
                })
                .collect();
            let z_re = Array2::from_shape_fn((nb, nd), |(r, j)| zs[r * nd + j].1);
            let z_im = Array2::from_shape_fn((nb, nd), |(r, j)| zs[r * nd + j].0);
            general_mat_mul(1.0, &v, &z_re, 1.0, &mut t_re);
            general_mat_mul(1.0, &v, &z_im, 1.0, &mut t_im);
        }
        (t_re, t_im, norm)
    }
}

/// F at one setting, checked against a refined plan.
pub fn correlation_integral(grid: &SpectrumGrid, scales: &DerivedScales, settings: PathSettings) -> Result<Complex64> {
    correlation_integral_with(grid, scales, settings, EnginePlan::default())
}

pub fn correlation_integral_with(
    grid: &SpectrumGrid,
    scales: &DerivedScales,
    settings: PathSettings,
    plan: EnginePlan,
) -> Result<Complex64> {
    settings.validate()?;
    let (s, d) = settings.sum_and_detuning(scales);
    let engine = CorrelationEngine::new(grid, scales, plan, s, d)?;
    let coarse = engine.evaluate(&[(s, d)])?[0];
    let fine = engine.refined()?.evaluate(&[(s, d)])?[0];
    let error = (fine - coarse).norm();
    if error > plan.tolerance {
        return Err(Error::Convergence { estimate: error, tolerance: plan.tolerance });
    }
    Ok(fine)
}

/// ¼[1 + σ₁σ₂ Re(e^{−iφ_τ} F)].
pub fn joint_probability(f: Complex64, phi_tau: f64, sigma1: PortLabel, sigma2: PortLabel) -> f64 {
    0.25 * (1.0 + sigma1.sign() * sigma2.sign() * correlation_value(f, phi_tau))
}

/// E = Re(e^{−iφ_τ} F) = Σ σ₁σ₂ P.
pub fn correlation_value(f: Complex64, phi_tau: f64) -> f64 {
    (Complex64::from_polar(1.0, -phi_tau.rem_euclid(2.0 * PI)) * f).re
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeScan {
    pub delta_ell: Vec<f64>,
    pub correlation: Vec<Complex64>,
    /// Indexed like [`PORT_PAIRS`].
    pub probabilities: [Vec<f64>; 4],
    pub envelope_modulus: Vec<f64>,
    pub phi_tau_used: f64,
    pub lambda_rel: f64,
}

pub fn fringe_scan(
    grid: &SpectrumGrid,
    scales: &DerivedScales,
    range: (f64, f64),
    samples: usize,
    phi_tau: f64,
) -> Result<FringeScan> {
    fringe_scan_with(grid, scales, range, samples, phi_tau, EnginePlan::default())
}

pub fn fringe_scan_with(
    grid: &SpectrumGrid,
    scales: &DerivedScales,
    range: (f64, f64),
    samples: usize,
    phi_tau: f64,
    plan: EnginePlan,
) -> Result<FringeScan> {
    if samples < 2 || !(range.1 > range.0) {
        return Err(Error::Precondition(format!(
            "scan needs ≥ 2 samples over an increasing range, got {samples} over {range:?}"
        )));
    }
    let delta_ell: Vec<f64> = (0..samples).map(|i| range.0 + (range.1 - range.0) * i as f64 / (samples - 1) as f64).collect();
    let bound = range.0.abs().max(range.1.abs());
    let engine = CorrelationEngine::new(grid, scales, plan, bound, bound)?;
    let pairs: Vec<(f64, f64)> = delta_ell.iter().map(|&dl| PathSettings::scan(scales, dl).sum_and_detuning(scales)).collect();
    let correlation = engine.evaluate(&pairs)?;
    Ok(FringeScan::from_correlation(delta_ell, correlation, phi_tau, scales.lambda_rel))
}

fn interpolate_crossing(x0: f64, x1: f64, y0: f64, y1: f64, level: f64) -> f64 {
    x0 + (x1 - x0) * (level - y0) / (y1 - y0)
}

/// Extent of the contiguous region around `peak` where `values ≥ level`.
fn width_above(axis: &[f64], values: &[f64], peak: usize, level: f64) -> Option<(f64, f64)> {
    if values[peak] < level {
        return None;
    }
    let mut hi = peak;
    while hi + 1 < values.len() && values[hi + 1] >= level {
        hi += 1;
    }
    let mut lo = peak;
    while lo > 0 && values[lo - 1] >= level {
        lo -= 1;
    }
    let right = if hi + 1 < values.len() {
        interpolate_crossing(axis[hi], axis[hi + 1], values[hi], values[hi + 1], level)
    } else {
        axis[hi]
    };
    let left = if lo > 0 { interpolate_crossing(axis[lo - 1], axis[lo], values[lo - 1], values[lo], level) } else { axis[lo] };
    Some((left, right))
}

impl FringeScan {
    pub fn from_correlation(delta_ell: Vec<f64>, correlation: Vec<Complex64>, phi_tau: f64, lambda_rel: f64) -> Self {
        let probabilities =
            PORT_PAIRS.map(|(s1, s2)| correlation.iter().map(|&f| joint_probability(f, phi_tau, s1, s2)).collect());
        let envelope_modulus = correlation.iter().map(|f| f.norm()).collect();
        FringeScan { delta_ell, correlation, probabilities, envelope_modulus, phi_tau_used: phi_tau, lambda_rel }
    }

    /// Visibility at each Δℓ, i.e. |F|.
    pub fn visibility(&self) -> &[f64] {
        &self.envelope_modulus
    }

    pub fn report(&self) -> VisibilityReport {
        let v = &self.envelope_modulus;
        let x = &self.delta_ell;
        let peak = (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });
        let max_visibility = v[peak];

        let fwhm = width_above(x, v, peak, 0.5 * max_visibility).map(|(a, b)| b - a);
        let above = width_above(x, v, peak, VISIBILITY_THRESHOLD);

        // upward crossings of P++ − ¼ inside the half-maximum region
        let (lo, hi) = width_above(x, v, peak, 0.5 * max_visibility).unwrap_or((x[0], x[x.len() - 1]));
        let s: Vec<f64> = self.probabilities[0].iter().map(|p| p - 0.25).collect();
        let crossings: Vec<f64> = (0..s.len() - 1)
            .filter(|&k| x[k] >= lo && x[k + 1] <= hi && s[k] < 0.0 && s[k + 1] >= 0.0)
            .map(|k| interpolate_crossing(x[k], x[k + 1], s[k], s[k + 1], 0.0))
            .collect();
        let fringe_period =
            (crossings.len() >= 2).then(|| (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64);

        let width_above_threshold = above.map(|(a, b)| b - a).unwrap_or(0.0);
        let periods_above_threshold = match fringe_period {
            Some(p) if p > 0.0 => (width_above_threshold / p).floor() as usize,
            _ => 0,
        };
        VisibilityReport {
            max_visibility,
            delta_ell_at_max: x[peak],
            threshold: VISIBILITY_THRESHOLD,
            fringe_period,
            expected_period: self.lambda_rel,
            envelope_fwhm: fwhm,
            envelope_width: fwhm.map(|w| w / (2.0 * (2.0 * 2f64.ln()).sqrt())),
            width_above_threshold,
            periods_above_threshold,
            phi_tau: self.phi_tau_used,
        }
    }

    /// Columns `delta_ell_um,p_pp,p_pm,p_mp,p_mm,abs_f`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta_ell_um", "p_pp", "p_pm", "p_mp", "p_mm", "abs_f"])?;
        for k in 0..self.delta_ell.len() {
            let mut rec = vec![format!("{:.6}", self.delta_ell[k] * 1e6)];
            rec.extend(self.probabilities.iter().map(|p| format!("{:.10e}", p[k])));
            rec.push(format!("{:.10e}", self.envelope_modulus[k]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityReport {
    pub max_visibility: f64,
    pub delta_ell_at_max: f64,
    pub threshold: f64,
    /// Mean spacing of upward crossings of P++ = ¼ in the half-maximum region.
    pub fringe_period: Option<f64>,
    /// h/p₀.
    pub expected_period: f64,
    pub envelope_fwhm: Option<f64>,
    /// Gaussian-equivalent RMS width, FWHM/2.3548.
    pub envelope_width: Option<f64>,
    pub width_above_threshold: f64,
    pub periods_above_threshold: usize,
    pub phi_tau: f64,
}

/// Correlation E(x, y) for ℓ₁ = ℓ₀ + x, ℓ₂ = −ℓ₀ + y.
pub trait CorrelationSource {
    fn correlations(&self, points: &[(f64, f64)]) -> Result<Vec<f64>>;
    /// Fringe wavelength used to size the search lattice.
    fn wavelength(&self) -> f64;
    /// Phase θ with E(x, y) ≈ V cos(θ + 2π(x − y)/λ) near x = y = 0.
    fn reference_phase(&self) -> Result<f64>;
}

/// The fringe integral of a spectrum grid.
pub struct SpectrumCorrelations<'a> {
    pub grid: &'a SpectrumGrid,
    pub scales: DerivedScales,
    pub phi_tau: f64,
    pub plan: EnginePlan,
}

impl<'a> SpectrumCorrelations<'a> {
    pub fn new(grid: &'a SpectrumGrid, scales: &DerivedScales, phi_tau: f64) -> Self {
        SpectrumCorrelations { grid, scales: *scales, phi_tau, plan: EnginePlan::default() }
    }

    pub fn complex(&self, points: &[(f64, f64)]) -> Result<Vec<Complex64>> {
        let pairs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x + y, x - y)).collect();
        let s_max = pairs.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
        let d_max = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
        CorrelationEngine::new(self.grid, &self.scales, self.plan, s_max, d_max)?.evaluate(&pairs)
    }
}

impl CorrelationSource for SpectrumCorrelations<'_> {
    fn correlations(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(self.complex(points)?.into_iter().map(|f| correlation_value(f, self.phi_tau)).collect())
    }

    fn wavelength(&self) -> f64 {
        PLANCK / self.scales.p0
    }

    fn reference_phase(&self) -> Result<f64> {
        let f = self.complex(&[(0.0, 0.0)])?[0];
        Ok((Complex64::from_polar(1.0, -self.phi_tau.rem_euclid(2.0 * PI)) * f).arg())
    }
}

/// `E = V exp(−D²/2w²) cos(θ + 2πD/λ)` with D = x − y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidCorrelations {
    pub wavelength: f64,
    pub visibility: f64,
    pub phase: f64,
    pub envelope_width: Option<f64>,
}

impl CorrelationSource for SinusoidCorrelations {
    fn correlations(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(points
            .iter()
            .map(|&(x, y)| {
                let d = x - y;
                let env = self.envelope_width.map(|w| (-0.5 * (d / w).powi(2)).exp()).unwrap_or(1.0);
                self.visibility * env * (self.phase + 2.0 * PI * d / self.wavelength).cos()
            })
            .collect())
    }

    fn wavelength(&self) -> f64 {
        self.wavelength
    }

    fn reference_phase(&self) -> Result<f64> {
        Ok(self.phase)
    }
}

/// No interference at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoCorrelation {
    pub wavelength: f64,
}

impl CorrelationSource for NoCorrelation {
    fn correlations(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(vec![0.0; points.len()])
    }

    fn wavelength(&self) -> f64 {
        self.wavelength
    }

    fn reference_phase(&self) -> Result<f64> {
        Ok(0.0)
    }
}

/// Side-1 offsets a, a′ and side-2 offsets b, b′, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// Offsets from phases, Δℓ = λ·phase/2π.
    pub fn from_phases(wavelength: f64, phases: [f64; 4]) -> Self {
        let l = |p: f64| wavelength * p / (2.0 * PI);
        ChshSettings { a: l(phases[0]), a_prime: l(phases[1]), b: l(phases[2]), b_prime: l(phases[3]) }
    }

    /// Phases (0, π/2; π/4, −π/4) after cancelling the reference phase θ.
    pub fn textbook(wavelength: f64, reference_phase: f64) -> Self {
        let t = -reference_phase;
        Self::from_phases(wavelength, [t, t + FRAC_PI_2, FRAC_PI_4, -FRAC_PI_4])
    }

    /// Phases in units of 2π/λ.
    pub fn phases(&self, wavelength: f64) -> [f64; 4] {
        let k = 2.0 * PI / wavelength;
        [k * self.a, k * self.a_prime, k * self.b, k * self.b_prime]
    }

    fn points(&self) -> [(f64, f64); 4] {
        [(self.a, self.b), (self.a, self.b_prime), (self.a_prime, self.b), (self.a_prime, self.b_prime)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    /// E(a,b), E(a,b′), E(a′,b), E(a′,b′).
    pub correlations: [f64; 4],
    pub s: f64,
}

fn chsh_combination(e: [f64; 4]) -> f64 {
    (e[0] + e[1] + e[2] - e[3]).abs()
}

fn checked(result: ChshResult) -> Result<ChshResult> {
    if result.s > TSIRELSON + 1e-9 {
        return Err(Error::Bound(format!("CHSH value {} exceeds 2√2", result.s)));
    }
    Ok(result)
}

pub fn chsh_value_with<S: CorrelationSource + ?Sized>(source: &S, settings: ChshSettings) -> Result<ChshResult> {
    let e = source.correlations(&settings.points())?;
    let correlations = [e[0], e[1], e[2], e[3]];
    checked(ChshResult { settings, correlations, s: chsh_combination(correlations) })
}

pub fn chsh_value(grid: &SpectrumGrid, scales: &DerivedScales, settings: ChshSettings, phi_tau: f64) -> Result<ChshResult> {
    chsh_value_with(&SpectrumCorrelations::new(grid, scales, phi_tau), settings)
}

/// Textbook settings at optimum overlap.
pub fn chsh_textbook<S: CorrelationSource + ?Sized>(source: &S) -> Result<ChshResult> {
    let theta = source.reference_phase()?;
    chsh_value_with(source, ChshSettings::textbook(source.wavelength(), theta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshScan {
    pub best: ChshResult,
    /// Lattice steps of the coarse-to-fine stages.
    pub steps: Vec<f64>,
    pub evaluations: usize,
}

/// Best exact CHSH choice on lattices `xs` × `ys`, given E on the product.
/// Returns (S, ia, ia′, ib, ib′).
fn best_on_lattice(e: &[Vec<f64>], nx: usize, ny: usize) -> (f64, usize, usize, usize, usize) {
    let mut best = (f64::MIN, 0, 0, 0, 0);
    for i in 0..nx {
        for i2 in 0..nx {
            let (ri, ri2) = (&e[i], &e[i2]);
            let (mut sp, mut sm, mut dp, mut dm) = (f64::MIN, f64::MAX, f64::MIN, f64::MAX);
            let (mut jsp, mut jsm, mut jdp, mut jdm) = (0, 0, 0, 0);
            for j in 0..ny {
                let s = ri[j] + ri2[j];
                let d = ri[j] - ri2[j];
                if s > sp {
                    sp = s;
                    jsp = j;
                }
                if s < sm {
                    sm = s;
                    jsm = j;
                }
                if d > dp {
                    dp = d;
                    jdp = j;
                }
                if d < dm {
                    dm = d;
                    jdm = j;
                }
            }
            if sp + dp > best.0 {
                best = (sp + dp, i, i2, jsp, jdp);
            }
            if -(sm + dm) > best.0 {
                best = (-(sm + dm), i, i2, jsm, jdm);
            }
        }
    }
    best
}

/// Coarse-to-fine lattice search over (a, a′, b, b′) within ±`half_width`.
/// Steps are λ/8, then λ/64 and λ/256 around the incumbent.
pub fn chsh_scan_with<S: CorrelationSource + ?Sized>(source: &S, half_width: f64) -> Result<ChshScan> {
    let lambda = source.wavelength();
    if !(lambda > 0.0 && half_width >= 0.0) {
        return Err(Error::Precondition(format!("invalid CHSH search (λ = {lambda}, half width = {half_width})")));
    }
    let coarse = lambda / 8.0;
    let n = (half_width / coarse).ceil() as i64;
    let lattice: Vec<f64> = (-n..=n).map(|i| i as f64 * coarse).collect();
    let mut evaluations = 0;

    let mut run = |xs: &[f64], ys: &[f64]| -> Result<(f64, [f64; 4])> {
        let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
        evaluations += points.len();
        let flat = source.correlations(&points)?;
        let e: Vec<Vec<f64>> = flat.chunks(ys.len()).map(|c| c.to_vec()).collect();
        let (s, i, i2, j, j2) = best_on_lattice(&e, xs.len(), ys.len());
        Ok((s, [xs[i], xs[i2], ys[j], ys[j2]]))
    };

    let (mut s_best, mut set) = run(&lattice, &lattice)?;
    let mut steps = vec![coarse];
    for (step, reach) in [(lambda / 64.0, 8i64), (lambda / 256.0, 4i64)] {
        let around = |c: f64| (-reach..=reach).map(move |k| c + k as f64 * step);
        let xs: Vec<f64> = around(set[0]).chain(around(set[1])).collect();
        let ys: Vec<f64> = around(set[2]).chain(around(set[3])).collect();
        let (s, cand) = run(&xs, &ys)?;
        if s > s_best {
            s_best = s;
            set = cand;
        }
        steps.push(step);
    }
    let settings = ChshSettings { a: set[0], a_prime: set[1], b: set[2], b_prime: set[3] };
    let best = chsh_value_with(source, settings)?;
    Ok(ChshScan { best, steps, evaluations })
}

pub fn chsh_scan(grid: &SpectrumGrid, scales: &DerivedScales, phi_tau: f64, half_width: f64) -> Result<ChshScan> {
    chsh_scan_with(&SpectrumCorrelations::new(grid, scales, phi_tau), half_width)
}
