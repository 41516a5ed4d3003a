//! Two-particle momentum spectrum of a single dissociation pulse, its
//! normalization, the dissociation probability estimate, and sampled
//! directional grids with Gaussian fits.
//!
//! Momenta are centre-of-mass `p_cm` and relative `p_rel`. The longitudinal
//! trap ground state is the harmonic Gaussian with spread
//! `σ_p,T = √(ħ ω_T m)`. The single-pulse amplitude is
//!
//! ```text
//! ⟨p_cm, p_rel|Ψ₀⟩ = √p₀ p̄² sinc(D/Δp²) / (√π Δp (D + p̄²)) · ψ_T(p_cm),
//! D = p_cm²/4 + p_rel² − p₀²
//! ```
//!
//! which is normalized over the full plane (both peaks at `p_rel = ±p₀`).
//! Grids hold the directional restriction `√2 θ(p_rel) ⟨·|Ψ₀⟩`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{Dyn, Matrix, OMatrix, OVector, Owned, Vector5, U5};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::error::{Error, Result};
pub use crate::feshbach::DerivedScales;
use crate::feshbach::{sinc, ResonanceParams};
use crate::quadrature::{integrate_2d_on, IntegrationPlan, Partition};

/// Harmonic longitudinal ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGroundState {
    pub sigma_p_t: f64,
    pub mass: f64,
    pub omega_t: f64,
}

impl TrapGroundState {
    pub fn new(mass: f64, omega_t: f64) -> Result<Self> {
        if !(mass > 0.0 && omega_t > 0.0) {
            return Err(Error::Invariant {
                name: "trap mass and frequency > 0", detail: format!("m = {mass}, ω_T = {omega_t}")
            });
        }
        Ok(TrapGroundState { sigma_p_t: (HBAR * omega_t * mass).sqrt(), mass, omega_t })
    }

    /// ⟨p|ψ_T⟩, real and positive.
    pub fn amplitude(&self, p: f64) -> f64 {
        let s = self.sigma_p_t;
        (PI * s * s).powf(-0.25) * (-0.5 * (p / s).powi(2)).exp()
    }

    pub fn density(&self, p: f64) -> f64 {
        self.amplitude(p).powi(2)
    }
}

fn energy_offset(scales: &DerivedScales, p_cm: f64, p_rel: f64) -> f64 {
    0.25 * p_cm * p_cm + (p_rel - scales.p0) * (p_rel + scales.p0)
}

pub fn single_pulse_amplitude(scales: &DerivedScales, trap: &TrapGroundState, p_cm: f64, p_rel: f64) -> Complex64 {
    Complex64::new(single_pulse_real(scales, trap, p_cm, p_rel), 0.0)
}

fn single_pulse_real(scales: &DerivedScales, trap: &TrapGroundState, p_cm: f64, p_rel: f64) -> f64 {
    let d = energy_offset(scales, p_cm, p_rel);
    let dp2 = scales.delta_p * scales.delta_p;
    let pb2 = scales.p_bar * scales.p_bar;
    scales.p0.sqrt() * pb2 * sinc(d / dp2) / (PI.sqrt() * scales.delta_p * (d + pb2)) * trap.amplitude(p_cm)
}

/// |⟨p_cm, p_rel|Ψ₀⟩|².
pub fn single_pulse_density(scales: &DerivedScales, trap: &TrapGroundState, p_cm: f64, p_rel: f64) -> f64 {
    single_pulse_real(scales, trap, p_cm, p_rel).powi(2)
}

/// Directional density `2θ(p_rel)|⟨·|Ψ₀⟩|²`.
pub fn directional_density(scales: &DerivedScales, trap: &TrapGroundState, p_cm: f64, p_rel: f64) -> f64 {
    if p_rel < 0.0 {
        0.0
    } else {
        2.0 * single_pulse_density(scales, trap, p_cm, p_rel)
    }
}

/// Partitions for the `p_rel > 0` half plane: GL panels follow the sinc
/// oscillation, one period per panel.
fn half_plane_partitions(scales: &DerivedScales, pc: (f64, f64), pr: (f64, f64)) -> (Partition, Partition) {
    let dp2 = scales.delta_p * scales.delta_p;
    let xs = Partition::uniform(pc.0, pc.1, 16);
    let ys = Partition::phase_guarded(pr.0, pr.1, PI, 16, |_, x1| 2.0 * x1.abs() / dp2);
    (xs, ys)
}

fn quad_plan() -> IntegrationPlan {
    IntegrationPlan { tolerance: 1e-9, max_refinements: 3, ..IntegrationPlan::default() }
}

/// ∫∫ of the directional density over a rectangle (`p_rel ≥ 0`).
pub fn directional_mass(scales: &DerivedScales, trap: &TrapGroundState, pc: (f64, f64), pr: (f64, f64)) -> Result<f64> {
    let pr = (pr.0.max(0.0), pr.1);
    let (xs, ys) = half_plane_partitions(scales, pc, pr);
    let f = |x: f64, y: f64| Complex64::new(directional_density(scales, trap, x, y), 0.0);
    Ok(integrate_2d_on(&f, &xs, &ys, &quad_plan())?.value.re)
}

/// Integration domain treated as the full half plane.
fn full_domain(scales: &DerivedScales, trap: &TrapGroundState) -> ((f64, f64), (f64, f64)) {
    let w = 10.0 * trap.sigma_p_t;
    ((-w, w), (0.0, 6.0 * scales.p0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormComparison {
    /// ‖C̃‖² by 2-D quadrature, s²·kg·m/s.
    pub numeric: f64,
    /// 2πT²Δp²/p₀.
    pub closed_form: f64,
    pub relative_difference: f64,
}

pub fn norm_ctilde_closed(scales: &DerivedScales) -> f64 {
    2.0 * PI * scales.duration.powi(2) * scales.delta_p.powi(2) / scales.p0
}

/// ‖C̃‖² of the double pulse: twice a single-pulse contribution, and by
/// the ±p_rel symmetry four times the `p_rel > 0` integral.
pub fn norm_ctilde(scales: &DerivedScales, trap: &TrapGroundState) -> Result<NormComparison> {
    let (pc, pr) = full_domain(scales, trap);
    let (xs, ys) = half_plane_partitions(scales, pc, pr);
    let pb2 = scales.p_bar.powi(2);
    let dp2 = scales.delta_p.powi(2);
    let f = |x: f64, y: f64| {
        let d = energy_offset(scales, x, y);
        let c = scales.duration * pb2 * sinc(d / dp2) / (d + pb2);
        Complex64::new(c * c * trap.density(x), 0.0)
    };
    let numeric = 4.0 * integrate_2d_on(&f, &xs, &ys, &quad_plan())?.value.re;
    let closed_form = norm_ctilde_closed(scales);
    Ok(NormComparison { numeric, closed_form, relative_difference: (numeric - closed_form) / closed_form })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissociationEstimate {
    pub probability: f64,
    pub norm_ctilde: f64,
    /// Set when the weak-coupling assumption is violated.
    pub warning: Option<String>,
}

/// |C_bg|² = ω_G a_bg μ_res ΔB_res ‖C̃‖² / (πħ²), closed-form norm.
pub fn dissociation_probability(scales: &DerivedScales, res: &ResonanceParams, omega_g: f64) -> DissociationEstimate {
    let norm = norm_ctilde_closed(scales);
    let probability = omega_g * res.a_bg * res.mu_res * res.width * norm / (PI * HBAR * HBAR);
    let warning =
        (probability > 0.5).then(|| format!("dissociation probability {probability:.3} > 0.5: weak coupling does not hold"));
    DissociationEstimate { probability, norm_ctilde: norm, warning }
}

/// Grid extent: `±cm_sigmas·σ_p,T` around 0, and `±rel_delta_ps·Δp` around
/// p₀ clipped to `[0, 2p₀]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub cm_sigmas: f64,
    pub rel_delta_ps: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { cm_sigmas: 6.0, rel_delta_ps: 9.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridWindow {
    pub center: (f64, f64),
    pub cm_half_width: f64,
    pub rel_half_width: f64,
    pub spec: Option<WindowSpec>,
    /// 1 − (window mass)/(half-plane mass), when known.
    pub deficit: Option<f64>,
}

/// Normalization deficit above which `build_grid` fails.
pub const MAX_WINDOW_DEFICIT: f64 = 1e-3;

/// Analytic origin of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSource {
    pub scales: DerivedScales,
    pub trap: TrapGroundState,
}

#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub p_cm: Vec<f64>,
    pub p_rel: Vec<f64>,
    /// `[i_cm, i_rel]`, normalized so Σ|a|² Δp_cm Δp_rel = 1.
    pub amplitude: Array2<Complex64>,
    pub window: GridWindow,
    pub source: Option<SpectrumSource>,
    /// Factor turning the analytic directional density into the grid's
    /// normalization.
    density_scale: f64,
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn spacing(axis: &[f64]) -> f64 {
    (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
}

pub fn build_grid(
    scales: &DerivedScales,
    trap: &TrapGroundState,
    window: WindowSpec,
    points: (usize, usize),
) -> Result<SpectrumGrid> {
    if points.0 < 3 || points.1 < 3 {
        return Err(Error::Precondition(format!("grid needs at least 3×3 points, got {points:?}")));
    }
    if !(window.cm_sigmas > 0.0 && window.rel_delta_ps > 0.0) {
        return Err(Error::Precondition(format!("window half-widths must be positive: {window:?}")));
    }
    let hc = window.cm_sigmas * trap.sigma_p_t;
    let hr = (window.rel_delta_ps * scales.delta_p).min(scales.p0);
    let (pc_lim, pr_lim) = ((-hc, hc), (scales.p0 - hr, scales.p0 + hr));

    let (fc, fr) = full_domain(scales, trap);
    let full = directional_mass(scales, trap, fc, fr)?;
    let inside = directional_mass(scales, trap, pc_lim, pr_lim)?;
    let deficit = 1.0 - inside / full;
    if deficit > MAX_WINDOW_DEFICIT {
        return Err(Error::Window { deficit, limit: MAX_WINDOW_DEFICIT });
    }

    let p_cm = axis(pc_lim.0, pc_lim.1, points.0);
    let p_rel = axis(pr_lim.0, pr_lim.1, points.1);
    let rows: Vec<Vec<Complex64>> = p_cm
        .par_iter()
        .map(|&c| {
            p_rel.iter().map(|&r| Complex64::new(std::f64::consts::SQRT_2 * single_pulse_real(scales, trap, c, r), 0.0)).collect()
        })
        .collect();
    let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
    let amplitude = Array2::from_shape_vec((p_cm.len(), p_rel.len()), flat).expect("grid shape");
    let win = GridWindow {
        center: (0.0, scales.p0),
        cm_half_width: hc,
        rel_half_width: hr,
        spec: Some(window),
        deficit: Some(deficit),
    };
    let mut grid = SpectrumGrid::from_amplitudes(p_cm, p_rel, amplitude, win)?;
    grid.source = Some(SpectrumSource { scales: *scales, trap: *trap });
    Ok(grid)
}

impl SpectrumGrid {
    /// Normalizes the given amplitudes over uniform axes.
    pub fn from_amplitudes(p_cm: Vec<f64>, p_rel: Vec<f64>, amplitude: Array2<Complex64>, window: GridWindow) -> Result<Self> {
        if amplitude.dim() != (p_cm.len(), p_rel.len()) || p_cm.len() < 2 || p_rel.len() < 2 {
            return Err(Error::Precondition(format!(
                "amplitude shape {:?} does not match axes ({}, {})",
                amplitude.dim(),
                p_cm.len(),
                p_rel.len()
            )));
        }
        let mut grid = SpectrumGrid { p_cm, p_rel, amplitude, window, source: None, density_scale: 1.0 };
        let mass = grid.raw_sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Precondition("grid has no weight to normalize".into()));
        }
        let s = mass.sqrt();
        grid.amplitude.mapv_inplace(|a| a / s);
        grid.density_scale = 1.0 / mass;
        Ok(grid)
    }

    /// Grid from a sampled density (amplitudes taken as √density).
    pub fn from_samples(p_cm: Vec<f64>, p_rel: Vec<f64>, density: &Array2<f64>) -> Result<Self> {
        let amplitude = density.mapv(|d| Complex64::new(d.max(0.0).sqrt(), 0.0));
        let (c0, c1) = (p_cm[0], *p_cm.last().unwrap_or(&0.0));
        let (r0, r1) = (p_rel[0], *p_rel.last().unwrap_or(&0.0));
        let window = GridWindow {
            center: (0.5 * (c0 + c1), 0.5 * (r0 + r1)),
            cm_half_width: 0.5 * (c1 - c0),
            rel_half_width: 0.5 * (r1 - r0),
            spec: None,
            deficit: None,
        };
        Self::from_amplitudes(p_cm, p_rel, amplitude, window)
    }

    fn raw_sum(&self) -> f64 {
        let cell = spacing(&self.p_cm) * spacing(&self.p_rel);
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }

    /// Σ|a|² Δp_cm Δp_rel.
    pub fn total(&self) -> f64 {
        self.raw_sum()
    }

    pub fn renormalized(&self) -> Result<SpectrumGrid> {
        let mut g = Self::from_amplitudes(self.p_cm.clone(), self.p_rel.clone(), self.amplitude.clone(), self.window)?;
        g.source = self.source;
        g.density_scale = self.density_scale;
        Ok(g)
    }

    pub fn density(&self) -> Array2<f64> {
        self.amplitude.mapv(|a| a.norm_sqr())
    }

    pub fn cell(&self) -> (f64, f64) {
        (spacing(&self.p_cm), spacing(&self.p_rel))
    }

    /// Window rectangle `((cm_lo, cm_hi), (rel_lo, rel_hi))`.
    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        ((self.p_cm[0], *self.p_cm.last().unwrap()), (self.p_rel[0], *self.p_rel.last().unwrap()))
    }

    /// Density at an arbitrary point inside the window: analytic when the
    /// grid was built from derived scales, bilinear otherwise. Zero outside.
    pub fn density_at(&self, p_cm: f64, p_rel: f64) -> f64 {
        let ((c0, c1), (r0, r1)) = self.bounds();
        if p_cm < c0 || p_cm > c1 || p_rel < r0 || p_rel > r1 {
            return 0.0;
        }
        if let Some(src) = &self.source {
            return self.density_scale * directional_density(&src.scales, &src.trap, p_cm, p_rel);
        }
        let (dc, dr) = self.cell();
        let fc = ((p_cm - c0) / dc).clamp(0.0, (self.p_cm.len() - 1) as f64);
        let fr = ((p_rel - r0) / dr).clamp(0.0, (self.p_rel.len() - 1) as f64);
        let (i, j) = ((fc.floor() as usize).min(self.p_cm.len() - 2), (fr.floor() as usize).min(self.p_rel.len() - 2));
        let (u, v) = (fc - i as f64, fr - j as f64);
        let d = |a: usize, b: usize| self.amplitude[[a, b]].norm_sqr();
        (1.0 - u) * (1.0 - v) * d(i, j) + u * (1.0 - v) * d(i + 1, j) + (1.0 - u) * v * d(i, j + 1) + u * v * d(i + 1, j + 1)
    }

    /// `density_at` on the tensor product `p_cm × p_rel`, row-major.
    pub fn density_block(&self, p_cm: &[f64], p_rel: &[f64]) -> Vec<f64> {
        let Some(src) = &self.source else {
            return p_cm.iter().flat_map(|&c| p_rel.iter().map(move |&r| self.density_at(c, r))).collect();
        };
        let ((c0, c1), (r0, r1)) = self.bounds();
        let s = &src.scales;
        let dp2 = s.delta_p * s.delta_p;
        let pb2 = s.p_bar * s.p_bar;
        let pref = self.density_scale * 2.0 * s.p0 * pb2 * pb2 / (PI * dp2);
        let offsets: Vec<f64> =
            p_rel.iter().map(|&r| if r < r0 || r > r1 || r < 0.0 { f64::NAN } else { (r - s.p0) * (r + s.p0) }).collect();
        let mut out = Vec::with_capacity(p_cm.len() * p_rel.len());
        for &c in p_cm {
            if c < c0 || c > c1 {
                out.extend(std::iter::repeat_n(0.0, p_rel.len()));
                continue;
            }
            let g = pref * src.trap.density(c);
            let a = 0.25 * c * c;
            out.extend(offsets.iter().map(|&b| {
                if b.is_nan() {
                    return 0.0;
                }
                let d = a + b;
                let sn = sinc(d / dp2);
                let den = d + pb2;
                g * sn * sn / (den * den)
            }));
        }
        out
    }

    /// Location and value of the density maximum.
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (0, 0, f64::MIN);
        for ((i, j), a) in self.amplitude.indexed_iter() {
            let d = a.norm_sqr();
            if d > best.2 {
                best = (i, j, d);
            }
        }
        (self.p_cm[best.0], self.p_rel[best.1], best.2)
    }

    fn peak_index(&self) -> (usize, usize) {
        let mut best = (0, 0, f64::MIN);
        for ((i, j), a) in self.amplitude.indexed_iter() {
            if a.norm_sqr() > best.2 {
                best = (i, j, a.norm_sqr());
            }
        }
        (best.0, best.1)
    }

    /// CSV with columns `p_cm_over_p0,p_rel_over_p0,density` where density
    /// is |a|² in units of 1/p₀². Without analytic scales, axes are written
    /// in SI and `unit` is 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let unit = self.source.map(|s| s.scales.p0).unwrap_or(1.0);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p_cm_over_p0", "p_rel_over_p0", "density"])?;
        for (i, &c) in self.p_cm.iter().enumerate() {
            for (j, &r) in self.p_rel.iter().enumerate() {
                let d = self.amplitude[[i, j]].norm_sqr() * unit * unit;
                w.write_record([format!("{:.8e}", c / unit), format!("{:.8e}", r / unit), format!("{d:.8e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn summary(&self) -> GridSummary {
        let (pc, pr, d) = self.peak();
        let (dc, dr) = self.cell();
        let unit = self.source.map(|s| s.scales.p0).unwrap_or(1.0);
        GridSummary {
            points: (self.p_cm.len(), self.p_rel.len()),
            cm_range_over_p0: (self.p_cm[0] / unit, self.p_cm[self.p_cm.len() - 1] / unit),
            rel_range_over_p0: (self.p_rel[0] / unit, self.p_rel[self.p_rel.len() - 1] / unit),
            cell_over_p0: (dc / unit, dr / unit),
            normalization: self.total(),
            window_deficit: self.window.deficit,
            peak_over_p0: (pc / unit, pr / unit),
            peak_density: d * unit * unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub points: (usize, usize),
    pub cm_range_over_p0: (f64, f64),
    pub rel_range_over_p0: (f64, f64),
    pub cell_over_p0: (f64, f64),
    pub normalization: f64,
    pub window_deficit: Option<f64>,
    pub peak_over_p0: (f64, f64),
    pub peak_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianParams {
    pub amplitude: f64,
    pub center: (f64, f64),
    pub sigma_cm: f64,
    pub sigma_rel: f64,
}

impl GaussianParams {
    pub fn eval(&self, p_cm: f64, p_rel: f64) -> f64 {
        let u = (p_cm - self.center.0) / self.sigma_cm;
        let v = (p_rel - self.center.1) / self.sigma_rel;
        self.amplitude * (-0.5 * (u * u + v * v)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub least_squares: GaussianParams,
    /// Narrowest peak-centred Gaussian lying on or above the main lobe along
    /// both axes through the peak.
    pub upper_envelope: GaussianParams,
    pub iterations: usize,
}

/// Least-squares problem in scaled coordinates.
struct GaussProblem {
    xs: Vec<f64>,
    ys: Vec<f64>,
    data: Vec<f64>,
    p: Vector5<f64>,
}

impl GaussProblem {
    fn model(&self, k: usize) -> (f64, [f64; 5]) {
        let [a, mx, my, sx, sy] = [self.p[0], self.p[1], self.p[2], self.p[3], self.p[4]];
        let u = (self.xs[k] - mx) / sx;
        let v = (self.ys[k] - my) / sy;
        let e = (-0.5 * (u * u + v * v)).exp();
        let m = a * e;
        (m, [e, m * u / sx, m * v / sy, m * u * u / sx, m * v * v / sy])
    }
}

impl LeastSquaresProblem<f64, Dyn, U5> for GaussProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U5>;
    type ParameterStorage = Owned<f64, U5>;

    fn set_params(&mut self, x: &Vector5<f64>) {
        self.p = *x;
    }

    fn params(&self) -> Vector5<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        Some(OVector::<f64, Dyn>::from_iterator(self.data.len(), (0..self.data.len()).map(|k| self.model(k).0 - self.data[k])))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U5>> {
        let n = self.data.len();
        let mut j: Matrix<f64, Dyn, U5, _> = OMatrix::<f64, Dyn, U5>::zeros(n);
        for k in 0..n {
            let (_, g) = self.model(k);
            for (c, v) in g.iter().enumerate() {
                j[(k, c)] = *v;
            }
        }
        Some(j)
    }
}

/// Half width at half maximum along one slice through the peak.
fn half_width(values: &[f64], axis: &[f64], peak: usize) -> f64 {
    let half = 0.5 * values[peak];
    let right = (peak..values.len()).find(|&k| values[k] < half).unwrap_or(values.len() - 1);
    let left = (0..=peak).rev().find(|&k| values[k] < half).unwrap_or(0);
    let w = 0.5 * (axis[right] - axis[left]);
    w.max(spacing(axis)) / (2.0 * 2f64.ln()).sqrt()
}

/// Envelope sigma over the main lobe of one slice.
fn envelope_sigma(values: &[f64], axis: &[f64], peak: usize) -> f64 {
    let top = values[peak];
    let mut sigma: f64 = 0.0;
    let mut walk = |range: &mut dyn Iterator<Item = usize>| {
        let mut prev = top;
        for k in range {
            let v = values[k];
            if v > prev || v <= 0.0 {
                break;
            }
            prev = v;
            if v < top {
                let d = (axis[k] - axis[peak]).abs();
                sigma = sigma.max(d / (2.0 * (top / v).ln()).sqrt());
            }
        }
    };
    walk(&mut (peak + 1..values.len()));
    walk(&mut (0..peak).rev());
    if sigma == 0.0 {
        spacing(axis)
    } else {
        sigma
    }
}

pub fn gaussian_fit(grid: &SpectrumGrid) -> Result<GaussianFit> {
    let density = grid.density();
    let (ic, ir) = grid.peak_index();
    let top = density[[ic, ir]];
    if !(top > 0.0) {
        return Err(Error::Fit("grid has no positive density".into()));
    }
    let row: Vec<f64> = density.row(ic).to_vec();
    let col: Vec<f64> = density.column(ir).to_vec();

    // scaled coordinates keep the normal equations well conditioned
    let (sc, sr) = (half_width(&col, &grid.p_cm, ic), half_width(&row, &grid.p_rel, ir));
    let (c_mid, r_mid) = (grid.p_cm[ic], grid.p_rel[ir]);
    let mut xs = Vec::with_capacity(density.len());
    let mut ys = Vec::with_capacity(density.len());
    let mut data = Vec::with_capacity(density.len());
    for ((i, j), &d) in density.indexed_iter() {
        xs.push((grid.p_cm[i] - c_mid) / sc);
        ys.push((grid.p_rel[j] - r_mid) / sr);
        data.push(d / top);
    }
    let problem = GaussProblem { xs, ys, data, p: Vector5::new(1.0, 0.0, 0.0, 1.0, 1.0) };
    let (solved, report) = LevenbergMarquardt::new().with_tol(1e-14).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!("least-squares Gaussian fit did not converge: {:?}", report.termination)));
    }
    let p = solved.p;
    let least_squares = GaussianParams {
        amplitude: p[0] * top,
        center: (c_mid + p[1] * sc, r_mid + p[2] * sr),
        sigma_cm: p[3].abs() * sc,
        sigma_rel: p[4].abs() * sr,
    };
    let upper_envelope = GaussianParams {
        amplitude: top,
        center: (c_mid, r_mid),
        sigma_cm: envelope_sigma(&col, &grid.p_cm, ic),
        sigma_rel: envelope_sigma(&row, &grid.p_rel, ir),
    };
    Ok(GaussianFit { least_squares, upper_envelope, iterations: report.number_of_evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{BOHR_RADIUS, K_BOLTZMANN, MASS_LI6_ATOM, MU_BOHR};
    use crate::feshbach::{derived_scales, EnergyOffsets, PulseSequence};
    use approx::assert_relative_eq;

    fn res() -> ResonanceParams {
        ResonanceParams { width: 1e-7, mu_res: 0.01 * MU_BOHR, b_res: 543.3e-4, a_bg: 100.0 * BOHR_RADIUS }
    }

    fn scales() -> DerivedScales {
        let seq = PulseSequence::double_square(543.1e-4, 4e-5, 0.06, 1.0).unwrap();
        let off = EnergyOffsets { trap_depth: K_BOLTZMANN * 50e-9, guide_frequency: 2.0 * PI * 300.0 };
        derived_scales(&seq, &res(), &off, MASS_LI6_ATOM).unwrap()
    }

    fn trap() -> TrapGroundState {
        TrapGroundState::new(MASS_LI6_ATOM, 2.0 * PI * 0.25).unwrap()
    }

    #[test]
    fn ground_state_is_normalized() {
        let t = trap();
        let s = t.sigma_p_t;
        let n = 4001;
        let h = 20.0 * s / (n - 1) as f64;
        let total: f64 = (0..n).map(|i| t.density(-10.0 * s + h * i as f64)).sum::<f64>() * h;
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        assert_relative_eq!(s, (HBAR * 2.0 * PI * 0.25 * MASS_LI6_ATOM).sqrt());
    }

    #[test]
    fn amplitude_peak_and_symmetry() {
        let (s, t) = (scales(), trap());
        let a = |c, r| single_pulse_density(&s, &t, c, r);
        let at_peak = a(0.0, s.p0);
        for k in 1..50 {
            let dr = 0.01 * s.p0 * k as f64;
            assert!(a(0.0, s.p0 + dr) < at_peak);
            assert!(a(0.0, s.p0 - dr) < at_peak);
        }
        for (c, r) in [(0.01 * s.p0, 0.97 * s.p0), (-0.03 * s.p0, 1.2 * s.p0)] {
            assert_relative_eq!(a(c, r), a(-c, r), max_relative = 1e-14);
            assert_relative_eq!(a(c, r), a(c, -r), max_relative = 1e-14);
            assert_relative_eq!(a(c, r), a(-c, -r), max_relative = 1e-14);
        }
    }

    #[test]
    fn baseline_ratios() {
        let (s, t) = (scales(), trap());
        assert!((t.sigma_p_t / s.p0 / 0.024 - 1.0).abs() < 0.15);
        assert!(((s.delta_p / s.p0).powi(2) / 0.012 - 1.0).abs() < 0.20);
    }

    #[test]
    fn norm_closed_form_agrees_with_quadrature() {
        let n = norm_ctilde(&scales(), &trap()).unwrap();
        assert!(n.relative_difference.abs() < 0.05, "{n:?}");
    }

    #[test]
    fn norm_closed_form_scaling() {
        let s = scales();
        let n = norm_ctilde_closed(&s);
        let longer = DerivedScales { duration: 2.0 * s.duration, delta_p: s.delta_p / 2f64.sqrt(), ..s };
        assert_relative_eq!(norm_ctilde_closed(&longer), 2.0 * n, max_relative = 1e-12);
        let faster = DerivedScales { p0: 2.0 * s.p0, ..s };
        assert_relative_eq!(norm_ctilde_closed(&faster), 0.5 * n, max_relative = 1e-12);
    }

    #[test]
    fn dissociation_probability_baseline_and_linearity() {
        let s = scales();
        let r = res();
        let p = dissociation_probability(&s, &r, 2.0 * PI * 300.0);
        assert!((p.probability / 0.04 - 1.0).abs() < 0.15, "{}", p.probability);
        assert!(p.warning.is_none());
        let zero = dissociation_probability(&s, &ResonanceParams { a_bg: 0.0, ..r }, 2.0 * PI * 300.0);
        assert_eq!(zero.probability, 0.0);
        let wide = dissociation_probability(&s, &ResonanceParams { width: 2.0 * r.width, ..r }, 2.0 * PI * 300.0);
        assert_relative_eq!(wide.probability, 2.0 * p.probability, max_relative = 1e-12);
        let strong = dissociation_probability(&s, &ResonanceParams { width: 100.0 * r.width, ..r }, 2.0 * PI * 300.0);
        assert!(strong.warning.is_some());
    }

    #[test]
    fn full_plane_mass_is_close_to_one() {
        // the normalized amplitude integrates to numeric/closed norm ratio
        let (s, t) = (scales(), trap());
        let (pc, pr) = full_domain(&s, &t);
        let m = directional_mass(&s, &t, pc, pr).unwrap();
        let n = norm_ctilde(&s, &t).unwrap();
        assert_relative_eq!(m, n.numeric / n.closed_form, max_relative = 1e-8);
    }

    #[test]
    fn baseline_grid() {
        let (s, t) = (scales(), trap());
        let g = build_grid(&s, &t, WindowSpec::default(), (257, 1025)).unwrap();
        assert!((g.total() - 1.0).abs() < 1e-6);
        let (pc, pr, _) = g.peak();
        let (dc, dr) = g.cell();
        assert!(pc.abs() <= dc);
        assert!((pr - s.p0).abs() <= dr);
        let deficit = g.window.deficit.unwrap();
        assert!(deficit > 0.0 && deficit < MAX_WINDOW_DEFICIT, "{deficit}");
    }

    #[test]
    fn narrow_window_is_rejected() {
        let (s, t) = (scales(), trap());
        let err = build_grid(&s, &t, WindowSpec { cm_sigmas: 6.0, rel_delta_ps: 2.0 }, (65, 129)).unwrap_err();
        match err {
            Error::Window { deficit, .. } => assert!(deficit > MAX_WINDOW_DEFICIT),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn renormalization_is_projective() {
        let (s, t) = (scales(), trap());
        let g = build_grid(&s, &t, WindowSpec::default(), (65, 257)).unwrap();
        let mut half = g.clone();
        half.amplitude.mapv_inplace(|a| 0.5 * a);
        let back = half.renormalized().unwrap();
        for (a, b) in g.amplitude.iter().zip(back.amplitude.iter()) {
            assert!((a - b).norm() <= 1e-12 * g.amplitude[[32, 128]].norm());
        }
        assert_relative_eq!(back.density_at(0.0, s.p0), g.density_at(0.0, s.p0), max_relative = 1e-12);
    }

    #[test]
    fn analytic_density_matches_grid_nodes() {
        let (s, t) = (scales(), trap());
        let g = build_grid(&s, &t, WindowSpec::default(), (33, 129)).unwrap();
        for (i, j) in [(16, 64), (3, 100), (30, 7)] {
            let d = g.amplitude[[i, j]].norm_sqr();
            assert_relative_eq!(g.density_at(g.p_cm[i], g.p_rel[j]), d, max_relative = 1e-12);
        }
        let pc = [-1.0, 0.0, 0.3 * t.sigma_p_t, 7.0 * t.sigma_p_t];
        let pr = [-0.1 * s.p0, 0.5 * s.p0, s.p0, 1.07 * s.p0, 3.0 * s.p0];
        let block = g.density_block(&pc, &pr);
        for (i, &c) in pc.iter().enumerate() {
            for (j, &r) in pr.iter().enumerate() {
                let one = g.density_at(c, r);
                assert!((block[i * pr.len() + j] - one).abs() <= 1e-12 * one.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn exact_gaussian_is_recovered() {
        let truth = GaussianParams { amplitude: 3.0, center: (0.1, 1.05), sigma_cm: 0.07, sigma_rel: 0.2 };
        let p_cm = axis(-0.5, 0.5, 81);
        let p_rel = axis(0.0, 2.0, 161);
        let density = Array2::from_shape_fn((81, 161), |(i, j)| truth.eval(p_cm[i], p_rel[j]));
        let g = SpectrumGrid::from_samples(p_cm, p_rel, &density).unwrap();
        let fit = gaussian_fit(&g).unwrap();
        let ls = fit.least_squares;
        for (a, b) in [(ls.center.0, 0.1), (ls.center.1, 1.05), (ls.sigma_cm, 0.07), (ls.sigma_rel, 0.2)] {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
        // the peak sits off-node, so the envelope only matches to grid precision
        assert!((fit.upper_envelope.sigma_rel / 0.2 - 1.0).abs() < 2e-2);
    }

    #[test]
    fn sinc_spectrum_fits() {
        let (s, t) = (scales(), trap());
        let g = build_grid(&s, &t, WindowSpec::default(), (129, 513)).unwrap();
        let fit = gaussian_fit(&g).unwrap();
        assert!(fit.least_squares.sigma_rel < fit.upper_envelope.sigma_rel, "{fit:?}");
        let (dc, dr) = g.cell();
        assert!(fit.least_squares.center.0.abs() <= dc);
        assert!((fit.least_squares.center.1 - s.p0).abs() <= dr);
        assert_relative_eq!(fit.least_squares.sigma_cm, t.sigma_p_t / 2f64.sqrt(), max_relative = 0.05);
    }

    #[test]
    fn csv_export_in_units_of_p0() {
        let (s, t) = (scales(), trap());
        let g = build_grid(&s, &t, WindowSpec::default(), (9, 33)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "p_cm_over_p0,p_rel_over_p0,density");
        assert_eq!(text.lines().count(), 1 + 9 * 33);
        let sum = g.summary();
        assert!((sum.peak_over_p0.1 - 1.0).abs() < 0.1);
    }
}
