//! Pipelines behind the `dte` subcommands. Each returns the data that the
//! binary serializes, so tests can run them without a process boundary.

use std::io::Write;
use std::path::{Path, PathBuf};

use dte_core::feshbach::DerivedScales;
use dte_core::interferometer::{
    chsh_scan_with, chsh_textbook, fringe_scan_with, ChshResult, ChshScan, EnginePlan, FringeScan, SpectrumCorrelations,
    VisibilityReport, TSIRELSON,
};
use dte_core::scenario::{Artifact, ScenarioConfig};
use dte_core::spectrum::{build_grid, gaussian_fit, GaussianFit, GridSummary, SpectrumGrid, WindowSpec};
use dte_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Fringe period quoted for the baseline design, m.
pub const QUOTED_LAMBDA_REL: f64 = 12.4e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOptions {
    pub window: WindowSpec,
    pub points: (usize, usize),
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { window: WindowSpec::default(), points: (257, 1025) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    /// Δℓ range, m.
    pub range: (f64, f64),
    pub samples: usize,
    /// Overrides the computed φ_τ.
    pub phi_tau: Option<f64>,
    pub plan: EnginePlan,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { range: (-300e-6, 300e-6), samples: 601, phi_tau: None, plan: EnginePlan::default() }
    }
}

impl ScanOptions {
    pub fn phi_tau(&self, scales: &DerivedScales) -> f64 {
        self.phi_tau.unwrap_or(scales.phi_tau)
    }
}

pub fn grid(config: &ScenarioConfig, opts: &GridOptions) -> Result<(DerivedScales, SpectrumGrid)> {
    let scales = config.derived_scales()?;
    let grid = build_grid(&scales, &config.trap_ground_state()?, opts.window, opts.points)?;
    Ok((scales, grid))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutput {
    pub p0: f64,
    pub summary: GridSummary,
    pub fit: Option<GaussianFit>,
    pub fit_error: Option<String>,
    pub options: GridOptions,
    #[serde(skip)]
    pub grid: SpectrumGrid,
}

pub fn spectrum(config: &ScenarioConfig, opts: &GridOptions) -> Result<SpectrumOutput> {
    let (scales, grid) = grid(config, opts)?;
    let (fit, fit_error) = match gaussian_fit(&grid) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SpectrumOutput { p0: scales.p0, summary: grid.summary(), fit, fit_error, options: *opts, grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodCheck {
    pub computed: f64,
    pub quoted: f64,
    /// quoted/computed − 1
    pub relative_difference: f64,
    pub quoted_within_10_percent: bool,
}

impl PeriodCheck {
    pub fn new(computed: f64) -> Self {
        let relative_difference = QUOTED_LAMBDA_REL / computed - 1.0;
        PeriodCheck {
            computed,
            quoted: QUOTED_LAMBDA_REL,
            relative_difference,
            quoted_within_10_percent: relative_difference.abs() <= 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FringeOutput {
    pub report: VisibilityReport,
    pub lambda_rel: PeriodCheck,
    pub ell_0: f64,
    pub options: ScanOptions,
    #[serde(skip)]
    pub scan: FringeScan,
}

pub fn fringes_on(grid: &SpectrumGrid, scales: &DerivedScales, opts: &ScanOptions) -> Result<FringeOutput> {
    let scan = fringe_scan_with(grid, scales, opts.range, opts.samples, opts.phi_tau(scales), opts.plan)?;
    Ok(FringeOutput {
        report: scan.report(),
        lambda_rel: PeriodCheck::new(scales.lambda_rel),
        ell_0: scales.ell_0,
        options: *opts,
        scan,
    })
}

pub fn fringes(config: &ScenarioConfig, grid_opts: &GridOptions, opts: &ScanOptions) -> Result<FringeOutput> {
    let (scales, grid) = grid(config, grid_opts)?;
    fringes_on(&grid, &scales, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct BellOutput {
    pub textbook: ChshResult,
    pub scan: ChshScan,
    pub s_max: f64,
    pub max_visibility: f64,
    /// S_max / (2√2 · max visibility)
    pub tsirelson_ratio: f64,
    /// Search half width around optimum overlap, m.
    pub half_width: f64,
    pub phi_tau: f64,
}

/// CHSH search. Without an explicit half width the fringe envelope's RMS
/// width is used, which needs a fringe scan first.
pub fn bell(config: &ScenarioConfig, grid_opts: &GridOptions, opts: &ScanOptions, half_width: Option<f64>) -> Result<BellOutput> {
    let (scales, grid) = grid(config, grid_opts)?;
    let fringe = fringes_on(&grid, &scales, opts)?;
    let half_width = match half_width {
        Some(w) => w,
        None => fringe.report.envelope_width.unwrap_or(opts.range.1.abs().max(opts.range.0.abs())),
    };
    let source = SpectrumCorrelations { plan: opts.plan, ..SpectrumCorrelations::new(&grid, &scales, opts.phi_tau(&scales)) };
    let textbook = chsh_textbook(&source)?;
    let scan = chsh_scan_with(&source, half_width)?;
    let max_visibility = fringe.report.max_visibility;
    Ok(BellOutput {
        textbook,
        s_max: scan.best.s,
        tsirelson_ratio: scan.best.s / (TSIRELSON * max_visibility),
        scan,
        max_visibility,
        half_width,
        phi_tau: source.phi_tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Pulse separation τ, s.
    Tau,
    /// Pulse height ΔB, T.
    Height,
}

impl SweepAxis {
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> ScenarioConfig {
        match self {
            SweepAxis::Tau => config.with_separation(value),
            SweepAxis::Height => config.with_height(value),
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau_s",
            SweepAxis::Height => "height_t",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub max_visibility: f64,
    pub s_max: f64,
    pub lambda_rel: f64,
    pub search_half_width: f64,
    pub feasible: bool,
    /// Numeric failure at this point, if any.
    pub error: Option<String>,
}

/// Evaluates points concurrently; rows come back in input order.
pub fn sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    grid_opts: &GridOptions,
    opts: &ScanOptions,
) -> Vec<SweepRow> {
    values
        .par_iter()
        .map(|&value| {
            let point = axis.apply(config, value);
            let feasible = dte_core::scenario::audit(&point).required;
            match bell(&point, grid_opts, opts, None) {
                Ok(b) => SweepRow {
                    value,
                    max_visibility: b.max_visibility,
                    s_max: b.s_max,
                    lambda_rel: point.derived_scales().map(|s| s.lambda_rel).unwrap_or(f64::NAN),
                    search_half_width: b.half_width,
                    feasible,
                    error: None,
                },
                Err(e) => SweepRow {
                    value,
                    max_visibility: f64::NAN,
                    s_max: f64::NAN,
                    lambda_rel: f64::NAN,
                    search_half_width: f64::NAN,
                    feasible,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(axis: SweepAxis, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([axis.column(), "max_visibility", "s_max", "lambda_rel_um", "search_half_width_um", "feasible"])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.value),
            format!("{:.9}", r.max_visibility),
            format!("{:.9}", r.s_max),
            format!("{:.6}", r.lambda_rel * 1e6),
            format!("{:.6}", r.search_half_width * 1e6),
            r.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![from],
        n => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Process exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_numeric() => 2,
        Error::Domain(_) | Error::Resolution { .. } => 2,
        _ => 1,
    }
}

pub const EXIT_INFEASIBLE: i32 = 3;

/// Where artifacts for `config` go.
pub fn artifact_path(out: &Path, config: &ScenarioConfig, kind: &str, ext: &str) -> PathBuf {
    out.join(format!("{}.{kind}.{ext}", config.name))
}

pub fn write_json<T: Serialize>(path: &Path, config: &ScenarioConfig, data: T) -> Result<()> {
    let mut text = Artifact::new(config, data).to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_is_inclusive() {
        assert_eq!(linspace(0.1, 0.5, 3), vec![0.1, 0.30000000000000004, 0.5]);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
        assert!(linspace(1.0, 2.0, 0).is_empty());
    }

    #[test]
    fn exit_codes_split_config_from_numerics() {
        assert_eq!(exit_code(&Error::Parse("x".into())), 1);
        assert_eq!(exit_code(&Error::UnknownUnit { token: "x".into() }), 1);
        assert_eq!(exit_code(&Error::Window { deficit: 1.0, limit: 1e-3 }), 2);
        assert_eq!(exit_code(&Error::Convergence { estimate: 1.0, tolerance: 1e-6 }), 2);
    }

    #[test]
    fn quoted_period_sits_inside_the_band() {
        let scales = dte_core::scenario::baseline().derived_scales().unwrap();
        let check = PeriodCheck::new(scales.lambda_rel);
        assert!(check.quoted_within_10_percent);
        assert!(check.relative_difference < 0.0);
    }

    #[test]
    fn sweep_axis_touches_one_field() {
        let c = dte_core::scenario::baseline();
        let t = SweepAxis::Tau.apply(&c, 0.5);
        assert_eq!(t.pulse.separation, 0.5);
        assert_eq!(t.pulse.height, c.pulse.height);
        let h = SweepAxis::Height.apply(&c, 5e-5);
        assert_eq!(h.pulse.height, 5e-5);
        assert_eq!(h.pulse.separation, c.pulse.separation);
    }
}
