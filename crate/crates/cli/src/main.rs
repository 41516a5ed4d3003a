use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dte_cli::{
    artifact_path, bell, exit_code, fringes, linspace, spectrum, sweep, write_json, write_sweep_csv, GridOptions, ScanOptions,
    SweepAxis, EXIT_INFEASIBLE,
};
use dte_core::interferometer::{DispersionModel, EnginePlan};
use dte_core::scenario::{audit, derived_report, hertz, load_config, ScenarioConfig, BASELINE_NAME};
use dte_core::spectrum::WindowSpec;
use dte_core::units::{parse_si, Dimension};
use dte_core::{Error, Result};

/// Dissociation-time entanglement Bell test simulator.
#[derive(Parser)]
#[command(name = "dte", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feasibility audit; exits 0 iff every non-advisory check passes.
    Validate(Common),
    /// Derived scales and optics as JSON.
    Derive(Common),
    /// Momentum spectrum grid as CSV plus a JSON summary.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Fringe scan over Δℓ as CSV plus a visibility report.
    Fringes {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// CHSH value at textbook settings and the maximized S.
    Bell {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scan: ScanArgs,
        /// Search half width around optimum overlap, e.g. "200 um".
        /// Defaults to the envelope RMS width.
        #[arg(long, allow_hyphen_values = true)]
        half_width: Option<String>,
    },
    /// Max visibility and S_max along one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long, value_enum, default_value = "tau")]
        axis: SweepAxis,
        /// First value with unit, e.g. "0.1 s".
        #[arg(long, default_value = "0.1 s")]
        from: String,
        #[arg(long, default_value = "2 s")]
        to: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Bundled config name or TOML path.
    #[arg(value_name = "CONFIG", conflicts_with = "config")]
    config_arg: Option<String>,
    #[arg(long)]
    config: Option<String>,
    /// Artifact directory.
    #[arg(long, env = "DTE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Refuse to compute when a non-advisory feasibility check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Window half widths: centre-of-mass in σ_p,T, relative in Δp.
    #[arg(long, default_value = "6,9")]
    window_sigmas: String,
    /// Grid points along p_cm and p_rel.
    #[arg(long, default_value = "257,1025")]
    points: String,
}

#[derive(Args)]
struct ScanArgs {
    /// Δℓ range: "300 um" for ±300 μm, or "-100 um,300 um".
    #[arg(long, default_value = "300 um", allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 601)]
    samples: usize,
    /// Override φ_τ, radians.
    #[arg(long, allow_hyphen_values = true)]
    phi_tau: Option<f64>,
    /// Gauss–Legendre order per panel.
    #[arg(long, default_value_t = 10)]
    order: usize,
    /// Largest phase advance per panel, radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    guard: f64,
    #[arg(long, default_value_t = 16)]
    min_panels: usize,
    /// Drop the dispersive part of the free evolution.
    #[arg(long)]
    no_dispersion: bool,
}

fn pair<T: std::str::FromStr>(text: &str, what: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::Precondition(format!("{what}: cannot parse `{text}`"))),
        },
        _ => Err(Error::Precondition(format!("{what}: expected two comma-separated values, got `{text}`"))),
    }
}

impl GridArgs {
    fn options(&self) -> Result<GridOptions> {
        let (cm_sigmas, rel_delta_ps) = pair(&self.window_sigmas, "--window-sigmas")?;
        Ok(GridOptions { window: WindowSpec { cm_sigmas, rel_delta_ps }, points: pair(&self.points, "--points")? })
    }
}

impl ScanArgs {
    fn options(&self) -> Result<ScanOptions> {
        let parts: Vec<&str> = self.range.split(',').collect();
        let range = match parts.as_slice() {
            [half] => {
                let h = parse_si(half, Dimension::LENGTH)?.abs();
                (-h, h)
            }
            [lo, hi] => (parse_si(lo, Dimension::LENGTH)?, parse_si(hi, Dimension::LENGTH)?),
            _ => return Err(Error::Precondition(format!("--range: cannot parse `{}`", self.range))),
        };
        let dispersion = if self.no_dispersion { DispersionModel::DisplacementOnly } else { DispersionModel::Full };
        let plan =
            EnginePlan { order: self.order, guard: self.guard, min_panels: self.min_panels, dispersion, ..EnginePlan::default() };
        plan.validate()?;
        Ok(ScanOptions { range, samples: self.samples, phi_tau: self.phi_tau, plan })
    }
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let name = self.config.as_deref().or(self.config_arg.as_deref()).unwrap_or(BASELINE_NAME);
        load_config(name)
    }

    fn prepare(&self) -> Result<ScenarioConfig> {
        if let Some(jobs) = self.jobs {
            // only fails if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
        }
        std::fs::create_dir_all(&self.out)?;
        self.load()
    }
}

enum Outcome {
    Done,
    Infeasible,
}

/// Warn, or stop under --strict, when the scenario fails its audit.
fn gate(common: &Common, config: &ScenarioConfig) -> Option<Outcome> {
    let report = audit(config);
    if report.required {
        return None;
    }
    let names: Vec<&str> = report.failures().filter(|c| !c.advisory).map(|c| c.name.as_str()).collect();
    if common.strict {
        eprintln!("error: feasibility checks failed: {}", names.join(", "));
        return Some(Outcome::Infeasible);
    }
    eprintln!("warning: feasibility checks failed: {} (continuing)", names.join(", "));
    None
}

fn announce(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Validate(common) => {
            let config = common.prepare()?;
            let report = audit(&config);
            println!("{report}");
            let path = artifact_path(&common.out, &config, "feasibility", "json");
            write_json(&path, &config, &report)?;
            announce(&path);
            Ok(if report.required { Outcome::Done } else { Outcome::Infeasible })
        }
        Command::Derive(common) => {
            let config = common.prepare()?;
            if let Some(o) = gate(&common, &config) {
                return Ok(o);
            }
            let report = derived_report(&config)?;
            let s = &report.scales;
            println!("p0            {:.6e} kg m/s  (relative velocity 2p0/m = {:.4} mm/s)", s.p0, 2e3 * report.velocity);
            println!("lambda_rel    {:.4} um", s.lambda_rel * 1e6);
            println!("l0            {:.4} mm", s.ell_0 * 1e3);
            println!("phi_tau       {:.6e} rad", s.phi_tau);
            println!("sigma_pT/p0   {:.4}", report.sigma_p_t_over_p0);
            println!("(dp/p0)^2     {:.4}", report.delta_p_over_p0_squared);
            println!("|C_bg|^2      {:.4}", report.dissociation_probability);
            println!(
                "guide         {:.1} Hz, z_R {:.2} cm",
                hertz(report.optics.guide.transverse_frequency),
                report.optics.guide.rayleigh_length * 1e2
            );
            if let Some(w) = &report.dissociation_warning {
                eprintln!("warning: {w}");
            }
            let path = artifact_path(&common.out, &config, "derived", "json");
            write_json(&path, &config, &report)?;
            announce(&path);
            Ok(Outcome::Done)
        }
        Command::Spectrum { common, grid } => {
            let opts = grid.options()?;
            let config = common.prepare()?;
            if let Some(o) = gate(&common, &config) {
                return Ok(o);
            }
            let out = spectrum(&config, &opts)?;
            let csv = artifact_path(&common.out, &config, "spectrum", "csv");
            out.grid.save_csv(&csv)?;
            announce(&csv);
            let json = artifact_path(&common.out, &config, "spectrum", "json");
            write_json(&json, &config, &out)?;
            announce(&json);
            let (pc, pr) = out.summary.peak_over_p0;
            println!("peak at (p_cm, p_rel)/p0 = ({pc:.4}, {pr:.4}); window deficit {:?}", out.summary.window_deficit);
            Ok(Outcome::Done)
        }
        Command::Fringes { common, grid, scan } => {
            let (grid, scan) = (grid.options()?, scan.options()?);
            let config = common.prepare()?;
            if let Some(o) = gate(&common, &config) {
                return Ok(o);
            }
            let out = fringes(&config, &grid, &scan)?;
            let csv = artifact_path(&common.out, &config, "fringes", "csv");
            out.scan.save_csv(&csv)?;
            announce(&csv);
            let json = artifact_path(&common.out, &config, "fringes", "json");
            write_json(&json, &config, &out)?;
            announce(&json);
            let r = &out.report;
            println!(
                "max visibility {:.4} at {:.1} um (threshold {:.4})",
                r.max_visibility,
                r.delta_ell_at_max * 1e6,
                r.threshold
            );
            if let Some(p) = r.fringe_period {
                println!("fringe period {:.3} um, h/p0 {:.3} um", p * 1e6, r.expected_period * 1e6);
            }
            println!("periods above threshold {}", r.periods_above_threshold);
            Ok(Outcome::Done)
        }
        Command::Bell { common, grid, scan, half_width } => {
            let (grid, scan) = (grid.options()?, scan.options()?);
            let half_width = half_width.map(|w| parse_si(&w, Dimension::LENGTH)).transpose()?;
            let config = common.prepare()?;
            if let Some(o) = gate(&common, &config) {
                return Ok(o);
            }
            let out = bell(&config, &grid, &scan, half_width)?;
            let json = artifact_path(&common.out, &config, "bell", "json");
            write_json(&json, &config, &out)?;
            announce(&json);
            println!("S (textbook settings) {:.4}", out.textbook.s);
            println!("S_max {:.4}  (2√2·V_max = {:.4})", out.s_max, out.s_max / out.tsirelson_ratio);
            Ok(Outcome::Done)
        }
        Command::Sweep { common, grid, scan, axis, from, to, steps } => {
            let (grid, scan) = (grid.options()?, scan.options()?);
            let dim = match axis {
                SweepAxis::Tau => Dimension::TIME,
                SweepAxis::Height => Dimension::MAGNETIC_FIELD,
            };
            let values = linspace(parse_si(&from, dim)?, parse_si(&to, dim)?, steps);
            let config = common.prepare()?;
            if common.strict {
                for &v in &values {
                    if let Some(o) = gate(&common, &axis.apply(&config, v)) {
                        return Ok(o);
                    }
                }
            }
            let rows = sweep(&config, axis, &values, &grid, &scan);
            let kind = format!("sweep_{}", axis.column());
            let csv = artifact_path(&common.out, &config, &kind, "csv");
            write_sweep_csv(axis, &rows, std::fs::File::create(&csv)?)?;
            announce(&csv);
            let json = artifact_path(&common.out, &config, &kind, "json");
            write_json(&json, &config, &rows)?;
            announce(&json);
            for r in &rows {
                match &r.error {
                    None => println!("{:.4e}  V_max {:.4}  S_max {:.4}", r.value, r.max_visibility, r.s_max),
                    Some(e) => println!("{:.4e}  failed: {e}", r.value),
                }
            }
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(EXIT_INFEASIBLE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
