//! Composite Gauss–Legendre quadrature for smooth-times-phase integrands.
//!
//! Panels are sized a priori from a bound on the integrand's phase rate so
//! that no panel sees more than `oscillation_guard` radians of phase. The
//! error estimate comes from one refinement (every panel halved).
//! Evaluation order is fixed, so results are bit-reproducible for a given
//! plan.

use std::f64::consts::FRAC_PI_4;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    CompositeGaussLegendre,
    AdaptiveBisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPlan {
    pub scheme: Scheme,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Panels along (x, y).
    pub panels: (usize, usize),
    /// Relative tolerance, measured against ∫|f|.
    pub tolerance: f64,
    /// Largest phase advance per panel, radians.
    pub oscillation_guard: f64,
    pub max_refinements: u32,
}

impl Default for IntegrationPlan {
    fn default() -> Self {
        IntegrationPlan {
            scheme: Scheme::CompositeGaussLegendre,
            order: 10,
            panels: (16, 16),
            tolerance: 1e-10,
            oscillation_guard: FRAC_PI_4,
            max_refinements: 6,
        }
    }
}

impl IntegrationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.oscillation_guard > 0.0 && self.oscillation_guard <= FRAC_PI_4) {
            return Err(Error::Invariant { name: "oscillation_guard <= pi/4", detail: format!("{}", self.oscillation_guard) });
        }
        if self.order == 0 || self.panels.0 == 0 || self.panels.1 == 0 {
            return Err(Error::Invariant {
                name: "order and panel counts > 0",
                detail: format!("order {}, panels {:?}", self.order, self.panels),
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Invariant { name: "tolerance > 0", detail: format!("{}", self.tolerance) });
        }
        Ok(())
    }

    pub fn with_panels(self, nx: usize, ny: usize) -> Self {
        IntegrationPlan { panels: (nx, ny), ..self }
    }

    pub fn rule(&self) -> Rule {
        Rule::gauss_legendre(self.order)
    }
}

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn gauss_legendre(order: usize) -> Rule {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let gl = GaussLegendre::new(order);
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Ordered breakpoints `a = x₀ < x₁ < … < x_n = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    breaks: Vec<f64>,
}

impl Partition {
    pub fn uniform(a: f64, b: f64, panels: usize) -> Partition {
        let n = panels.max(1);
        let h = (b - a) / n as f64;
        let mut breaks: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
        breaks.push(b);
        Partition { breaks }
    }

    pub fn from_breaks(breaks: Vec<f64>) -> Result<Partition> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("breakpoints must be strictly increasing".into()));
        }
        Ok(Partition { breaks })
    }

    /// Graded partition of `[a, b]` where each panel's phase advance,
    /// `width * rate_bound(x0, x1)`, stays below `guard`. `rate_bound` must
    /// bound the phase rate over `[x0, x1]`.
    pub fn phase_guarded<F>(a: f64, b: f64, guard: f64, min_panels: usize, rate_bound: F) -> Partition
    where
        F: Fn(f64, f64) -> f64,
    {
        let max_width = (b - a) / min_panels.max(1) as f64;
        let mut breaks = vec![a];
        let mut x = a;
        while x < b {
            let mut h = max_width.min(b - x);
            loop {
                let rate = rate_bound(x, x + h);
                if rate * h <= guard || h <= (b - a) * 1e-12 {
                    break;
                }
                // shrink towards the width that the current bound allows
                h = (0.999 * guard / rate).min(0.5 * h);
            }
            x = if b - (x + h) < 1e-9 * h { b } else { x + h };
            breaks.push(x);
        }
        Partition { breaks }
    }

    pub fn refined(&self) -> Partition {
        let mut breaks = Vec::with_capacity(2 * self.breaks.len());
        for w in self.breaks.windows(2) {
            breaks.push(w[0]);
            breaks.push(0.5 * (w[0] + w[1]));
        }
        breaks.push(*self.breaks.last().unwrap());
        Partition { breaks }
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Composite nodes and weights.
    pub fn nodes(&self, rule: &Rule) -> (Vec<f64>, Vec<f64>) {
        let n = self.panels() * rule.len();
        let mut xs = Vec::with_capacity(n);
        let mut ws = Vec::with_capacity(n);
        for w in self.breaks.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[1] + w[0]);
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                xs.push(mid + half * t);
                ws.push(half * wt);
            }
        }
        (xs, ws)
    }
}

/// Panel count keeping the phase advance per panel at most `guard`.
pub fn phase_resolved_panels(max_phase_rate: f64, length: f64, guard: f64, min_panels: usize) -> usize {
    let needed = (max_phase_rate.abs() * length.abs() / guard).ceil();
    (needed as usize).max(min_panels.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: Complex64,
    /// Absolute error estimate.
    pub error: f64,
    /// ∫|f|, the scale the tolerance is measured against.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// Tensor-product composite rule. Returns (∫f, ∫|f|).
pub fn tensor_sum<F>(f: &F, xs: &Partition, ys: &Partition, rule: &Rule) -> (Complex64, f64)
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let (xn, xw) = xs.nodes(rule);
    let (yn, yw) = ys.nodes(rule);
    let rows: Vec<(Complex64, f64)> = xn
        .par_iter()
        .zip(xw.par_iter())
        .map(|(&x, &wx)| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut mag = 0.0;
            for (&y, &wy) in yn.iter().zip(&yw) {
                let v = f(x, y);
                acc += v * wy;
                mag += v.norm() * wy;
            }
            (acc * wx, mag * wx)
        })
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for (v, m) in rows {
        total += v;
        mag += m;
    }
    (total, mag)
}

pub fn integrate_2d_on<F>(f: &F, xs: &Partition, ys: &Partition, plan: &IntegrationPlan) -> Result<Estimate>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    plan.validate()?;
    let rule = plan.rule();
    let mut xs = xs.clone();
    let mut ys = ys.clone();
    let (mut coarse, _) = tensor_sum(f, &xs, &ys, &rule);
    for _ in 0..=plan.max_refinements {
        xs = xs.refined();
        ys = ys.refined();
        let (fine, magnitude) = tensor_sum(f, &xs, &ys, &rule);
        let error = (fine - coarse).norm();
        if error <= plan.tolerance * magnitude.max(f64::MIN_POSITIVE) {
            return Ok(Estimate { value: fine, error, magnitude });
        }
        coarse = fine;
    }
    let (_, magnitude) = tensor_sum(f, &xs, &ys, &rule);
    let error = {
        let (fine, _) = tensor_sum(f, &xs.refined(), &ys.refined(), &rule);
        (fine - coarse).norm()
    };
    Err(Error::Convergence { estimate: error / magnitude.max(f64::MIN_POSITIVE), tolerance: plan.tolerance })
}

/// Integrate over a rectangle with the plan's panel counts.
pub fn integrate_2d<F>(f: F, domain: Rect, plan: &IntegrationPlan) -> Result<Estimate>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    plan.validate()?;
    match plan.scheme {
        Scheme::CompositeGaussLegendre => {
            let xs = Partition::uniform(domain.x.0, domain.x.1, plan.panels.0);
            let ys = Partition::uniform(domain.y.0, domain.y.1, plan.panels.1);
            integrate_2d_on(&f, &xs, &ys, plan)
        }
        Scheme::AdaptiveBisection => adaptive_2d(&f, domain, plan),
    }
}

pub fn integrate_1d<F>(f: F, a: f64, b: f64, plan: &IntegrationPlan) -> Result<Estimate>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let plan = plan.with_panels(plan.panels.0, 1);
    integrate_2d(|x, _| f(x), Rect { x: (a, b), y: (0.0, 1.0) }, &plan)
}

/// Fallback: recursive quartering of cells whose one-level refinement
/// disagrees with the cell estimate. Cells are processed depth-first in a
/// fixed order.
fn adaptive_2d<F>(f: &F, domain: Rect, plan: &IntegrationPlan) -> Result<Estimate>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let rule = plan.rule();
    let cell = |r: &Rect| tensor_sum(f, &Partition::uniform(r.x.0, r.x.1, 1), &Partition::uniform(r.y.0, r.y.1, 1), &rule);
    let (whole, whole_mag) = tensor_sum(
        f,
        &Partition::uniform(domain.x.0, domain.x.1, plan.panels.0),
        &Partition::uniform(domain.y.0, domain.y.1, plan.panels.1),
        &rule,
    );
    let scale = whole_mag.max(whole.norm()).max(f64::MIN_POSITIVE);
    let max_depth = 2 * plan.max_refinements + 8;

    let mut stack = vec![(domain, 0u32)];
    let mut total = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    let mut error = 0.0;
    while let Some((r, depth)) = stack.pop() {
        let (v, _) = cell(&r);
        let xm = 0.5 * (r.x.0 + r.x.1);
        let ym = 0.5 * (r.y.0 + r.y.1);
        let quarters = [
            Rect { x: (r.x.0, xm), y: (r.y.0, ym) },
            Rect { x: (xm, r.x.1), y: (r.y.0, ym) },
            Rect { x: (r.x.0, xm), y: (ym, r.y.1) },
            Rect { x: (xm, r.x.1), y: (ym, r.y.1) },
        ];
        let parts: Vec<(Complex64, f64)> = quarters.iter().map(cell).collect();
        let fine: Complex64 = parts.iter().map(|p| p.0).sum();
        let diff = (fine - v).norm();
        if diff <= plan.tolerance * scale * 0.25f64.powi(depth as i32) || depth >= max_depth {
            if depth >= max_depth && diff > plan.tolerance * scale {
                return Err(Error::Convergence { estimate: diff / scale, tolerance: plan.tolerance });
            }
            total += fine;
            magnitude += parts.iter().map(|p| p.1).sum::<f64>();
            error += diff;
        } else {
            for q in quarters.into_iter().rev() {
                stack.push((q, depth + 1));
            }
        }
    }
    Ok(Estimate { value: total, error, magnitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn separable_gaussian() {
        let plan = IntegrationPlan::default();
        let est =
            integrate_2d(|x, y| Complex64::new((-x * x - y * y).exp(), 0.0), Rect { x: (-8.0, 8.0), y: (-8.0, 8.0) }, &plan)
                .unwrap();
        assert!((est.value.re - PI).abs() < 1e-10, "{}", est.value);
        assert!(est.value.im.abs() < 1e-14);
    }

    #[test]
    fn pure_phase_closed_form() {
        let plan = IntegrationPlan { tolerance: 1e-9, ..Default::default() };
        for &(k, l) in &[(3.0, 2.0), (250.0, 4.0), (1e4, 1.0), (-5e3, 2.0)] {
            let n = phase_resolved_panels(k, l, plan.oscillation_guard, 4);
            let est = integrate_1d(|x| Complex64::new(0.0, k * x).exp(), 0.0, l, &plan.with_panels(n, 1)).unwrap();
            let exact = (Complex64::new(0.0, k * l).exp() - 1.0) / Complex64::new(0.0, k);
            assert!((est.value - exact).norm() < 1e-8, "k={k}: {} vs {}", est.value, exact);
        }
    }

    #[test]
    fn panel_counts() {
        assert_eq!(phase_resolved_panels(0.0, 10.0, FRAC_PI_4, 3), 3);
        let a = phase_resolved_panels(1e3, 1.0, FRAC_PI_4, 1);
        let b = phase_resolved_panels(2e3, 1.0, FRAC_PI_4, 1);
        assert!((b as i64 - 2 * a as i64).abs() <= 1, "{a} {b}");
    }

    #[test]
    fn guarded_partition_respects_guard() {
        let rate = |x0: f64, x1: f64| 1.0 + 50.0 * x0.abs().max(x1.abs());
        let p = Partition::phase_guarded(-3.0, 5.0, FRAC_PI_4, 4, rate);
        assert_eq!(p.start(), -3.0);
        assert_eq!(p.end(), 5.0);
        for w in p.breaks().windows(2) {
            assert!((w[1] - w[0]) * rate(w[0], w[1]) <= FRAC_PI_4 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn guard_above_quarter_pi_rejected() {
        let plan = IntegrationPlan { oscillation_guard: 1.0, ..Default::default() };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn adaptive_fallback_agrees() {
        let plan = IntegrationPlan { scheme: Scheme::AdaptiveBisection, panels: (2, 2), tolerance: 1e-10, ..Default::default() };
        let est = integrate_2d(
            |x, y| Complex64::new(0.0, 3.0 * x + y).exp() * (-(x * x + y * y)).exp(),
            Rect { x: (-6.0, 6.0), y: (-6.0, 6.0) },
            &plan,
        )
        .unwrap();
        // ∫e^{-x²+3ix} ∫e^{-y²+iy} = π e^{-9/4} e^{-1/4}
        let exact = PI * (-2.5f64).exp();
        assert_relative_eq!(est.value.re, exact, max_relative = 1e-8);
        assert!(est.value.im.abs() < 1e-9);
    }

    #[test]
    fn nonconvergence_reported() {
        let plan = IntegrationPlan { panels: (1, 1), max_refinements: 1, tolerance: 1e-14, ..Default::default() };
        let r = integrate_2d(|x, _| Complex64::new(0.0, 1e4 * x * x).exp(), Rect { x: (0.0, 10.0), y: (0.0, 1.0) }, &plan);
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }

    #[test]
    fn deterministic() {
        let plan = IntegrationPlan::default();
        let f = |x: f64, y: f64| Complex64::new(0.0, 7.0 * x * y).exp() * (1.0 + x * x);
        let d = Rect { x: (0.0, 2.0), y: (-1.0, 1.0) };
        let a = integrate_2d(f, d, &plan).unwrap();
        let b = integrate_2d(f, d, &plan).unwrap();
        assert_eq!(a.value.re.to_bits(), b.value.re.to_bits());
        assert_eq!(a.value.im.to_bits(), b.value.im.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conjugation_symmetry(k in -40.0f64..40.0, c in 0.1f64..3.0) {
            let plan = IntegrationPlan { tolerance: 1e-8, ..Default::default() };
            let n = phase_resolved_panels(k, 4.0, plan.oscillation_guard, 8);
            let plan = plan.with_panels(n, 8);
            let d = Rect { x: (-2.0, 2.0), y: (0.0, 1.0) };
            let f = |x: f64, y: f64| Complex64::new(-c * x * x, k * x + y).exp();
            let a = integrate_2d(f, d, &plan).unwrap();
            let b = integrate_2d(|x, y| f(x, y).conj(), d, &plan).unwrap();
            prop_assert!((a.value.conj() - b.value).norm() <= 1e-15 * a.magnitude);
        }

        #[test]
        fn self_convergence_within_estimate(k in -60.0f64..60.0, c in 0.2f64..2.0, s in -1.0f64..1.0) {
            let plan = IntegrationPlan { tolerance: 1e-9, ..Default::default() };
            let n = phase_resolved_panels(k.abs() + 2.0 * c * 3.0, 6.0, plan.oscillation_guard, 4);
            let xs = Partition::uniform(-3.0, 3.0, n);
            let ys = Partition::uniform(0.0, 1.0, 2);
            let f = |x: f64, y: f64| Complex64::new(-c * (x - s).powi(2), k * x * (1.0 + 0.1 * y)).exp();
            let est = integrate_2d_on(&f, &xs, &ys, &plan).unwrap();
            let rule = plan.rule();
            let (finer, _) = tensor_sum(&f, &xs.refined().refined().refined(), &ys.refined().refined().refined(), &rule);
            prop_assert!((finer - est.value).norm() <= est.error.max(1e-14 * est.magnitude));
        }
    }
}
