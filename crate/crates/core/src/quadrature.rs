//! Composite Gauss–Legendre quadrature.
//!
//! Everything here works on a fixed `n`-point Gauss–Legendre rule applied
//! panel by panel. Convergence is judged by panel doubling: an integral is
//! accepted once the `2k`-panel estimate agrees with the `k`-panel one to
//! `rel_tol`, and the finer of the two is returned.
//!
//! Endpoint singularities are handled by the callers, either through a
//! change of variables that makes the integrand smooth, or through
//! [`Grading`], which clusters panels geometrically at an endpoint where the
//! integrand is continuous but not smooth (`u^p` type behaviour).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs shared by every scale, speed and Green integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Gauss–Legendre points per panel (at least 16).
    pub nodes_per_panel: usize,
    /// Starting number of panels (at least 8); doubled until converged.
    pub panels: usize,
    /// Distance from `±1` used when an improper integral has to be sampled
    /// close to a divergent endpoint. In `(0, 1e-6]`.
    pub endpoint_offset: f64,
    /// Relative agreement required between successive panel doublings.
    pub rel_tol: f64,
    /// Maximum number of doublings before giving up.
    pub max_doublings: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 16,
            panels: 8,
            endpoint_offset: 1e-7,
            rel_tol: 1e-9,
            max_doublings: 12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_panel < 16 {
            return Err(Error::param(
                "nodes_per_panel",
                self.nodes_per_panel as f64,
                "must be at least 16",
            ));
        }
        if self.nodes_per_panel > 128 {
            return Err(Error::param(
                "nodes_per_panel",
                self.nodes_per_panel as f64,
                "must be at most 128",
            ));
        }
        if self.panels < 8 {
            return Err(Error::param(
                "panels",
                self.panels as f64,
                "must be at least 8",
            ));
        }
        if !(self.endpoint_offset > 0.0 && self.endpoint_offset <= 1e-6) {
            return Err(Error::param(
                "endpoint_offset",
                self.endpoint_offset,
                "must lie in (0, 1e-6]",
            ));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(Error::param(
                "rel_tol",
                self.rel_tol,
                "must lie in (0, 1e-2)",
            ));
        }
        if self.max_doublings == 0 || self.max_doublings > 20 {
            return Err(Error::param(
                "max_doublings",
                self.max_doublings as f64,
                "must lie in 1..=20",
            ));
        }
        Ok(())
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        // Roots are symmetric; find the positive half by Newton on P_n.
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Single-panel estimate of `∫_a^b f`.
    pub fn panel<F>(&self, f: &mut F, a: f64, b: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x)?;
        }
        Ok(acc * half)
    }

    /// Uniform composite rule with `panels` panels on `[a, b]`.
    pub fn composite<F>(&self, f: &mut F, a: f64, b: f64, panels: usize) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            acc += self.panel(f, lo, hi)?;
        }
        Ok(acc)
    }

    /// Composite rule on a mesh that is refined geometrically towards the
    /// endpoints selected by `grading`.
    pub fn graded<F>(
        &self,
        f: &mut F,
        a: f64,
        b: f64,
        grading: Grading,
        panels: usize,
    ) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        graded_breakpoints(a, b, grading, panels)
            .windows(2)
            .try_fold(0.0, |acc, w| Ok(acc + self.panel(f, w[0], w[1])?))
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Which endpoints of an interval get geometric panel clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grading {
    None,
    Left,
    Right,
    Both,
}

/// Number of halvings used by [`Grading`]; the smallest panel is
/// `len * 2^-GRADED_LEVELS`.
const GRADED_LEVELS: i32 = 52;

/// Breakpoints for a graded mesh.
///
/// The interval is split into uniform panels; the panel touching a graded
/// endpoint is then replaced by a geometric sequence of panels whose widths
/// halve towards the endpoint.
pub fn graded_breakpoints(a: f64, b: f64, grading: Grading, panels: usize) -> Vec<f64> {
    let panels = panels.max(2);
    let h = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels + 2 * GRADED_LEVELS as usize + 2);
    let left = matches!(grading, Grading::Left | Grading::Both);
    let right = matches!(grading, Grading::Right | Grading::Both);

    pts.push(a);
    if left {
        for j in (1..=GRADED_LEVELS).rev() {
            pts.push(a + h * 2f64.powi(-j));
        }
    }
    for k in 1..panels {
        pts.push(a + h * k as f64);
    }
    if right {
        for j in 1..=GRADED_LEVELS {
            pts.push(b - h * 2f64.powi(-j));
        }
    }
    pts.push(b);
    // Deep levels can round onto the endpoint itself.
    pts.dedup_by(|next, prev| *next <= *prev);
    pts
}

/// Outcome of a converged integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Converged {
    pub value: f64,
    /// Panel count that produced `value`.
    pub panels: usize,
}

/// Doubles the panel count fed to `estimate` until two successive values
/// agree to `cfg.rel_tol`.
///
/// `estimate(k)` must return the `k`-panel approximation. Returns the finer
/// estimate, or a numerical error naming `quantity` if the budget of
/// doublings runs out or a non-finite value appears.
pub fn converge<F>(quantity: &'static str, cfg: &QuadratureConfig, mut estimate: F) -> Result<Converged>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut panels = cfg.panels;
    let mut coarse = estimate(panels)?;
    check_finite(quantity, coarse)?;
    for _ in 0..cfg.max_doublings {
        let fine_panels = panels * 2;
        let fine = estimate(fine_panels)?;
        check_finite(quantity, fine)?;
        let scale = fine.abs().max(coarse.abs());
        if (fine - coarse).abs() <= cfg.rel_tol * scale || scale < 1e-300 {
            return Ok(Converged {
                value: fine,
                panels: fine_panels,
            });
        }
        coarse = fine;
        panels = fine_panels;
    }
    Err(Error::numerical(
        quantity,
        format!(
            "panel doubling did not reach rel_tol {:e} after {} doublings",
            cfg.rel_tol, cfg.max_doublings
        ),
    ))
}

fn check_finite(quantity: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(quantity, format!("non-finite quadrature value {v}")))
    }
}
