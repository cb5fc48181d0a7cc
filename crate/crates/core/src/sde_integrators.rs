//! Time stepping for the overdamped equation `dx = φ(x) dt + σ dW` and the
//! underdamped system `dx = v dt`, `m dv = (-v + φ(x)) dt + σ dW`, with
//! first-exit detection.
//!
//! # Positions near the boundary
//!
//! A position is kept as `x` in the bulk and as `ℓ = ln(1 - |x|)` once it is
//! within [`LAYER_GAP`] of `±1`. Doubles cannot tell `1 - 1e-17` from `1`,
//! while both processes routinely come much closer than that (the critical
//! case `q = 0` approaches the boundary logarithmically slowly and reaches a
//! distance of `1e-300` within a few hundred time units).
//!
//! # Overdamped steps
//!
//! In the bulk a step is plain Euler–Maruyama (or the drift-implicit variant)
//! of length `dt`. A trial that jumps deep into the layer or past `±1` is
//! retried on the two halves of the step, the half increments being drawn
//! from the Brownian bridge.
//!
//! In the layer the step is Euler–Maruyama for `ℓ` in the intrinsic clock
//! `dτ = σ² dt / g²`:
//!
//! `dℓ = (g ψ(g) - β)/σ² dτ + dB`,  `dt = g²/σ² dτ`,
//!
//! where `ψ(g) = -φ(1 - g)` is the force pointing away from the boundary.
//! Both coefficients are bounded as `g → 0`, so the step neither overshoots
//! the boundary nor stalls. `dτ` equals `σ² dt / LAYER_GAP²` at the edge of
//! the layer and grows with depth, proportionally to that base value, so the
//! scheme still converges as `dt → 0`.
//!
//! An exit at `±1` is declared when `ℓ` falls below `ln(boundary_guard)`,
//! but only for models whose boundary is attainable. For the others the
//! guard band is not an exit; the path is followed to whatever depth it
//! reaches.
//!
//! # Underdamped steps
//!
//! Euler–Maruyama on the position-velocity pair with base step `dt`. A step
//! is halved (again along the Brownian bridge) while it would move the
//! particle by more than a fixed fraction of its distance to the boundary,
//! or while the local stiffness `√(|ψ'(g)|/m)` times the step is too large.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_models::ForceField;

/// Distance to `±1` below which positions are stored as `ln(gap)`.
pub const LAYER_GAP: f64 = 0.25;

/// Underdamped refinement: largest move as a fraction of the gap.
const MOVE_FRACTION: f64 = 0.05;
/// Underdamped refinement: largest `h √(|ψ'|/m)`.
const STIFFNESS_LIMIT: f64 = 0.05;
/// Largest drift displacement of `ℓ` in one layer step.
const LAYER_DRIFT_LIMIT: f64 = 0.25;
/// Exit probabilities of the Brownian-bridge correction below this are
/// treated as zero without drawing a uniform.
const BRIDGE_CUTOFF: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Solves `x' = x + φ(x') dt + σ dW` by bracketed Newton iteration.
    /// Applies to overdamped bulk steps.
    SemiImplicitDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// Base time step.
    pub dt: f64,
    /// Floor for step halving.
    pub dt_min: f64,
    /// Distance from `±1` at which an overdamped exit is declared
    /// (attainable boundaries only).
    pub boundary_guard: f64,
    pub horizon: f64,
    pub scheme: Scheme,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            dt_min: 1e-100,
            boundary_guard: 1e-12,
            horizon: 10.0,
            scheme: Scheme::EulerMaruyama,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", self.dt, "must be finite and > 0"));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt) {
            return Err(Error::param("dt_min", self.dt_min, "must satisfy 0 < dt_min <= dt"));
        }
        if !(self.boundary_guard > 0.0 && self.boundary_guard <= 1e-3) {
            return Err(Error::param(
                "boundary_guard",
                self.boundary_guard,
                "must satisfy 0 < boundary_guard <= 1e-3",
            ));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", self.horizon, "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    fn of(x: f64) -> Self {
        if x < 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// A point of `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    Bulk(f64),
    /// `x = side · (1 - e^log_gap)`.
    Layer { side: Side, log_gap: f64 },
}

impl Position {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() || x.abs() >= 1.0 {
            return Err(Error::domain("position", format!("x = {x} outside (-1, 1)")));
        }
        Ok(Self::from_x(x))
    }

    fn from_x(x: f64) -> Self {
        let gap = 1.0 - x.abs();
        if gap < LAYER_GAP {
            Position::Layer {
                side: Side::of(x),
                log_gap: gap.ln(),
            }
        } else {
            Position::Bulk(x)
        }
    }

    fn from_log_gap(side: Side, log_gap: f64) -> Self {
        if log_gap < LAYER_GAP.ln() {
            Position::Layer { side, log_gap }
        } else {
            Position::Bulk(side.sign() * (1.0 - log_gap.exp()))
        }
    }

    /// The coordinate itself; rounds to `±1` when the gap is below `1e-16`.
    pub fn x(&self) -> f64 {
        match *self {
            Position::Bulk(x) => x,
            Position::Layer { side, log_gap } => side.sign() * (1.0 - log_gap.exp()),
        }
    }

    pub fn gap(&self) -> f64 {
        match *self {
            Position::Bulk(x) => 1.0 - x.abs(),
            Position::Layer { log_gap, .. } => log_gap.exp(),
        }
    }

    pub fn log_gap(&self) -> f64 {
        match *self {
            Position::Bulk(x) => (1.0 - x.abs()).ln(),
            Position::Layer { log_gap, .. } => log_gap,
        }
    }

    fn side(&self) -> Side {
        match *self {
            Position::Bulk(x) => Side::of(x),
            Position::Layer { side, .. } => side,
        }
    }
}

/// Detection level on one side of the monitored interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Level {
    /// Endpoint in `x` when it lies strictly inside `(-1, 1)`.
    bulk: Option<f64>,
    /// `ln` of the endpoint's distance to `±1`; `-∞` when nothing is detected.
    log_gap: f64,
}

/// The interval `(a, b)` whose first exit a simulation looks for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRule {
    a: f64,
    b: f64,
    left: Level,
    right: Level,
}

impl ExitRule {
    /// Interior endpoints are always detected. An endpoint at `±1` is
    /// detected through the guard band only when the field's boundary is
    /// attainable.
    pub fn new<F: ForceField + ?Sized>(a: f64, b: f64, field: &F, cfg: &StepConfig) -> Result<Self> {
        if !(a >= -1.0 && b <= 1.0 && a < b) {
            return Err(Error::contract(
                "exit rule",
                format!("need -1 <= a < b <= 1, got ({a}, {b})"),
            ));
        }
        let guard = if field.boundary_attainable() {
            cfg.boundary_guard.ln()
        } else {
            f64::NEG_INFINITY
        };
        let level = |e: f64| {
            if e.abs() < 1.0 {
                Level {
                    bulk: Some(e),
                    log_gap: (1.0 - e.abs()).ln(),
                }
            } else {
                Level {
                    bulk: None,
                    log_gap: guard,
                }
            }
        };
        Ok(Self {
            a,
            b,
            left: level(a),
            right: level(b),
        })
    }

    pub fn full<F: ForceField + ?Sized>(field: &F, cfg: &StepConfig) -> Self {
        Self::new(-1.0, 1.0, field, cfg).expect("(-1, 1) is a valid interval")
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Whether any exit can be reported.
    pub fn detects_exits(&self) -> bool {
        self.left.log_gap > f64::NEG_INFINITY || self.right.log_gap > f64::NEG_INFINITY
    }

    fn level(&self, side: Side) -> &Level {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn contains(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub time: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverdampedState {
    pub pos: Position,
    pub t: f64,
}

impl OverdampedState {
    pub fn new(x: f64) -> Result<Self> {
        Ok(Self {
            pos: Position::new(x)?,
            t: 0.0,
        })
    }

    pub fn x(&self) -> f64 {
        self.pos.x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderdampedState {
    pub pos: Position,
    pub v: f64,
    pub t: f64,
    /// `U(x) + m v²/2` at the current point.
    pub energy: f64,
}

impl UnderdampedState {
    pub fn new<F: ForceField + ?Sized>(x: f64, v: f64, m: f64, field: &F) -> Result<Self> {
        check_mass(m)?;
        if !v.is_finite() {
            return Err(Error::param("v0", v, "must be finite"));
        }
        let pos = Position::new(x)?;
        Ok(Self {
            pos,
            v,
            t: 0.0,
            energy: energy_at(&pos, v, m, field),
        })
    }

    pub fn x(&self) -> f64 {
        self.pos.x()
    }
}

fn check_mass(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::param("m", m, "must be finite and > 0"))
    }
}

fn energy_at<F: ForceField + ?Sized>(pos: &Position, v: f64, m: f64, field: &F) -> f64 {
    let u = match *pos {
        Position::Bulk(x) => field.potential(x).unwrap_or(f64::INFINITY),
        Position::Layer { log_gap, .. } => field.potential_at_gap(log_gap.exp()),
    };
    u + 0.5 * m * v * v
}

/// Result of one base step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<S> {
    pub state: S,
    pub exit: Option<ExitEvent>,
    /// `Σ f(x) · (noise part of dx)` over the accepted sub-steps, where `f`
    /// is the control gradient handed to the step; zero without one.
    pub control: f64,
    /// Accepted sub-steps (1 unless the step was refined).
    pub substeps: u64,
}

/// Gradient used for the martingale control variate.
pub type ControlFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

struct Overdamped<'a, F: ?Sized, R> {
    field: &'a F,
    cfg: &'a StepConfig,
    rule: &'a ExitRule,
    control: Option<ControlFn<'a>>,
    rng: &'a mut R,
    sigma: f64,
    beta: f64,
    control_sum: f64,
    substeps: u64,
}

enum Advance {
    To(Position, f64),
    Exit(ExitEvent),
}

impl<F: ForceField + ?Sized, R: Rng> Overdamped<'_, F, R> {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn bulk_trial(&self, x: f64, h: f64, dw: f64) -> Result<f64> {
        let rhs = x + self.sigma * dw;
        match self.cfg.scheme {
            Scheme::EulerMaruyama => Ok(rhs + self.field.drift(x)? * h),
            Scheme::SemiImplicitDrift => semi_implicit_root(self.field, rhs, h),
        }
    }

    /// Bulk step over `[t, t + h]` with increment `dw`.
    ///
    /// A trial that lands deeper than halfway into the layer (or beyond the
    /// boundary) is replaced by its two bridge halves. When the first half
    /// already ends inside the layer the step stops there and the layer
    /// scheme takes over with fresh increments; the unused remainder of `dw`
    /// is dropped. Such jumps need a move of `LAYER_GAP / 2` within one
    /// step, so this only matters for coarse `dt`.
    fn bulk(&mut self, x: f64, t: f64, h: f64, dw: f64) -> Result<Advance> {
        let xn = self.bulk_trial(x, h, dw)?;
        if !(1.0 - xn.abs() >= 0.5 * LAYER_GAP) {
            if h / 2.0 < self.cfg.dt_min {
                return Err(Error::numerical(
                    "overdamped step",
                    format!("step from x = {x} still jumps to {xn} at dt_min = {}", self.cfg.dt_min),
                ));
            }
            let dw1 = 0.5 * dw + (0.25 * h).sqrt() * self.normal();
            return match self.bulk(x, t, 0.5 * h, dw1)? {
                Advance::To(p, tm) if 1.0 - p.x().abs() < LAYER_GAP => Ok(Advance::To(p, tm)),
                Advance::To(p, tm) => self.bulk(p.x(), tm, 0.5 * h, dw - dw1),
                exit => Ok(exit),
            };
        }
        // The step that detects an exit still counts, so the control sum
        // stays a stopped martingale.
        if let Some(f) = self.control {
            self.control_sum += f(x) * self.sigma * dw;
        }
        self.substeps += 1;
        for (side, level) in [(Side::Left, self.rule.left), (Side::Right, self.rule.right)] {
            if let Some(e) = level.bulk {
                if (xn - e) * side.sign() >= 0.0 {
                    let theta = ((x - e) / (x - xn)).clamp(0.0, 1.0);
                    return Ok(Advance::Exit(ExitEvent {
                        time: t + theta * h,
                        side,
                    }));
                }
            }
        }
        if let Some(exit) = self.bulk_bridge_exit(x, xn, t, h)? {
            return Ok(Advance::Exit(exit));
        }
        Ok(Advance::To(Position::Bulk(xn), t + h))
    }
    /// Chance that the continuous path crossed an interior endpoint between
    /// two monitored points that are both inside.
    fn bulk_bridge_exit(&mut self, x: f64, xn: f64, t: f64, h: f64) -> Result<Option<ExitEvent>> {
        if self.sigma == 0.0 {
            return Ok(None);
        }
        let var = self.sigma * self.sigma * h;
        for (side, level) in [(Side::Left, self.rule.left), (Side::Right, self.rule.right)] {
            if let Some(e) = level.bulk {
                let p = (-2.0 * (x - e) * (xn - e) / var).exp();
                if p > BRIDGE_CUTOFF && self.rng.random::<f64>() < p {
                    return Ok(Some(ExitEvent {
                        time: t + 0.5 * h,
                        side,
                    }));
                }
            }
        }
        Ok(None)
    }

    /// Layer step in the intrinsic clock. `z` is the standard normal of the
    /// base step.
    fn layer(&mut self, side: Side, l: f64, t: f64, z: f64) -> Result<Advance> {
        if self.sigma == 0.0 {
            let g = l.exp();
            let gn = g + self.field.inward_force(g) * self.cfg.dt;
            return Ok(Advance::To(Position::from_log_gap(side, gn.ln()), t + self.cfg.dt));
        }
        let s2 = self.sigma * self.sigma;
        let g = l.exp();
        let dtau0 = self.cfg.dt * s2 / (LAYER_GAP * LAYER_GAP);
        let depth = (LAYER_GAP.ln() - l).max(0.0);
        let mut dtau = (dtau0 * (1.0 + depth * depth)).min(dtau0 * (LAYER_GAP / g).powi(2));
        let mu = self.layer_drift(g);
        if mu.abs() * dtau > LAYER_DRIFT_LIMIT {
            dtau = LAYER_DRIFT_LIMIT / mu.abs();
        }
        self.layer_sub(side, l, t, dtau, dtau.sqrt() * z)
    }

    fn layer_drift(&self, g: f64) -> f64 {
        // Below the smallest normal double the gap only enters through the
        // limit of g·ψ(g), which is reached long before.
        let g = g.max(f64::MIN_POSITIVE);
        (g * self.field.inward_force(g) - self.beta) / (self.sigma * self.sigma)
    }

    fn layer_sub(&mut self, side: Side, l: f64, t: f64, dtau: f64, db: f64) -> Result<Advance> {
        let g = l.exp();
        let ln = l + self.layer_drift(g) * dtau + db;
        let level = self.rule.level(side).log_gap;
        // A step that would carry the point across the middle of the
        // interval is resolved on the bridge instead.
        let too_far = !(ln < 0.0);
        if too_far || ln.is_nan() {
            if dtau * 0.5 < f64::MIN_POSITIVE {
                return Err(Error::numerical(
                    "overdamped layer step",
                    format!("intrinsic step underflowed at log gap {l}"),
                ));
            }
            let db1 = 0.5 * db + (0.25 * dtau).sqrt() * self.normal();
            return match self.layer_sub(side, l, t, 0.5 * dtau, db1)? {
                Advance::To(p, tm) => self.layer_sub(side, p.log_gap_on(side), tm, 0.5 * dtau, db - db1),
                exit => Ok(exit),
            };
        }
        let gn = ln.exp();
        let dt = dtau * (g * g + gn * gn) / (2.0 * self.sigma * self.sigma);
        if let Some(f) = self.control {
            self.control_sum += f(side.sign() * (1.0 - g)) * (-side.sign() * g * db);
        }
        self.substeps += 1;
        if ln <= level {
            let theta = ((l - level) / (l - ln)).clamp(0.0, 1.0);
            return Ok(Advance::Exit(ExitEvent {
                time: t + theta * dt,
                side,
            }));
        }
        if level > f64::NEG_INFINITY {
            let p = (-2.0 * (l - level) * (ln - level) / dtau).exp();
            if p > BRIDGE_CUTOFF && self.rng.random::<f64>() < p {
                return Ok(Advance::Exit(ExitEvent {
                    time: t + 0.5 * dt,
                    side,
                }));
            }
        }
        // Interior endpoints on the far side are checked in x.
        let pos = Position::from_log_gap(side, ln);
        if let Position::Bulk(x) = pos {
            let other = match side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            if let Some(e) = self.rule.level(other).bulk {
                if (x - e) * other.sign() >= 0.0 {
                    return Ok(Advance::Exit(ExitEvent { time: t + dt, side: other }));
                }
            }
        }
        Ok(Advance::To(pos, t + dt))
    }
}

impl Position {
    /// `ln` of the distance to the boundary on `side`, even when the point
    /// is nearer the other one.
    fn log_gap_on(&self, side: Side) -> f64 {
        (1.0 - side.sign() * self.x()).ln().min(match *self {
            Position::Layer { side: s, log_gap } if s == side => log_gap,
            _ => f64::INFINITY,
        })
    }
}

/// Root of `y - φ(y) h = rhs` in `(-1, 1)`; the left side increases
/// strictly because every drift here is decreasing. Returns a point outside
/// the interval when the root lies beyond a boundary where `φ` stays finite.
fn semi_implicit_root<F: ForceField + ?Sized>(field: &F, rhs: f64, h: f64) -> Result<f64> {
    let f = |y: f64| -> Result<f64> { Ok(y - field.drift(y)? * h - rhs) };
    let edge = 1.0 - 1e-15;
    let (flo, fhi) = (f(-edge)?, f(edge)?);
    if fhi < 0.0 {
        return Ok(1.0);
    }
    if flo > 0.0 {
        return Ok(-1.0);
    }
    let (mut lo, mut hi) = (-edge, edge);
    let mut y = rhs.clamp(lo, hi);
    for _ in 0..200 {
        let fy = f(y)?;
        if fy == 0.0 {
            return Ok(y);
        }
        if fy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let eps = 1e-7 * (1.0 - y.abs()).max(1e-300);
        let slope = (f((y + eps).min(hi))? - f((y - eps).max(lo))?) / ((y + eps).min(hi) - (y - eps).max(lo));
        let mut next = y - fy / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 4.0 * f64::EPSILON {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::numerical("semi-implicit step", "Newton iteration did not converge"))
}

/// One base step of the overdamped dynamics.
///
/// `dw` is the Brownian increment over `cfg.dt`; in the boundary layer its
/// normalised value drives the intrinsic-clock step, so the time advanced
/// there differs from `dt`. Refinements draw from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn step_overdamped<F, R>(
    state: &OverdampedState,
    dw: f64,
    field: &F,
    cfg: &StepConfig,
    rule: &ExitRule,
    control: Option<ControlFn<'_>>,
    rng: &mut R,
) -> Result<StepReport<OverdampedState>>
where
    F: ForceField + ?Sized,
    R: Rng,
{
    if !dw.is_finite() {
        return Err(Error::param("dW", dw, "must be finite"));
    }
    let mut ctx = Overdamped {
        field,
        cfg,
        rule,
        control,
        rng,
        sigma: field.sigma(),
        beta: field.beta(),
        control_sum: 0.0,
        substeps: 0,
    };
    let adv = match state.pos {
        Position::Bulk(x) => ctx.bulk(x, state.t, cfg.dt, dw)?,
        Position::Layer { side, log_gap } => ctx.layer(side, log_gap, state.t, dw / cfg.dt.sqrt())?,
    };
    let (state, exit) = match adv {
        Advance::To(pos, t) => {
            let pos = match pos {
                Position::Bulk(x) => Position::from_x(x),
                layer => layer,
            };
            (OverdampedState { pos, t }, None)
        }
        Advance::Exit(e) => (
            OverdampedState {
                pos: state.pos,
                t: e.time,
            },
            Some(e),
        ),
    };
    Ok(StepReport {
        state,
        exit,
        control: ctx.control_sum,
        substeps: ctx.substeps,
    })
}

struct Underdamped<'a, F: ?Sized, R> {
    field: &'a F,
    cfg: &'a StepConfig,
    m: f64,
    rng: &'a mut R,
    sigma: f64,
    substeps: u64,
}

enum Motion {
    To(Position, f64),
    Contact(ExitEvent),
}

impl<F: ForceField + ?Sized, R: Rng> Underdamped<'_, F, R> {
    fn admissible(&self, pos: &Position, v: f64, h: f64) -> bool {
        let g = pos.gap();
        let stiff = (self.field.inward_force_slope(g).abs() / self.m).sqrt();
        h * v.abs() <= MOVE_FRACTION * g && h * stiff <= STIFFNESS_LIMIT
    }

    fn advance(&mut self, pos: Position, v: f64, t: f64, h: f64, dw: f64) -> Result<Motion> {
        let trial = self.trial(&pos, v, h, dw);
        let ok = self.admissible(&pos, v, h) && trial.is_some();
        if !ok && h / 2.0 >= self.cfg.dt_min {
            let dw1 = 0.5 * dw + (0.25 * h).sqrt() * self.rng.sample::<f64, _>(StandardNormal);
            return match self.advance(pos, v, t, 0.5 * h, dw1)? {
                Motion::To(p, vm) => self.advance(p, vm, t + 0.5 * h, 0.5 * h, dw - dw1),
                contact => Ok(contact),
            };
        }
        let Some((pn, vn)) = trial else {
            let g = pos.gap();
            let w = pos.side().sign() * v;
            let theta = if w > 0.0 { (g / (w * h)).clamp(0.0, 1.0) } else { 1.0 };
            return Ok(Motion::Contact(ExitEvent {
                time: t + theta * h,
                side: pos.side(),
            }));
        };
        if !vn.is_finite() {
            return Err(Error::numerical(
                "underdamped step",
                format!("velocity became {vn} at t = {t}"),
            ));
        }
        self.substeps += 1;
        Ok(Motion::To(pn, vn))
    }

    /// Euler–Maruyama trial; `None` when the position would reach `±1`.
    fn trial(&self, pos: &Position, v: f64, h: f64, dw: f64) -> Option<(Position, f64)> {
        let kick = self.sigma / self.m * dw;
        match *pos {
            Position::Bulk(x) => {
                let force = self.field.drift(x).ok()?;
                let xn = x + v * h;
                if !(xn.abs() < 1.0) {
                    return None;
                }
                Some((Position::from_x(xn), v + (-v + force) * h / self.m + kick))
            }
            Position::Layer { side, log_gap } => {
                let g = log_gap.exp();
                let s = side.sign();
                let gn = g - s * v * h;
                if !(gn > 0.0) {
                    return None;
                }
                let force = -s * self.field.inward_force(g);
                let pn = if gn < LAYER_GAP {
                    Position::Layer {
                        side,
                        log_gap: gn.ln(),
                    }
                } else {
                    Position::from_x(s * (1.0 - gn))
                };
                Some((pn, v + (-v + force) * h / self.m + kick))
            }
        }
    }
}

/// One base step of the underdamped dynamics; refinements draw from `rng`.
pub fn step_underdamped<F, R>(
    state: &UnderdampedState,
    dw: f64,
    m: f64,
    field: &F,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<StepReport<UnderdampedState>>
where
    F: ForceField + ?Sized,
    R: Rng,
{
    if !dw.is_finite() {
        return Err(Error::param("dW", dw, "must be finite"));
    }
    check_mass(m)?;
    let mut ctx = Underdamped {
        field,
        cfg,
        m,
        rng,
        sigma: field.sigma(),
        substeps: 0,
    };
    let t_end = state.t + cfg.dt;
    match ctx.advance(state.pos, state.v, state.t, cfg.dt, dw)? {
        Motion::To(pos, v) => Ok(StepReport {
            state: UnderdampedState {
                pos,
                v,
                t: t_end,
                energy: energy_at(&pos, v, m, field),
            },
            exit: None,
            control: 0.0,
            substeps: ctx.substeps,
        }),
        Motion::Contact(e) => Ok(StepReport {
            state: UnderdampedState { t: e.time, ..*state },
            exit: Some(e),
            control: 0.0,
            substeps: ctx.substeps,
        }),
    }
}

/// Which equations a path follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    Overdamped,
    Underdamped { m: f64 },
}

/// One recorded point of a path; `v` and `energy` only for underdamped runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub log_gap: f64,
    pub v: Option<f64>,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub initial: f64,
    pub last: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitResult {
    pub exited: bool,
    pub exit_time: Option<f64>,
    pub exit_side: Option<Side>,
    pub steps_taken: u64,
    /// `1 - e^min_log_gap`; equals `1.0` in floating point once a path has
    /// come within about `1e-16` of a boundary.
    pub max_abs_x: f64,
    /// Smallest `ln(1 - |x|)` seen along the path.
    pub min_log_gap: f64,
    /// Accumulated control-variate term, zero unless requested.
    pub control: f64,
    pub energy: Option<EnergySummary>,
}

/// What to keep from a path besides its [`ExitResult`].
#[derive(Clone, Default)]
pub struct Recording<'a> {
    /// Record a sample every this much time (first step at or after each
    /// multiple), starting at zero.
    pub every: Option<f64>,
    /// Record the state at these times (first step at or after each).
    pub checkpoints: Vec<f64>,
    /// Gradient for the martingale control variate (overdamped only).
    pub control: Option<ControlFn<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutput {
    pub result: ExitResult,
    pub trajectory: Vec<Sample>,
    /// One sample per checkpoint reached, in checkpoint order.
    pub checkpoints: Vec<Sample>,
}

/// Checkpoint and trajectory bookkeeping shared by both dynamics.
struct Recorder<'a> {
    every: Option<f64>,
    next_record: f64,
    checkpoints: &'a [f64],
    next_checkpoint: usize,
    trajectory: Vec<Sample>,
    at_checkpoints: Vec<Sample>,
}

impl<'a> Recorder<'a> {
    fn new(rec: &'a Recording<'_>) -> Result<Self> {
        if let Some(e) = rec.every {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::param("record_every", e, "must be finite and > 0"));
            }
        }
        if rec.checkpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::contract("simulate_path", "checkpoints must be sorted"));
        }
        Ok(Self {
            every: rec.every,
            next_record: 0.0,
            checkpoints: &rec.checkpoints,
            next_checkpoint: 0,
            trajectory: Vec::new(),
            at_checkpoints: Vec::new(),
        })
    }

    fn wants(&self, t: f64) -> bool {
        self.every.is_some_and(|_| t >= self.next_record)
            || (self.next_checkpoint < self.checkpoints.len()
                && t >= self.checkpoints[self.next_checkpoint] * (1.0 - 1e-12))
    }

    fn observe(&mut self, s: Sample) {
        if let Some(e) = self.every {
            if s.t >= self.next_record {
                self.trajectory.push(s);
                while self.next_record <= s.t {
                    self.next_record += e;
                }
            }
        }
        // Underdamped times lie on the grid n·dt up to rounding.
        while self.next_checkpoint < self.checkpoints.len()
            && s.t >= self.checkpoints[self.next_checkpoint] * (1.0 - 1e-12)
        {
            self.at_checkpoints.push(s);
            self.next_checkpoint += 1;
        }
    }
}

/// Runs one path until it exits or its time reaches `cfg.horizon`.
///
/// Every base step consumes exactly one standard normal from `rng` (plus
/// whatever its refinements need), and no decision depends on the horizon,
/// so a run with a longer horizon extends a shorter one. An exit whose
/// interpolated time lies beyond the horizon is reported as censored.
///
/// Underdamped paths ignore `rule` and report contact with `±1`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path<F, R>(
    x0: f64,
    v0: f64,
    dynamics: Dynamics,
    field: &F,
    cfg: &StepConfig,
    rule: &ExitRule,
    recording: &Recording<'_>,
    rng: &mut R,
) -> Result<PathOutput>
where
    F: ForceField + ?Sized,
    R: Rng,
{
    cfg.validate()?;
    let mut recorder = Recorder::new(recording)?;
    let sqrt_dt = cfg.dt.sqrt();
    let mut steps = 0u64;
    let mut closest = Closest::default();
    let mut exit: Option<ExitEvent> = None;
    let mut control = 0.0;
    let mut energy = None;

    match dynamics {
        Dynamics::Overdamped => {
            if !rule.contains(x0) {
                return Err(Error::contract(
                    "simulate_path",
                    format!("x0 = {x0} outside the monitored interval {:?}", rule.interval()),
                ));
            }
            let mut state = OverdampedState::new(x0)?;
            closest.track(&state.pos);
            recorder.observe(sample_over(&state));
            while state.t < cfg.horizon {
                let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                let rep = step_overdamped(&state, dw, field, cfg, rule, recording.control, rng)?;
                steps += 1;
                control += rep.control;
                if let Some(e) = rep.exit {
                    exit = Some(e);
                    break;
                }
                state = rep.state;
                closest.track(&state.pos);
                if recorder.wants(state.t) {
                    recorder.observe(sample_over(&state));
                }
            }
        }
        Dynamics::Underdamped { m } => {
            let mut state = UnderdampedState::new(x0, v0, m, field)?;
            closest.track(&state.pos);
            let e0 = state.energy;
            let mut e_max = e0;
            recorder.observe(sample_under(&state));
            while state.t < cfg.horizon {
                let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                let rep = step_underdamped(&state, dw, m, field, cfg, rng)?;
                steps += 1;
                if let Some(e) = rep.exit {
                    exit = Some(e);
                    break;
                }
                state = rep.state;
                // Keep the time on the grid n·dt.
                state.t = steps as f64 * cfg.dt;
                closest.track(&state.pos);
                e_max = e_max.max(state.energy);
                if recorder.wants(state.t) {
                    recorder.observe(sample_under(&state));
                }
            }
            energy = Some(EnergySummary {
                initial: e0,
                last: state.energy,
                max: e_max,
            });
        }
    }

    let exit = exit.filter(|e| e.time <= cfg.horizon);
    let min_log_gap = if exit.is_some() { f64::NEG_INFINITY } else { closest.log_gap() };
    Ok(PathOutput {
        result: ExitResult {
            exited: exit.is_some(),
            exit_time: exit.map(|e| e.time),
            exit_side: exit.map(|e| e.side),
            steps_taken: steps,
            max_abs_x: 1.0 - min_log_gap.exp(),
            min_log_gap,
            control,
            energy,
        },
        trajectory: recorder.trajectory,
        checkpoints: recorder.at_checkpoints,
    })
}

/// Closest approach to `±1`, kept without a logarithm per bulk step.
struct Closest {
    bulk_gap: f64,
    log_gap: f64,
}

impl Default for Closest {
    fn default() -> Self {
        Self {
            bulk_gap: f64::INFINITY,
            log_gap: f64::INFINITY,
        }
    }
}

impl Closest {
    fn track(&mut self, pos: &Position) {
        match *pos {
            Position::Bulk(x) => self.bulk_gap = self.bulk_gap.min(1.0 - x.abs()),
            Position::Layer { log_gap, .. } => self.log_gap = self.log_gap.min(log_gap),
        }
    }

    fn log_gap(&self) -> f64 {
        self.log_gap.min(self.bulk_gap.ln())
    }
}

fn sample_over(s: &OverdampedState) -> Sample {
    Sample {
        t: s.t,
        x: s.x(),
        log_gap: s.pos.log_gap(),
        v: None,
        energy: None,
    }
}

fn sample_under(s: &UnderdampedState) -> Sample {
    Sample {
        t: s.t,
        x: s.x(),
        log_gap: s.pos.log_gap(),
        v: Some(s.v),
        energy: Some(s.energy),
    }
}

/// Ensemble statistics of the energy-balance slack `E(t) - E(0) - (β/m) t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheckpoint {
    pub t: f64,
    pub paths: usize,
    pub mean_slack: f64,
    pub std_error: f64,
    /// Mean slack exceeds three standard errors.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub checkpoints: Vec<EnergyCheckpoint>,
    pub violations: usize,
}

/// Checks `E[E(t) - E(0)] <= (β/m) t` at every checkpoint over an ensemble.
///
/// Each inner slice holds one path's checkpoint samples, the first of which
/// must be taken at `t = 0`. Single paths may exceed the bound (the
/// martingale term has mean zero, not value zero); only the ensemble mean is
/// tested, against three standard errors.
pub fn energy_balance_check(paths: &[Vec<Sample>], m: f64, beta: f64) -> Result<EnergyBalance> {
    check_mass(m)?;
    let Some(first) = paths.first() else {
        return Ok(EnergyBalance {
            checkpoints: Vec::new(),
            violations: 0,
        });
    };
    let n_cp = first.len();
    let mut out = Vec::with_capacity(n_cp);
    for (k, first_k) in first.iter().enumerate() {
        let mut slacks = Vec::with_capacity(paths.len());
        let mut t_k = first_k.t;
        for p in paths {
            let (Some(s0), Some(sk)) = (p.first(), p.get(k)) else {
                continue;
            };
            let (Some(e0), Some(ek)) = (s0.energy, sk.energy) else {
                return Err(Error::contract(
                    "energy_balance_check",
                    "samples carry no energy (overdamped path?)",
                ));
            };
            t_k = sk.t;
            slacks.push(ek - e0 - beta / m * (sk.t - s0.t));
        }
        let n = slacks.len();
        let mean = slacks.iter().sum::<f64>() / n.max(1) as f64;
        let se = if n > 1 {
            let var = slacks.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        out.push(EnergyCheckpoint {
            t: t_k,
            paths: n,
            mean_slack: mean,
            std_error: se,
            violated: mean > 3.0 * se,
        });
    }
    let violations = out.iter().filter(|c| c.violated).count();
    Ok(EnergyBalance {
        checkpoints: out,
        violations,
    })
}

/// Writes samples as CSV with header `t,x` or `t,x,v,E`.
pub fn write_trajectory_csv<W: std::io::Write>(out: &mut W, samples: &[Sample]) -> Result<()> {
    let under = samples.first().is_some_and(|s| s.v.is_some());
    if under {
        writeln!(out, "t,x,v,E")?;
    } else {
        writeln!(out, "t,x")?;
    }
    for s in samples {
        match (s.v, s.energy) {
            (Some(v), Some(e)) if under => {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.x, v, e)?
            }
            _ => writeln!(out, "{:.16e},{:.16e}", s.t, s.x)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_models::NoiseModel;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Still;

    impl ForceField for Still {
        fn drift(&self, _x: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn potential(&self, _x: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn sigma(&self) -> f64 {
            0.0
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn cfg(dt: f64) -> StepConfig {
        StepConfig {
            dt,
            ..StepConfig::default()
        }
    }

    fn over(x: f64, dw: f64, model: &NoiseModel, c: &StepConfig) -> StepReport<OverdampedState> {
        let rule = ExitRule::full(model, c);
        step_overdamped(&OverdampedState::new(x).unwrap(), dw, model, c, &rule, None, &mut rng()).unwrap()
    }

    #[test]
    fn overdamped_examples() {
        let c = cfg(0.01);
        let rule = ExitRule::full(&Still, &c);
        let s = OverdampedState::new(0.3).unwrap();
        let r = step_overdamped(&s, 0.0, &Still, &c, &rule, None, &mut rng()).unwrap();
        assert_eq!(r.state.x(), 0.3);

        for q in [-2.0, 0.0, 0.5] {
            let m = NoiseModel::tsb(q).unwrap();
            assert_eq!(over(0.0, 0.0, &m, &c).state.x(), 0.0);
        }
        let m = NoiseModel::tsb(0.0).unwrap();
        let r = over(0.5, 0.0, &m, &c);
        assert_relative_eq!(r.state.x(), 0.5 - 0.04 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(r.state.x(), 0.486667, epsilon = 1e-6);
        assert_eq!(r.state.t, 0.01);
    }

    #[test]
    fn non_finite_increment_is_rejected() {
        let m = NoiseModel::tsb(0.0).unwrap();
        let c = cfg(0.01);
        let rule = ExitRule::full(&m, &c);
        let s = OverdampedState::new(0.0).unwrap();
        let err = step_overdamped(&s, f64::NAN, &m, &c, &rule, None, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "dW", .. }));
    }

    #[test]
    fn overshoot_is_refined_not_clipped() {
        // Kicks far past the boundary from the bulk end inside the interval,
        // no later than one base step.
        let c = cfg(1e-2);
        for model in [NoiseModel::alpha(0.5, 0.5).unwrap(), NoiseModel::tsb(0.5).unwrap()] {
            for dw in [0.5, 2.0, -3.0] {
                let r = over(0.7, dw, &model, &c);
                assert!(r.exit.is_none());
                assert!(r.state.pos.gap() > 0.0);
                assert!(r.state.t > 0.0 && r.state.t <= 0.01);
            }
        }
    }

    #[test]
    fn semi_implicit_matches_fixed_point() {
        let m = NoiseModel::tsb(0.0).unwrap();
        let c = StepConfig {
            dt: 0.01,
            scheme: Scheme::SemiImplicitDrift,
            ..StepConfig::default()
        };
        let r = over(0.5, 0.0, &m, &c);
        let y = r.state.x();
        assert_relative_eq!(y, 0.5 + m.drift(y).unwrap() * 0.01, max_relative = 1e-13);
    }

    #[test]
    fn underdamped_examples() {
        let m = NoiseModel::tsb(0.0).unwrap();
        let c = cfg(0.01);
        let s = UnderdampedState::new(0.0, 0.0, 1.0, &m).unwrap();
        let r = step_underdamped(&s, 0.0, 1.0, &m, &c, &mut rng()).unwrap();
        assert_eq!((r.state.x(), r.state.v), (0.0, 0.0));

        let s = UnderdampedState::new(0.0, 1.0, 1.0, &m).unwrap();
        let r = step_underdamped(&s, 0.0, 1.0, &m, &c, &mut rng()).unwrap();
        assert_relative_eq!(r.state.x(), 0.01, max_relative = 1e-15);
        assert_relative_eq!(r.state.v, 0.99, max_relative = 1e-15);
        assert!(step_underdamped(&s, 0.0, 0.0, &m, &c, &mut rng()).is_err());
    }

    #[test]
    fn deterministic_underdamped_energy_decreases() {
        // σ = 0 through the test double: a bowl potential with friction.
        struct Bowl;
        impl ForceField for Bowl {
            fn drift(&self, x: f64) -> Result<f64> {
                crate::noise_models::tsb_drift(x)
            }
            fn potential(&self, x: f64) -> Result<f64> {
                crate::noise_models::alpha_potential(x, 1.0)
            }
            fn sigma(&self) -> f64 {
                0.0
            }
        }
        let c = StepConfig {
            dt: 1e-3,
            horizon: 20.0,
            ..StepConfig::default()
        };
        let rule = ExitRule::full(&Bowl, &c);
        let rec = Recording {
            every: Some(0.05),
            ..Recording::default()
        };
        let out = simulate_path(0.2, 8.0, Dynamics::Underdamped { m: 0.5 }, &Bowl, &c, &rule, &rec, &mut rng())
            .unwrap();
        assert!(!out.result.exited);
        let e: Vec<f64> = out.trajectory.iter().map(|s| s.energy.unwrap()).collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "{} -> {}", w[0], w[1]);
        }
        assert!(e.last().unwrap() < &1e-3);
    }

    #[test]
    fn empty_run() {
        let m = NoiseModel::tsb(-1.0).unwrap();
        let c = StepConfig {
            horizon: 0.0,
            ..StepConfig::default()
        };
        let rule = ExitRule::full(&m, &c);
        let out =
            simulate_path(0.0, 0.0, Dynamics::Overdamped, &m, &c, &rule, &Recording::default(), &mut rng()).unwrap();
        assert!(!out.result.exited);
        assert_eq!(out.result.steps_taken, 0);
    }

    #[test]
    fn same_stream_same_path() {
        let m = NoiseModel::tsb(-1.0).unwrap();
        let c = StepConfig {
            horizon: 5.0,
            ..StepConfig::default()
        };
        let rule = ExitRule::full(&m, &c);
        let run = || {
            simulate_path(0.1, 0.0, Dynamics::Overdamped, &m, &c, &rule, &Recording::default(), &mut rng())
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn longer_horizon_extends_path() {
        let m = NoiseModel::tsb(0.0).unwrap();
        let rec = Recording {
            every: Some(0.01),
            ..Recording::default()
        };
        let run = |h: f64| {
            let c = StepConfig {
                horizon: h,
                dt: 1e-3,
                ..StepConfig::default()
            };
            let rule = ExitRule::full(&m, &c);
            simulate_path(0.0, 0.0, Dynamics::Overdamped, &m, &c, &rule, &rec, &mut rng()).unwrap()
        };
        let short = run(1.0);
        let long = run(2.0);
        assert_eq!(short.trajectory[..], long.trajectory[..short.trajectory.len()]);
    }

    #[test]
    fn layer_round_trip() {
        let p = Position::new(0.9).unwrap();
        assert!(matches!(p, Position::Layer { side: Side::Right, .. }));
        assert_relative_eq!(p.x(), 0.9, max_relative = 1e-15);
        let p = Position::new(-0.5).unwrap();
        assert_eq!(p, Position::Bulk(-0.5));
        let deep = Position::Layer {
            side: Side::Left,
            log_gap: -100.0,
        };
        assert_eq!(deep.x(), -1.0);
        assert_eq!(deep.log_gap(), -100.0);
        assert!(Position::new(1.0).is_err());
    }

    #[test]
    fn exit_rule_follows_attainability() {
        let c = StepConfig::default();
        assert!(ExitRule::full(&NoiseModel::tsb(-0.5).unwrap(), &c).detects_exits());
        assert!(!ExitRule::full(&NoiseModel::tsb(0.0).unwrap(), &c).detects_exits());
        assert!(!ExitRule::full(&NoiseModel::alpha(1.5, -1.0).unwrap(), &c).detects_exits());
        assert!(ExitRule::full(&NoiseModel::alpha(0.5, 0.5).unwrap(), &c).detects_exits());
        let sub = ExitRule::new(-0.5, 0.5, &NoiseModel::tsb(0.5).unwrap(), &c).unwrap();
        assert!(sub.detects_exits());
        assert!(ExitRule::new(0.5, -0.5, &Still, &c).is_err());
    }

    #[test]
    fn energy_balance_bookkeeping() {
        let mk = |t: f64, e: f64| Sample {
            t,
            x: 0.0,
            log_gap: 0.0,
            v: Some(0.0),
            energy: Some(e),
        };
        let paths = vec![vec![mk(0.0, 1.0), mk(1.0, 0.5)], vec![mk(0.0, 2.0), mk(1.0, 1.5)]];
        let r = energy_balance_check(&paths, 1.0, 0.0).unwrap();
        assert_eq!(r.checkpoints[0].mean_slack, 0.0);
        assert_eq!(r.checkpoints[1].mean_slack, -0.5);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn trajectory_csv_columns() {
        let s = Sample {
            t: 0.5,
            x: 0.25,
            log_gap: 0.75f64.ln(),
            v: Some(1.0),
            energy: Some(2.0),
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,v,E\n5.0000000000000000e-1,"));
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[Sample { v: None, energy: None, ..s }]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x\n"));
    }
}
