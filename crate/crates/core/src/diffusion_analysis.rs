//! One-dimensional diffusion machinery on `(-1, 1)`: scale function, speed
//! measure, Green's function, exit probabilities and mean exit times, all
//! by deterministic quadrature.
//!
//! For `dx = φ(x) dt + σ dW` with `φ = -U'` and `σ² = 2β` the scale density
//! referenced at zero is `s'(z) = exp(U(z)/β)` and the speed density is
//! `m(y) = 2 / (s'(y) σ²) = exp(-U(y)/β) / β`. For the TSB force these are
//! `(1 - z²)^(-1/β)` and `(1 - y²)^(1/β) / β`.
//!
//! # Endpoint handling
//!
//! `s(x)` for `x > 1/2` is integrated in the variable `u = 1 - z`, mapped so
//! that the integrand becomes smooth:
//!
//! * TSB with `q < 0` (`p = 1/β < 1`): `u = w^k`, `k = β/(β-1)`, which turns
//!   `u^-p du` into `k dw`; the integral up to `x = 1` is then proper.
//! * α < 1: `u = w^k`, `k = 1/(1-α)`, which makes `u^(1-α)` linear in `w`.
//! * TSB with `q >= 0` and α > 1: `u = e^t`. The endpoint value is infinite
//!   and is never integrated.
//!
//! Whether `s(±1)` is finite is decided analytically (`p >= 1` for TSB,
//! `α > 1` for the α-family) and never from the size of a quadrature value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_models::NoiseModel;
use crate::quadrature::{converge, GaussLegendre, Grading};

pub use crate::quadrature::QuadratureConfig;

/// A real number or one of `±∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    fn negate(self) -> Self {
        match self {
            ExtendedReal::NegInf => ExtendedReal::PosInf,
            ExtendedReal::PosInf => ExtendedReal::NegInf,
            ExtendedReal::Finite(v) => ExtendedReal::Finite(-v),
        }
    }

    fn affine(self, factor: f64, offset: f64) -> Self {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(factor * (v - offset)),
            other => other,
        }
    }
}

impl std::fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::NegInf => write!(f, "-inf"),
            ExtendedReal::PosInf => write!(f, "+inf"),
            ExtendedReal::Finite(v) => write!(f, "{v:.17e}"),
        }
    }
}

/// Qualitative behaviour of the overdamped process at `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// TSB (or α = 1) with `q ∈ [0, 1)`: the boundaries are never reached.
    Bounded,
    /// TSB (or α = 1) with `q < 0`: a boundary is reached in finite time.
    Exits,
    /// α > 1: bounded for every `q < 1`.
    AlphaGt1Bounded,
    /// α < 1: the potential is finite at `±1`, there is no well.
    AlphaLt1NoWell,
}

impl Regime {
    pub fn describe(&self) -> &'static str {
        match self {
            Regime::Bounded => "bounded",
            Regime::Exits => "exits",
            Regime::AlphaGt1Bounded => "alpha>1 bounded",
            Regime::AlphaLt1NoWell => "no potential well",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub left_attainable: bool,
    pub right_attainable: bool,
    pub s_left: ExtendedReal,
    pub s_right: ExtendedReal,
    pub regime: Regime,
}

impl BoundaryReport {
    /// One-line human summary, e.g.
    /// `attainable both; s(-1)=-1.5707963 s(+1)=1.5707963; regime=exits`.
    pub fn summary(&self) -> String {
        let att = match (self.left_attainable, self.right_attainable) {
            (true, true) => "attainable both".to_string(),
            (false, false) => "unattainable both".to_string(),
            (l, r) => format!(
                "left {}, right {}",
                if l { "attainable" } else { "unattainable" },
                if r { "attainable" } else { "unattainable" }
            ),
        };
        format!(
            "{att}; s(-1)={} s(+1)={}; regime={}",
            short(self.s_left),
            short(self.s_right),
            self.regime.describe()
        )
    }
}

fn short(v: ExtendedReal) -> String {
    match v {
        ExtendedReal::Finite(x) => format!("{x:.6}"),
        other => other.to_string(),
    }
}

/// Change of variables used for the part of `s` between `1/2` and `1`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EndpointMap {
    /// `u = w^k`.
    Power { k: f64 },
    /// `u = e^t`.
    Log,
}

/// Scale density `s'(z) = exp(U(z)/β)` referenced at zero.
fn scale_density_at(model: &NoiseModel, z: f64) -> Result<f64> {
    let beta = model.beta();
    match model.alpha_exponent() {
        1.0 => {
            if z.abs() >= 1.0 {
                return Err(Error::domain("scale_density", format!("z = {z} outside (-1, 1)")));
            }
            Ok(((1.0 - z) * (1.0 + z)).powf(-1.0 / beta))
        }
        _ => Ok((model.potential(z)? / beta).exp()),
    }
}

/// Speed density `m(y) = exp(-U(y)/β) / β`.
///
/// Defined on the closed interval: at `±1` it is `0` whenever the potential
/// diverges there, and the finite limit for α < 1.
pub fn speed_density(y: f64, model: &NoiseModel) -> Result<f64> {
    if y.is_nan() || y.abs() > 1.0 {
        return Err(Error::domain("speed_density", format!("y = {y} outside [-1, 1]")));
    }
    let beta = model.beta();
    let alpha = model.alpha_exponent();
    if alpha == 1.0 {
        return Ok(((1.0 - y) * (1.0 + y)).powf(1.0 / beta) / beta);
    }
    if y.abs() == 1.0 && alpha > 1.0 {
        return Ok(0.0);
    }
    Ok((-model.potential(y)? / beta).exp() / beta)
}

/// Scale function of a model, referenced at `c` (zero by default).
///
/// Construction settles the panel counts needed for `rel_tol` once; every
/// later evaluation reuses them, so repeated calls (as inside the mean exit
/// time integral) cost a single composite rule each. Immutable after
/// construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    model: NoiseModel,
    cfg: QuadratureConfig,
    rule: GaussLegendre,
    map: EndpointMap,
    inner_panels: usize,
    s_half: f64,
    /// Panels per unit length of the mapped variable for the outer part.
    outer_density: f64,
    /// `s_0(1)` (referenced at zero).
    s_one: ExtendedReal,
    reference: f64,
    factor: f64,
    offset: f64,
}

impl ScaleFunction {
    pub fn new(model: &NoiseModel, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let rule = GaussLegendre::new(cfg.nodes_per_panel);
        let beta = model.beta();
        let alpha = model.alpha_exponent();
        let map = if alpha == 1.0 {
            let p = 1.0 / beta;
            if p < 1.0 {
                EndpointMap::Power { k: beta / (beta - 1.0) }
            } else {
                EndpointMap::Log
            }
        } else if alpha < 1.0 {
            EndpointMap::Power { k: 1.0 / (1.0 - alpha) }
        } else {
            EndpointMap::Log
        };

        let mut inner = |z: f64| scale_density_at(model, z);
        let c = converge("scale function", cfg, |k| rule.composite(&mut inner, 0.0, 0.5, k))?;
        let mut sf = Self {
            model: *model,
            cfg: *cfg,
            rule,
            map,
            inner_panels: c.panels,
            s_half: c.value,
            outer_density: 0.0,
            s_one: ExtendedReal::PosInf,
            reference: 0.0,
            factor: 1.0,
            offset: 0.0,
        };

        let x_cal = match map {
            EndpointMap::Power { .. } => 1.0,
            EndpointMap::Log => sf.calibration_point()?,
        };
        let (lo, hi) = sf.mapped_range(x_cal);
        let c = converge("scale function", cfg, |k| sf.outer_integral(lo, hi, k))?;
        sf.outer_density = c.panels as f64 / (hi - lo);
        if let EndpointMap::Power { .. } = map {
            sf.s_one = ExtendedReal::Finite(sf.s_half + c.value);
        }
        Ok(sf)
    }

    /// Same function re-referenced at `c`: `s_c(x) = e^{-U(c)/β} (s_0(x) - s_0(c))`.
    pub fn with_reference(&self, c: f64) -> Result<Self> {
        if c.is_nan() || c.abs() >= 1.0 {
            return Err(Error::domain("scale reference", format!("c = {c} outside (-1, 1)")));
        }
        let base = Self {
            reference: 0.0,
            factor: 1.0,
            offset: 0.0,
            ..self.clone()
        };
        let offset = base
            .eval(c)?
            .finite()
            .ok_or_else(|| Error::numerical("scale function", "non-finite value at the reference point"))?;
        Ok(Self {
            reference: c,
            factor: 1.0 / scale_density_at(&self.model, c)?,
            offset,
            ..base
        })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Largest point of the form `1 - 10^-j` at which the scale density is
    /// still comfortably finite.
    fn calibration_point(&self) -> Result<f64> {
        let candidates = [
            1.0 - self.cfg.endpoint_offset,
            1.0 - 1e-5,
            1.0 - 1e-4,
            1.0 - 1e-3,
            1.0 - 1e-2,
            0.9,
            0.75,
        ];
        for x in candidates {
            let d = scale_density_at(&self.model, x)?;
            if d.is_finite() && d < 1e200 {
                return Ok(x);
            }
        }
        Ok(0.6)
    }

    /// Mapped-variable range covering `z ∈ [1/2, x]`.
    fn mapped_range(&self, x: f64) -> (f64, f64) {
        let u_hi: f64 = 0.5;
        let u_lo = 1.0 - x;
        match self.map {
            EndpointMap::Power { k } => (u_lo.powf(1.0 / k), u_hi.powf(1.0 / k)),
            EndpointMap::Log => (u_lo.ln(), u_hi.ln()),
        }
    }

    /// Integrand of the outer part in the mapped variable.
    fn mapped_integrand(&self, w: f64) -> Result<f64> {
        let beta = self.model.beta();
        let tsb = self.model.alpha_exponent() == 1.0;
        match self.map {
            EndpointMap::Power { k } => {
                let u = w.powf(k);
                if tsb {
                    Ok(k * (2.0 - u).powf(-1.0 / beta))
                } else {
                    Ok(scale_density_at(&self.model, 1.0 - u)? * k * w.powf(k - 1.0))
                }
            }
            EndpointMap::Log => {
                let u = w.exp();
                if tsb {
                    let p = 1.0 / beta;
                    Ok((2.0 - u).powf(-p) * (w * (1.0 - p)).exp())
                } else {
                    Ok(scale_density_at(&self.model, 1.0 - u)? * u)
                }
            }
        }
    }

    fn outer_integral(&self, lo: f64, hi: f64, panels: usize) -> Result<f64> {
        let mut f = |w: f64| self.mapped_integrand(w);
        self.rule.composite(&mut f, lo, hi, panels)
    }

    /// `s_0(x)` for `x ∈ [0, 1]`.
    fn eval_unit(&self, x: f64) -> Result<ExtendedReal> {
        if x == 0.0 {
            return Ok(ExtendedReal::Finite(0.0));
        }
        if x <= 0.5 {
            let mut f = |z: f64| scale_density_at(&self.model, z);
            let v = self.rule.composite(&mut f, 0.0, x, self.inner_panels)?;
            return Ok(ExtendedReal::Finite(v));
        }
        if x == 1.0 {
            return Ok(self.s_one);
        }
        let (lo, hi) = self.mapped_range(x);
        let panels = ((self.outer_density * (hi - lo)).ceil() as usize).max(1);
        let v = self.s_half + self.outer_integral(lo, hi, panels)?;
        if !v.is_finite() {
            return Err(Error::numerical(
                "scale function",
                format!("s({x}) overflows double precision"),
            ));
        }
        Ok(ExtendedReal::Finite(v))
    }

    /// `s(x)` on the closed interval; `±∞` where the improper integral diverges.
    pub fn eval(&self, x: f64) -> Result<ExtendedReal> {
        if x.is_nan() || x.abs() > 1.0 {
            return Err(Error::domain("scale", format!("x = {x} outside [-1, 1]")));
        }
        // Every model here has an even potential, so s_0 is odd.
        let s0 = if x < 0.0 {
            self.eval_unit(-x)?.negate()
        } else {
            self.eval_unit(x)?
        };
        Ok(s0.affine(self.factor, self.offset))
    }

    /// `s(x)` for points where it must be finite.
    pub fn eval_finite(&self, x: f64) -> Result<f64> {
        self.eval(x)?.finite().ok_or_else(|| {
            Error::domain(
                "scale",
                format!(
                    "s({x}) is infinite for {}; the boundary is unattainable (see classify_boundaries)",
                    self.model.label()
                ),
            )
        })
    }

    /// `s'(x)` in the current reference.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(self.factor * scale_density_at(&self.model, x)?)
    }

    /// `s(±1)` (left, right).
    pub fn endpoints(&self) -> Result<(ExtendedReal, ExtendedReal)> {
        Ok((self.eval(-1.0)?, self.eval(1.0)?))
    }

    /// Probabilities of leaving `(a, b)` through `a` and through `b`.
    pub fn exit_probabilities(&self, x0: f64, a: f64, b: f64) -> Result<(f64, f64)> {
        check_interval("exit_probabilities", x0, a, b)?;
        let sa = self.eval_finite(a)?;
        let sb = self.eval_finite(b)?;
        let sx = self.eval_finite(x0)?;
        let span = sb - sa;
        let left = ((sb - sx) / span).clamp(0.0, 1.0);
        let right = ((sx - sa) / span).clamp(0.0, 1.0);
        Ok((left, right))
    }

    /// Green's function `G_{a,b}(x, y)` of the killed process.
    pub fn greens_function(&self, x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
        if !(a < b) || a < -1.0 || b > 1.0 {
            return Err(Error::contract(
                "greens_function",
                format!("need -1 <= a < b <= 1, got a = {a}, b = {b}"),
            ));
        }
        for (name, v) in [("x", x), ("y", y)] {
            if !(a..=b).contains(&v) {
                return Err(Error::contract(
                    "greens_function",
                    format!("{name} = {v} outside [{a}, {b}]"),
                ));
            }
        }
        let sa = self.eval_finite(a)?;
        let sb = self.eval_finite(b)?;
        let lo = self.eval_finite(x.min(y))?;
        let hi = self.eval_finite(x.max(y))?;
        Ok(((lo - sa) * (sb - hi) / (sb - sa)).max(0.0))
    }

    /// Mean exit time `M_{a,b}(x0) = ∫_a^b G_{a,b}(x0, y) m(dy)`.
    ///
    /// The integral is split at `x0`, where the Green's function has a kink:
    ///
    /// `M = [(s_b - s_x) ∫_a^x (s(y) - s_a) m(y) dy + (s_x - s_a) ∫_x^b (s_b - s(y)) m(y) dy] / (s_b - s_a)`.
    pub fn mean_exit_time(&self, x0: f64, a: f64, b: f64) -> Result<f64> {
        check_interval("mean_exit_time", x0, a, b)?;
        let sa = self.eval_finite(a)?;
        let sb = self.eval_finite(b)?;
        if x0 == a || x0 == b {
            return Ok(0.0);
        }
        let sx = self.eval_finite(x0)?;
        // The α-family with α < 1 has u^(1-α) cusps at ±1; TSB integrands are
        // smooth up to the boundary.
        let cusp = self.model.alpha_exponent() < 1.0;
        let grade = |at_left: bool, at_right: bool| match (cusp && at_left, cusp && at_right) {
            (true, true) => Grading::Both,
            (true, false) => Grading::Left,
            (false, true) => Grading::Right,
            (false, false) => Grading::None,
        };

        let m_ref = self.factor;
        let mut left_f = |y: f64| -> Result<f64> {
            Ok((self.eval_finite(y)? - sa) * speed_density(y, &self.model)? / m_ref)
        };
        let g_left = grade(a == -1.0, false);
        let left = converge("mean exit time", &self.cfg, |k| {
            self.rule.graded(&mut left_f, a, x0, g_left, k)
        })?
        .value;

        let mut right_f = |y: f64| -> Result<f64> {
            Ok((sb - self.eval_finite(y)?) * speed_density(y, &self.model)? / m_ref)
        };
        let g_right = grade(false, b == 1.0);
        let right = converge("mean exit time", &self.cfg, |k| {
            self.rule.graded(&mut right_f, x0, b, g_right, k)
        })?
        .value;

        let m = ((sb - sx) * left + (sx - sa) * right) / (sb - sa);
        if !m.is_finite() || m < 0.0 {
            return Err(Error::numerical(
                "mean exit time",
                format!("invalid value {m} at x0 = {x0}"),
            ));
        }
        Ok(m)
    }
}

impl ScaleFunction {
    /// Tabulates the derivative of `x ↦ M_{a,b}(x)`.
    pub fn mean_exit_gradient(&self, a: f64, b: f64) -> Result<MeanExitGradient> {
        check_interval("mean_exit_gradient", a, a, b)?;
        let sa = self.eval_finite(a)?;
        let sb = self.eval_finite(b)?;
        let m_ref = self.factor;
        let grading = match (self.model.alpha_exponent() < 1.0, a == -1.0, b == 1.0) {
            (true, true, true) => Grading::Both,
            (true, true, false) => Grading::Left,
            (true, false, true) => Grading::Right,
            _ => Grading::None,
        };
        let mut f = |y: f64| -> Result<f64> {
            Ok((sb - self.eval_finite(y)?) * speed_density(y, &self.model)? / m_ref)
        };
        let c = converge("mean exit gradient", &self.cfg, |k| self.rule.graded(&mut f, a, b, grading, k))?
            .value
            / (sb - sa);

        let n = GRADIENT_CELLS;
        let node = |i: usize| {
            let t = -(std::f64::consts::PI * i as f64 / n as f64).cos();
            (0.5 * (a + b) + 0.5 * (b - a) * t).clamp(a, b)
        };
        let mut m = |y: f64| -> Result<f64> { Ok(speed_density(y, &self.model)? / m_ref) };
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.rule.panel(&mut m, node(i), node(i + 1))?;
            cum.push(acc);
        }
        Ok(MeanExitGradient {
            scale: self.clone(),
            a,
            b,
            c,
            cum,
        })
    }
}

const GRADIENT_CELLS: usize = 4096;

/// `M'_{a,b}(x) = s'(x) (C - ∫_a^x m(y) dy)` with
/// `C = ∫_a^b (s_b - s(y)) m(y) dy / (s_b - s_a)`, from a cumulative table
/// of the speed measure on Chebyshev-spaced cells.
#[derive(Debug, Clone)]
pub struct MeanExitGradient {
    scale: ScaleFunction,
    a: f64,
    b: f64,
    c: f64,
    cum: Vec<f64>,
}

impl MeanExitGradient {
    /// Zero outside `(a, b)` and where `x` has rounded onto `±1`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(self.a < x && x < self.b) {
            return 0.0;
        }
        let Ok(ds) = self.scale.derivative(x) else {
            return 0.0;
        };
        let n = self.cum.len() - 1;
        let t = ((2.0 * x - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0);
        let pos = (-t).acos() / std::f64::consts::PI * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let w = pos - i as f64;
        let mass = self.cum[i] + w * (self.cum[i + 1] - self.cum[i]);
        ds * (self.c - mass)
    }
}

fn check_interval(operation: &'static str, x0: f64, a: f64, b: f64) -> Result<()> {
    let ok = a >= -1.0 && b <= 1.0 && a < b && a <= x0 && x0 <= b;
    if ok {
        Ok(())
    } else {
        Err(Error::contract(
            operation,
            format!("need -1 <= a <= x0 <= b <= 1 with a < b, got a = {a}, x0 = {x0}, b = {b}"),
        ))
    }
}

/// `s(x)` for a model, referenced at zero.
pub fn scale(x: f64, model: &NoiseModel, cfg: &QuadratureConfig) -> Result<ExtendedReal> {
    ScaleFunction::new(model, cfg)?.eval(x)
}

/// Attainability of `±1` for the overdamped dynamics.
///
/// The verdict comes from the analytic divergence criteria; the quadrature
/// only supplies the endpoint values.
pub fn classify_boundaries(model: &NoiseModel, cfg: &QuadratureConfig) -> Result<BoundaryReport> {
    let sf = ScaleFunction::new(model, cfg)?;
    let (s_left, s_right) = sf.endpoints()?;
    let alpha = model.alpha_exponent();
    let regime = if alpha > 1.0 {
        Regime::AlphaGt1Bounded
    } else if alpha < 1.0 {
        Regime::AlphaLt1NoWell
    } else if model.q() >= 0.0 {
        Regime::Bounded
    } else {
        Regime::Exits
    };
    let attainable = matches!(regime, Regime::Exits | Regime::AlphaLt1NoWell);
    if attainable != (s_left.is_finite() && s_right.is_finite()) {
        return Err(Error::numerical(
            "classify_boundaries",
            "endpoint scale values disagree with the analytic classification",
        ));
    }
    Ok(BoundaryReport {
        left_attainable: attainable,
        right_attainable: attainable,
        s_left,
        s_right,
        regime,
    })
}

/// `(P[exit at a], P[exit at b])` starting from `x0`.
pub fn exit_probabilities(
    x0: f64,
    a: f64,
    b: f64,
    model: &NoiseModel,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    ScaleFunction::new(model, cfg)?.exit_probabilities(x0, a, b)
}

pub fn greens_function(
    x: f64,
    y: f64,
    a: f64,
    b: f64,
    model: &NoiseModel,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    ScaleFunction::new(model, cfg)?.greens_function(x, y, a, b)
}

pub fn mean_exit_time(
    x0: f64,
    a: f64,
    b: f64,
    model: &NoiseModel,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    ScaleFunction::new(model, cfg)?.mean_exit_time(x0, a, b)
}

/// Largest residual `|φ M' + β M'' + 1|` of a candidate mean-exit-time
/// function on `grid`, using central differences with step `h`.
///
/// Every stencil `[x - h, x + h]` must lie strictly inside `(a, b)`.
pub fn ode_residual<M>(
    mean_time: M,
    model: &NoiseModel,
    interval: (f64, f64),
    grid: &[f64],
    h: f64,
) -> Result<f64>
where
    M: Fn(f64) -> Result<f64>,
{
    let (a, b) = interval;
    if !(h > 0.0) {
        return Err(Error::param("h", h, "must be > 0"));
    }
    if !(a >= -1.0 && b <= 1.0 && a < b) {
        return Err(Error::contract(
            "ode_residual",
            format!("interval ({a}, {b}) is not a sub-interval of [-1, 1]"),
        ));
    }
    let beta = model.beta();
    let mut worst: f64 = 0.0;
    for &x in grid {
        if !(x - h > a && x + h < b) {
            return Err(Error::contract(
                "ode_residual",
                format!("stencil around x = {x} with h = {h} touches the boundary of ({a}, {b})"),
            ));
        }
        let mp = mean_time(x + h)?;
        let m0 = mean_time(x)?;
        let mm = mean_time(x - h)?;
        let d1 = (mp - mm) / (2.0 * h);
        let d2 = (mp - 2.0 * m0 + mm) / (h * h);
        let r = (model.drift(x)? * d1 + beta * d2 + 1.0).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `C(q) = -q E[T(0)]` for the TSB process on `(-1, 1)`.
pub fn c_of_q(q: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(q < 0.0) || !q.is_finite() {
        return Err(Error::param("q", q, "C(q) is defined for q < 0"));
    }
    let model = NoiseModel::tsb(q)?;
    Ok(-q * mean_exit_time(0.0, -1.0, 1.0, &model, cfg)?)
}

/// `√(2(1-q)) |1/x + 2x/(1-x²)|`; the overdamped reduction is reasonable
/// where this is much smaller than one. Returns `+∞` at `x = 0`.
pub fn smoluchowski_margin(x: f64, q: f64) -> Result<f64> {
    let p = crate::noise_models::TsbParams::new(q)?;
    if x.is_nan() || x.abs() >= 1.0 {
        return Err(Error::domain("smoluchowski_margin", format!("x = {x} outside (-1, 1)")));
    }
    if x == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(p.sigma() * (1.0 / x + 2.0 * x / ((1.0 - x) * (1.0 + x))).abs())
}
