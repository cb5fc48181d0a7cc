//! Drift forces, potentials and energies on the interval `(-1, 1)`.
//!
//! Two force families are modelled:
//!
//! * the TSB force `φ(x) = -2x / (1 - x²)`, generated by two `1/r`
//!   repulsions centred at `∓1`;
//! * the α-family `φ^α(x) = (1 + x)^-α - (1 - x)^-α`, which reduces to the
//!   TSB force for `α = 1`.
//!
//! Both are paired with the constant noise amplitude `σ = √(2β)`, `β = 1 - q`.
//! The viscous rate is fixed to one throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tsallis parameter `q < 1` with the derived noise intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsbParams {
    q: f64,
}

impl TsbParams {
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() || q >= 1.0 {
            return Err(Error::param("q", q, "must be finite and < 1"));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `β = 1 - q`.
    pub fn beta(&self) -> f64 {
        1.0 - self.q
    }

    /// `σ = √(2β)`.
    pub fn sigma(&self) -> f64 {
        (2.0 * self.beta()).sqrt()
    }
}

/// Repulsion exponent `α > 0` together with the Tsallis parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    alpha: f64,
    tsb: TsbParams,
}

impl AlphaParams {
    pub fn new(alpha: f64, q: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::param("alpha", alpha, "must be finite and > 0"));
        }
        Ok(Self {
            alpha,
            tsb: TsbParams::new(q)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        self.tsb.q()
    }

    pub fn beta(&self) -> f64 {
        self.tsb.beta()
    }

    pub fn sigma(&self) -> f64 {
        self.tsb.sigma()
    }
}

/// Particle mass for the underdamped dynamics. The viscous rate `γ` is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassParams {
    m: f64,
}

impl MassParams {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::param("m", m, "must be finite and > 0"));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        1.0
    }
}

/// The force law driving a simulation or an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseModel {
    Tsb(TsbParams),
    Alpha(AlphaParams),
}

impl NoiseModel {
    pub fn tsb(q: f64) -> Result<Self> {
        Ok(NoiseModel::Tsb(TsbParams::new(q)?))
    }

    pub fn alpha(alpha: f64, q: f64) -> Result<Self> {
        Ok(NoiseModel::Alpha(AlphaParams::new(alpha, q)?))
    }

    pub fn q(&self) -> f64 {
        match self {
            NoiseModel::Tsb(p) => p.q(),
            NoiseModel::Alpha(p) => p.q(),
        }
    }

    /// Repulsion exponent; `1` for the TSB force.
    pub fn alpha_exponent(&self) -> f64 {
        match self {
            NoiseModel::Tsb(_) => 1.0,
            NoiseModel::Alpha(p) => p.alpha(),
        }
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.q()
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.beta()).sqrt()
    }

    pub fn drift(&self, x: f64) -> Result<f64> {
        match self {
            NoiseModel::Tsb(_) => tsb_drift(x),
            NoiseModel::Alpha(p) => alpha_drift(x, p.alpha()),
        }
    }

    pub fn potential(&self, x: f64) -> Result<f64> {
        alpha_potential(x, self.alpha_exponent())
    }

    /// Short label used in reports, e.g. `tsb(q=-1)`.
    pub fn label(&self) -> String {
        match self {
            NoiseModel::Tsb(p) => format!("tsb(q={})", p.q()),
            NoiseModel::Alpha(p) => format!("alpha(alpha={}, q={})", p.alpha(), p.q()),
        }
    }
}

/// What the time steppers need from a force law.
///
/// Implemented by [`NoiseModel`]; tests substitute simpler fields. The
/// `*_at_gap` forms take the distance `g = 1 - |x|` to the nearest boundary
/// and must stay accurate for `g` far below the spacing of doubles near one.
/// Every force here is odd, so the side does not enter.
pub trait ForceField: Sync {
    fn drift(&self, x: f64) -> Result<f64>;
    fn potential(&self, x: f64) -> Result<f64>;
    /// Noise amplitude multiplying the white noise.
    fn sigma(&self) -> f64;
    /// Noise intensity `σ²/2`.
    fn beta(&self) -> f64 {
        0.5 * self.sigma() * self.sigma()
    }
    /// Force pointing away from the nearest boundary, `-φ(1 - g)`.
    fn inward_force(&self, gap: f64) -> f64 {
        -self.drift(1.0 - gap).unwrap_or(f64::INFINITY)
    }
    /// `d/dg` of [`ForceField::inward_force`].
    fn inward_force_slope(&self, gap: f64) -> f64 {
        let h = 1e-6 * gap;
        (self.inward_force(gap + h) - self.inward_force(gap - h)) / (2.0 * h)
    }
    fn potential_at_gap(&self, gap: f64) -> f64 {
        self.potential(1.0 - gap).unwrap_or(f64::INFINITY)
    }
    /// Whether the overdamped process reaches `±1` in finite time.
    fn boundary_attainable(&self) -> bool {
        false
    }
}

impl ForceField for NoiseModel {
    fn drift(&self, x: f64) -> Result<f64> {
        NoiseModel::drift(self, x)
    }

    fn potential(&self, x: f64) -> Result<f64> {
        NoiseModel::potential(self, x)
    }

    fn sigma(&self) -> f64 {
        NoiseModel::sigma(self)
    }

    fn beta(&self) -> f64 {
        NoiseModel::beta(self)
    }

    fn inward_force(&self, gap: f64) -> f64 {
        let a = self.alpha_exponent();
        if a == 1.0 {
            2.0 * (1.0 - gap) / (gap * (2.0 - gap))
        } else {
            gap.powf(-a) - (2.0 - gap).powf(-a)
        }
    }

    fn inward_force_slope(&self, gap: f64) -> f64 {
        let a = self.alpha_exponent();
        if a == 1.0 {
            let d = gap * (2.0 - gap);
            -2.0 * (gap * gap - 2.0 * gap + 2.0) / (d * d)
        } else {
            -a * (gap.powf(-a - 1.0) + (2.0 - gap).powf(-a - 1.0))
        }
    }

    fn potential_at_gap(&self, gap: f64) -> f64 {
        if gap >= 0.5 {
            return self.potential(1.0 - gap).unwrap_or(f64::INFINITY);
        }
        let a = self.alpha_exponent();
        if a == 1.0 {
            -(gap.ln() + (2.0 - gap).ln())
        } else {
            let e = 1.0 - a;
            ((2.0 - gap).powf(e) + gap.powf(e) - 2.0) / (a - 1.0)
        }
    }

    fn boundary_attainable(&self) -> bool {
        let a = self.alpha_exponent();
        if a == 1.0 {
            self.q() < 0.0
        } else {
            a < 1.0
        }
    }
}

#[inline]
fn check_open_interval(quantity: &'static str, x: f64) -> Result<()> {
    if x.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(
            quantity,
            format!("x = {x} is outside the open interval (-1, 1)"),
        ))
    }
}

/// TSB drift `-2x / (1 - x²)`.
#[inline]
pub fn tsb_drift(x: f64) -> Result<f64> {
    check_open_interval("tsb_drift", x)?;
    Ok(-2.0 * x / ((1.0 - x) * (1.0 + x)))
}

/// α-family drift `(1 + x)^-α - (1 - x)^-α`. `alpha == 1` evaluates the TSB
/// expression itself.
#[inline]
pub fn alpha_drift(x: f64, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return tsb_drift(x);
    }
    check_alpha(alpha)?;
    check_open_interval("alpha_drift", x)?;
    Ok((1.0 + x).powf(-alpha) - (1.0 - x).powf(-alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", alpha, "must be finite and > 0"))
    }
}

/// Potential `U^α` normalised so that `U^α(0) = 0`.
///
/// For `α < 1` the potential stays finite at `±1` and those values are
/// returned; for `α >= 1` the endpoints are a domain error.
pub fn alpha_potential(x: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        check_open_interval("alpha_potential", x)?;
        return Ok(-((-x).ln_1p() + x.ln_1p()));
    }
    if alpha > 1.0 {
        check_open_interval("alpha_potential", x)?;
    } else if x.is_nan() || x.abs() > 1.0 {
        return Err(Error::domain(
            "alpha_potential",
            format!("x = {x} is outside the closed interval [-1, 1]"),
        ));
    }
    let e = 1.0 - alpha;
    Ok(((1.0 + x).powf(e) + (1.0 - x).powf(e) - 2.0) / (alpha - 1.0))
}

/// Total energy `U^α(x) + m v² / 2`.
pub fn total_energy(x: f64, v: f64, m: f64, alpha: f64) -> Result<f64> {
    let mass = MassParams::new(m)?;
    Ok(alpha_potential(x, alpha)? + 0.5 * mass.m() * v * v)
}
