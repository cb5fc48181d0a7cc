//! Stationary densities of the bounded-noise models, normalised by
//! quadrature, and their comparison with histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monte_carlo::Histogram;
use crate::noise_models::alpha_potential;
use crate::quadrature::{converge, GaussLegendre, Grading, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensityFamily {
    /// `ρ_q(z) ∝ (1 - (1-q)/(3-q) (z/σ)²)^{1/(1-q)}` on its compact support.
    Tsallis { q: f64, sigma_t: f64 },
    /// `∝ (1 - x²)^{1/(1-q)}` on `(-1, 1)`.
    TsbOverdamped { q: f64 },
    /// `∝ exp(-m v² / (2(1-q))) (1 - x²)^{1/(1-q)}`.
    PhaseSpace { q: f64, m: f64 },
    /// `∝ exp(-U^α(x) / (1-q))` for `α > 1`.
    AlphaFamily { alpha: f64, q: f64 },
}

impl DensityFamily {
    fn q(&self) -> f64 {
        match *self {
            DensityFamily::Tsallis { q, .. }
            | DensityFamily::TsbOverdamped { q }
            | DensityFamily::PhaseSpace { q, .. }
            | DensityFamily::AlphaFamily { q, .. } => q,
        }
    }

    fn validate(&self) -> Result<()> {
        let q = self.q();
        if q.is_nan() || q >= 1.0 {
            return Err(Error::Unsupported(format!(
                "stationary densities need q < 1 (got q = {q}); the power-law branch q in (1, 3) is not modelled"
            )));
        }
        match *self {
            DensityFamily::Tsallis { sigma_t, .. } if !(sigma_t > 0.0 && sigma_t.is_finite()) => {
                Err(Error::param("sigma_t", sigma_t, "must be finite and > 0"))
            }
            DensityFamily::PhaseSpace { m, .. } if !(m > 0.0 && m.is_finite()) => {
                Err(Error::param("m", m, "must be finite and > 0"))
            }
            DensityFamily::AlphaFamily { alpha, .. } if !(alpha > 1.0 && alpha.is_finite()) => {
                Err(Error::Unsupported(format!(
                    "alpha_density needs alpha > 1 (got {alpha}); alpha = 1 is the TSB density"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// `σ` for which the Tsallis density lives on `(-1, 1)` and coincides with
/// the overdamped TSB density.
pub fn tsb_sigma_t(q: f64) -> f64 {
    ((1.0 - q) / (3.0 - q)).sqrt()
}

/// A normalised stationary density; the constant is computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    family: DensityFamily,
    cfg: QuadratureConfig,
    rule: GaussLegendre,
    /// Multiplies the unnormalised position density.
    norm: f64,
    /// Multiplies the unnormalised velocity factor (phase space only).
    v_norm: f64,
}

impl DensitySpec {
    pub fn new(family: DensityFamily, cfg: &QuadratureConfig) -> Result<Self> {
        family.validate()?;
        cfg.validate()?;
        let mut d = Self {
            family,
            cfg: *cfg,
            rule: GaussLegendre::new(cfg.nodes_per_panel),
            norm: 1.0,
            v_norm: 1.0,
        };
        let (lo, hi) = d.support();
        let z = d.raw_mass(lo, hi)?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::numerical("normalisation", format!("constant {z} for {family:?}")));
        }
        d.norm = 1.0 / z;
        if let Some(sd) = d.velocity_sd() {
            let mut f = |v: f64| Ok(d.velocity_factor(v));
            let zv = converge("velocity normalisation", cfg, |k| {
                d.rule.composite(&mut f, -12.0 * sd, 12.0 * sd, k)
            })?
            .value;
            d.v_norm = 1.0 / zv;
        }
        Ok(d)
    }

    pub fn family(&self) -> DensityFamily {
        self.family
    }

    /// Constant `A` with `density = A · unnormalised`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Support of the position density.
    pub fn support(&self) -> (f64, f64) {
        match self.family {
            DensityFamily::Tsallis { q, sigma_t } => {
                let l = sigma_t * ((3.0 - q) / (1.0 - q)).sqrt();
                (-l, l)
            }
            _ => (-1.0, 1.0),
        }
    }

    fn exponent(&self) -> f64 {
        1.0 / (1.0 - self.family.q())
    }

    fn unnormalized(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x > lo && x < hi) {
            return 0.0;
        }
        match self.family {
            DensityFamily::Tsallis { .. } => {
                let u = x / hi;
                (self.exponent() * (-u * u).ln_1p()).exp()
            }
            DensityFamily::TsbOverdamped { .. } | DensityFamily::PhaseSpace { .. } => {
                (self.exponent() * ((1.0 - x) * (1.0 + x)).ln()).exp()
            }
            DensityFamily::AlphaFamily { alpha, q } => match alpha_potential(x, alpha) {
                Ok(u) => (-u / (1.0 - q)).exp(),
                Err(_) => 0.0,
            },
        }
    }

    /// Position density (the `x`-marginal for phase space); zero outside the
    /// support. Underflows to exactly zero near `±1` for the α-family.
    pub fn pdf(&self, x: f64) -> f64 {
        self.norm * self.unnormalized(x)
    }

    fn velocity_sd(&self) -> Option<f64> {
        match self.family {
            DensityFamily::PhaseSpace { q, m } => Some(((1.0 - q) / m).sqrt()),
            _ => None,
        }
    }

    fn velocity_factor(&self, v: f64) -> f64 {
        match self.family {
            DensityFamily::PhaseSpace { q, m } => (-m * v * v / (2.0 * (1.0 - q))).exp(),
            _ => 1.0,
        }
    }

    /// Velocity marginal (phase space only).
    pub fn velocity_pdf(&self, v: f64) -> Option<f64> {
        self.velocity_sd().map(|_| self.v_norm * self.velocity_factor(v))
    }

    /// `(1 - q)/m` (phase space only).
    pub fn velocity_variance(&self) -> Option<f64> {
        self.velocity_sd().map(|s| s * s)
    }

    /// Joint density `ρ(x, v)`; contract error for position-only families.
    pub fn pdf_xv(&self, x: f64, v: f64) -> Result<f64> {
        match self.velocity_pdf(v) {
            Some(pv) => Ok(self.pdf(x) * pv),
            None => Err(Error::contract("pdf_xv", "only the phase-space family has a velocity")),
        }
    }

    fn grading(&self, lo: f64, hi: f64) -> Grading {
        let (s_lo, s_hi) = self.support();
        let cusp = !matches!(self.family, DensityFamily::AlphaFamily { .. });
        match (cusp && lo <= s_lo, cusp && hi >= s_hi) {
            (true, true) => Grading::Both,
            (true, false) => Grading::Left,
            (false, true) => Grading::Right,
            (false, false) => Grading::None,
        }
    }

    fn raw_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        let (s_lo, s_hi) = self.support();
        let (lo, hi) = (lo.max(s_lo), hi.min(s_hi));
        if !(lo < hi) {
            return Ok(0.0);
        }
        let g = self.grading(lo, hi);
        let mut f = |x: f64| Ok(self.unnormalized(x));
        Ok(converge("density mass", &self.cfg, |k| self.rule.graded(&mut f, lo, hi, g, k))?.value)
    }

    /// Probability of `[lo, hi]` under the position density.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.norm * self.raw_mass(lo, hi)?)
    }

    /// Integral over the support (phase space: over `x` and `v`).
    pub fn total_mass(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        let mx = self.mass(lo, hi)?;
        match self.velocity_sd() {
            Some(sd) => {
                let mut f = |v: f64| Ok(self.velocity_pdf(v).unwrap_or(0.0));
                let mv = converge("velocity mass", &self.cfg, |k| {
                    self.rule.composite(&mut f, -12.0 * sd, 12.0 * sd, k)
                })?
                .value;
                Ok(mx * mv)
            }
            None => Ok(mx),
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let (lo, _) = self.support();
        Ok(self.mass(lo, x)?.clamp(0.0, 1.0))
    }

    /// Inverse of [`cdf`](Self::cdf) by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", p, "must lie in [0, 1]"));
        }
        let (mut lo, mut hi) = self.support();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Tabulated inverse CDF on `cells` Chebyshev-spaced cells.
    pub fn inverse_cdf(&self, cells: usize) -> Result<InverseCdf> {
        if cells < 2 {
            return Err(Error::param("cells", cells as f64, "must be >= 2"));
        }
        let (lo, hi) = self.support();
        let xs: Vec<f64> = (0..=cells)
            .map(|i| {
                let t = -(std::f64::consts::PI * i as f64 / cells as f64).cos();
                (0.5 * (lo + hi) + 0.5 * (hi - lo) * t).clamp(lo, hi)
            })
            .collect();
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        let mut acc = 0.0;
        let mut f = |x: f64| Ok(self.pdf(x));
        for w in xs.windows(2) {
            acc += self.rule.panel(&mut f, w[0], w[1])?;
            cum.push(acc);
        }
        for c in &mut cum {
            *c /= acc;
        }
        Ok(InverseCdf { xs, cdf: cum })
    }
}

/// Piecewise-linear inverse CDF, for inverse-transform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    /// Maps `u ∈ [0, 1]` to a point of the support.
    pub fn sample(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }
}

fn spec(family: DensityFamily) -> Result<DensitySpec> {
    DensitySpec::new(family, &QuadratureConfig::default())
}

/// Tsallis density `ρ_q(z)` for `q < 1`.
pub fn tsallis_density(z: f64, q: f64, sigma_t: f64) -> Result<f64> {
    Ok(spec(DensityFamily::Tsallis { q, sigma_t })?.pdf(z))
}

/// Overdamped TSB density, zero at and beyond `±1`.
pub fn tsb_overdamped_density(x: f64, q: f64) -> Result<f64> {
    Ok(spec(DensityFamily::TsbOverdamped { q })?.pdf(x))
}

pub fn phase_space_density(x: f64, v: f64, q: f64, m: f64) -> Result<f64> {
    spec(DensityFamily::PhaseSpace { q, m })?.pdf_xv(x, v)
}

pub fn alpha_density(x: f64, alpha: f64, q: f64) -> Result<f64> {
    Ok(spec(DensityFamily::AlphaFamily { alpha, q })?.pdf(x))
}

/// `Σ_bins |empirical mass - density mass|`, in `[0, 2]`.
pub fn l1_distance(h: &Histogram, d: &DensitySpec) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::contract("l1_distance", "histogram is empty"));
    }
    let (lo, hi) = d.support();
    let slack = 1e-12 * (hi - lo);
    if h.lo < lo - slack || h.hi > hi + slack {
        return Err(Error::contract(
            "l1_distance",
            format!("histogram support [{}, {}] exceeds density support [{lo}, {hi}]", h.lo, h.hi),
        ));
    }
    let n = h.total as f64;
    let mut sum = 0.0;
    for (i, &c) in h.counts.iter().enumerate() {
        let (a, b) = h.edges(i);
        sum += (c as f64 / n - d.mass(a, b)?).abs();
    }
    Ok(sum)
}

/// Writes `x,density` rows for the position density on `grid`.
pub fn write_density_csv<W: std::io::Write>(out: &mut W, d: &DensitySpec, grid: &[f64]) -> Result<()> {
    writeln!(out, "x,density")?;
    for &x in grid {
        writeln!(out, "{:.16e},{:.16e}", x, d.pdf(x))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tsb_values() {
        assert_relative_eq!(tsb_overdamped_density(0.0, 0.0).unwrap(), 0.75, max_relative = 1e-12);
        assert_relative_eq!(tsb_overdamped_density(0.0, 0.5).unwrap(), 0.9375, max_relative = 1e-12);
        assert_eq!(tsb_overdamped_density(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(tsb_overdamped_density(-1.0, -3.0).unwrap(), 0.0);
    }

    #[test]
    fn tsallis_outside_support_is_zero() {
        let l = (3.0f64 / 1.0).sqrt();
        assert_eq!(tsallis_density(l * 1.0001, 0.0, 1.0).unwrap(), 0.0);
        assert!(tsallis_density(l * 0.999, 0.0, 1.0).unwrap() > 0.0);
        assert!(matches!(tsallis_density(0.0, 1.0, 1.0), Err(Error::Unsupported(_))));
        assert!(tsallis_density(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn alpha_limits() {
        assert!(matches!(alpha_density(0.0, 1.0, 0.0), Err(Error::Unsupported(_))));
        let d = spec(DensityFamily::AlphaFamily { alpha: 2.0, q: 0.0 }).unwrap();
        assert_eq!(d.pdf(1.0 - 1e-6), 0.0);
        assert_relative_eq!(d.pdf(0.0), d.normalization(), max_relative = 1e-15);
        for x in [0.1, 0.5, 0.9] {
            assert_eq!(d.pdf(x), d.pdf(-x));
        }
    }

    #[test]
    fn phase_space_factorises() {
        let d = spec(DensityFamily::PhaseSpace { q: -1.0, m: 0.5 }).unwrap();
        let (x, v) = (0.3, -1.2);
        assert_eq!(d.pdf_xv(x, v).unwrap(), d.pdf(x) * d.velocity_pdf(v).unwrap());
        assert_eq!(d.velocity_variance(), Some(4.0));
        assert_eq!(d.pdf_xv(1.0, 0.0).unwrap(), 0.0);
        assert!(spec(DensityFamily::TsbOverdamped { q: 0.0 }).unwrap().pdf_xv(0.0, 0.0).is_err());
    }

    #[test]
    fn inverse_cdf_endpoints() {
        let inv = spec(DensityFamily::TsbOverdamped { q: 0.0 }).unwrap().inverse_cdf(64).unwrap();
        assert_eq!(inv.sample(0.0), -1.0);
        assert_eq!(inv.sample(1.0), 1.0);
        assert!(inv.sample(0.5).abs() < 1e-12);
    }

    #[test]
    fn l1_contracts() {
        let d = spec(DensityFamily::TsbOverdamped { q: 0.0 }).unwrap();
        let h = Histogram::new(-1.0, 1.0, 10).unwrap();
        assert!(matches!(l1_distance(&h, &d), Err(Error::Contract { .. })));
        let mut wide = Histogram::new(-2.0, 2.0, 10).unwrap();
        wide.add(0.0);
        assert!(l1_distance(&wide, &d).is_err());
    }

    #[test]
    fn csv_rows() {
        let d = spec(DensityFamily::TsbOverdamped { q: 0.0 }).unwrap();
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &d, &[0.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        let (x, y) = row.split_once(',').unwrap();
        assert_eq!(x, "0.0000000000000000e0");
        assert_relative_eq!(y.parse::<f64>().unwrap(), 0.75, max_relative = 1e-12);
    }
}
