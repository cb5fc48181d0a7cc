//! Path ensembles: exit statistics, stationary histograms and sweeps over `q`.
//!
//! Path `i` draws from its own ChaCha8 stream `(master_seed, i)`, paths run
//! in parallel and are reduced in index order, so results do not depend on
//! the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_analysis::{c_of_q, MeanExitGradient, QuadratureConfig, ScaleFunction};
use crate::error::{Error, Result};
use crate::noise_models::{ForceField, NoiseModel};
use crate::sde_integrators::{
    energy_balance_check, simulate_path, Dynamics, EnergyBalance, ExitRule, PathOutput, Recording,
    Side, StepConfig,
};

/// Random stream of path `index`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub model: NoiseModel,
    pub dynamics: Dynamics,
    pub n_paths: usize,
    pub step: StepConfig,
    pub master_seed: u64,
    pub x0: f64,
    /// Initial velocity (underdamped only).
    pub v0: f64,
    /// Monitored interval; `None` means `(-1, 1)`.
    pub interval: Option<(f64, f64)>,
    /// Also report the exit-time estimate corrected by the martingale
    /// `∫ M'(X) σ dW`, which has mean zero and removes most of the
    /// path-to-path spread (overdamped only).
    pub control_variate: bool,
}

impl EnsembleSpec {
    pub fn new(model: NoiseModel, dynamics: Dynamics, n_paths: usize, step: StepConfig, master_seed: u64) -> Self {
        Self {
            model,
            dynamics,
            n_paths,
            step,
            master_seed,
            x0: 0.0,
            v0: 0.0,
            interval: None,
            control_variate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", 0.0, "must be >= 1"));
        }
        self.step.validate()?;
        if let Dynamics::Underdamped { m } = self.dynamics {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::param("m", m, "must be finite and > 0"));
            }
            if self.interval.is_some() {
                return Err(Error::contract(
                    "ensemble",
                    "sub-intervals are monitored for overdamped paths only",
                ));
            }
        }
        let (a, b) = self.interval.unwrap_or((-1.0, 1.0));
        if !(a < self.x0 && self.x0 < b) {
            return Err(Error::contract(
                "ensemble",
                format!("x0 = {} must lie inside ({a}, {b})", self.x0),
            ));
        }
        if !self.v0.is_finite() {
            return Err(Error::param("v0", self.v0, "must be finite"));
        }
        Ok(())
    }

    fn rule(&self) -> Result<ExitRule> {
        let (a, b) = self.interval.unwrap_or((-1.0, 1.0));
        ExitRule::new(a, b, &self.model, &self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub n_paths: usize,
    pub n_exited: usize,
    pub n_censored: usize,
    /// Over exited paths only; `None` when none exited.
    pub mean_exit_time: Option<f64>,
    pub std_error: Option<f64>,
    /// Set when the mean excludes censored paths.
    pub censored: bool,
    /// Exits through the left and right end.
    pub side_counts: (usize, usize),
    /// Control-variate estimate and its standard error; requires every path
    /// to have exited.
    pub cv_mean: Option<f64>,
    pub cv_std_error: Option<f64>,
    pub mean_steps: f64,
    /// Largest `|x|` over all paths (rounds to 1 within `1e-16`).
    pub max_abs_x: f64,
    /// Smallest `ln(1 - |x|)` over paths that did not exit.
    pub min_log_gap: f64,
    pub warnings: Vec<String>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_paths(spec: &EnsembleSpec, recording: &Recording<'_>) -> Result<Vec<PathOutput>> {
    spec.validate()?;
    let rule = spec.rule()?;
    (0..spec.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.master_seed, i as u64);
            simulate_path(spec.x0, spec.v0, spec.dynamics, &spec.model, &spec.step, &rule, recording, &mut rng)
        })
        .collect()
}

fn control_gradient(spec: &EnsembleSpec, warnings: &mut Vec<String>) -> Option<MeanExitGradient> {
    if !spec.control_variate {
        return None;
    }
    if spec.dynamics != Dynamics::Overdamped {
        warnings.push("control variate ignored: available for overdamped paths only".into());
        return None;
    }
    let (a, b) = spec.interval.unwrap_or((-1.0, 1.0));
    let built = ScaleFunction::new(&spec.model, &QuadratureConfig::default())
        .and_then(|sf| sf.mean_exit_gradient(a, b));
    match built {
        Ok(g) => Some(g),
        Err(e) => {
            warnings.push(format!("control variate unavailable: {e}"));
            None
        }
    }
}

fn summarize(spec: &EnsembleSpec, rule: &ExitRule, paths: &[PathOutput], mut warnings: Vec<String>, with_cv: bool) -> ExitStats {
    let n = paths.len();
    let mut times = Vec::new();
    let mut corrected = Vec::new();
    let (mut left, mut right) = (0, 0);
    let mut steps = 0u64;
    let mut max_abs_x: f64 = 0.0;
    let mut min_log_gap = f64::INFINITY;
    for p in paths {
        let r = &p.result;
        steps += r.steps_taken;
        max_abs_x = max_abs_x.max(r.max_abs_x);
        if let (true, Some(t)) = (r.exited, r.exit_time) {
            times.push(t);
            corrected.push(t - r.control);
            match r.exit_side {
                Some(Side::Left) => left += 1,
                _ => right += 1,
            }
        } else {
            min_log_gap = min_log_gap.min(r.min_log_gap);
        }
    }
    let n_exited = times.len();
    let n_censored = n - n_exited;
    let (mean, se) = if n_exited > 0 {
        let (m, s) = mean_and_se(&times);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let (cv_mean, cv_se) = if with_cv && n_censored == 0 && n_exited > 0 {
        let (m, s) = mean_and_se(&corrected);
        (Some(m), Some(s))
    } else {
        if with_cv {
            warnings.push(format!(
                "control variate skipped: {n_censored} censored paths would bias it"
            ));
        }
        (None, None)
    };
    if n_exited == 0 && rule.detects_exits() && matches!(spec.dynamics, Dynamics::Overdamped) && spec.step.horizon > 0.0 {
        warnings.push(format!(
            "all {n} paths censored at horizon {} although exits are expected; increase the horizon",
            spec.step.horizon
        ));
    }
    ExitStats {
        n_paths: n,
        n_exited,
        n_censored,
        mean_exit_time: mean,
        std_error: se,
        censored: n_censored > 0,
        side_counts: (left, right),
        cv_mean,
        cv_std_error: cv_se,
        mean_steps: steps as f64 / n as f64,
        max_abs_x,
        min_log_gap,
        warnings,
    }
}

/// First-exit statistics of an ensemble. Censored paths are counted but
/// left out of the mean.
pub fn run_exit_ensemble(spec: &EnsembleSpec) -> Result<ExitStats> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let gradient = control_gradient(spec, &mut warnings);
    let f = gradient.as_ref().map(|g| move |x: f64| g.eval(x));
    let recording = Recording {
        control: f.as_ref().map(|f| f as &(dyn Fn(f64) -> f64 + Sync)),
        ..Recording::default()
    };
    let paths = run_paths(spec, &recording)?;
    Ok(summarize(spec, &spec.rule()?, &paths, warnings, gradient.is_some()))
}

/// Exit statistics together with the energy-balance diagnostic at the given
/// times (underdamped only).
pub fn run_energy_ensemble(spec: &EnsembleSpec, checkpoints: &[f64]) -> Result<(ExitStats, EnergyBalance)> {
    let Dynamics::Underdamped { m } = spec.dynamics else {
        return Err(Error::contract("energy ensemble", "requires underdamped dynamics"));
    };
    let mut times = vec![0.0];
    times.extend_from_slice(checkpoints);
    let recording = Recording {
        checkpoints: times,
        ..Recording::default()
    };
    let paths = run_paths(spec, &recording)?;
    let stats = summarize(spec, &spec.rule()?, &paths, Vec::new(), false);
    // Paths that stopped early contribute to the checkpoints they reached.
    let samples: Vec<_> = paths.into_iter().map(|p| p.checkpoints).collect();
    let balance = energy_balance_check(&samples, m, spec.model.beta())?;
    Ok((stats, balance))
}

/// Equal-width histogram on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::contract("histogram", format!("need finite lo < hi, got [{lo}, {hi})")));
        }
        if bins == 0 {
            return Err(Error::param("bins", 0.0, "must be >= 1"));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            total: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let i = ((x - self.lo) / self.bin_width()) as usize;
        Some(i.min(self.bins() - 1))
    }

    /// Adds `x` and returns whether it fell inside the support.
    pub fn add(&mut self, x: f64) -> bool {
        match self.index(x) {
            Some(i) => {
                self.counts[i] += 1;
                self.total += 1;
                true
            }
            None => false,
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if (self.lo, self.hi, self.bins()) != (other.lo, other.hi, other.bins()) {
            return Err(Error::contract("histogram merge", "binning differs"));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total += other.total;
        Ok(())
    }

    /// Empirical density per bin (all zero when empty).
    pub fn density(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.bins()];
        }
        let norm = self.total as f64 * self.bin_width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// Equal-width histogram on a rectangle, row-major in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub x: Histogram,
    pub v: Histogram,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Samples outside the rectangle (not part of `total`).
    pub dropped: u64,
}

impl Histogram2d {
    pub fn new(x: (f64, f64, usize), v: (f64, f64, usize)) -> Result<Self> {
        let hx = Histogram::new(x.0, x.1, x.2)?;
        let hv = Histogram::new(v.0, v.1, v.2)?;
        Ok(Self {
            counts: vec![0; x.2 * v.2],
            x: hx,
            v: hv,
            total: 0,
            dropped: 0,
        })
    }

    pub fn add(&mut self, x: f64, v: f64) {
        match (self.x.index(x), self.v.index(v)) {
            (Some(i), Some(j)) => {
                self.counts[i * self.v.bins() + j] += 1;
                self.total += 1;
            }
            _ => self.dropped += 1,
        }
    }
}

/// Sample moments of the velocity samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    /// `√((μ4 - σ⁴)/n)`, treating samples as independent.
    pub variance_se: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                n: 0,
                mean: f64::NAN,
                variance: f64::NAN,
                variance_se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self {
            n: xs.len() as u64,
            mean,
            variance: var,
            variance_se: ((m4 - var * var).max(0.0) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec {
    pub burn_in: f64,
    pub stride: f64,
    pub samples_per_path: usize,
    pub bins: usize,
    /// Velocity half-range of the phase-space histogram; `6 √(β/m)` if unset.
    pub v_max: Option<f64>,
}

impl Default for StationarySpec {
    fn default() -> Self {
        Self {
            // 50 times a relaxation-time guess of 1/2.
            burn_in: 25.0,
            stride: 0.5,
            samples_per_path: 1000,
            bins: 200,
            v_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub position: Histogram,
    pub phase_space: Option<Histogram2d>,
    pub velocity: Option<Moments>,
    pub warnings: Vec<String>,
}

/// Whether overdamped paths of `model` settle into a density on `(-1, 1)`.
pub fn overdamped_is_ergodic(model: &NoiseModel) -> bool {
    !model.boundary_attainable()
}

/// Samples the stationary regime: each path runs for `burn_in`, then is
/// sampled every `stride`. The horizon of `spec.step` is ignored.
pub fn run_stationary_ensemble(spec: &EnsembleSpec, st: &StationarySpec) -> Result<StationaryResult> {
    if spec.dynamics == Dynamics::Overdamped && !overdamped_is_ergodic(&spec.model) {
        return Err(Error::contract(
            "stationary ensemble",
            format!(
                "{} reaches the boundary in finite time almost surely, so no stationary density exists on (-1, 1)",
                spec.model.label()
            ),
        ));
    }
    if !(st.burn_in >= 0.0 && st.burn_in.is_finite()) {
        return Err(Error::param("burn_in", st.burn_in, "must be finite and >= 0"));
    }
    if !(st.stride > 0.0 && st.stride.is_finite()) {
        return Err(Error::param("stride", st.stride, "must be finite and > 0"));
    }
    let mut position = Histogram::new(-1.0, 1.0, st.bins)?;
    let mut phase = match spec.dynamics {
        Dynamics::Underdamped { m } => {
            let v_max = st.v_max.unwrap_or(6.0 * (spec.model.beta() / m).sqrt());
            if !(v_max > 0.0 && v_max.is_finite()) {
                return Err(Error::param("v_max", v_max, "must be finite and > 0"));
            }
            Some(Histogram2d::new((-1.0, 1.0, st.bins), (-v_max, v_max, st.bins))?)
        }
        Dynamics::Overdamped => None,
    };
    if st.samples_per_path == 0 {
        spec.validate()?;
        return Ok(StationaryResult {
            position,
            velocity: phase.as_ref().map(|_| Moments::of(&[])),
            phase_space: phase,
            warnings: Vec::new(),
        });
    }
    let checkpoints: Vec<f64> = (0..st.samples_per_path)
        .map(|k| st.burn_in + k as f64 * st.stride)
        .collect();
    let mut run = spec.clone();
    run.step.horizon = *checkpoints.last().expect("at least one sample");
    let recording = Recording {
        checkpoints,
        ..Recording::default()
    };
    let paths = run_paths(&run, &recording)?;

    let mut warnings = Vec::new();
    let mut velocities = Vec::new();
    let mut stopped = 0;
    for p in &paths {
        if p.result.exited {
            stopped += 1;
        }
        for s in &p.checkpoints {
            position.add(s.x);
            if let (Some(h), Some(v)) = (phase.as_mut(), s.v) {
                h.add(s.x, v);
                velocities.push(v);
            }
        }
    }
    if stopped > 0 {
        warnings.push(format!("{stopped} paths reached the boundary and stopped sampling early"));
    }
    Ok(StationaryResult {
        position,
        velocity: phase.as_ref().map(|_| Moments::of(&velocities)),
        phase_space: phase,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    /// `E[T(0)]` by quadrature.
    pub quad_value: f64,
    /// `C(q) = |q| E[T(0)]`.
    pub c: f64,
}

/// Mean exit time from zero for each `q < 0`, by quadrature and, when a
/// template is given, by simulation with the template's numerics.
pub fn sweep_c_of_q(q_values: &[f64], template: Option<&EnsembleSpec>, cfg: &QuadratureConfig) -> Result<Vec<SweepRow>> {
    if let Some(&q) = q_values.iter().find(|&&q| !(q < 0.0)) {
        return Err(Error::param("q", q, "sweep values must be < 0"));
    }
    q_values
        .iter()
        .map(|&q| {
            let c = c_of_q(q, cfg)?;
            let (mc_mean, mc_se) = match template {
                Some(t) => {
                    let spec = EnsembleSpec {
                        model: NoiseModel::tsb(q)?,
                        x0: 0.0,
                        interval: None,
                        dynamics: Dynamics::Overdamped,
                        ..t.clone()
                    };
                    let stats = run_exit_ensemble(&spec)?;
                    match (stats.cv_mean, stats.cv_std_error) {
                        (Some(m), Some(s)) => (Some(m), Some(s)),
                        _ => (stats.mean_exit_time, stats.std_error),
                    }
                }
                None => (None, None),
            };
            Ok(SweepRow {
                q,
                mc_mean,
                mc_se,
                quad_value: c / -q,
                c,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(q: f64, n: usize, horizon: f64) -> EnsembleSpec {
        EnsembleSpec::new(
            NoiseModel::tsb(q).unwrap(),
            Dynamics::Overdamped,
            n,
            StepConfig {
                dt: 1e-3,
                horizon,
                ..StepConfig::default()
            },
            42,
        )
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: f64 = path_rng(1, 0).random();
        let b: f64 = path_rng(1, 1).random();
        let c: f64 = path_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn empty_run_is_censored() {
        let s = run_exit_ensemble(&spec(-1.0, 1, 0.0)).unwrap();
        assert_eq!((s.n_exited, s.n_censored), (0, 1));
        assert!(s.mean_exit_time.is_none());
    }

    #[test]
    fn counts_are_consistent_and_reproducible() {
        let sp = spec(-1.0, 200, 0.5);
        let s = run_exit_ensemble(&sp).unwrap();
        assert_eq!(s.n_exited + s.n_censored, 200);
        assert_eq!(s.side_counts.0 + s.side_counts.1, s.n_exited);
        assert_eq!(s, run_exit_ensemble(&sp).unwrap());
    }

    #[test]
    fn short_horizon_warns() {
        let s = run_exit_ensemble(&spec(-1.0, 4, 1e-3)).unwrap();
        assert_eq!(s.n_exited, 0);
        assert!(s.warnings.iter().any(|w| w.contains("horizon")));
    }

    #[test]
    fn invalid_specs() {
        assert!(run_exit_ensemble(&spec(-1.0, 0, 1.0)).is_err());
        let mut s = spec(-1.0, 1, 1.0);
        s.x0 = 1.0;
        assert!(run_exit_ensemble(&s).is_err());
    }

    #[test]
    fn stationary_refuses_exiting_model() {
        let err = run_stationary_ensemble(&spec(-0.5, 1, 1.0), &StationarySpec::default()).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }

    #[test]
    fn zero_samples_give_empty_histogram() {
        let st = StationarySpec {
            samples_per_path: 0,
            ..StationarySpec::default()
        };
        let r = run_stationary_ensemble(&spec(0.5, 3, 1.0), &st).unwrap();
        assert_eq!(r.position.total, 0);
        assert_eq!(r.position.counts.len(), 200);
    }

    #[test]
    fn histogram_bookkeeping() {
        let mut h = Histogram::new(-1.0, 1.0, 4).unwrap();
        for x in [-0.9, -0.1, 0.1, 0.2, 1.0] {
            assert!(h.add(x));
        }
        assert!(!h.add(1.5));
        assert_eq!(h.counts, vec![1, 1, 2, 1]);
        assert_eq!(h.total, 5);
        let integral: f64 = h.density().iter().map(|d| d * h.bin_width()).sum();
        assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_quadrature_only() {
        let rows = sweep_c_of_q(&[-0.5, -1.0], None, &QuadratureConfig::default()).unwrap();
        assert!((rows[1].c - 0.433425).abs() < 1e-6);
        assert!(rows[0].quad_value > rows[1].quad_value);
        assert!(sweep_c_of_q(&[0.5], None, &QuadratureConfig::default()).is_err());
    }
}
