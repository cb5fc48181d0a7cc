//! `C(q) = -q E[T(0)]` over a range of `q`, optionally with Monte Carlo.
//!
//! `cargo run --release --example c_of_q_sweep -- [paths]`

use bnlab::diffusion_analysis::QuadratureConfig;
use bnlab::monte_carlo::{sweep_c_of_q, EnsembleSpec};
use bnlab::noise_models::NoiseModel;
use bnlab::sde_integrators::{Dynamics, StepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let paths: usize = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let qs = [-0.01, -0.1, -0.25, -0.5, -1.0, -2.0, -4.0, -8.0, -16.0, -100.0];
    let template = (paths > 0).then(|| {
        let step = StepConfig {
            dt: 1e-4,
            horizon: 1e4,
            ..StepConfig::default()
        };
        let mut t = EnsembleSpec::new(NoiseModel::tsb(-1.0).unwrap(), Dynamics::Overdamped, paths, step, 1);
        t.control_variate = true;
        t
    });
    let rows = sweep_c_of_q(&qs, template.as_ref(), &QuadratureConfig::default())?;
    println!("{:>8} {:>12} {:>8} {:>12}", "q", "E[T(0)]", "C(q)", "Monte Carlo");
    for r in rows {
        let mc = match (r.mc_mean, r.mc_se) {
            (Some(m), Some(s)) => format!("{m:.5}±{s:.0e}"),
            _ => "-".into(),
        };
        println!("{:>8} {:>12.6} {:>8.5} {:>12}", r.q, r.quad_value, r.c, mc);
    }
    Ok(())
}
