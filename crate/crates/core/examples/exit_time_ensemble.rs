//! Monte Carlo mean exit time from zero for the TSB process with `q < 0`,
//! next to the quadrature value.
//!
//! `cargo run --release --example exit_time_ensemble -- [q] [paths] [dt]`

use bnlab::diffusion_analysis::{mean_exit_time, QuadratureConfig};
use bnlab::monte_carlo::{run_exit_ensemble, EnsembleSpec};
use bnlab::noise_models::NoiseModel;
use bnlab::sde_integrators::{Dynamics, StepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let q: f64 = args.first().map_or(Ok(-1.0), |s| s.parse())?;
    let paths: usize = args.get(1).map_or(Ok(10_000), |s| s.parse())?;
    let dt: f64 = args.get(2).map_or(Ok(1e-4), |s| s.parse())?;

    let model = NoiseModel::tsb(q)?;
    let exact = mean_exit_time(0.0, -1.0, 1.0, &model, &QuadratureConfig::default())?;
    let step = StepConfig {
        dt,
        horizon: 1e3,
        ..StepConfig::default()
    };
    let mut spec = EnsembleSpec::new(model, Dynamics::Overdamped, paths, step, 2024);
    spec.control_variate = true;
    let stats = run_exit_ensemble(&spec)?;

    println!("quadrature      {exact:.7}");
    if let (Some(m), Some(se)) = (stats.mean_exit_time, stats.std_error) {
        println!("plain mean      {m:.7} ± {se:.1e}");
    }
    if let (Some(m), Some(se)) = (stats.cv_mean, stats.cv_std_error) {
        println!("with control    {m:.7} ± {se:.1e}");
    }
    println!(
        "exits left/right {}/{}, censored {}, mean steps {:.0}",
        stats.side_counts.0, stats.side_counts.1, stats.n_censored, stats.mean_steps
    );
    for w in &stats.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
