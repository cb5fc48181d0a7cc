//! Underdamped ensemble: boundary contacts and the energy-balance slack
//! `E(t) - E(0) - (β/m) t`.
//!
//! `cargo run --release --example underdamped_energy -- [q] [m] [paths]`

use bnlab::monte_carlo::{run_energy_ensemble, EnsembleSpec};
use bnlab::noise_models::NoiseModel;
use bnlab::sde_integrators::{Dynamics, StepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let q: f64 = args.first().map_or(Ok(-4.0), |s| s.parse())?;
    let m: f64 = args.get(1).map_or(Ok(0.1), |s| s.parse())?;
    let paths: usize = args.get(2).map_or(Ok(500), |s| s.parse())?;

    let step = StepConfig {
        dt: 1e-3,
        horizon: 20.0,
        ..StepConfig::default()
    };
    let spec = EnsembleSpec::new(NoiseModel::tsb(q)?, Dynamics::Underdamped { m }, paths, step, 11);
    let (stats, balance) = run_energy_ensemble(&spec, &[0.5, 1.0, 5.0, 20.0])?;

    println!("contacts {} of {paths}; closest ln(1-|x|) = {:.2}", stats.n_exited, stats.min_log_gap);
    println!("{:>6} {:>12} {:>10}", "t", "mean slack", "s.e.");
    for cp in &balance.checkpoints {
        println!("{:>6} {:>12.4} {:>10.4}{}", cp.t, cp.mean_slack, cp.std_error, if cp.violated { "  !" } else { "" });
    }
    Ok(())
}
