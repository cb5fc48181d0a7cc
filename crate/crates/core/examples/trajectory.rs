//! One recorded path, overdamped or underdamped, as CSV.
//!
//! `cargo run --release --example trajectory -- [q] [m]`; omit `m` for the
//! overdamped dynamics.

use bnlab::monte_carlo::path_rng;
use bnlab::noise_models::NoiseModel;
use bnlab::sde_integrators::{simulate_path, write_trajectory_csv, Dynamics, ExitRule, Recording, StepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let q: f64 = args.first().map_or(Ok(-1.0), |s| s.parse())?;
    let dynamics = match args.get(1) {
        Some(m) => Dynamics::Underdamped { m: m.parse()? },
        None => Dynamics::Overdamped,
    };
    let model = NoiseModel::tsb(q)?;
    let cfg = StepConfig {
        dt: 1e-4,
        horizon: 5.0,
        ..StepConfig::default()
    };
    let rule = ExitRule::full(&model, &cfg);
    let rec = Recording {
        every: Some(0.01),
        ..Recording::default()
    };
    let mut rng = path_rng(7, 0);
    let out = simulate_path(0.0, 0.0, dynamics, &model, &cfg, &rule, &rec, &mut rng)?;

    write_trajectory_csv(&mut std::io::stdout().lock(), &out.trajectory)?;
    let r = &out.result;
    match r.exit_time {
        Some(t) => eprintln!("exit at t = {t:.5} on the {:?} side after {} steps", r.exit_side.unwrap(), r.steps_taken),
        None => eprintln!("no exit before t = {}; max |x| = {:.6}", cfg.horizon, r.max_abs_x),
    }
    Ok(())
}
