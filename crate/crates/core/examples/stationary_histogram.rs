//! Long-run histogram of the overdamped process against its stationary
//! density.
//!
//! `cargo run --release --example stationary_histogram -- [q] [paths]`

use bnlab::diffusion_analysis::QuadratureConfig;
use bnlab::monte_carlo::{run_stationary_ensemble, EnsembleSpec, StationarySpec};
use bnlab::noise_models::NoiseModel;
use bnlab::sde_integrators::{Dynamics, StepConfig};
use bnlab::stationary_densities::{l1_distance, DensityFamily, DensitySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let q: f64 = args.first().map_or(Ok(0.5), |s| s.parse())?;
    let paths: usize = args.get(1).map_or(Ok(200), |s| s.parse())?;

    let step = StepConfig {
        dt: 1e-3,
        ..StepConfig::default()
    };
    let spec = EnsembleSpec::new(NoiseModel::tsb(q)?, Dynamics::Overdamped, paths, step, 3);
    let st = StationarySpec {
        bins: 20,
        ..StationarySpec::default()
    };
    let res = run_stationary_ensemble(&spec, &st)?;
    let density = DensitySpec::new(DensityFamily::TsbOverdamped { q }, &QuadratureConfig::default())?;

    let h = &res.position;
    let empirical = h.density();
    for (i, e) in empirical.iter().enumerate() {
        let (lo, hi) = h.edges(i);
        let exact = density.mass(lo, hi)? / h.bin_width();
        let bar = "#".repeat((e * 40.0).round() as usize);
        println!("{:>6.2} {e:6.3} {exact:6.3} {bar}", 0.5 * (lo + hi));
    }
    println!("samples {}, L1 distance {:.4}", h.total, l1_distance(h, &density)?);
    Ok(())
}
