//! Stationary densities on a grid, written as CSV to stdout.

use bnlab::diffusion_analysis::QuadratureConfig;
use bnlab::stationary_densities::{DensityFamily, DensitySpec};

fn main() -> bnlab::Result<()> {
    let cfg = QuadratureConfig::default();
    let columns = [
        ("tsb_q-1", DensityFamily::TsbOverdamped { q: -1.0 }),
        ("tsb_q0", DensityFamily::TsbOverdamped { q: 0.0 }),
        ("tsb_q0.5", DensityFamily::TsbOverdamped { q: 0.5 }),
        ("alpha1.5_q0", DensityFamily::AlphaFamily { alpha: 1.5, q: 0.0 }),
        ("alpha2_q0", DensityFamily::AlphaFamily { alpha: 2.0, q: 0.0 }),
        ("alpha3_q0", DensityFamily::AlphaFamily { alpha: 3.0, q: 0.0 }),
    ];
    let specs = columns
        .iter()
        .map(|(_, f)| DensitySpec::new(*f, &cfg))
        .collect::<bnlab::Result<Vec<_>>>()?;

    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    println!("x,{}", names.join(","));
    for i in 0..=40 {
        let x = -1.0 + i as f64 / 20.0;
        let row: Vec<String> = specs.iter().map(|d| format!("{:.6}", d.pdf(x))).collect();
        println!("{x:.2},{}", row.join(","));
    }
    Ok(())
}
