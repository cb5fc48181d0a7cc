//! Boundary classification, exit probabilities and mean exit times for a
//! handful of models.

use bnlab::diffusion_analysis::{classify_boundaries, QuadratureConfig, ScaleFunction};
use bnlab::noise_models::NoiseModel;

fn main() -> bnlab::Result<()> {
    let cfg = QuadratureConfig::default();
    let models = [
        NoiseModel::tsb(-1.0)?,
        NoiseModel::tsb(0.0)?,
        NoiseModel::tsb(0.5)?,
        NoiseModel::alpha(0.5, 0.0)?,
        NoiseModel::alpha(1.5, -1.0)?,
    ];
    for model in &models {
        println!("{:<22} {}", model.label(), classify_boundaries(model, &cfg)?.summary());
    }

    // Exits from the sub-interval (-1/2, 1/2) are always possible.
    println!("\nstart   P(left)   P(right)  E[T]   on (-0.5, 0.5), tsb(q=-1)");
    let sf = ScaleFunction::new(&NoiseModel::tsb(-1.0)?, &cfg)?;
    for x in [-0.4, -0.2, 0.0, 0.2, 0.4] {
        let (pa, pb) = sf.exit_probabilities(x, -0.5, 0.5)?;
        println!("{x:>5.1}   {pa:.5}   {pb:.5}   {:.5}", sf.mean_exit_time(x, -0.5, 0.5)?);
    }
    Ok(())
}
