//! Interpolates between two encoded two-moons points, linearly in latent
//! space and along the sampler's noise space, and decodes both paths.
//!
//! ```text
//! cargo run --release --example latent_interpolation -- [steps]
//! ```

use lediflow::auxprior::{train_auxiliary, AuxConfig, AuxModel};
use lediflow::data::{make_2d, Dist2d};
use lediflow::flowmatch::{flow_config, train_flow, PriorSource};
use lediflow::latentflow::{latent_config, round_trip_error, train_latent_sampler};
use lediflow::nn::ConditionedRegressor;
use lediflow::ode::Method;
use lediflow::pipeline::{
    interpolate_latents, perturb_latent, GenerationConfig, InterpolationMode, LatentPath, LearnedPriorFlow,
};
use lediflow::rng::seeded_rng;
use lediflow::sample::LatentCode;
use lediflow::train::TrainConfig;
use ndarray::Array2;

fn main() -> lediflow::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let k = 8;
    let data = make_2d(Dist2d::TwoMoons, 4096, 0.05, 1)?;
    let mut rng = seeded_rng(2);
    let budget = TrainConfig {
        steps,
        ..Default::default()
    };
    let mut aux = AuxModel::new(AuxConfig::new(2, k), &mut rng)?;
    train_auxiliary(&mut aux, &data, &budget)?;
    let mut flow = ConditionedRegressor::new(flow_config(2, k, 128, 3), &mut rng)?;
    train_flow(
        &mut flow,
        PriorSource::Learned(&aux),
        &data,
        &TrainConfig { seed: 3, ..budget },
    )?;
    let mut latent = ConditionedRegressor::new(latent_config(k, 128, 3), &mut rng)?;
    train_latent_sampler(&mut latent, &aux, &data, &TrainConfig { seed: 4, ..budget })?;
    let pipeline = LearnedPriorFlow::new(&aux, &flow, &latent)?;

    // One point on each moon.
    let ends = ndarray::array![[-1.0, 0.0], [2.0, 0.5]];
    let z = aux.encode_batch(ends.view())?.mean;
    println!(
        "round-trip error on the endpoints: {:.2e}",
        round_trip_error(&latent, z.view(), 32, Method::Midpoint)?
    );
    let z0 = LatentCode(z.row(0).to_vec());
    let z1 = LatentCode(z.row(1).to_vec());
    let gen = GenerationConfig {
        fm_steps: 4,
        ..GenerationConfig::midpoint_4_2()
    };

    for mode in [InterpolationMode::LinearInZ, InterpolationMode::LinearInW] {
        let mut rows = Vec::new();
        for i in 0..=8 {
            rows.extend(interpolate_latents(&latent, &z0, &z1, i as f64 / 8.0, mode, LatentPath::default())?.0);
        }
        let zs = Array2::from_shape_vec((9, k), rows).expect("latent rows");
        let ys = pipeline.generate_from_latents(zs.view(), &mut seeded_rng(5), &gen)?;
        println!("{mode}:");
        for (i, y) in ys.rows().into_iter().enumerate() {
            println!("  alpha {:.3}: ({:+.3}, {:+.3})", i as f64 / 8.0, y[0], y[1]);
        }
    }

    println!("perturbations of the first endpoint:");
    for _ in 0..4 {
        let zp = perturb_latent(&latent, &z0, 0.5, &mut rng, LatentPath::default())?;
        let zs = Array2::from_shape_vec((1, k), zp.0).expect("latent row");
        let y = pipeline.generate_from_latents(zs.view(), &mut rng, &gen)?;
        println!("  ({:+.3}, {:+.3})", y[[0, 0]], y[[0, 1]]);
    }
    Ok(())
}
