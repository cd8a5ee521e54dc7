//! Trains the auxiliary prior on blob images and prints the median decoder
//! σ per pixel as an 8×8 map, next to the corpus variance.
//!
//! ```text
//! cargo run --release --example aux_uncertainty -- [steps]
//! ```

use lediflow::auxprior::{mean_posterior_kl, train_auxiliary, AuxConfig, AuxModel};
use lediflow::data::make_blob_images;
use lediflow::rng::seeded_rng;
use lediflow::train::TrainConfig;
use ndarray::Axis;

const SIDE: usize = 8;

fn print_map(title: &str, values: &[f64]) {
    println!("{title}");
    for r in 0..SIDE {
        let row: Vec<String> = (0..SIDE).map(|c| format!("{:.3}", values[r * SIDE + c])).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> lediflow::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let data = make_blob_images(4096, SIDE, 1)?;
    let mut aux = AuxModel::new(AuxConfig::new(SIDE * SIDE, 32), &mut seeded_rng(2))?;
    let hist = train_auxiliary(
        &mut aux,
        &data,
        &TrainConfig {
            steps,
            ..Default::default()
        },
    )?;
    println!("vgl {:.4}, kl {:.4}", hist.vgl.last().unwrap(), hist.kl.last().unwrap());
    println!("mean posterior KL {:.4}", mean_posterior_kl(&aux, &data)?);

    let images = make_blob_images(1024, SIDE, 3)?;
    let z = aux.encode_batch(images.data())?.reparam(&mut seeded_rng(4));
    let sigma = aux.decode_batch(z.view())?.sigma();
    let median: Vec<f64> = sigma
        .axis_iter(Axis(1))
        .map(|col| {
            let mut v = col.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    print_map("median decoder sigma", &median);
    let var = images.data().var_axis(Axis(0), 0.0);
    print_map("corpus variance", var.as_slice().expect("contiguous"));
    Ok(())
}
