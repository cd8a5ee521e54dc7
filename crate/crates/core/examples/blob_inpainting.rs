//! Trains the auxiliary prior and a conditional flow on 8×8 blob images,
//! then fills in the left half of held-out images and writes PGMs.
//!
//! ```text
//! cargo run --release --example blob_inpainting -- [out_dir] [steps]
//! ```

use lediflow::auxprior::{train_auxiliary, AuxConfig, AuxModel};
use lediflow::data::make_blob_images;
use lediflow::export::save_pgm_dir;
use lediflow::flowmatch::{flow_config, train_flow, PriorSource};
use lediflow::nn::ConditionedRegressor;
use lediflow::ode::{Method, SolverConfig};
use lediflow::pipeline::{inpaint_batch, InpaintMask};
use lediflow::rng::seeded_rng;
use lediflow::train::TrainConfig;
use lediflow::SampleSet;

const SIDE: usize = 8;

fn main() -> lediflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "out/blob-inpainting".into());
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let d = SIDE * SIDE;

    let data = make_blob_images(4096, SIDE, 1)?;
    let mut rng = seeded_rng(2);
    let mut aux = AuxModel::new(AuxConfig::new(d, 32), &mut rng)?;
    let budget = TrainConfig {
        steps,
        ..Default::default()
    };
    train_auxiliary(&mut aux, &data, &budget)?;
    let mut flow = ConditionedRegressor::new(flow_config(d, 32, 128, 3), &mut rng)?;
    let h = train_flow(
        &mut flow,
        PriorSource::Learned(&aux),
        &data,
        &TrainConfig { seed: 3, ..budget },
    )?;
    println!("flow loss {:.4} -> {:.4}", h.first().unwrap(), h.last().unwrap());

    // Mask bit 1 marks pixels to generate: here the left half of every row.
    let bits: Vec<u8> = (0..d).map(|i| u8::from(i % SIDE < SIDE / 2)).collect();
    let mask = InpaintMask::new(bits)?;
    let held_out = make_blob_images(8, SIDE, 4)?;
    let masks = vec![mask.clone(); held_out.len()];
    let filled = inpaint_batch(
        &aux,
        &flow,
        held_out.data(),
        &masks,
        None,
        SolverConfig::forward(Method::Midpoint, 4),
        &mut rng,
    )?;

    let mut worst: f64 = 0.0;
    for (a, b) in held_out.data().rows().into_iter().zip(filled.rows()) {
        for (j, &bit) in mask.bits().iter().enumerate() {
            if bit == 0 {
                worst = worst.max((a[j] - b[j]).abs());
            }
        }
    }
    println!("max change on kept pixels: {worst:.1e}");
    save_pgm_dir(&held_out, format!("{out}/original"), "")?;
    save_pgm_dir(
        &SampleSet::new(filled, vec![SIDE, SIDE])?,
        format!("{out}/inpainted"),
        "",
    )?;
    println!("wrote {out}/original and {out}/inpainted");
    Ok(())
}
