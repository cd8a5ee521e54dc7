//! Trains a Gaussian-prior baseline and the learned-prior pipeline on two
//! moons, then sweeps flow solver steps and reports sliced W2 for both.
//!
//! ```text
//! cargo run --release --example two_moons_step_sweep -- [seed] [fm_steps]
//! ```

use std::time::Instant;

use lediflow::auxprior::{train_auxiliary, AuxConfig, AuxModel};
use lediflow::data::{make_2d, Dist2d};
use lediflow::eval::sliced_w2;
use lediflow::flowmatch::{flow_config, train_flow, PriorSource};
use lediflow::latentflow::{latent_config, train_latent_sampler};
use lediflow::nn::ConditionedRegressor;
use lediflow::ode::Method;
use lediflow::pipeline::{generate_baseline, GenerationConfig, LearnedPriorFlow};
use lediflow::rng::{child_seed, seeded_rng};
use lediflow::train::TrainConfig;

fn main() -> lediflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let hidden = 128;
    let depth = 3;
    let k = 32;
    let noise: f64 = std::env::var("NOISE").ok().and_then(|v| v.parse().ok()).unwrap_or(0.05);

    let data = make_2d(Dist2d::TwoMoons, 4096, noise, child_seed(seed, 1))?;
    let reference = make_2d(Dist2d::TwoMoons, 4096, noise, child_seed(seed, 2))?;
    let train = TrainConfig {
        steps,
        batch_size: 256,
        seed: child_seed(seed, 3),
        ..Default::default()
    };
    let mut rng = seeded_rng(child_seed(seed, 4));
    let env = |key: &str, default: usize| -> usize {
        std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
    };
    let aux_steps = env("AUX_STEPS", steps);
    let latent_steps = env("LATENT_STEPS", steps);
    let latent_hidden = env("LATENT_HIDDEN", hidden);
    let latent_batch = env("LATENT_BATCH", 256);

    let clock = Instant::now();
    let mut baseline = ConditionedRegressor::new(flow_config(2, 0, hidden, depth), &mut rng)?;
    let h = train_flow(&mut baseline, PriorSource::Gaussian, &data, &train)?;
    println!(
        "baseline fm   loss {:.4} -> {:.4}  ({:.1}s)",
        h.first().unwrap(),
        h.last().unwrap(),
        clock.elapsed().as_secs_f64()
    );

    let clock = Instant::now();
    let mut aux = AuxModel::new(
        AuxConfig {
            hidden,
            depth,
            ..AuxConfig::new(2, k)
        },
        &mut rng,
    )?;
    let ah = train_auxiliary(
        &mut aux,
        &data,
        &TrainConfig {
            seed: child_seed(seed, 5),
            steps: aux_steps,
            ..train
        },
    )?;
    println!(
        "aux           loss {:.4} -> {:.4}  vgl {:.4} kl {:.4} ({:.1}s)",
        ah.total.first().unwrap(),
        ah.total.last().unwrap(),
        ah.vgl.last().unwrap(),
        ah.kl.last().unwrap(),
        clock.elapsed().as_secs_f64()
    );

    let clock = Instant::now();
    let mut flow = ConditionedRegressor::new(flow_config(2, k, hidden, depth), &mut rng)?;
    let fh = train_flow(
        &mut flow,
        PriorSource::Learned(&aux),
        &data,
        &TrainConfig {
            seed: child_seed(seed, 6),
            ..train
        },
    )?;
    println!(
        "learned fm    loss {:.4} -> {:.4}  ({:.1}s)",
        fh.first().unwrap(),
        fh.last().unwrap(),
        clock.elapsed().as_secs_f64()
    );

    let clock = Instant::now();
    let mut latent = ConditionedRegressor::new(latent_config(k, latent_hidden, depth), &mut rng)?;
    let lh = train_latent_sampler(
        &mut latent,
        &aux,
        &data,
        &TrainConfig {
            seed: child_seed(seed, 7),
            steps: latent_steps,
            batch_size: latent_batch,
            ..train
        },
    )?;
    println!(
        "latent fm     loss {:.4} -> {:.4}  ({:.1}s)",
        lh.first().unwrap(),
        lh.last().unwrap(),
        clock.elapsed().as_secs_f64()
    );

    let pipeline = LearnedPriorFlow::new(&aux, &flow, &latent)?;
    let n = reference.len();
    let metric = |s: &lediflow::SampleSet| sliced_w2(s, &reference, 256, &mut seeded_rng(99)).unwrap();
    let floor = metric(&make_2d(Dist2d::TwoMoons, 4096, noise, child_seed(seed, 8))?);
    println!("noise floor (fresh data vs reference): {floor:.5}");

    if std::env::var_os("DIAG").is_some() {
        let mut r = seeded_rng(5);
        let z = aux.encode_batch(reference.data().view())?.reparam(&mut r);
        for fm_steps in [1, 2, 8] {
            let cfg = GenerationConfig {
                fm_steps,
                ..GenerationConfig::midpoint_4_2()
            };
            let out = pipeline.generate_from_latents(z.view(), &mut r, &cfg)?;
            println!(
                "encoder-latent fm_steps {fm_steps}: {:.5}",
                metric(&lediflow::SampleSet::from_rows(out)?)
            );
        }
        let post = aux.encode_batch(reference.data().view())?;
        for j in 0..k {
            let mu = post.mean.column(j);
            let m = mu.mean().unwrap();
            let sd = mu.mapv(|v| (v - m) * (v - m)).mean().unwrap().sqrt();
            let s = post.log_var.column(j).mapv(|v| (0.5 * v).exp()).mean().unwrap();
            println!("  dim {j:2}: mu mean {m:+.3} sd {sd:.3}  post sigma {s:.4}");
        }
        let dec = aux.decode_batch(z.view())?;
        println!(
            "decoder mean only: {:.5}",
            metric(&lediflow::SampleSet::from_rows(dec.mean.clone())?)
        );
        let zs = lediflow::latentflow::sample_latents(&latent, &mut r, n, 16, Method::Midpoint)?;
        let dec = aux.decode_batch(zs.view())?;
        println!(
            "sampler(16) decoder mean: {:.5}",
            metric(&lediflow::SampleSet::from_rows(dec.mean.clone())?)
        );
        println!("median prior sigma: {:.5}", {
            let mut s = dec.prior_sigma().into_raw_vec_and_offset().0;
            s.sort_by(f64::total_cmp);
            s[s.len() / 2]
        });
    }

    for method in [Method::Midpoint, Method::Heun3] {
        for fm_steps in [1, 2, 4, 8, 16] {
            let base = generate_baseline(
                &baseline,
                &GenerationConfig {
                    fm_steps,
                    ..GenerationConfig::baseline(method)
                }
                .with_batch(n)
                .with_seed(11),
            )?;
            let preset = match method {
                Method::Heun3 => GenerationConfig::heun3_2_1(),
                _ => GenerationConfig::midpoint_4_2(),
            };
            let ours = pipeline.generate(&GenerationConfig { fm_steps, ..preset }.with_batch(n).with_seed(11))?;
            println!(
                "{method:>8} fm_steps {fm_steps:>2}: baseline {:.5}  learned-prior {:.5}",
                metric(&base),
                metric(&ours)
            );
        }
    }
    Ok(())
}
