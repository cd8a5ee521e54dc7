//! Behaviour of the three training loops on small, fast problems.

use lediflow::auxprior::{mean_posterior_kl, train_auxiliary, AuxConfig, AuxModel};
use lediflow::data::{make_2d, Dist2d};
use lediflow::eval::sliced_w2;
use lediflow::flowmatch::{draw_flow_batch, flow_config, train_flow, PriorSource};
use lediflow::latentflow::{latent_config, push_forward, sample_latents, train_latent_sampler};
use lediflow::nn::ConditionedRegressor;
use lediflow::ode::{Method, SolverConfig};
use lediflow::pipeline::{
    inpaint_batch, interpolate_latents, GenerationConfig, InpaintMask, InterpolationMode, LatentPath, LearnedPriorFlow,
};
use lediflow::rng::{gaussian_matrix, seeded_rng};
use lediflow::sample::LatentCode;
use lediflow::train::TrainConfig;
use lediflow::SampleSet;
use ndarray::{Array2, Axis};

fn budget(steps: usize, batch_size: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size,
        seed,
        ..Default::default()
    }
}

fn one_point(y: [f64; 2], n: usize) -> SampleSet {
    let rows = Array2::from_shape_fn((n, 2), |(_, j)| y[j]);
    SampleSet::from_rows(rows).unwrap()
}

fn small_aux(k: usize, beta: f64, seed: u64) -> AuxModel {
    let cfg = AuxConfig {
        hidden: 32,
        depth: 2,
        beta,
        ..AuxConfig::new(2, k)
    };
    AuxModel::new(cfg, &mut seeded_rng(seed)).unwrap()
}

#[test]
fn decoder_learns_a_single_point() {
    let y = [0.7, -1.2];
    let data = one_point(y, 64);
    let mut aux = small_aux(4, 1e-3, 1);
    let hist = train_auxiliary(&mut aux, &data, &budget(1500, 32, 2)).unwrap();

    // The objective only constrains the decoder where the posterior puts
    // mass, so latents are posterior draws rather than arbitrary vectors.
    let z = aux
        .encode_batch(data.data().view())
        .unwrap()
        .reparam(&mut seeded_rng(3));
    let dec = aux.decode_batch(z.view()).unwrap();
    for row in dec.mean.rows() {
        assert!((row[0] - y[0]).abs() < 0.05 && (row[1] - y[1]).abs() < 0.05, "{row}");
    }

    // Smoothed VGL keeps falling: compare means of consecutive quarters.
    let vgl: Vec<f64> = hist.vgl.records.iter().map(|r| r.loss).collect();
    let chunk = vgl.len() / 4;
    let means: Vec<f64> = vgl
        .chunks(chunk)
        .take(4)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn large_beta_collapses_posterior() {
    let data = make_2d(Dist2d::TwoMoons, 512, 0.05, 4).unwrap();
    let mut aux = small_aux(4, 1e3, 5);
    train_auxiliary(&mut aux, &data, &budget(1500, 64, 6)).unwrap();
    let kl = mean_posterior_kl(&aux, &data).unwrap();
    assert!(kl < 0.01, "mean KL {kl}");
}

#[test]
fn gaussian_flow_on_one_point_learns_straight_field() {
    let y = [1.5, -0.5];
    let data = one_point(y, 64);
    let mut rng = seeded_rng(7);
    let mut model = ConditionedRegressor::new(flow_config(2, 0, 64, 2), &mut rng).unwrap();
    train_flow(&mut model, PriorSource::Gaussian, &data, &budget(3000, 64, 8)).unwrap();

    let x = gaussian_matrix(&mut seeded_rng(9), 200, 2);
    let t: Vec<f32> = (0..200).map(|i| 0.05 + 0.9 * i as f32 / 199.0).collect();
    // Evaluate at φ_t = t·y + (1−t)·x, where the optimal field is y − x.
    let mut phi = Array2::<f32>::zeros((200, 2));
    for i in 0..200 {
        for j in 0..2 {
            phi[[i, j]] = t[i] * y[j] as f32 + (1.0 - t[i]) * x[[i, j]] as f32;
        }
    }
    let pred = model.forward_batch(phi.view(), &t, None).unwrap();
    let mut mae = 0.0;
    for i in 0..200 {
        for j in 0..2 {
            mae += (f64::from(pred[[i, j]]) - (y[j] - x[[i, j]])).abs();
        }
    }
    mae /= 400.0;
    assert!(mae < 0.1, "mean abs error {mae}");
}

struct Trained {
    data: SampleSet,
    aux: AuxModel,
    flow: ConditionedRegressor<f32>,
    latent: ConditionedRegressor<f32>,
}

fn trained_moons() -> Trained {
    let data = make_2d(Dist2d::TwoMoons, 1024, 0.05, 11).unwrap();
    let mut aux = small_aux(8, 1e-3, 12);
    train_auxiliary(&mut aux, &data, &budget(1500, 128, 13)).unwrap();
    let mut rng = seeded_rng(14);
    let mut flow = ConditionedRegressor::new(flow_config(2, 8, 64, 2), &mut rng).unwrap();
    train_flow(&mut flow, PriorSource::Learned(&aux), &data, &budget(800, 128, 15)).unwrap();
    let mut latent = ConditionedRegressor::new(latent_config(8, 64, 2), &mut rng).unwrap();
    train_latent_sampler(&mut latent, &aux, &data, &budget(1500, 128, 16)).unwrap();
    Trained {
        data,
        aux,
        flow,
        latent,
    }
}

#[test]
fn learned_prior_trains_below_gaussian_prior() {
    let data = make_2d(Dist2d::TwoMoons, 1024, 0.05, 21).unwrap();
    let mut aux = small_aux(8, 1e-3, 22);
    train_auxiliary(&mut aux, &data, &budget(1000, 128, 23)).unwrap();
    let cfg = budget(600, 128, 24);
    let mut g = ConditionedRegressor::new(flow_config(2, 0, 64, 2), &mut seeded_rng(25)).unwrap();
    let mut l = ConditionedRegressor::new(flow_config(2, 8, 64, 2), &mut seeded_rng(25)).unwrap();
    let hg = train_flow(&mut g, PriorSource::Gaussian, &data, &cfg).unwrap();
    let hl = train_flow(&mut l, PriorSource::Learned(&aux), &data, &cfg).unwrap();
    assert!(
        hl.last().unwrap() < hg.last().unwrap(),
        "{:?} vs {:?}",
        hl.last(),
        hg.last()
    );
}

#[test]
fn flow_training_is_reproducible() {
    let data = make_2d(Dist2d::Spiral, 256, 0.05, 31).unwrap();
    let run = || {
        let mut m = ConditionedRegressor::new(flow_config(2, 0, 16, 1), &mut seeded_rng(32)).unwrap();
        let h = train_flow(&mut m, PriorSource::Gaussian, &data, &budget(200, 32, 33)).unwrap();
        (m, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a.params(), b.params());
    assert_eq!(ha, hb);
}

#[test]
fn training_times_are_uniform() {
    // χ² test over 20 bins of the t values drawn for 20 000 rows.
    let y = Array2::zeros((20_000, 1));
    let batch = draw_flow_batch(PriorSource::Gaussian, y, &mut seeded_rng(41)).unwrap();
    let mut counts = [0usize; 20];
    for &t in &batch.t {
        assert!((0.0..1.0).contains(&t));
        counts[((t * 20.0) as usize).min(19)] += 1;
    }
    let expected = 1000.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of χ² with 19 degrees of freedom.
    assert!(chi2 < 43.82, "chi2 {chi2}");
}

#[test]
fn trained_pipeline_behaviours() {
    let m = trained_moons();
    let encoded = m
        .aux
        .encode_batch(m.data.data().view())
        .unwrap()
        .reparam(&mut seeded_rng(50));
    let encoded = SampleSet::from_rows(encoded).unwrap();

    // The sampler moves noise toward the encoder's latent distribution.
    let n = encoded.len();
    let noise = SampleSet::from_rows(gaussian_matrix(&mut seeded_rng(51), n, 8)).unwrap();
    let sampled =
        SampleSet::from_rows(sample_latents(&m.latent, &mut seeded_rng(51), n, 8, Method::Midpoint).unwrap()).unwrap();
    let d_noise = sliced_w2(&noise, &encoded, 128, &mut seeded_rng(52)).unwrap();
    let d_sampled = sliced_w2(&sampled, &encoded, 128, &mut seeded_rng(52)).unwrap();
    assert!(d_sampled < d_noise, "{d_sampled} vs {d_noise}");

    // Inpainting with a mixed mask keeps unmasked coordinates.
    let y = m.data.data().select(Axis(0), &[0, 1, 2, 3]);
    let masks = vec![InpaintMask::new(vec![1, 0]).unwrap(); 4];
    for method in Method::ALL {
        let out = inpaint_batch(
            &m.aux,
            &m.flow,
            y.view(),
            &masks,
            None,
            SolverConfig::forward(method, 2),
            &mut seeded_rng(53),
        )
        .unwrap();
        for i in 0..4 {
            assert!((out[[i, 1]] - y[[i, 1]]).abs() <= 1e-6);
            assert!(out[[i, 0]].is_finite());
        }
    }

    // A full mask reduces to conditional generation from the given latents.
    let z = m.aux.encode_batch(y.view()).unwrap().mean;
    let full = vec![InpaintMask::new(vec![1, 1]).unwrap(); 4];
    let cfg = GenerationConfig {
        fm_steps: 3,
        ..GenerationConfig::midpoint_4_2()
    };
    let a = inpaint_batch(
        &m.aux,
        &m.flow,
        y.view(),
        &full,
        Some(z.view()),
        SolverConfig::forward(cfg.fm_method, 3),
        &mut seeded_rng(54),
    )
    .unwrap();
    let pipeline = LearnedPriorFlow::new(&m.aux, &m.flow, &m.latent).unwrap();
    let b = pipeline
        .generate_from_latents(z.view(), &mut seeded_rng(54), &cfg)
        .unwrap();
    assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));

    // Endpoints of w-space interpolation return the inputs up to round trip.
    let path = LatentPath::default();
    let z0 = LatentCode(z.row(0).to_vec());
    let z1 = LatentCode(z.row(1).to_vec());
    for (alpha, target) in [(0.0, &z0), (1.0, &z1)] {
        let got = interpolate_latents(&m.latent, &z0, &z1, alpha, InterpolationMode::LinearInW, path).unwrap();
        let num: f64 = got
            .0
            .iter()
            .zip(&target.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = target.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den <= 5e-2, "alpha {alpha}: rel err {}", num / den);
    }

    // Latent sampling is a pure function of the noise.
    let w = gaussian_matrix(&mut seeded_rng(55), 16, 8);
    assert_eq!(
        push_forward(&m.latent, w.view(), 4, Method::Midpoint).unwrap(),
        push_forward(&m.latent, w.view(), 4, Method::Midpoint).unwrap()
    );
}

#[test]
fn latent_sampler_loss_decreases() {
    let data = make_2d(Dist2d::GaussMix8, 512, 0.05, 61).unwrap();
    let mut aux = small_aux(4, 1e-3, 62);
    train_auxiliary(&mut aux, &data, &budget(400, 64, 63)).unwrap();
    let mut latent = ConditionedRegressor::new(latent_config(4, 32, 2), &mut seeded_rng(64)).unwrap();
    let h = train_latent_sampler(&mut latent, &aux, &data, &budget(400, 64, 65)).unwrap();
    assert!(h.last().unwrap() <= h.first().unwrap());
}
