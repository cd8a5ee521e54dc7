//! Finite-difference gradient checks shared by the integration and
//! acceptance targets. Everything runs in f64 with central differences.

#![allow(dead_code)]

use lediflow::auxprior::{aux_objective, kl_with_grad, vgl_with_grad};
use lediflow::flowmatch::{cfm_with_grad, flow_config, flow_objective, wcfm_with_grad, FlowTrainBatch};
use lediflow::nn::{ConditionedRegressor, RegressorConfig, Tape};
use lediflow::rng::{gaussian_matrix, seeded_rng, Rng};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so components that are zero up to round-off do not
/// produce spurious relative errors.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between `analytic` and central differences of `f` at `x`
/// over the coordinates in `coords`.
pub fn check(x: &[f64], analytic: &[f64], coords: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = f(&probe);
        probe[i] = orig - FD_STEP;
        let down = f(&probe);
        probe[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn shape(rng: &mut Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..7))
}

fn uniform(rng: &mut Rng, n: usize, d: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(lo..hi))
}

fn view(v: &[f64], n: usize, d: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((n, d), v).expect("shape")
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// A random subset of at most `k` indices below `n`.
fn some(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return all(n);
    }
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

pub fn cfm_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n, d) = shape(&mut rng);
        let pred = gaussian_matrix(&mut rng, n, d);
        let x = gaussian_matrix(&mut rng, n, d);
        let y = gaussian_matrix(&mut rng, n, d);
        let (_, g) = cfm_with_grad(pred.view(), x.view(), y.view());
        let p = pred.as_slice().unwrap();
        worst = worst.max(check(p, g.as_slice().unwrap(), &all(p.len()), |q| {
            cfm_with_grad(view(q, n, d), x.view(), y.view()).0
        }));
    }
    worst
}

pub fn wcfm_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n, d) = shape(&mut rng);
        let pred = gaussian_matrix(&mut rng, n, d);
        let x = gaussian_matrix(&mut rng, n, d);
        let y = gaussian_matrix(&mut rng, n, d);
        // Spans both sides of the 1e-3 floor.
        let sigma = uniform(&mut rng, n, d, -5.0, 1.0).mapv(|v: f64| 10f64.powf(v));
        let (_, g) = wcfm_with_grad(pred.view(), x.view(), y.view(), sigma.view());
        let p = pred.as_slice().unwrap();
        worst = worst.max(check(p, g.as_slice().unwrap(), &all(p.len()), |q| {
            wcfm_with_grad(view(q, n, d), x.view(), y.view(), sigma.view()).0
        }));
    }
    worst
}

/// Mean and log-variance gradients of the VGL; log-variances stay inside the clamp.
pub fn vgl_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n, d) = shape(&mut rng);
        let y = gaussian_matrix(&mut rng, n, d);
        let mean = gaussian_matrix(&mut rng, n, d);
        let lv = uniform(&mut rng, n, d, -4.0, 3.0);
        let g = vgl_with_grad(y.view(), mean.view(), lv.view());
        let m = mean.as_slice().unwrap();
        worst = worst.max(check(m, g.d_mean.as_slice().unwrap(), &all(m.len()), |q| {
            vgl_with_grad(y.view(), view(q, n, d), lv.view()).loss
        }));
        let l = lv.as_slice().unwrap();
        worst = worst.max(check(l, g.d_log_var.as_slice().unwrap(), &all(l.len()), |q| {
            vgl_with_grad(y.view(), mean.view(), view(q, n, d)).loss
        }));
    }
    worst
}

pub fn kl_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n, d) = shape(&mut rng);
        let mean = gaussian_matrix(&mut rng, n, d);
        let lv = uniform(&mut rng, n, d, -4.0, 3.0);
        let g = kl_with_grad(mean.view(), lv.view());
        let m = mean.as_slice().unwrap();
        worst = worst.max(check(m, g.d_mean.as_slice().unwrap(), &all(m.len()), |q| {
            kl_with_grad(view(q, n, d), lv.view()).loss
        }));
        let l = lv.as_slice().unwrap();
        worst = worst.max(check(l, g.d_log_var.as_slice().unwrap(), &all(l.len()), |q| {
            kl_with_grad(mean.view(), view(q, n, d)).loss
        }));
    }
    worst
}

/// A small network with every parameter randomized, including the
/// normally zero output layer.
pub fn random_model(rng: &mut Rng, config: RegressorConfig) -> ConditionedRegressor<f64> {
    let mut m = ConditionedRegressor::<f64>::new(config, rng).expect("config");
    for p in m.params_mut() {
        *p = rng.random_range(-0.6..0.6);
    }
    m
}

fn random_config(rng: &mut Rng) -> RegressorConfig {
    RegressorConfig {
        input_dim: rng.random_range(1..5),
        cond_dim: rng.random_range(0..3),
        output_dim: rng.random_range(1..4),
        hidden: rng.random_range(2..9),
        depth: rng.random_range(0..3),
        time_embedding: rng.random_bool(0.7),
    }
}

/// Parameter and input gradients of `L = Σ out ⊙ G` for random networks.
pub fn model_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let cfg = random_config(&mut rng);
        let mut model = random_model(&mut rng, cfg);
        let n = rng.random_range(1..4);
        let states = gaussian_matrix(&mut rng, n, cfg.input_dim);
        let t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let cond = (cfg.cond_dim > 0).then(|| gaussian_matrix(&mut rng, n, cfg.cond_dim));
        let g_out = gaussian_matrix(&mut rng, n, cfg.output_dim);
        let loss = |m: &ConditionedRegressor<f64>, s: ArrayView2<f64>| {
            let out = m
                .forward_batch(s, &t, cond.as_ref().map(|c| c.view()))
                .expect("forward");
            (&out * &g_out).sum()
        };
        let mut tape = Tape::new();
        model
            .forward_recorded(&mut tape, states.view(), &t, cond.as_ref().map(|c| c.view()))
            .unwrap();
        let grads = model.backward(&tape, g_out.view()).unwrap();

        let params = model.params().to_vec();
        let coords = some(&mut rng, params.len(), 60);
        worst = worst.max(check(&params, &grads.params, &coords, |q| {
            model.params_mut().copy_from_slice(q);
            loss(&model, states.view())
        }));
        model.params_mut().copy_from_slice(&params);

        let s = states.as_slice().unwrap();
        let gs: Vec<f64> = grads.state.iter().copied().collect();
        worst = worst.max(check(s, &gs, &all(s.len()), |q| {
            loss(&model, view(q, n, cfg.input_dim))
        }));
    }
    worst
}

/// Encoder and decoder gradients of `β·KL + VGL` through the reparameterized draw.
pub fn aux_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = rng.random_range(1..4);
        let k = rng.random_range(1..4);
        let hidden = rng.random_range(2..7);
        let depth = rng.random_range(0..3);
        let enc_cfg = RegressorConfig {
            input_dim: d,
            cond_dim: 0,
            output_dim: 2 * k,
            hidden,
            depth,
            time_embedding: false,
        };
        let dec_cfg = RegressorConfig {
            input_dim: k,
            output_dim: 2 * d,
            ..enc_cfg
        };
        let mut enc = random_model(&mut rng, enc_cfg);
        let mut dec = random_model(&mut rng, dec_cfg);
        let beta = rng.random_range(0.0..2.0);
        let n = rng.random_range(1..4);
        let y = gaussian_matrix(&mut rng, n, d);
        let eps = gaussian_matrix(&mut rng, n, k);
        let step = aux_objective(&enc, &dec, beta, y.view(), eps.view()).unwrap();
        let objective = |e: &ConditionedRegressor<f64>, dm: &ConditionedRegressor<f64>| {
            let s = aux_objective(e, dm, beta, y.view(), eps.view()).unwrap();
            beta * s.kl + s.vgl
        };

        let ep = enc.params().to_vec();
        let coords = some(&mut rng, ep.len(), 40);
        worst = worst.max(check(&ep, &step.enc_grad, &coords, |q| {
            enc.params_mut().copy_from_slice(q);
            objective(&enc, &dec)
        }));
        enc.params_mut().copy_from_slice(&ep);

        let dp = dec.params().to_vec();
        let coords = some(&mut rng, dp.len(), 40);
        worst = worst.max(check(&dp, &step.dec_grad, &coords, |q| {
            dec.params_mut().copy_from_slice(q);
            objective(&enc, &dec)
        }));
    }
    worst
}

/// Parameter gradients of the flow objective on fixed batches, both priors.
pub fn flow_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let d = rng.random_range(1..4);
        let k = if i % 2 == 0 { 0 } else { rng.random_range(1..4) };
        let cfg = flow_config(d, k, rng.random_range(2..7), rng.random_range(0..3));
        let mut model = random_model(&mut rng, cfg);
        let n = rng.random_range(1..4);
        let batch = FlowTrainBatch {
            x: gaussian_matrix(&mut rng, n, d),
            y: gaussian_matrix(&mut rng, n, d),
            t: (0..n).map(|_| rng.random::<f64>()).collect(),
            cond: (k > 0).then(|| gaussian_matrix(&mut rng, n, k)),
            sigma_prior: (k > 0).then(|| uniform(&mut rng, n, d, 1e-4, 2.0)),
        };
        let (_, grad) = flow_objective(&model, &batch).unwrap();
        let params = model.params().to_vec();
        let coords = some(&mut rng, params.len(), 40);
        worst = worst.max(check(&params, &grad, &coords, |q| {
            model.params_mut().copy_from_slice(q);
            flow_objective(&model, &batch).unwrap().0
        }));
    }
    worst
}
