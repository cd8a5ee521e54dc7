//! Latent sampler: an unconditional flow from `N(0, 1)` in latent space to the
//! encoder's latent distribution, and its reverse map.

use ndarray::{Array2, ArrayView2, Axis};

use crate::auxprior::AuxModel;
use crate::checkpoint::ModelKind;
use crate::error::{Error, Result};
use crate::flowmatch::{as_vector_field, flow_config, run_flow_training, FlowTrainBatch};
use crate::nn::{ConditionedRegressor, RegressorConfig};
use crate::ode::{integrate, reverse_map, Method, SolverConfig};
use crate::rng::{gaussian_matrix, uniform01, Rng};
use crate::sample::{LatentCode, SampleSet};
use crate::train::{LossHistory, TrainConfig};

pub const DEFAULT_LATENT_STEPS: usize = 4;
pub const DEFAULT_LATENT_METHOD: Method = Method::Midpoint;
/// Reverse steps used when mapping a latent back to noise.
pub const DEFAULT_INVERT_STEPS: usize = 32;

pub fn latent_config(latent_dim: usize, hidden: usize, depth: usize) -> RegressorConfig {
    flow_config(latent_dim, 0, hidden, depth)
}

/// Trains on pairs `(w, ẑ)` with `w ∼ N(0, 1)` and `ẑ` a reparameterized
/// draw from the frozen encoder's posterior, using plain CFM.
pub fn train_latent_sampler(
    model: &mut ConditionedRegressor<f32>,
    aux: &AuxModel,
    data: &SampleSet,
    config: &TrainConfig,
) -> Result<LossHistory> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mc = model.config();
    if mc.input_dim != aux.latent_dim() || mc.cond_dim != 0 {
        return Err(Error::dim("latent sampler", aux.latent_dim(), mc.input_dim));
    }
    if data.dim() != aux.data_dim() {
        return Err(Error::dim("latent training data", aux.data_dim(), data.dim()));
    }
    run_flow_training(model, ModelKind::Latent, data.len(), config, |idx, rng| {
        let y = data.data().select(Axis(0), idx);
        let z = aux.encode_batch(y.view())?.reparam(rng);
        let t = (0..idx.len()).map(|_| uniform01(rng)).collect();
        let w = gaussian_matrix(rng, idx.len(), z.ncols());
        Ok(FlowTrainBatch {
            x: w,
            y: z,
            t,
            cond: None,
            sigma_prior: None,
        })
    })
}

/// `n` latents: `w ∼ N(0, 1)` integrated forward.
pub fn sample_latents(
    model: &ConditionedRegressor<f32>,
    rng: &mut Rng,
    n: usize,
    steps: usize,
    method: Method,
) -> Result<Array2<f64>> {
    let w = gaussian_matrix(rng, n, model.config().input_dim);
    push_forward(model, w.view(), steps, method)
}

pub fn sample_latent(
    model: &ConditionedRegressor<f32>,
    rng: &mut Rng,
    steps: usize,
    method: Method,
) -> Result<LatentCode> {
    let z = sample_latents(model, rng, 1, steps, method)?;
    Ok(LatentCode(z.into_raw_vec_and_offset().0))
}

/// Integrates noise rows `w` forward to latents.
pub fn push_forward(
    model: &ConditionedRegressor<f32>,
    w: ArrayView2<f64>,
    steps: usize,
    method: Method,
) -> Result<Array2<f64>> {
    integrate(&as_vector_field(model, None), w, SolverConfig::forward(method, steps))
}

/// Reverse-integrates latent rows `z` back to noise space.
pub fn invert_latents(
    model: &ConditionedRegressor<f32>,
    z: ArrayView2<f64>,
    steps: usize,
    method: Method,
) -> Result<Array2<f64>> {
    if z.ncols() != model.config().input_dim {
        return Err(Error::dim("latent", model.config().input_dim, z.ncols()));
    }
    reverse_map(&as_vector_field(model, None), z, method, steps)
}

pub fn invert_latent(
    model: &ConditionedRegressor<f32>,
    z: &LatentCode,
    steps: usize,
    method: Method,
) -> Result<LatentCode> {
    let view = ArrayView2::from_shape((1, z.len()), z.as_slice()).expect("row view");
    let w = invert_latents(model, view, steps, method)?;
    Ok(LatentCode(w.into_raw_vec_and_offset().0))
}

/// Mean over rows of `‖sample(invert(z)) − z‖ / ‖z‖`.
pub fn round_trip_error(
    model: &ConditionedRegressor<f32>,
    z: ArrayView2<f64>,
    steps: usize,
    method: Method,
) -> Result<f64> {
    let w = invert_latents(model, z, steps, method)?;
    let back = push_forward(model, w.view(), steps, method)?;
    let mut total = 0.0;
    for (a, b) in z.rows().into_iter().zip(back.rows()) {
        let num = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        total += num / den;
    }
    Ok(total / z.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn zero_model_is_identity_both_ways() {
        let model = ConditionedRegressor::<f32>::new(latent_config(5, 16, 2), &mut seeded_rng(0)).unwrap();
        let mut rng = seeded_rng(3);
        let w_rng_copy = gaussian_matrix(&mut seeded_rng(3), 1, 5);
        let z = sample_latent(&model, &mut rng, 4, Method::Midpoint).unwrap();
        assert_eq!(z.len(), 5);
        assert_eq!(z.0, w_rng_copy.row(0).to_vec());
        let w = invert_latent(&model, &z, 8, Method::Midpoint).unwrap();
        assert_eq!(w, z);
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = ConditionedRegressor::<f32>::new(latent_config(3, 8, 1), &mut seeded_rng(0)).unwrap();
        let a = sample_latents(&model, &mut seeded_rng(9), 4, 4, Method::Heun3).unwrap();
        let b = sample_latents(&model, &mut seeded_rng(9), 4, 4, Method::Heun3).unwrap();
        assert_eq!(a, b);
    }
}
