//! Flow-matching model training: plain CFM against a Gaussian prior, and the
//! importance-weighted variant against the learned prior.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::auxprior::AuxModel;
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::error::{Error, Result};
use crate::nn::{to_f64, to_real, ConditionedRegressor, RegressorConfig, Tape};
use crate::ode::VectorField;
use crate::optim::AdamW;
use crate::real::Real;
use crate::rng::{gaussian_matrix, seeded_rng, uniform01, Rng};
use crate::sample::{Sample, SampleSet};
use crate::train::{Batcher, EpochMeter, LossHistory, TrainConfig};

/// Largest per-element importance weight, i.e. `1 / σ_floor`.
pub const MAX_WEIGHT: f64 = 1e3;

/// `y·t + x·(1 − t)`.
pub fn interpolate(x: &Sample, y: &Sample, t: f64) -> Result<Sample> {
    if x.shape() != y.shape() {
        return Err(Error::dim("interpolate", x.len(), y.len()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    let v = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| b * t + a * (1.0 - t))
        .collect();
    Sample::new(v, x.shape().to_vec())
}

/// Row-wise interpolation with one `t` per row.
pub fn interpolate_batch(x: ArrayView2<f64>, y: ArrayView2<f64>, t: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let ti = t[i];
        Zip::from(&mut row)
            .and(x.row(i))
            .and(y.row(i))
            .for_each(|o, &a, &b| *o = b * ti + a * (1.0 - ti));
    }
    out
}

/// `1 / σ` capped at [`MAX_WEIGHT`]; equivalent to flooring σ at `10⁻³`.
pub fn importance_weight<T: Real>(sigma: T) -> T {
    (T::one() / sigma).min(T::lit(MAX_WEIGHT))
}

/// Mean squared error between `pred` and the straight-line target `y − x`,
/// with its gradient in `pred`.
pub fn cfm_with_grad<T: Real>(pred: ArrayView2<T>, x: ArrayView2<T>, y: ArrayView2<T>) -> (T, Array2<T>) {
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Array2::zeros(pred.raw_dim());
    Zip::from(&mut grad)
        .and(pred)
        .and(x)
        .and(y)
        .for_each(|g, &p, &xi, &yi| {
            let e = p - (yi - xi);
            loss += e * e;
            *g = two * e / n;
        });
    (loss / n, grad)
}

/// As [`cfm_with_grad`] with each squared error scaled by `1 / max(σ, 10⁻³)`.
/// `sigma` is treated as a constant.
pub fn wcfm_with_grad<T: Real>(
    pred: ArrayView2<T>,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    sigma: ArrayView2<T>,
) -> (T, Array2<T>) {
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Array2::zeros(pred.raw_dim());
    Zip::from(&mut grad)
        .and(pred)
        .and(x)
        .and(y)
        .and(sigma)
        .for_each(|g, &p, &xi, &yi, &s| {
            let w = importance_weight(s);
            let e = p - (yi - xi);
            loss += w * (e * e);
            *g = two * w * e / n;
        });
    (loss / n, grad)
}

fn row(s: &Sample) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, s.len()), s.values()).expect("row view")
}

pub fn cfm_loss(pred_v: &Sample, x: &Sample, y: &Sample) -> Result<f64> {
    if pred_v.len() != x.len() || x.len() != y.len() {
        return Err(Error::dim("cfm loss", x.len(), pred_v.len()));
    }
    Ok(cfm_with_grad(row(pred_v), row(x), row(y)).0)
}

pub fn wcfm_loss(pred_v: &Sample, x: &Sample, y: &Sample, sigma_prior: &Sample) -> Result<f64> {
    if pred_v.len() != x.len() || x.len() != y.len() || y.len() != sigma_prior.len() {
        return Err(Error::dim("wcfm loss", x.len(), pred_v.len()));
    }
    if sigma_prior.values().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("sigma_prior must be > 0".into()));
    }
    Ok(wcfm_with_grad(row(pred_v), row(x), row(y), row(sigma_prior)).0)
}

/// Where flow training draws its starting points from.
#[derive(Debug, Clone, Copy)]
pub enum PriorSource<'a> {
    /// `x ∼ N(0, 1)`, unconditional field, CFM loss.
    Gaussian,
    /// `x ∼ P_L(ẑ)` from a frozen auxiliary model, field conditioned on ẑ, WCFM loss.
    Learned(&'a AuxModel),
}

/// Everything one flow-matching step consumes.
#[derive(Debug, Clone)]
pub struct FlowTrainBatch {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub t: Vec<f64>,
    /// Latent codes ẑ; `None` for the Gaussian baseline.
    pub cond: Option<Array2<f64>>,
    /// Floored decoder σ; `None` for the Gaussian baseline.
    pub sigma_prior: Option<Array2<f64>>,
}

/// Builds a training batch for the data rows `y`.
pub fn draw_flow_batch(prior: PriorSource<'_>, y: Array2<f64>, rng: &mut Rng) -> Result<FlowTrainBatch> {
    let n = y.nrows();
    let t: Vec<f64> = (0..n).map(|_| uniform01(rng)).collect();
    match prior {
        PriorSource::Gaussian => Ok(FlowTrainBatch {
            x: gaussian_matrix(rng, n, y.ncols()),
            y,
            t,
            cond: None,
            sigma_prior: None,
        }),
        PriorSource::Learned(aux) => {
            let z_hat = aux.encode_batch(y.view())?.reparam(rng);
            let prior = aux.decode_batch(z_hat.view())?;
            let x = prior.sample_prior(rng);
            Ok(FlowTrainBatch {
                x,
                y,
                t,
                cond: Some(z_hat),
                sigma_prior: Some(prior.prior_sigma()),
            })
        }
    }
}

/// Configuration of a flow network over `data_dim` with an optional latent condition.
pub fn flow_config(data_dim: usize, cond_dim: usize, hidden: usize, depth: usize) -> RegressorConfig {
    RegressorConfig {
        input_dim: data_dim,
        cond_dim,
        output_dim: data_dim,
        hidden,
        depth,
        time_embedding: true,
    }
}

/// One loss/gradient evaluation on a prepared batch.
pub fn flow_objective<T: Real>(model: &ConditionedRegressor<T>, batch: &FlowTrainBatch) -> Result<(T, Vec<T>)> {
    let phi = interpolate_batch(batch.x.view(), batch.y.view(), &batch.t);
    let t: Vec<T> = batch.t.iter().map(|&v| T::lit(v)).collect();
    let cond = batch.cond.as_ref().map(|c| to_real::<T>(c.view()));
    let mut tape = Tape::new();
    let pred = model.forward_recorded(
        &mut tape,
        to_real::<T>(phi.view()).view(),
        &t,
        cond.as_ref().map(|c| c.view()),
    )?;
    let x = to_real::<T>(batch.x.view());
    let y = to_real::<T>(batch.y.view());
    let (loss, grad) = match &batch.sigma_prior {
        Some(s) => wcfm_with_grad(pred.view(), x.view(), y.view(), to_real::<T>(s.view()).view()),
        None => cfm_with_grad(pred.view(), x.view(), y.view()),
    };
    let grads = model.backward(&tape, grad.view())?;
    Ok((loss, grads.params))
}

/// Trains `model` with AdamW; returns per-epoch mean loss.
pub fn train_flow(
    model: &mut ConditionedRegressor<f32>,
    prior: PriorSource<'_>,
    data: &SampleSet,
    config: &TrainConfig,
) -> Result<LossHistory> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mc = model.config();
    if mc.input_dim != data.dim() {
        return Err(Error::dim("flow training data", mc.input_dim, data.dim()));
    }
    match prior {
        PriorSource::Gaussian if mc.cond_dim != 0 => {
            return Err(Error::InvalidArgument(
                "Gaussian-prior flow must be unconditional".into(),
            ))
        }
        PriorSource::Learned(aux) if aux.latent_dim() != mc.cond_dim || aux.data_dim() != data.dim() => {
            return Err(Error::dim("flow condition", aux.latent_dim(), mc.cond_dim))
        }
        _ => {}
    }
    run_flow_training(model, ModelKind::Flow, data.len(), config, |idx, rng| {
        draw_flow_batch(prior, data.data().select(Axis(0), idx), rng)
    })
}

/// Shared AdamW loop for the flow and latent samplers.
pub(crate) fn run_flow_training(
    model: &mut ConditionedRegressor<f32>,
    kind: ModelKind,
    n: usize,
    config: &TrainConfig,
    mut draw: impl FnMut(&[usize], &mut Rng) -> Result<FlowTrainBatch>,
) -> Result<LossHistory> {
    let mut rng = seeded_rng(config.seed);
    let mut opt = AdamW::<f32>::new(config.optim, model.num_params());
    let mut batcher = Batcher::new(n);
    let mut history = LossHistory::default();
    let mut meter = EpochMeter::default();
    let mut last_good = Checkpoint::from_model(kind, model);
    for step in 0..config.steps {
        let (idx, epoch_end) = batcher.next(config.batch_size, &mut rng);
        let batch = draw(&idx, &mut rng)?;
        let (loss, grads) = flow_objective(model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                stage: kind.tag(),
                step,
                last_good: Box::new(vec![last_good]),
            });
        }
        opt.step(model.params_mut(), &grads)?;
        meter.add(f64::from(loss));
        if epoch_end || step + 1 == config.steps {
            meter.close(step + 1, &mut history);
            last_good = Checkpoint::from_model(kind, model);
        }
    }
    Ok(history)
}

/// A flow network viewed as an `f64` vector field, with a fixed per-row condition.
#[derive(Debug, Clone)]
pub struct FlowField<'a> {
    model: &'a ConditionedRegressor<f32>,
    cond: Option<Array2<f32>>,
}

impl VectorField<f64> for FlowField<'_> {
    fn velocity(&self, t: f64, state: ArrayView2<f64>) -> Result<Array2<f64>> {
        let times = vec![t as f32; state.nrows()];
        let out = self.model.forward_batch(
            to_real::<f32>(state).view(),
            &times,
            self.cond.as_ref().map(|c| c.view()),
        )?;
        Ok(to_f64(out.view()))
    }
}

/// Wraps `model` as a vector field. `cond` holds one latent row per state row.
pub fn as_vector_field<'a>(model: &'a ConditionedRegressor<f32>, cond: Option<ArrayView2<f64>>) -> FlowField<'a> {
    FlowField {
        model,
        cond: cond.map(|c| to_real::<f32>(c)),
    }
}
