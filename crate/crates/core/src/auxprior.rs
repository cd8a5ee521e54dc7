//! Auxiliary encoder/decoder that predicts a per-dimension Gaussian prior.
//!
//! The encoder maps a data point to a diagonal Gaussian posterior over a
//! `k`-dim latent; the decoder maps a latent code to a diagonal Gaussian over
//! data space, which is the learned prior the flow starts from. Training
//! minimizes `β·KL(posterior ‖ N(0, 1)) + VGL`, both averaged over
//! dimensions and batch.

use ndarray::{s, Array2, ArrayView2, Zip};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::error::{Error, Result};
use crate::nn::{to_f64, to_real, ConditionedRegressor, RegressorConfig, Tape};
use crate::optim::AdamW;
use crate::real::Real;
use crate::rng::{gaussian_draw, gaussian_matrix, seeded_rng, Rng};
use crate::sample::{DiagonalGaussian, LatentCode, Sample, SampleSet};
use crate::train::{Batcher, EpochMeter, LossHistory, TrainConfig};

pub const LOG_VAR_MIN: f64 = -30.0;
pub const LOG_VAR_MAX: f64 = 10.0;
/// Lower bound on the decoder σ wherever it is consumed.
pub const SIGMA_FLOOR: f64 = 1e-3;
pub const DEFAULT_BETA: f64 = 1e-3;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

pub fn clamp_log_var<T: Real>(lv: T) -> T {
    lv.max(T::lit(LOG_VAR_MIN)).min(T::lit(LOG_VAR_MAX))
}

fn in_clamp_range<T: Real>(lv: T) -> bool {
    lv >= T::lit(LOG_VAR_MIN) && lv <= T::lit(LOG_VAR_MAX)
}

/// Decoder standard deviation after clamping and flooring.
pub fn prior_sigma<T: Real>(log_var: T) -> T {
    (clamp_log_var(log_var) * T::lit(0.5)).exp().max(T::lit(SIGMA_FLOOR))
}

/// Loss value with gradients for the mean and log-variance inputs.
#[derive(Debug, Clone)]
pub struct GaussianLossGrad<T: Real> {
    pub loss: T,
    pub d_mean: Array2<T>,
    pub d_log_var: Array2<T>,
}

/// Variance-guided loss: `½((y−μ)²/σ² + log σ² + log 2π)` averaged over all
/// entries, with `log σ²` clamped to `[-30, 10]` (zero gradient outside).
pub fn vgl_with_grad<T: Real>(y: ArrayView2<T>, mean: ArrayView2<T>, log_var: ArrayView2<T>) -> GaussianLossGrad<T> {
    let n = T::lit(y.len() as f64);
    let half = T::lit(0.5);
    let c = T::lit(HALF_LOG_2PI);
    let mut loss = T::zero();
    let mut d_mean = Array2::zeros(y.raw_dim());
    let mut d_log_var = Array2::zeros(y.raw_dim());
    Zip::from(&mut d_mean)
        .and(&mut d_log_var)
        .and(y)
        .and(mean)
        .and(log_var)
        .for_each(|dm, dl, &yi, &mi, &lvi| {
            let lv = clamp_log_var(lvi);
            let inv_var = (-lv).exp();
            let r = yi - mi;
            let r2_iv = r * r * inv_var;
            loss += half * (r2_iv + lv) + c;
            *dm = -r * inv_var / n;
            *dl = if in_clamp_range(lvi) {
                half * (T::one() - r2_iv) / n
            } else {
                T::zero()
            };
        });
    GaussianLossGrad {
        loss: loss / n,
        d_mean,
        d_log_var,
    }
}

/// `½(μ² + σ² − log σ² − 1)` averaged over all entries.
pub fn kl_with_grad<T: Real>(mean: ArrayView2<T>, log_var: ArrayView2<T>) -> GaussianLossGrad<T> {
    let n = T::lit(mean.len() as f64);
    let half = T::lit(0.5);
    let mut loss = T::zero();
    let mut d_mean = Array2::zeros(mean.raw_dim());
    let mut d_log_var = Array2::zeros(mean.raw_dim());
    Zip::from(&mut d_mean)
        .and(&mut d_log_var)
        .and(mean)
        .and(log_var)
        .for_each(|dm, dl, &mi, &lvi| {
            let lv = clamp_log_var(lvi);
            let var = lv.exp();
            loss += half * (mi * mi + var - lv - T::one());
            *dm = mi / n;
            *dl = if in_clamp_range(lvi) {
                half * (var - T::one()) / n
            } else {
                T::zero()
            };
        });
    GaussianLossGrad {
        loss: loss / n,
        d_mean,
        d_log_var,
    }
}

fn row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row view")
}

/// Negative log-density of `y` under `p`, averaged over dimensions.
pub fn vgl_loss(y: &Sample, p: &DiagonalGaussian) -> Result<f64> {
    if y.len() != p.dim() {
        return Err(Error::dim("vgl target", p.dim(), y.len()));
    }
    let out = vgl_with_grad(row(y.values()), row(&p.mean), row(&p.log_var)).loss;
    if !out.is_finite() {
        return Err(Error::NonFinite("vgl loss"));
    }
    Ok(out)
}

/// KL divergence to `N(0, 1)`, averaged over dimensions.
pub fn kl_to_standard_normal(g: &DiagonalGaussian) -> f64 {
    kl_with_grad(row(&g.mean), row(&g.log_var)).loss
}

/// `μ + σ ⊙ ε` with `ε ∼ N(0, 1)` and clamped log-variance.
pub fn reparam_sample(g: &DiagonalGaussian, rng: &mut Rng) -> LatentCode {
    let eps = gaussian_draw(rng, g.dim());
    LatentCode(
        g.mean
            .iter()
            .zip(&g.log_var)
            .zip(eps)
            .map(|((m, lv), e)| m + (0.5 * clamp_log_var(*lv)).exp() * e)
            .collect(),
    )
}

/// Row batch of diagonal Gaussians; `log_var` is stored clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch {
    pub mean: Array2<f64>,
    pub log_var: Array2<f64>,
}

impl GaussianBatch {
    fn from_output(out: Array2<f64>) -> Self {
        let half = out.ncols() / 2;
        Self {
            mean: out.slice(s![.., ..half]).to_owned(),
            log_var: out.slice(s![.., half..]).mapv(clamp_log_var),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.nrows() == 0
    }

    pub fn get(&self, i: usize) -> DiagonalGaussian {
        DiagonalGaussian {
            mean: self.mean.row(i).to_vec(),
            log_var: self.log_var.row(i).to_vec(),
        }
    }

    pub fn sigma(&self) -> Array2<f64> {
        self.log_var.mapv(|lv| (0.5 * lv).exp())
    }

    /// Decoder σ with the floor applied.
    pub fn prior_sigma(&self) -> Array2<f64> {
        self.log_var.mapv(prior_sigma)
    }

    /// Reparameterized draw `μ + σ ⊙ ε`, one row per Gaussian.
    pub fn reparam(&self, rng: &mut Rng) -> Array2<f64> {
        let eps = gaussian_matrix(rng, self.mean.nrows(), self.mean.ncols());
        &self.mean + &(self.sigma() * eps)
    }

    /// Draw from the learned prior, using the floored σ.
    pub fn sample_prior(&self, rng: &mut Rng) -> Array2<f64> {
        let eps = gaussian_matrix(rng, self.mean.nrows(), self.mean.ncols());
        &self.mean + &(self.prior_sigma() * eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxConfig {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub beta: f64,
}

impl AuxConfig {
    pub fn new(data_dim: usize, latent_dim: usize) -> Self {
        Self {
            data_dim,
            latent_dim,
            hidden: 128,
            depth: 3,
            beta: DEFAULT_BETA,
        }
    }
}

/// Encoder (`d → 2k`) and decoder (`k → 2d`) pair. Outputs are `[mean ‖ log_var]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxModel {
    pub encoder: ConditionedRegressor<f32>,
    pub decoder: ConditionedRegressor<f32>,
    pub beta: f64,
}

impl AuxModel {
    pub fn new(config: AuxConfig, rng: &mut Rng) -> Result<Self> {
        if !(config.beta > 0.0) {
            return Err(Error::InvalidArgument("beta must be > 0".into()));
        }
        let encoder = ConditionedRegressor::new(
            RegressorConfig {
                input_dim: config.data_dim,
                cond_dim: 0,
                output_dim: 2 * config.latent_dim,
                hidden: config.hidden,
                depth: config.depth,
                time_embedding: false,
            },
            rng,
        )?;
        let decoder = ConditionedRegressor::new(
            RegressorConfig {
                input_dim: config.latent_dim,
                cond_dim: 0,
                output_dim: 2 * config.data_dim,
                hidden: config.hidden,
                depth: config.depth,
                time_embedding: false,
            },
            rng,
        )?;
        Ok(Self {
            encoder,
            decoder,
            beta: config.beta,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.config().input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.config().input_dim
    }

    pub fn encode_batch(&self, y: ArrayView2<f64>) -> Result<GaussianBatch> {
        let t = vec![0.0f32; y.nrows()];
        let out = self.encoder.forward_batch(to_real::<f32>(y).view(), &t, None)?;
        Ok(GaussianBatch::from_output(to_f64(out.view())))
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<GaussianBatch> {
        let t = vec![0.0f32; z.nrows()];
        let out = self.decoder.forward_batch(to_real::<f32>(z).view(), &t, None)?;
        Ok(GaussianBatch::from_output(to_f64(out.view())))
    }

    /// Posterior over the latent for one data point.
    pub fn encode(&self, y: &Sample) -> Result<DiagonalGaussian> {
        Ok(self.encode_batch(row(y.values()))?.get(0))
    }

    /// The learned prior for one latent code.
    pub fn decode(&self, z: &LatentCode) -> Result<DiagonalGaussian> {
        Ok(self.decode_batch(row(z.as_slice()))?.get(0))
    }

    /// `(ENC, DEC)` checkpoints; β rides along in the encoder file.
    pub fn to_checkpoints(&self) -> (Checkpoint, Checkpoint) {
        (
            Checkpoint::from_model(ModelKind::Encoder, &self.encoder).with_scalar("meta.beta", self.beta as f32),
            Checkpoint::from_model(ModelKind::Decoder, &self.decoder),
        )
    }

    pub fn from_checkpoints(enc: &Checkpoint, dec: &Checkpoint) -> Result<Self> {
        let encoder = enc.to_model(ModelKind::Encoder)?;
        let decoder = dec.to_model(ModelKind::Decoder)?;
        if encoder.config().output_dim != 2 * decoder.config().input_dim
            || decoder.config().output_dim != 2 * encoder.config().input_dim
        {
            return Err(Error::Format("encoder and decoder dimensions disagree".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            beta: enc.scalar("meta.beta").map(f64::from).unwrap_or(DEFAULT_BETA),
        })
    }
}

/// Per-epoch means of the objective and its two terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuxHistory {
    pub total: LossHistory,
    pub vgl: LossHistory,
    pub kl: LossHistory,
}

/// One objective evaluation with gradients for both networks.
#[derive(Debug, Clone)]
pub struct AuxStep<T: Real> {
    pub vgl: T,
    pub kl: T,
    pub enc_grad: Vec<T>,
    pub dec_grad: Vec<T>,
}

/// `β·KL + VGL` on a batch for a fixed noise draw `eps`, with gradients.
/// The encoder gradient includes the pathwise term through `z = μ + σ·eps`.
pub fn aux_objective<T: Real>(
    encoder: &ConditionedRegressor<T>,
    decoder: &ConditionedRegressor<T>,
    beta: T,
    y: ArrayView2<T>,
    eps: ArrayView2<T>,
) -> Result<AuxStep<T>> {
    let k = decoder.config().input_dim;
    let n = y.nrows();
    let t = vec![T::zero(); n];
    let mut enc_tape = Tape::new();
    let enc_out = encoder.forward_recorded(&mut enc_tape, y, &t, None)?;
    let mu = enc_out.slice(s![.., ..k]);
    let lv_raw = enc_out.slice(s![.., k..]);
    let sigma = lv_raw.mapv(|v| (clamp_log_var(v) * T::lit(0.5)).exp());
    let z = &mu + &(&sigma * &eps);

    let mut dec_tape = Tape::new();
    let dec_out = decoder.forward_recorded(&mut dec_tape, z.view(), &t, None)?;
    let d = decoder.config().output_dim / 2;
    let vgl = vgl_with_grad(y, dec_out.slice(s![.., ..d]), dec_out.slice(s![.., d..]));
    let mut g_dec = Array2::zeros(dec_out.raw_dim());
    g_dec.slice_mut(s![.., ..d]).assign(&vgl.d_mean);
    g_dec.slice_mut(s![.., d..]).assign(&vgl.d_log_var);
    let dec_grads = decoder.backward(&dec_tape, g_dec.view())?;
    let gz = dec_grads.state;

    let kl = kl_with_grad(mu, lv_raw);
    let mut g_enc = Array2::zeros(enc_out.raw_dim());
    g_enc.slice_mut(s![.., ..k]).assign(&(&kl.d_mean * beta + &gz));
    let half = T::lit(0.5);
    let mut d_lv = &kl.d_log_var * beta;
    Zip::from(&mut d_lv)
        .and(&gz)
        .and(&eps)
        .and(&sigma)
        .and(lv_raw)
        .for_each(|dl, &g, &e, &s, &raw| {
            if in_clamp_range(raw) {
                *dl += g * e * s * half;
            }
        });
    g_enc.slice_mut(s![.., k..]).assign(&d_lv);
    let enc_grads = encoder.backward(&enc_tape, g_enc.view())?;
    Ok(AuxStep {
        vgl: vgl.loss,
        kl: kl.loss,
        enc_grad: enc_grads.params,
        dec_grad: dec_grads.params,
    })
}

/// Minimizes `β·KL + VGL` with AdamW over shuffled minibatches.
pub fn train_auxiliary(aux: &mut AuxModel, data: &SampleSet, config: &TrainConfig) -> Result<AuxHistory> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if data.dim() != aux.data_dim() {
        return Err(Error::dim("aux training data", aux.data_dim(), data.dim()));
    }
    let mut rng = seeded_rng(config.seed);
    let mut enc_opt = AdamW::<f32>::new(config.optim, aux.encoder.num_params());
    let mut dec_opt = AdamW::<f32>::new(config.optim, aux.decoder.num_params());
    let mut batcher = Batcher::new(data.len());
    let mut history = AuxHistory::default();
    let (mut m_total, mut m_vgl, mut m_kl) = (EpochMeter::default(), EpochMeter::default(), EpochMeter::default());
    let mut last_good = aux.to_checkpoints();
    let beta = aux.beta as f32;
    let k = aux.latent_dim();

    for step in 0..config.steps {
        let (idx, epoch_end) = batcher.next(config.batch_size, &mut rng);
        let y = to_real::<f32>(data.data().select(ndarray::Axis(0), &idx).view());
        let eps = to_real::<f32>(gaussian_matrix(&mut rng, idx.len(), k).view());
        let out = aux_objective(&aux.encoder, &aux.decoder, beta, y.view(), eps.view())?;
        let total = f64::from(beta * out.kl + out.vgl);
        if !total.is_finite() {
            return Err(Error::Diverged {
                stage: "aux",
                step,
                last_good: Box::new(vec![last_good.0, last_good.1]),
            });
        }
        enc_opt.step(aux.encoder.params_mut(), &out.enc_grad)?;
        dec_opt.step(aux.decoder.params_mut(), &out.dec_grad)?;
        m_total.add(total);
        m_vgl.add(f64::from(out.vgl));
        m_kl.add(f64::from(out.kl));
        if epoch_end || step + 1 == config.steps {
            m_total.close(step + 1, &mut history.total);
            m_vgl.close(step + 1, &mut history.vgl);
            m_kl.close(step + 1, &mut history.kl);
            last_good = aux.to_checkpoints();
        }
    }
    Ok(history)
}

/// Mean posterior KL over a dataset, using the same reduction as training.
pub fn mean_posterior_kl(aux: &AuxModel, data: &SampleSet) -> Result<f64> {
    let g = aux.encode_batch(data.data())?;
    Ok(kl_with_grad(g.mean.view(), g.log_var.view()).loss)
}
