//! Conditioned residual MLP with a hand-written backward pass.
//!
//! The network input is `[state ‖ time embedding ‖ condition]`. It is lifted
//! to `hidden` units by a linear layer, refined by `depth` pre-activation
//! residual blocks `h ← h + W·silu(h) + b`, and read out by a zero-initialized
//! linear layer applied to `silu(h)`. All parameters live in one flat vector;
//! gradients share that layout, which is what the optimizer and the
//! finite-difference checks operate on.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;

/// Number of sinusoid frequencies in the time embedding.
pub const TIME_FREQS: usize = 16;
/// Width of the time embedding (`sin` and `cos` per frequency).
pub const TIME_EMBED_DIM: usize = 2 * TIME_FREQS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegressorConfig {
    pub input_dim: usize,
    pub cond_dim: usize,
    pub output_dim: usize,
    pub hidden: usize,
    /// Number of residual blocks.
    pub depth: usize,
    /// Whether `t` is embedded and fed to the network.
    pub time_embedding: bool,
}

impl RegressorConfig {
    pub fn total_input(&self) -> usize {
        self.input_dim + if self.time_embedding { TIME_EMBED_DIM } else { 0 } + self.cond_dim
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("regressor dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(name, fan_in, fan_out)` for every linear layer, input to output.
    fn layers(&self) -> Vec<(String, usize, usize)> {
        let mut v = vec![("input".to_string(), self.total_input(), self.hidden)];
        for l in 0..self.depth {
            v.push((format!("block.{l}"), self.hidden, self.hidden));
        }
        v.push(("output".to_string(), self.hidden, self.output_dim));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Sinusoidal embedding of `t`: frequencies geometrically spaced from 1 to 1000.
pub fn time_embedding<T: Real>(t: T) -> [T; TIME_EMBED_DIM] {
    let mut out = [T::zero(); TIME_EMBED_DIM];
    for i in 0..TIME_FREQS {
        let freq = T::lit(1000f64.powf(i as f64 / (TIME_FREQS - 1) as f64));
        let arg = freq * t;
        out[i] = arg.sin();
        out[TIME_FREQS + i] = arg.cos();
    }
    out
}

fn silu<T: Real>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

fn silu_grad<T: Real>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

/// Differentiable map `(state, t, condition) → output`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedRegressor<T: Real> {
    config: RegressorConfig,
    layout: Vec<TensorSpec>,
    params: Vec<T>,
}

/// Activations recorded by a forward pass, consumed by [`ConditionedRegressor::backward`].
#[derive(Debug, Default)]
pub struct Tape<T: Real> {
    cache: Option<Cache<T>>,
}

#[derive(Debug)]
struct Cache<T: Real> {
    input: Array2<T>,
    /// Pre-activations fed to each `silu`, one per block plus the readout.
    pre: Vec<Array2<T>>,
    act: Vec<Array2<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn is_recorded(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T: Real> {
    /// Same layout as [`ConditionedRegressor::params`].
    pub params: Vec<T>,
    /// Gradient with respect to the `state` input rows.
    pub state: Array2<T>,
}

fn layout_for(config: &RegressorConfig) -> Vec<TensorSpec> {
    let mut offset = 0;
    let mut layout = Vec::new();
    for (name, fan_in, fan_out) in config.layers() {
        for (suffix, shape) in [("weight", vec![fan_in, fan_out]), ("bias", vec![fan_out])] {
            let spec = TensorSpec {
                name: format!("{name}.{suffix}"),
                shape,
                offset,
            };
            offset += spec.numel();
            layout.push(spec);
        }
    }
    layout
}

impl<T: Real> ConditionedRegressor<T> {
    /// Uniform `±1/√fan_in` weights, zero biases, zero output layer.
    pub fn new(config: RegressorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let layout = layout_for(&config);
        let total = layout.last().map(|s| s.offset + s.numel()).unwrap_or(0);
        let mut params = vec![T::zero(); total];
        let n_layers = layout.len() / 2;
        for (li, spec) in layout.iter().step_by(2).enumerate() {
            if li + 1 == n_layers {
                continue;
            }
            let bound = 1.0 / (spec.shape[0] as f64).sqrt();
            for p in &mut params[spec.range()] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from named tensors, e.g. after loading a checkpoint.
    pub fn from_named(config: RegressorConfig, tensors: &[(String, Vec<usize>, Vec<T>)]) -> Result<Self> {
        config.validate()?;
        let layout = layout_for(&config);
        let total = layout.last().map(|s| s.offset + s.numel()).unwrap_or(0);
        let mut params = vec![T::zero(); total];
        for spec in &layout {
            let (_, shape, data) = tensors
                .iter()
                .find(|(n, _, _)| *n == spec.name)
                .ok_or_else(|| Error::Format(format!("missing tensor {}", spec.name)))?;
            if *shape != spec.shape {
                return Err(Error::Format(format!(
                    "tensor {} has shape {shape:?}, expected {:?}",
                    spec.name, spec.shape
                )));
            }
            params[spec.range()].copy_from_slice(data);
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &RegressorConfig {
        &self.config
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &[usize], &[T])> {
        self.layout
            .iter()
            .map(|s| (s.name.as_str(), s.shape.as_slice(), &self.params[s.range()]))
    }

    pub fn cast<U: Real>(&self) -> ConditionedRegressor<U> {
        ConditionedRegressor {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| U::lit(p.as_f64())).collect(),
        }
    }

    fn weight(&self, layer: usize) -> ArrayView2<'_, T> {
        let spec = &self.layout[2 * layer];
        ArrayView2::from_shape((spec.shape[0], spec.shape[1]), &self.params[spec.range()]).expect("layout shape")
    }

    fn bias(&self, layer: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.params[self.layout[2 * layer + 1].range()])
    }

    fn build_input(&self, states: ArrayView2<T>, t: &[T], cond: Option<ArrayView2<T>>) -> Result<Array2<T>> {
        let c = &self.config;
        let n = states.nrows();
        if states.ncols() != c.input_dim {
            return Err(Error::dim("regressor state", c.input_dim, states.ncols()));
        }
        if c.time_embedding && t.len() != n {
            return Err(Error::dim("regressor time batch", n, t.len()));
        }
        match cond {
            Some(cm) if cm.ncols() != c.cond_dim || cm.nrows() != n => {
                return Err(Error::dim("regressor condition", c.cond_dim, cm.ncols()));
            }
            None if c.cond_dim != 0 => {
                return Err(Error::dim("regressor condition", c.cond_dim, 0));
            }
            _ => {}
        }
        let mut u = Array2::zeros((n, c.total_input()));
        u.slice_mut(s![.., ..c.input_dim]).assign(&states);
        let mut col = c.input_dim;
        if c.time_embedding {
            for (i, &ti) in t.iter().enumerate() {
                let emb = time_embedding(ti);
                for (j, e) in emb.into_iter().enumerate() {
                    u[[i, col + j]] = e;
                }
            }
            col += TIME_EMBED_DIM;
        }
        if let Some(cm) = cond {
            if c.cond_dim > 0 {
                u.slice_mut(s![.., col..]).assign(&cm);
            }
        }
        Ok(u)
    }

    fn run(&self, input: Array2<T>, record: bool) -> (Array2<T>, Option<Cache<T>>) {
        let depth = self.config.depth;
        let mut h = input.dot(&self.weight(0)) + &self.bias(0);
        let mut pre = Vec::new();
        let mut act = Vec::new();
        for l in 0..depth {
            let a = h.mapv(silu);
            let update = a.dot(&self.weight(l + 1)) + &self.bias(l + 1);
            if record {
                pre.push(h.clone());
                act.push(a);
            }
            h += &update;
        }
        let a = h.mapv(silu);
        let out = a.dot(&self.weight(depth + 1)) + &self.bias(depth + 1);
        let cache = record.then(|| {
            pre.push(h);
            act.push(a);
            Cache { input, pre, act }
        });
        (out, cache)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, state: &[T], t: T, cond: &[T]) -> Result<Vec<T>> {
        let states = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|_| Error::dim("regressor state", self.config.input_dim, state.len()))?;
        if cond.len() != self.config.cond_dim {
            return Err(Error::dim("regressor condition", self.config.cond_dim, cond.len()));
        }
        let cond_view = ArrayView2::from_shape((1, cond.len()), cond).expect("row view");
        let out = self.forward_batch(states, &[t], Some(cond_view))?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Row-batched forward pass. `t` holds one time per row (ignored when the
    /// model has no time embedding); `cond` must be given iff `cond_dim > 0`.
    pub fn forward_batch(&self, states: ArrayView2<T>, t: &[T], cond: Option<ArrayView2<T>>) -> Result<Array2<T>> {
        let input = self.build_input(states, t, cond)?;
        Ok(self.run(input, false).0)
    }

    /// Forward pass that records activations on `tape` for a later backward.
    pub fn forward_recorded(
        &self,
        tape: &mut Tape<T>,
        states: ArrayView2<T>,
        t: &[T],
        cond: Option<ArrayView2<T>>,
    ) -> Result<Array2<T>> {
        let input = self.build_input(states, t, cond)?;
        let (out, cache) = self.run(input, true);
        tape.cache = cache;
        Ok(out)
    }

    /// Backpropagates `grad_out` (dL/d output rows) through the pass recorded on `tape`.
    pub fn backward(&self, tape: &Tape<T>, grad_out: ArrayView2<T>) -> Result<Gradients<T>> {
        let cache = tape.cache.as_ref().ok_or(Error::NoForwardRecorded)?;
        let depth = self.config.depth;
        let n = cache.input.nrows();
        if grad_out.dim() != (n, self.config.output_dim) {
            return Err(Error::dim(
                "backward output gradient",
                self.config.output_dim,
                grad_out.ncols(),
            ));
        }
        let mut grads = vec![T::zero(); self.params.len()];

        let mut write_layer = |layer: usize, act_in: &Array2<T>, delta: &Array2<T>| {
            let wspec = &self.layout[2 * layer];
            let bspec = &self.layout[2 * layer + 1];
            let mut gw = ArrayViewMut2::from_shape((wspec.shape[0], wspec.shape[1]), &mut grads[wspec.range()])
                .expect("layout shape");
            gw.assign(&act_in.t().dot(delta));
            let gb = delta.sum_axis(Axis(0));
            grads[bspec.range()].copy_from_slice(gb.as_slice().expect("contiguous"));
        };

        let g_out = grad_out.to_owned();
        write_layer(depth + 1, &cache.act[depth], &g_out);
        let da = g_out.dot(&self.weight(depth + 1).t());
        let mut dh = da * &cache.pre[depth].mapv(silu_grad);
        for l in (0..depth).rev() {
            write_layer(l + 1, &cache.act[l], &dh);
            let da = dh.dot(&self.weight(l + 1).t());
            dh = dh + da * &cache.pre[l].mapv(silu_grad);
        }
        write_layer(0, &cache.input, &dh);
        let du = dh.dot(&self.weight(0).t());
        let state = du.slice(s![.., ..self.config.input_dim]).to_owned();
        Ok(Gradients { params: grads, state })
    }
}

/// Converts `f64` rows to the network scalar.
pub fn to_real<T: Real>(a: ArrayView2<f64>) -> Array2<T> {
    a.mapv(T::lit)
}

pub fn to_f64<T: Real>(a: ArrayView2<T>) -> Array2<f64> {
    a.mapv(|v| v.as_f64())
}

pub fn column_f64<T: Real>(a: &Array1<T>) -> Vec<f64> {
    a.iter().map(|v| v.as_f64()).collect()
}
