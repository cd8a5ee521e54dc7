//! End-to-end inference and the latent-space applications: generation,
//! inpainting, latent interpolation and latent perturbation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};

use crate::auxprior::AuxModel;
use crate::error::{Error, Result};
use crate::flowmatch::{as_vector_field, FlowField};
use crate::latentflow::{invert_latents, push_forward, DEFAULT_INVERT_STEPS};
use crate::nn::ConditionedRegressor;
use crate::ode::{integrate, Method, SolverConfig, VectorField};
use crate::rng::{gaussian_matrix, seeded_rng, Rng};
use crate::sample::{LatentCode, Sample, SampleSet};

/// Default strength of the latent perturbation.
pub const DEFAULT_PERTURB_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    pub latent_steps: usize,
    pub latent_method: Method,
    pub fm_steps: usize,
    pub fm_method: Method,
    pub seed: u64,
    pub batch_size: usize,
}

impl GenerationConfig {
    /// 4 latent + 2 flow steps with the midpoint solver.
    pub fn midpoint_4_2() -> Self {
        Self {
            latent_steps: 4,
            latent_method: Method::Midpoint,
            fm_steps: 2,
            fm_method: Method::Midpoint,
            seed: 0,
            batch_size: 256,
        }
    }

    /// 2 latent + 1 flow step with third-order Heun.
    pub fn heun3_2_1() -> Self {
        Self {
            latent_steps: 2,
            latent_method: Method::Heun3,
            fm_steps: 1,
            fm_method: Method::Heun3,
            seed: 0,
            batch_size: 256,
        }
    }

    /// Baseline regime: 8 flow steps (latent settings unused).
    pub fn baseline(method: Method) -> Self {
        Self {
            latent_steps: 0,
            latent_method: method,
            fm_steps: 8,
            fm_method: method,
            seed: 0,
            batch_size: 256,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        name.parse::<Preset>().map(Preset::config)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch(mut self, n: usize) -> Self {
        self.batch_size = n;
        self
    }

    fn validate(&self, needs_latent: bool) -> Result<()> {
        if self.fm_steps == 0 || (needs_latent && self.latent_steps == 0) {
            return Err(Error::InvalidArgument("step counts must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Midpoint42,
    Heun321,
    BaselineMidpoint8,
    BaselineHeun3x8,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Midpoint42 => "midpoint-4-2",
            Preset::Heun321 => "heun3-2-1",
            Preset::BaselineMidpoint8 => "baseline-midpoint-8",
            Preset::BaselineHeun3x8 => "baseline-heun3-8",
        }
    }

    pub fn config(self) -> GenerationConfig {
        match self {
            Preset::Midpoint42 => GenerationConfig::midpoint_4_2(),
            Preset::Heun321 => GenerationConfig::heun3_2_1(),
            Preset::BaselineMidpoint8 => GenerationConfig::baseline(Method::Midpoint),
            Preset::BaselineHeun3x8 => GenerationConfig::baseline(Method::Heun3),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Preset::Midpoint42,
            Preset::Heun321,
            Preset::BaselineMidpoint8,
            Preset::BaselineHeun3x8,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {s:?}")))
    }
}

/// The three trained models used at inference time.
#[derive(Debug, Clone, Copy)]
pub struct LearnedPriorFlow<'a> {
    pub aux: &'a AuxModel,
    pub flow: &'a ConditionedRegressor<f32>,
    pub latent: &'a ConditionedRegressor<f32>,
}

impl<'a> LearnedPriorFlow<'a> {
    pub fn new(
        aux: &'a AuxModel,
        flow: &'a ConditionedRegressor<f32>,
        latent: &'a ConditionedRegressor<f32>,
    ) -> Result<Self> {
        if flow.config().cond_dim != aux.latent_dim() || flow.config().input_dim != aux.data_dim() {
            return Err(Error::dim("flow condition", aux.latent_dim(), flow.config().cond_dim));
        }
        if latent.config().input_dim != aux.latent_dim() {
            return Err(Error::dim(
                "latent sampler",
                aux.latent_dim(),
                latent.config().input_dim,
            ));
        }
        Ok(Self { aux, flow, latent })
    }

    /// `w ∼ N(0,1) → z → P_L(z) → x → ŷ` for `cfg.batch_size` samples.
    pub fn generate(&self, cfg: &GenerationConfig) -> Result<SampleSet> {
        cfg.validate(true)?;
        let mut rng = seeded_rng(cfg.seed);
        let w = gaussian_matrix(&mut rng, cfg.batch_size, self.aux.latent_dim());
        let z = push_forward(self.latent, w.view(), cfg.latent_steps, cfg.latent_method)?;
        let out = self.generate_from_latents(z.view(), &mut rng, cfg)?;
        SampleSet::from_rows(out)
    }

    /// Flow stage only: decodes `z` to the learned prior, draws `x`, transports it.
    pub fn generate_from_latents(
        &self,
        z: ArrayView2<f64>,
        rng: &mut Rng,
        cfg: &GenerationConfig,
    ) -> Result<Array2<f64>> {
        let prior = self.aux.decode_batch(z)?;
        let x = prior.sample_prior(rng);
        let field = as_vector_field(self.flow, Some(z));
        integrate(&field, x.view(), SolverConfig::forward(cfg.fm_method, cfg.fm_steps))
    }
}

/// Standard flow matching from `N(0, 1)` with an unconditional field.
pub fn generate_baseline(flow: &ConditionedRegressor<f32>, cfg: &GenerationConfig) -> Result<SampleSet> {
    cfg.validate(false)?;
    if flow.config().cond_dim != 0 {
        return Err(Error::InvalidArgument("baseline flow must be unconditional".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let x = gaussian_matrix(&mut rng, cfg.batch_size, flow.config().input_dim);
    let out = integrate(
        &as_vector_field(flow, None),
        x.view(),
        SolverConfig::forward(cfg.fm_method, cfg.fm_steps),
    )?;
    SampleSet::from_rows(out)
}

/// Binary mask over data dimensions: 1 = generate, 0 = keep.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintMask(Vec<u8>);

impl InpaintMask {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Parses whitespace- or comma-separated 0/1 tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let bits = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::InvalidArgument(format!("bad mask token {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }
}

/// Model velocity where the mask is 1, the constant `y − x₀` elsewhere.
struct InpaintField<'a> {
    inner: FlowField<'a>,
    mask: Array2<f64>,
    straight: Array2<f64>,
}

impl VectorField<f64> for InpaintField<'_> {
    fn velocity(&self, t: f64, state: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut v = self.inner.velocity(t, state)?;
        Zip::from(&mut v)
            .and(&self.mask)
            .and(&self.straight)
            .for_each(|v, &m, &s| {
                if m == 0.0 {
                    *v = s;
                }
            });
        Ok(v)
    }
}

/// Inpaints each row of `y` under the matching row of `masks`.
///
/// The latent is a posterior draw for the full original row (optionally
/// replaced by `latents`); `x ∼ P_L(z)` starts the masked integration.
pub fn inpaint_batch(
    aux: &AuxModel,
    flow: &ConditionedRegressor<f32>,
    y: ArrayView2<f64>,
    masks: &[InpaintMask],
    latents: Option<ArrayView2<f64>>,
    solver: SolverConfig,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    if masks.len() != y.nrows() {
        return Err(Error::dim("inpaint masks", y.nrows(), masks.len()));
    }
    let mut mask = Array2::zeros(y.raw_dim());
    for (mut row, m) in mask.rows_mut().into_iter().zip(masks) {
        if m.len() != y.ncols() {
            return Err(Error::dim("inpaint mask", y.ncols(), m.len()));
        }
        for (r, &b) in row.iter_mut().zip(m.bits()) {
            *r = f64::from(b);
        }
    }
    let z = match latents {
        Some(z) => z.to_owned(),
        None => aux.encode_batch(y)?.reparam(rng),
    };
    let x = aux.decode_batch(z.view())?.sample_prior(rng);
    let field = InpaintField {
        inner: as_vector_field(flow, Some(z.view())),
        mask,
        straight: &y - &x,
    };
    integrate(&field, x.view(), solver)
}

pub fn inpaint(
    aux: &AuxModel,
    flow: &ConditionedRegressor<f32>,
    y: &Sample,
    mask: &InpaintMask,
    solver: SolverConfig,
    rng: &mut Rng,
) -> Result<Sample> {
    let view = ArrayView2::from_shape((1, y.len()), y.values()).expect("row view");
    let out = inpaint_batch(aux, flow, view, std::slice::from_ref(mask), None, solver, rng)?;
    Sample::new(out.into_raw_vec_and_offset().0, y.shape().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolationMode {
    /// Straight line between the two latents.
    LinearInZ,
    /// Straight line between their reverse-mapped noise vectors, pushed back through the sampler.
    LinearInW,
}

impl InterpolationMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::LinearInZ => "linear-in-z",
            Self::LinearInW => "linear-in-w",
        }
    }
}

impl fmt::Display for InterpolationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpolationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-in-z" | "z" => Ok(Self::LinearInZ),
            "linear-in-w" | "w" => Ok(Self::LinearInW),
            other => Err(Error::InvalidArgument(format!("unknown interpolation mode {other:?}"))),
        }
    }
}

/// Solver used for reverse mapping and the return trip in latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentPath {
    pub method: Method,
    pub steps: usize,
}

impl Default for LatentPath {
    fn default() -> Self {
        Self {
            method: Method::Midpoint,
            steps: DEFAULT_INVERT_STEPS,
        }
    }
}

fn lerp(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect()
}

fn as_row(z: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, z.len()), z).expect("row view")
}

pub fn interpolate_latents(
    latent: &ConditionedRegressor<f32>,
    z0: &LatentCode,
    z1: &LatentCode,
    alpha: f64,
    mode: InterpolationMode,
    path: LatentPath,
) -> Result<LatentCode> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside [0, 1]")));
    }
    if z0.len() != z1.len() {
        return Err(Error::dim("interpolation endpoints", z0.len(), z1.len()));
    }
    match mode {
        InterpolationMode::LinearInZ => Ok(LatentCode(lerp(z0.as_slice(), z1.as_slice(), alpha))),
        InterpolationMode::LinearInW => {
            let mut both = Array2::zeros((2, z0.len()));
            both.row_mut(0).assign(&ndarray::ArrayView1::from(z0.as_slice()));
            both.row_mut(1).assign(&ndarray::ArrayView1::from(z1.as_slice()));
            let w = invert_latents(latent, both.view(), path.steps, path.method)?;
            let wm = lerp(
                w.row(0).as_slice().expect("row"),
                w.row(1).as_slice().expect("row"),
                alpha,
            );
            let z = push_forward(latent, as_row(&wm), path.steps, path.method)?;
            Ok(LatentCode(z.into_raw_vec_and_offset().0))
        }
    }
}

/// `z → w`, then `w + α·r → ẑ` with `r ∼ N(0, 1)`.
pub fn perturb_latent(
    latent: &ConditionedRegressor<f32>,
    z: &LatentCode,
    alpha: f64,
    rng: &mut Rng,
    path: LatentPath,
) -> Result<LatentCode> {
    let w = invert_latents(latent, as_row(z.as_slice()), path.steps, path.method)?;
    let r = gaussian_matrix(rng, 1, z.len());
    let moved = w + &(r * alpha);
    let out = push_forward(latent, moved.view(), path.steps, path.method)?;
    Ok(LatentCode(out.into_raw_vec_and_offset().0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxprior::AuxConfig;
    use crate::flowmatch::flow_config;
    use crate::latentflow::latent_config;
    use ndarray::array;

    fn models() -> (AuxModel, ConditionedRegressor<f32>, ConditionedRegressor<f32>) {
        let mut rng = seeded_rng(0);
        let aux = AuxModel::new(
            AuxConfig {
                hidden: 16,
                depth: 1,
                ..AuxConfig::new(4, 3)
            },
            &mut rng,
        )
        .unwrap();
        let flow = ConditionedRegressor::new(flow_config(4, 3, 16, 1), &mut rng).unwrap();
        let lat = ConditionedRegressor::new(latent_config(3, 16, 1), &mut rng).unwrap();
        (aux, flow, lat)
    }

    #[test]
    fn presets_match_step_regimes() {
        let m = GenerationConfig::preset("midpoint-4-2").unwrap();
        assert_eq!((m.latent_steps, m.fm_steps, m.fm_method), (4, 2, Method::Midpoint));
        let h = GenerationConfig::preset("heun3-2-1").unwrap();
        assert_eq!((h.latent_steps, h.fm_steps, h.fm_method), (2, 1, Method::Heun3));
        assert!(GenerationConfig::preset("fast").is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let (aux, flow, lat) = models();
        let p = LearnedPriorFlow::new(&aux, &flow, &lat).unwrap();
        let cfg = GenerationConfig::midpoint_4_2().with_batch(8).with_seed(5);
        assert_eq!(p.generate(&cfg).unwrap(), p.generate(&cfg).unwrap());
    }

    #[test]
    fn fixed_latent_different_prior_seeds_differ() {
        let (aux, flow, lat) = models();
        let p = LearnedPriorFlow::new(&aux, &flow, &lat).unwrap();
        let z = array![[0.3, -0.1, 1.0]];
        let cfg = GenerationConfig::midpoint_4_2();
        let a = p.generate_from_latents(z.view(), &mut seeded_rng(1), &cfg).unwrap();
        let b = p.generate_from_latents(z.view(), &mut seeded_rng(2), &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_mask_returns_input() {
        let (aux, flow, _) = models();
        let y = Sample::from_vec(vec![0.5, -0.25, 0.75, 0.1]).unwrap();
        let mask = InpaintMask::new(vec![0; 4]).unwrap();
        let out = inpaint(
            &aux,
            &flow,
            &y,
            &mask,
            SolverConfig::forward(Method::Heun3, 3),
            &mut seeded_rng(0),
        )
        .unwrap();
        for (a, b) in out.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_length_and_tokens_checked() {
        let (aux, flow, _) = models();
        let y = Sample::from_vec(vec![0.0; 4]).unwrap();
        let mask = InpaintMask::new(vec![1; 3]).unwrap();
        assert!(inpaint(
            &aux,
            &flow,
            &y,
            &mask,
            SolverConfig::forward(Method::Euler, 1),
            &mut seeded_rng(0)
        )
        .is_err());
        assert!(InpaintMask::parse("0 1 2").is_err());
        assert_eq!(InpaintMask::parse("0,1\n1 0").unwrap().bits(), &[0, 1, 1, 0]);
    }

    #[test]
    fn linear_in_z_is_affine() {
        let (_, _, lat) = models();
        let z0 = LatentCode(vec![0.0, 1.0, 2.0]);
        let z1 = LatentCode(vec![2.0, 3.0, -2.0]);
        let mid =
            interpolate_latents(&lat, &z0, &z1, 0.5, InterpolationMode::LinearInZ, LatentPath::default()).unwrap();
        assert_eq!(mid.0, vec![1.0, 2.0, 0.0]);
        assert!(interpolate_latents(&lat, &z0, &z1, 1.5, InterpolationMode::LinearInZ, LatentPath::default()).is_err());
    }

    #[test]
    fn zero_sampler_makes_w_interpolation_linear() {
        let (_, _, lat) = models();
        let z0 = LatentCode(vec![0.0, 1.0, 2.0]);
        let z1 = LatentCode(vec![2.0, 3.0, -2.0]);
        for alpha in [0.0, 0.5, 1.0] {
            let a = interpolate_latents(
                &lat,
                &z0,
                &z1,
                alpha,
                InterpolationMode::LinearInW,
                LatentPath::default(),
            )
            .unwrap();
            let b = interpolate_latents(
                &lat,
                &z0,
                &z1,
                alpha,
                InterpolationMode::LinearInZ,
                LatentPath::default(),
            )
            .unwrap();
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perturbation_with_zero_alpha_is_round_trip() {
        let (_, _, lat) = models();
        let z = LatentCode(vec![0.2, -0.4, 0.9]);
        let out = perturb_latent(&lat, &z, 0.0, &mut seeded_rng(1), LatentPath::default()).unwrap();
        assert_eq!(out, z);
        let a = perturb_latent(
            &lat,
            &z,
            DEFAULT_PERTURB_ALPHA,
            &mut seeded_rng(1),
            LatentPath::default(),
        )
        .unwrap();
        let b = perturb_latent(
            &lat,
            &z,
            DEFAULT_PERTURB_ALPHA,
            &mut seeded_rng(1),
            LatentPath::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, z);
    }
}
