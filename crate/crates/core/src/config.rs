//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers.
//!
//! ```text
//! # comment
//! [data]
//! kind = two-moons
//! n = 4096
//!
//! [fm]
//! steps = 8000
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys outside a
//! section are rejected. Unknown sections, unknown keys, and malformed values
//! are errors that carry the line number. Every key has a default, and
//! [`Config::render`] writes the fully resolved configuration back in the same
//! grammar so a run can be reproduced from its snapshot alone.
//!
//! Setting `generate.preset` overwrites the four step/method keys of that
//! section; keys that follow it in the file override the preset.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ode::Method;
use crate::optim::AdamWConfig;
use crate::pipeline::{GenerationConfig, InterpolationMode, Preset};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    TwoMoons,
    Checkerboard,
    GaussMix8,
    Spiral,
    Blobs,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::TwoMoons => "two-moons",
            DataKind::Checkerboard => "checkerboard",
            DataKind::GaussMix8 => "gauss-mix8",
            DataKind::Spiral => "spiral",
            DataKind::Blobs => "blobs",
        }
    }

    /// The point-cloud generator, or `None` for images.
    pub fn as_2d(self) -> Option<crate::data::Dist2d> {
        use crate::data::Dist2d;
        match self {
            DataKind::TwoMoons => Some(Dist2d::TwoMoons),
            DataKind::Checkerboard => Some(Dist2d::Checkerboard),
            DataKind::GaussMix8 => Some(Dist2d::GaussMix8),
            DataKind::Spiral => Some(Dist2d::Spiral),
            DataKind::Blobs => None,
        }
    }
}

impl FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DataKind::Blobs),
            other => match other.parse::<crate::data::Dist2d>()? {
                crate::data::Dist2d::TwoMoons => Ok(DataKind::TwoMoons),
                crate::data::Dist2d::Checkerboard => Ok(DataKind::Checkerboard),
                crate::data::Dist2d::GaussMix8 => Ok(DataKind::GaussMix8),
                crate::data::Dist2d::Spiral => Ok(DataKind::Spiral),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SlicedW2,
    Mmd,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SlicedW2 => "sliced-w2",
            Metric::Mmd => "mmd",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliced-w2" => Ok(Metric::SlicedW2),
            "mmd" => Ok(Metric::Mmd),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?} (expected sliced-w2 or mmd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub kind: DataKind,
    pub n: usize,
    pub noise: f64,
    /// Image side for `blobs`.
    pub side: usize,
}

/// Network shape and optimizer budget of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSection {
    pub hidden: usize,
    pub depth: usize,
    pub steps: usize,
    pub batch_size: usize,
}

impl StageSection {
    fn new(steps: usize, batch_size: usize) -> Self {
        Self {
            hidden: 128,
            depth: 3,
            steps,
            batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxSection {
    pub stage: StageSection,
    pub latent_dim: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSection {
    pub preset: Preset,
    pub latent_steps: usize,
    pub latent_method: Method,
    pub fm_steps: usize,
    pub fm_method: Method,
    pub n: usize,
}

impl GenerateSection {
    fn apply_preset(&mut self, preset: Preset) {
        let g = preset.config();
        self.preset = preset;
        self.latent_steps = g.latent_steps;
        self.latent_method = g.latent_method;
        self.fm_steps = g.fm_steps;
        self.fm_method = g.fm_method;
    }

    /// Whether the preset names the Gaussian-prior baseline.
    pub fn is_baseline(&self) -> bool {
        matches!(self.preset, Preset::BaselineMidpoint8 | Preset::BaselineHeun3x8)
    }

    pub fn generation(&self, seed: u64) -> GenerationConfig {
        GenerationConfig {
            latent_steps: self.latent_steps,
            latent_method: self.latent_method,
            fm_steps: self.fm_steps,
            fm_method: self.fm_method,
            seed,
            batch_size: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintSection {
    /// File of 0/1 values, one per data coordinate; 1 marks a coordinate to regenerate.
    pub mask: String,
    /// CSV of inputs; empty draws fresh samples from `[data]`.
    pub input: String,
    pub count: usize,
    pub method: Method,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpSection {
    pub mode: InterpolationMode,
    /// Number of interpolation weights from 0 to 1 inclusive.
    pub points: usize,
    pub pairs: usize,
    pub method: Method,
    pub steps: usize,
    pub perturb_alpha: f64,
    /// Perturbed variants per endpoint.
    pub perturbations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub steps: Vec<usize>,
    pub method: Method,
    pub n: usize,
    pub metric: Metric,
    pub projections: usize,
    /// Latent steps used by the learned-prior rows.
    pub latent_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub data: DataSection,
    pub optim: AdamWConfig,
    pub aux: AuxSection,
    pub fm: StageSection,
    pub fm_baseline: StageSection,
    pub latent: StageSection,
    pub generate: GenerateSection,
    pub inpaint: InpaintSection,
    pub interp: InterpSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        let preset = Preset::Midpoint42.config();
        Self {
            seed: 0,
            data: DataSection {
                kind: DataKind::TwoMoons,
                n: 4096,
                noise: 0.05,
                side: 8,
            },
            optim: AdamWConfig::default(),
            aux: AuxSection {
                stage: StageSection::new(4000, 256),
                latent_dim: 32,
                beta: crate::auxprior::DEFAULT_BETA,
            },
            fm: StageSection::new(4000, 256),
            fm_baseline: StageSection::new(4000, 256),
            latent: StageSection::new(4000, 256),
            generate: GenerateSection {
                preset: Preset::Midpoint42,
                latent_steps: preset.latent_steps,
                latent_method: preset.latent_method,
                fm_steps: preset.fm_steps,
                fm_method: preset.fm_method,
                n: 1024,
            },
            inpaint: InpaintSection {
                mask: String::new(),
                input: String::new(),
                count: 16,
                method: Method::Midpoint,
                steps: 4,
            },
            interp: InterpSection {
                mode: InterpolationMode::LinearInZ,
                points: 9,
                pairs: 4,
                method: crate::latentflow::DEFAULT_LATENT_METHOD,
                steps: crate::latentflow::DEFAULT_INVERT_STEPS,
                perturb_alpha: crate::pipeline::DEFAULT_PERTURB_ALPHA,
                perturbations: 4,
            },
            sweep: SweepSection {
                steps: vec![1, 2, 4, 8, 16],
                method: Method::Midpoint,
                n: 4096,
                metric: Metric::SlicedW2,
                projections: 256,
                latent_steps: crate::latentflow::DEFAULT_LATENT_STEPS,
            },
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse {value:?}: {e}"))
}

fn positive(value: &str) -> std::result::Result<usize, String> {
    match parse_value::<usize>(value)? {
        0 => Err("must be at least 1".into()),
        v => Ok(v),
    }
}

fn finite(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse_value(value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{value:?} is not finite"))
    }
}

fn positive_real(value: &str) -> std::result::Result<f64, String> {
    let v = finite(value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

fn non_negative(value: &str) -> std::result::Result<f64, String> {
    let v = finite(value)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be non-negative".into())
    }
}

fn step_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    let list = value
        .split(',')
        .map(|s| positive(s.trim()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err("empty step list".into());
    }
    Ok(list)
}

fn join_steps(steps: &[usize]) -> String {
    steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

const SECTIONS: &[&str] = &[
    "run",
    "data",
    "optim",
    "aux",
    "fm",
    "fm-baseline",
    "latent",
    "generate",
    "inpaint",
    "interp",
    "sweep",
];

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `text` on top of the defaults. `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config {
                path: origin.to_string(),
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {line:?}")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section.as_deref() else {
                return Err(err(format!("key {key:?} appears before any [section]")));
            };
            cfg.set(sec, key, value).map_err(|m| err(format!("{sec}.{key}: {m}")))?;
        }
        Ok(cfg)
    }

    /// Sets one key; the error string names what was wrong with the value.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        fn stage(s: &mut StageSection, key: &str, value: &str) -> std::result::Result<(), String> {
            match key {
                "hidden" => s.hidden = positive(value)?,
                "depth" => s.depth = parse_value(value)?,
                "steps" => s.steps = positive(value)?,
                "batch_size" => s.batch_size = positive(value)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        }
        let method = |v: &str| parse_value::<Method>(v);
        match (section, key) {
            ("run", "seed") => self.seed = parse_value(value)?,

            ("data", "kind") => self.data.kind = parse_value(value)?,
            ("data", "n") => self.data.n = positive(value)?,
            ("data", "noise") => self.data.noise = non_negative(value)?,
            ("data", "side") => {
                let side = positive(value)?;
                if !(2..=16).contains(&side) {
                    return Err("side must be in 2..=16".into());
                }
                self.data.side = side;
            }

            ("optim", "lr") => self.optim.lr = positive_real(value)?,
            ("optim", "beta1") => self.optim.beta1 = finite(value)?,
            ("optim", "beta2") => self.optim.beta2 = finite(value)?,
            ("optim", "eps") => self.optim.eps = positive_real(value)?,
            ("optim", "weight_decay") => self.optim.weight_decay = non_negative(value)?,

            ("aux", "latent_dim") => self.aux.latent_dim = positive(value)?,
            ("aux", "beta") => self.aux.beta = non_negative(value)?,
            ("aux", k) => stage(&mut self.aux.stage, k, value)?,
            ("fm", k) => stage(&mut self.fm, k, value)?,
            ("fm-baseline", k) => stage(&mut self.fm_baseline, k, value)?,
            ("latent", k) => stage(&mut self.latent, k, value)?,

            ("generate", "preset") => self.generate.apply_preset(parse_value(value)?),
            ("generate", "latent_steps") => self.generate.latent_steps = positive(value)?,
            ("generate", "latent_method") => self.generate.latent_method = method(value)?,
            ("generate", "fm_steps") => self.generate.fm_steps = positive(value)?,
            ("generate", "fm_method") => self.generate.fm_method = method(value)?,
            ("generate", "n") => self.generate.n = positive(value)?,

            ("inpaint", "mask") => self.inpaint.mask = value.to_string(),
            ("inpaint", "input") => self.inpaint.input = value.to_string(),
            ("inpaint", "count") => self.inpaint.count = positive(value)?,
            ("inpaint", "method") => self.inpaint.method = method(value)?,
            ("inpaint", "steps") => self.inpaint.steps = positive(value)?,

            ("interp", "mode") => self.interp.mode = parse_value(value)?,
            ("interp", "points") => {
                let p = positive(value)?;
                if p < 2 {
                    return Err("need at least 2 points".into());
                }
                self.interp.points = p;
            }
            ("interp", "pairs") => self.interp.pairs = positive(value)?,
            ("interp", "method") => self.interp.method = method(value)?,
            ("interp", "steps") => self.interp.steps = positive(value)?,
            ("interp", "perturb_alpha") => {
                let a = non_negative(value)?;
                if a > 1.0 {
                    return Err("perturb_alpha must be in [0, 1]".into());
                }
                self.interp.perturb_alpha = a;
            }
            ("interp", "perturbations") => self.interp.perturbations = parse_value(value)?,

            ("sweep", "steps") => self.sweep.steps = step_list(value)?,
            ("sweep", "method") => self.sweep.method = method(value)?,
            ("sweep", "n") => self.sweep.n = positive(value)?,
            ("sweep", "metric") => self.sweep.metric = parse_value(value)?,
            ("sweep", "projections") => self.sweep.projections = positive(value)?,
            ("sweep", "latent_steps") => self.sweep.latent_steps = positive(value)?,

            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn train_config(&self, stage: &StageSection, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: stage.steps,
            batch_size: stage.batch_size,
            optim: self.optim,
            seed,
        }
    }

    /// The resolved configuration in the input grammar, every key included.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "[run]\nseed = {}\n", self.seed);
        let d = &self.data;
        let _ = writeln!(
            w,
            "[data]\nkind = {}\nn = {}\nnoise = {}\nside = {}\n",
            d.kind.name(),
            d.n,
            d.noise,
            d.side
        );
        let o = &self.optim;
        let _ = writeln!(
            w,
            "[optim]\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\nweight_decay = {}\n",
            o.lr, o.beta1, o.beta2, o.eps, o.weight_decay
        );
        let stage = |w: &mut String, name: &str, st: &StageSection, extra: &str| {
            let _ = writeln!(
                w,
                "[{name}]\n{extra}hidden = {}\ndepth = {}\nsteps = {}\nbatch_size = {}\n",
                st.hidden, st.depth, st.steps, st.batch_size
            );
        };
        let aux_extra = format!("latent_dim = {}\nbeta = {}\n", self.aux.latent_dim, self.aux.beta);
        stage(w, "aux", &self.aux.stage, &aux_extra);
        stage(w, "fm", &self.fm, "");
        stage(w, "fm-baseline", &self.fm_baseline, "");
        stage(w, "latent", &self.latent, "");
        let g = &self.generate;
        let _ = writeln!(
            w,
            "[generate]\npreset = {}\nlatent_steps = {}\nlatent_method = {}\nfm_steps = {}\nfm_method = {}\nn = {}\n",
            g.preset, g.latent_steps, g.latent_method, g.fm_steps, g.fm_method, g.n
        );
        let p = &self.inpaint;
        let _ = writeln!(
            w,
            "[inpaint]\nmask = {}\ninput = {}\ncount = {}\nmethod = {}\nsteps = {}\n",
            p.mask, p.input, p.count, p.method, p.steps
        );
        let i = &self.interp;
        let _ = writeln!(
            w,
            "[interp]\nmode = {}\npoints = {}\npairs = {}\nmethod = {}\nsteps = {}\nperturb_alpha = {}\nperturbations = {}\n",
            i.mode, i.points, i.pairs, i.method, i.steps, i.perturb_alpha, i.perturbations
        );
        let sw = &self.sweep;
        let _ = writeln!(
            w,
            "[sweep]\nsteps = {}\nmethod = {}\nn = {}\nmetric = {}\nprojections = {}\nlatent_steps = {}",
            join_steps(&sw.steps),
            sw.method,
            sw.n,
            sw.metric.name(),
            sw.projections,
            sw.latent_steps
        );
        s
    }
}
