//! Command-line front end. [`run`] parses arguments, executes one verb and
//! returns the process exit code; the `lediflow` binary is a thin wrapper.
//!
//! Every command reads an optional config file, applies the global flags on
//! top, and writes its artifacts into `--out`. Checkpoints are looked up in
//! `--checkpoints` (defaults to `--out`) under fixed names:
//!
//! | stage         | files                                   |
//! |---------------|-----------------------------------------|
//! | `aux`         | `aux-encoder.ckpt`, `aux-decoder.ckpt`   |
//! | `fm`          | `fm.ckpt`                               |
//! | `fm-baseline` | `fm-baseline.ckpt`                      |
//! | `latent`      | `latent.ckpt`                           |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::auxprior::{train_auxiliary, AuxConfig, AuxHistory, AuxModel};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{Config, DataKind, Metric};
use crate::data::{make_2d, make_blob_images};
use crate::error::{Error, Result};
use crate::eval::{gnuplot_script, median_bandwidth, mmd_rbf, sliced_w2, step_sweep, write_sweep_csv, SweepRecord};
use crate::export::{save_pgm_dir, save_points_csv, Manifest};
use crate::flowmatch::{flow_config, train_flow, PriorSource};
use crate::latentflow::{latent_config, train_latent_sampler};
use crate::nn::ConditionedRegressor;
use crate::ode::SolverConfig;
use crate::pipeline::{
    generate_baseline, inpaint_batch, interpolate_latents, perturb_latent, GenerationConfig, InpaintMask, LatentPath,
    LearnedPriorFlow, Preset,
};
use crate::rng::{child_seed, seeded_rng};
use crate::sample::{LatentCode, SampleSet};
use crate::train::LossHistory;

// Seed streams derived from the run seed.
const STREAM_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_GENERATE: u64 = 4;
const STREAM_INPUTS: u64 = 5;
const STREAM_REFERENCE: u64 = 6;
const STREAM_METRIC: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "lediflow", version, about = "Flow matching with a learned prior")]
pub struct Cli {
    /// Run seed; overrides `run.seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Generation preset; overrides `generate.preset`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Directory holding trained checkpoints; defaults to `--out`.
    #[arg(long, global = true)]
    pub checkpoints: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Aux,
    Fm,
    FmBaseline,
    Latent,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Aux => "aux",
            Stage::Fm => "fm",
            Stage::FmBaseline => "fm-baseline",
            Stage::Latent => "latent",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Sample from the learned-prior pipeline or the baseline.
    Generate,
    /// Regenerate the masked coordinates of inputs.
    Inpaint {
        /// Mask file; overrides `inpaint.mask`.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Latent interpolation and perturbation.
    Interp,
    /// Quality against solver steps for both priors.
    Sweep,
    /// Write the configured dataset to disk.
    ExportData,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    fs::create_dir_all(&cli.out)?;
    let ctx = Context {
        seed: cfg.seed,
        out: cli.out.clone(),
        ckpt: cli.checkpoints.clone().unwrap_or_else(|| cli.out.clone()),
        cfg,
    };
    match &cli.command {
        Command::Train { stage } => ctx.train(*stage),
        Command::Generate => ctx.generate(),
        Command::Inpaint { mask } => ctx.inpaint(mask.as_deref()),
        Command::Interp => ctx.interp(),
        Command::Sweep => ctx.sweep(),
        Command::ExportData => ctx.export_data(),
    }
}

/// Config file, then `--seed` and `--preset`.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &cli.preset {
        cfg.set("generate", "preset", p)
            .map_err(|m| Error::InvalidArgument(format!("--preset: {m}")))?;
    }
    Ok(cfg)
}

struct Context {
    cfg: Config,
    seed: u64,
    out: PathBuf,
    ckpt: PathBuf,
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_aux_history(h: &AuxHistory, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "step,loss,vgl,kl")?;
    for ((t, v), k) in h.total.records.iter().zip(&h.vgl.records).zip(&h.kl.records) {
        writeln!(w, "{},{},{},{}", t.step, t.loss, v.loss, k.loss)?;
    }
    Ok(())
}

/// Reads a numeric CSV, skipping a header line if the first line is not numeric.
pub fn read_points_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(format!(
            "{}: expected a non-empty rectangular table",
            path.display()
        )));
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, d), rows.concat()).expect("rectangular"))
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset(&self, n: usize, stream: u64) -> Result<SampleSet> {
        let d = &self.cfg.data;
        let seed = child_seed(self.seed, stream);
        match d.kind.as_2d() {
            Some(kind) => make_2d(kind, n, d.noise, seed),
            None => make_blob_images(n, d.side, seed),
        }
    }

    fn training_data(&self) -> Result<SampleSet> {
        self.dataset(self.cfg.data.n, STREAM_DATA)
    }

    /// Gives generated rows the dataset's sample shape.
    fn shaped(&self, rows: Array2<f64>) -> Result<SampleSet> {
        match self.cfg.data.kind {
            DataKind::Blobs => {
                let s = self.cfg.data.side;
                SampleSet::new(rows, vec![s, s])
            }
            _ => SampleSet::from_rows(rows),
        }
    }

    /// Writes `set` as `{stem}.csv`, plus a PGM directory for images.
    fn save_set(&self, set: &SampleSet, stem: &str, files: &mut Vec<String>) -> Result<()> {
        let csv = format!("{stem}.csv");
        save_points_csv(set, self.path(&csv))?;
        files.push(csv);
        if self.cfg.data.kind == DataKind::Blobs {
            for name in save_pgm_dir(set, self.path(stem), "")? {
                files.push(format!("{stem}/{name}"));
            }
        }
        Ok(())
    }

    fn load(&self, stage: &str, file: &str, kind: ModelKind) -> Result<Checkpoint> {
        let path = self.ckpt.join(file);
        if !path.exists() {
            return Err(Error::MissingPrerequisite {
                stage: stage.to_string(),
                path,
            });
        }
        let c = Checkpoint::load(&path)?;
        c.expect_kind(kind)?;
        Ok(c)
    }

    fn load_aux(&self) -> Result<AuxModel> {
        let enc = self.load("aux", "aux-encoder.ckpt", ModelKind::Encoder)?;
        let dec = self.load("aux", "aux-decoder.ckpt", ModelKind::Decoder)?;
        AuxModel::from_checkpoints(&enc, &dec)
    }

    fn load_model(&self, stage: &str, file: &str, kind: ModelKind) -> Result<ConditionedRegressor<f32>> {
        self.load(stage, file, kind)?.to_model(kind)
    }

    fn load_flow(&self) -> Result<ConditionedRegressor<f32>> {
        self.load_model("fm", "fm.ckpt", ModelKind::Flow)
    }

    fn load_latent(&self) -> Result<ConditionedRegressor<f32>> {
        self.load_model("latent", "latent.ckpt", ModelKind::Latent)
    }

    fn load_baseline(&self) -> Result<ConditionedRegressor<f32>> {
        self.load_model("fm-baseline", "fm-baseline.ckpt", ModelKind::Flow)
    }

    fn save_diverged(&self, stage: Stage, e: Error) -> Error {
        if let Error::Diverged { last_good, .. } = &e {
            for (i, c) in last_good.iter().enumerate() {
                let _ = c.save(self.path(&format!("{}.last-good.{i}.ckpt", stage.name())));
            }
        }
        e
    }

    fn train(&self, stage: Stage) -> Result<()> {
        let cfg = &self.cfg;
        // Prerequisites first so a missing aux model fails before any work.
        let aux = match stage {
            Stage::Fm | Stage::Latent => Some(self.load_aux()?),
            _ => None,
        };
        let data = self.training_data()?;
        let d = data.dim();
        let tag = match stage {
            Stage::Aux => 0,
            Stage::Fm => 1,
            Stage::FmBaseline => 2,
            Stage::Latent => 3,
        };
        let mut init = seeded_rng(child_seed(child_seed(self.seed, STREAM_INIT), tag));
        let train_seed = child_seed(child_seed(self.seed, STREAM_TRAIN), tag);
        let name = stage.name();
        let mut files = Vec::new();
        match stage {
            Stage::Aux => {
                let s = &cfg.aux.stage;
                let config = AuxConfig {
                    hidden: s.hidden,
                    depth: s.depth,
                    beta: cfg.aux.beta,
                    ..AuxConfig::new(d, cfg.aux.latent_dim)
                };
                let mut model = AuxModel::new(config, &mut init)?;
                let history = train_auxiliary(&mut model, &data, &cfg.train_config(s, train_seed))
                    .map_err(|e| self.save_diverged(stage, e))?;
                let (enc, dec) = model.to_checkpoints();
                enc.save(self.path("aux-encoder.ckpt"))?;
                dec.save(self.path("aux-decoder.ckpt"))?;
                write_with(&self.path("aux-history.csv"), |w| write_aux_history(&history, w))?;
                files.extend(["aux-encoder.ckpt", "aux-decoder.ckpt", "aux-history.csv"].map(String::from));
            }
            Stage::Fm | Stage::FmBaseline | Stage::Latent => {
                let (s, config, kind) = match stage {
                    Stage::Fm => {
                        let k = aux.as_ref().expect("loaded").latent_dim();
                        (&cfg.fm, flow_config(d, k, cfg.fm.hidden, cfg.fm.depth), ModelKind::Flow)
                    }
                    Stage::FmBaseline => (
                        &cfg.fm_baseline,
                        flow_config(d, 0, cfg.fm_baseline.hidden, cfg.fm_baseline.depth),
                        ModelKind::Flow,
                    ),
                    _ => {
                        let k = aux.as_ref().expect("loaded").latent_dim();
                        (
                            &cfg.latent,
                            latent_config(k, cfg.latent.hidden, cfg.latent.depth),
                            ModelKind::Latent,
                        )
                    }
                };
                let mut model = ConditionedRegressor::new(config, &mut init)?;
                let tc = cfg.train_config(s, train_seed);
                let history: LossHistory = match (stage, aux.as_ref()) {
                    (Stage::Fm, Some(a)) => train_flow(&mut model, PriorSource::Learned(a), &data, &tc),
                    (Stage::Latent, Some(a)) => train_latent_sampler(&mut model, a, &data, &tc),
                    _ => train_flow(&mut model, PriorSource::Gaussian, &data, &tc),
                }
                .map_err(|e| self.save_diverged(stage, e))?;
                let ckpt = format!("{name}.ckpt");
                Checkpoint::from_model(kind, &model).save(self.path(&ckpt))?;
                let hist = format!("{name}-history.csv");
                write_with(&self.path(&hist), |w| history.write_csv(w))?;
                files.extend([ckpt, hist]);
            }
        }
        let snapshot = format!("{name}.resolved.ini");
        fs::write(self.path(&snapshot), cfg.render())?;
        files.push(snapshot);
        self.manifest(&format!("train {name}"), files, vec![])
    }

    fn manifest(&self, command: &str, files: Vec<String>, settings: Vec<(String, String)>) -> Result<()> {
        let stem = command.split(' ').next().unwrap_or(command);
        Manifest {
            command: command.to_string(),
            seed: self.seed,
            settings,
            files,
        }
        .save(self.path(&format!("{stem}-manifest.json")))
    }

    fn generation(&self) -> GenerationConfig {
        self.cfg.generate.generation(child_seed(self.seed, STREAM_GENERATE))
    }

    fn generate(&self) -> Result<()> {
        let g = &self.cfg.generate;
        let gen = self.generation();
        let rows = if g.is_baseline() {
            generate_baseline(&self.load_baseline()?, &gen)?.into_data()
        } else {
            let (aux, flow, latent) = (self.load_aux()?, self.load_flow()?, self.load_latent()?);
            LearnedPriorFlow::new(&aux, &flow, &latent)?.generate(&gen)?.into_data()
        };
        let set = self.shaped(rows)?;
        let mut files = Vec::new();
        self.save_set(&set, "samples", &mut files)?;
        let settings = vec![
            ("preset".into(), g.preset.to_string()),
            ("latent_steps".into(), g.latent_steps.to_string()),
            ("latent_method".into(), g.latent_method.to_string()),
            ("fm_steps".into(), g.fm_steps.to_string()),
            ("fm_method".into(), g.fm_method.to_string()),
            ("n".into(), g.n.to_string()),
        ];
        self.manifest("generate", files, settings)
    }

    fn inpaint(&self, mask_flag: Option<&Path>) -> Result<()> {
        let p = &self.cfg.inpaint;
        let mask_path = match mask_flag {
            Some(m) => m.to_path_buf(),
            None if !p.mask.is_empty() => PathBuf::from(&p.mask),
            None => {
                return Err(Error::InvalidArgument(
                    "inpaint needs a mask (--mask or inpaint.mask)".into(),
                ))
            }
        };
        let text = fs::read_to_string(&mask_path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read mask {}: {e}", mask_path.display())))?;
        let mask = InpaintMask::parse(&text)?;
        let (aux, flow) = (self.load_aux()?, self.load_flow()?);
        if mask.len() != aux.data_dim() {
            return Err(Error::InvalidArgument(format!(
                "mask {} has {} entries, data has {} coordinates",
                mask_path.display(),
                mask.len(),
                aux.data_dim()
            )));
        }
        let inputs = if p.input.is_empty() {
            self.dataset(p.count, STREAM_INPUTS)?.into_data()
        } else {
            read_points_csv(Path::new(&p.input))?
        };
        if inputs.ncols() != aux.data_dim() {
            return Err(Error::dim("inpaint input", aux.data_dim(), inputs.ncols()));
        }
        let masks = vec![mask; inputs.nrows()];
        let mut rng = seeded_rng(child_seed(self.seed, STREAM_GENERATE));
        let out = inpaint_batch(
            &aux,
            &flow,
            inputs.view(),
            &masks,
            None,
            SolverConfig::forward(p.method, p.steps),
            &mut rng,
        )?;
        let mut files = Vec::new();
        self.save_set(&self.shaped(inputs)?, "inpaint-inputs", &mut files)?;
        self.save_set(&self.shaped(out)?, "inpainted", &mut files)?;
        let settings = vec![
            ("mask".into(), mask_path.display().to_string()),
            ("method".into(), p.method.to_string()),
            ("steps".into(), p.steps.to_string()),
        ];
        self.manifest("inpaint", files, settings)
    }

    fn interp(&self) -> Result<()> {
        let ip = &self.cfg.interp;
        let (aux, flow, latent) = (self.load_aux()?, self.load_flow()?, self.load_latent()?);
        let pipeline = LearnedPriorFlow::new(&aux, &flow, &latent)?;
        let ends = self.dataset(2 * ip.pairs, STREAM_INPUTS)?;
        let z = aux.encode_batch(ends.data().view())?.mean;
        let path = LatentPath {
            method: ip.method,
            steps: ip.steps,
        };
        let mut rng = seeded_rng(child_seed(self.seed, STREAM_GENERATE));
        let code = |i: usize| LatentCode(z.row(i).to_vec());

        let mut path_latents = Vec::new();
        for pair in 0..ip.pairs {
            let (z0, z1) = (code(2 * pair), code(2 * pair + 1));
            for j in 0..ip.points {
                let alpha = j as f64 / (ip.points - 1) as f64;
                path_latents.push(interpolate_latents(&latent, &z0, &z1, alpha, ip.mode, path)?.0);
            }
        }
        let mut perturbed = Vec::new();
        for i in 0..2 * ip.pairs {
            for _ in 0..ip.perturbations {
                perturbed.push(perturb_latent(&latent, &code(i), ip.perturb_alpha, &mut rng, path)?.0);
            }
        }
        let gen = self.generation();
        let k = aux.latent_dim();
        let mut files = Vec::new();
        for (stem, latents) in [("interp", path_latents), ("perturb", perturbed)] {
            if latents.is_empty() {
                continue;
            }
            let zs = Array2::from_shape_vec((latents.len(), k), latents.concat()).expect("latent rows");
            let out = pipeline.generate_from_latents(zs.view(), &mut rng, &gen)?;
            self.save_set(&self.shaped(out)?, stem, &mut files)?;
        }
        self.save_set(&self.shaped(ends.into_data())?, "interp-endpoints", &mut files)?;
        let settings = vec![
            ("mode".into(), ip.mode.to_string()),
            ("points".into(), ip.points.to_string()),
            ("pairs".into(), ip.pairs.to_string()),
            ("perturb_alpha".into(), ip.perturb_alpha.to_string()),
        ];
        self.manifest("interp", files, settings)
    }

    fn sweep(&self) -> Result<()> {
        let sw = &self.cfg.sweep;
        let baseline = self.load_baseline()?;
        let (aux, flow, latent) = (self.load_aux()?, self.load_flow()?, self.load_latent()?);
        let pipeline = LearnedPriorFlow::new(&aux, &flow, &latent)?;
        let reference = self.dataset(sw.n, STREAM_REFERENCE)?;
        let metric_seed = child_seed(self.seed, STREAM_METRIC);
        let bandwidth = match sw.metric {
            Metric::Mmd => median_bandwidth(&reference, &reference, 1024)?,
            Metric::SlicedW2 => 0.0,
        };
        let metric = |a: &SampleSet, b: &SampleSet| match sw.metric {
            Metric::SlicedW2 => sliced_w2(a, b, sw.projections, &mut seeded_rng(metric_seed)),
            Metric::Mmd => mmd_rbf(a, b, bandwidth),
        };
        let gen_seed = child_seed(self.seed, STREAM_GENERATE);
        let base_rows = step_sweep(
            |steps| {
                let g = GenerationConfig {
                    fm_steps: steps,
                    ..GenerationConfig::baseline(sw.method)
                };
                generate_baseline(&baseline, &g.with_batch(sw.n).with_seed(gen_seed))
            },
            &reference,
            &sw.steps,
            metric,
        )?;
        let learned_rows = step_sweep(
            |steps| {
                let g = GenerationConfig {
                    latent_steps: sw.latent_steps,
                    latent_method: sw.method,
                    fm_steps: steps,
                    fm_method: sw.method,
                    seed: gen_seed,
                    batch_size: sw.n,
                };
                pipeline.generate(&g)
            },
            &reference,
            &sw.steps,
            metric,
        )?;
        let mut records = Vec::new();
        for (prior, rows) in [("gaussian", base_rows), ("learned", learned_rows)] {
            for r in rows {
                records.push(SweepRecord {
                    method: if prior == "gaussian" { "fm" } else { "lediflow" }.to_string(),
                    prior: prior.to_string(),
                    solver: sw.method.to_string(),
                    steps: r.steps,
                    metric: r.metric,
                    seconds_per_batch: r.seconds,
                });
            }
        }
        write_with(&self.path("sweep.csv"), |w| write_sweep_csv(&records, w))?;
        fs::write(self.path("sweep.gp"), gnuplot_script("sweep.csv", "sweep.png"))?;
        let settings = vec![
            ("metric".into(), sw.metric.name().to_string()),
            ("method".into(), sw.method.to_string()),
            ("latent_steps".into(), sw.latent_steps.to_string()),
        ];
        self.manifest("sweep", vec!["sweep.csv".into(), "sweep.gp".into()], settings)
    }

    fn export_data(&self) -> Result<()> {
        let data = self.training_data()?;
        let mut files = Vec::new();
        self.save_set(&data, "data", &mut files)?;
        let settings = vec![
            ("kind".into(), self.cfg.data.kind.name().to_string()),
            ("n".into(), self.cfg.data.n.to_string()),
        ];
        self.manifest("export-data", files, settings)
    }
}

/// Preset names accepted by `--preset`.
pub fn preset_names() -> [&'static str; 4] {
    [
        Preset::Midpoint42.name(),
        Preset::Heun321.name(),
        Preset::BaselineMidpoint8.name(),
        Preset::BaselineHeun3x8.name(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_after_verb() {
        let cli = Cli::try_parse_from([
            "lediflow",
            "train",
            "--stage",
            "fm-baseline",
            "--seed",
            "4",
            "--out",
            "x",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(matches!(
            cli.command,
            Command::Train {
                stage: Stage::FmBaseline
            }
        ));
    }

    #[test]
    fn bad_usage_exits_3() {
        assert_eq!(run(["lediflow", "train", "--stage", "vae"]), 3);
        assert_eq!(run(["lediflow", "--help"]), 0);
    }

    #[test]
    fn csv_reader_skips_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x,y\n1,2\n3,4.5\n").unwrap();
        let a = read_points_csv(&p).unwrap();
        assert_eq!(a, ndarray::array![[1.0, 2.0], [3.0, 4.5]]);
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_points_csv(&p).is_err());
    }
}
