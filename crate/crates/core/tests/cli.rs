//! End-to-end runs of the command-line verbs on tiny budgets.

use std::fs;
use std::path::{Path, PathBuf};

use lediflow::cli::run;
use lediflow::config::Config;

const TINY: &str = "\
[data]
n = 256

[aux]
latent_dim = 4
hidden = 16
depth = 1
steps = 60
batch_size = 64

[fm]
hidden = 16
depth = 1
steps = 60
batch_size = 64

[fm-baseline]
hidden = 16
depth = 1
steps = 60
batch_size = 64

[latent]
hidden = 16
depth = 1
steps = 60
batch_size = 64

[generate]
n = 64

[interp]
pairs = 2
points = 3
perturbations = 2
steps = 4

[sweep]
n = 128
projections = 32
";

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(config_text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.ini");
        fs::write(&config, config_text).unwrap();
        Self {
            _dir: dir,
            root,
            config,
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, out: &str, args: &[&str]) -> i32 {
        let out = self.out(out);
        let mut argv: Vec<String> = vec!["lediflow".into()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.extend([
            "--config".into(),
            self.config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ]);
        run(argv)
    }

    fn train_all(&self, out: &str) {
        for stage in ["aux", "fm", "fm-baseline", "latent"] {
            assert_eq!(self.run(out, &["train", "--stage", stage]), 0, "stage {stage}");
        }
    }
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn dependent_stages_need_the_aux_checkpoint() {
    let ws = Workspace::new(TINY);
    assert_eq!(ws.run("a", &["train", "--stage", "fm"]), 2);
    assert_eq!(ws.run("a", &["train", "--stage", "latent"]), 2);
    assert_eq!(ws.run("a", &["train", "--stage", "fm-baseline"]), 0);
    assert_eq!(ws.run("a", &["generate"]), 2);
}

#[test]
fn invalid_config_exits_3() {
    let ws = Workspace::new("[fm]\nsteps = many\n");
    assert_eq!(ws.run("a", &["train", "--stage", "aux"]), 3);
    let ws = Workspace::new("[fm]\nlayers = 2\n");
    assert_eq!(ws.run("a", &["export-data"]), 3);
    assert_eq!(ws.run("a", &["generate", "--preset", "turbo"]), 3);
}

#[test]
fn train_and_generate_are_byte_identical_across_runs() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    ws.train_all("b");
    for f in [
        "aux-encoder.ckpt",
        "aux-decoder.ckpt",
        "fm.ckpt",
        "fm-baseline.ckpt",
        "latent.ckpt",
        "aux-history.csv",
        "fm-history.csv",
    ] {
        assert_eq!(
            fs::read(ws.out("a").join(f)).unwrap(),
            fs::read(ws.out("b").join(f)).unwrap(),
            "{f}"
        );
    }
    for out in ["a", "b"] {
        assert_eq!(ws.run(out, &["generate", "--seed", "3"]), 0);
    }
    let a = fs::read(ws.out("a").join("samples.csv")).unwrap();
    assert_eq!(a, fs::read(ws.out("b").join("samples.csv")).unwrap());
    assert_eq!(lines(&ws.out("a").join("samples.csv")).len(), 65);
    assert_eq!(
        fs::read(ws.out("a").join("generate-manifest.json")).unwrap(),
        fs::read(ws.out("b").join("generate-manifest.json")).unwrap()
    );

    // A different seed trains different weights.
    assert_eq!(ws.run("c", &["train", "--stage", "aux", "--seed", "9"]), 0);
    assert_ne!(
        fs::read(ws.out("a").join("aux-encoder.ckpt")).unwrap(),
        fs::read(ws.out("c").join("aux-encoder.ckpt")).unwrap()
    );
}

#[test]
fn resolved_snapshot_lists_every_default() {
    let ws = Workspace::new("[fm]\nsteps = 20\nhidden = 8\ndepth = 1\n");
    assert_eq!(ws.run("a", &["train", "--stage", "fm-baseline", "--seed", "5"]), 0);
    let text = fs::read_to_string(ws.out("a").join("fm-baseline.resolved.ini")).unwrap();
    let parsed = Config::parse(&text, "snapshot").unwrap();
    let mut expected = Config::default();
    expected.seed = 5;
    expected.fm.steps = 20;
    expected.fm.hidden = 8;
    expected.fm.depth = 1;
    assert_eq!(parsed, expected);
    assert!(text.contains("beta = 0.001"));
    assert!(text.contains("lr = 0.0003"));
    assert!(text.contains("preset = midpoint-4-2"));
}

#[test]
fn presets_select_the_generator() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    for preset in ["midpoint-4-2", "heun3-2-1", "baseline-midpoint-8", "baseline-heun3-8"] {
        assert_eq!(ws.run("a", &["generate", "--preset", preset]), 0, "{preset}");
        let manifest = fs::read_to_string(ws.out("a").join("generate-manifest.json")).unwrap();
        assert!(manifest.contains(preset));
    }
    let manifest = fs::read_to_string(ws.out("a").join("generate-manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(json["command"], "generate");
}

#[test]
fn kind_mismatch_exits_4() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    let ck = ws.out("swapped");
    fs::create_dir_all(&ck).unwrap();
    for f in ["aux-encoder.ckpt", "aux-decoder.ckpt", "latent.ckpt"] {
        fs::copy(ws.out("a").join(f), ck.join(f)).unwrap();
    }
    fs::copy(ws.out("a").join("latent.ckpt"), ck.join("fm.ckpt")).unwrap();
    let code = ws.run("g", &["generate", "--checkpoints", ck.to_str().unwrap()]);
    assert_eq!(code, 4);
    fs::write(ck.join("fm.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(ws.run("g", &["generate", "--checkpoints", ck.to_str().unwrap()]), 4);
}

#[test]
fn inpaint_checks_mask_length_and_keeps_known_coordinates() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    let bad = ws.out("bad.mask");
    fs::write(&bad, "1 0 1\n").unwrap();
    assert_eq!(ws.run("a", &["inpaint", "--mask", bad.to_str().unwrap()]), 3);

    let good = ws.out("good.mask");
    fs::write(&good, "0 1\n").unwrap();
    assert_eq!(ws.run("a", &["inpaint", "--mask", good.to_str().unwrap()]), 0);
    let parse = |name: &str| -> Vec<Vec<f64>> {
        lines(&ws.out("a").join(name))[1..]
            .iter()
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    };
    let (inputs, out) = (parse("inpaint-inputs.csv"), parse("inpainted.csv"));
    assert_eq!(inputs.len(), 16);
    for (a, b) in inputs.iter().zip(&out) {
        assert!((a[0] - b[0]).abs() <= 1e-6);
        assert!(b[1].is_finite());
    }
}

#[test]
fn sweep_writes_ten_rows_and_a_plot_script() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    assert_eq!(ws.run("a", &["sweep"]), 0);
    let rows = lines(&ws.out("a").join("sweep.csv"));
    assert_eq!(rows[0], "method,prior,solver,steps,metric,seconds_per_batch");
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.iter().filter(|r| r.contains(",gaussian,")).count(), 5);
    assert_eq!(rows.iter().filter(|r| r.contains(",learned,")).count(), 5);
    let gp = fs::read_to_string(ws.out("a").join("sweep.gp")).unwrap();
    assert!(gp.contains("sweep.csv"));
}

#[test]
fn interp_and_export_data() {
    let ws = Workspace::new(TINY);
    ws.train_all("a");
    assert_eq!(ws.run("a", &["interp"]), 0);
    assert_eq!(lines(&ws.out("a").join("interp.csv")).len(), 1 + 2 * 3);
    assert_eq!(lines(&ws.out("a").join("perturb.csv")).len(), 1 + 4 * 2);

    assert_eq!(ws.run("d", &["export-data"]), 0);
    let data = lines(&ws.out("d").join("data.csv"));
    assert_eq!(data[0], "x,y");
    assert_eq!(data.len(), 257);
}

#[test]
fn blob_images_export_as_pgm() {
    let ws = Workspace::new("[data]\nkind = blobs\nn = 5\nside = 6\n");
    assert_eq!(ws.run("d", &["export-data"]), 0);
    let pgm = fs::read(ws.out("d").join("data").join("00004.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
    assert_eq!(pgm.len(), 11 + 36);
}
