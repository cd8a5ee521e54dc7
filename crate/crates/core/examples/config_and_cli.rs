//! Parses a run configuration, applies a preset, prints the resolved
//! snapshot, then drives the command-line entry point on a tiny budget.
//!
//! ```text
//! cargo run --release --example config_and_cli -- [out_dir]
//! ```

use lediflow::cli;
use lediflow::config::Config;

const TEXT: &str = "\
[run]
seed = 7

[data]
kind = spiral
n = 1024

# Small networks so the whole run takes seconds.
[aux]
latent_dim = 8
hidden = 32
depth = 2
steps = 300

[fm]
hidden = 32
depth = 2
steps = 300

[fm-baseline]
hidden = 32
depth = 2
steps = 300

[latent]
hidden = 32
depth = 2
steps = 300

[generate]
preset = heun3-2-1
n = 512
";

fn main() -> lediflow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/config-and-cli".into());
    let cfg = Config::parse(TEXT, "inline")?;
    println!("{}", cfg.render());

    std::fs::create_dir_all(&out)?;
    let path = format!("{out}/run.ini");
    std::fs::write(&path, TEXT)?;
    let commands: [&[&str]; 6] = [
        &["train", "--stage", "aux"],
        &["train", "--stage", "fm"],
        &["train", "--stage", "fm-baseline"],
        &["train", "--stage", "latent"],
        &["generate"],
        &["sweep"],
    ];
    for args in commands {
        let mut argv = vec!["lediflow", "--config", &path, "--out", &out];
        argv.extend_from_slice(args);
        let code = cli::run(argv);
        println!("{:<30} exit {code}", args.join(" "));
    }
    // A missing prerequisite is reported with exit code 2.
    let code = cli::run(["lediflow", "generate", "--out", &format!("{out}/empty")]);
    println!("generate without checkpoints   exit {code}");
    Ok(())
}
