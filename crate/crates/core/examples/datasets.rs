//! Draws every synthetic dataset and writes it to disk: CSV for the 2-D
//! sets, PGM images for blobs.
//!
//! ```text
//! cargo run --release --example datasets -- [out_dir]
//! ```

use lediflow::data::{make_2d, make_blob_images, Dist2d};
use lediflow::export::{save_pgm_dir, save_points_csv};

fn main() -> lediflow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/datasets".into());
    std::fs::create_dir_all(&out)?;
    for kind in [
        Dist2d::TwoMoons,
        Dist2d::Checkerboard,
        Dist2d::GaussMix8,
        Dist2d::Spiral,
    ] {
        let set = make_2d(kind, 2048, 0.05, 0)?;
        let mean = set.mean();
        println!(
            "{:<12} n={} mean=({:+.3}, {:+.3})",
            kind.name(),
            set.len(),
            mean[0],
            mean[1]
        );
        save_points_csv(&set, format!("{out}/{}.csv", kind.name()))?;
    }
    let blobs = make_blob_images(16, 12, 0)?;
    let files = save_pgm_dir(&blobs, format!("{out}/blobs"), "blob-")?;
    println!("blobs        wrote {} images", files.len());
    Ok(())
}
