//! Sliced W2 and kernel MMD on synthetic point clouds, plus a permutation test.
//!
//! ```text
//! cargo run --release --example metrics
//! ```

use lediflow::data::{make_2d, Dist2d};
use lediflow::eval::{median_bandwidth, mmd_permutation_test, mmd_rbf, sliced_w2};
use lediflow::rng::{gaussian_matrix, seeded_rng};
use lediflow::SampleSet;

fn main() -> lediflow::Result<()> {
    let moons = make_2d(Dist2d::TwoMoons, 2000, 0.05, 1)?;
    let moons2 = make_2d(Dist2d::TwoMoons, 2000, 0.05, 2)?;
    let spiral = make_2d(Dist2d::Spiral, 2000, 0.05, 3)?;
    let noise = SampleSet::from_rows(gaussian_matrix(&mut seeded_rng(4), 2000, 2))?;
    let h = median_bandwidth(&moons, &moons2, 1000)?;
    println!("median-heuristic bandwidth {h:.3}");
    for (name, other) in [
        ("moons (fresh draw)", &moons2),
        ("spiral", &spiral),
        ("N(0, I)", &noise),
    ] {
        let sw = sliced_w2(&moons, other, 256, &mut seeded_rng(5))?;
        let mmd = mmd_rbf(&moons, other, h)?;
        println!("moons vs {name:<18} sliced W2 {sw:.5}  MMD² {mmd:+.5}");
    }
    println!(
        "moons vs itself: sliced W2 {}",
        sliced_w2(&moons, &moons, 64, &mut seeded_rng(6))?
    );

    // Shift every point by c along one axis: sliced W2 ≈ c²/d.
    let c = 1.5;
    let shifted = SampleSet::from_rows(moons.data().mapv(|v| v) + &ndarray::arr1(&[c, 0.0]))?;
    let sw = sliced_w2(&moons, &shifted, 512, &mut seeded_rng(7))?;
    println!("shift c={c}: sliced W2 {sw:.4}, c²/d = {:.4}", c * c / 2.0);

    let small_a = moons.select(&(0..300).collect::<Vec<_>>());
    let small_b = spiral.select(&(0..300).collect::<Vec<_>>());
    let test = mmd_permutation_test(&small_a, &small_b, h, 200, &mut seeded_rng(8))?;
    println!("permutation test moons vs spiral: {test:?}");
    Ok(())
}
