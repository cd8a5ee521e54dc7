//! Seeded synthetic datasets: 2D point clouds and tiny grayscale blob images.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{gaussian_draw, seeded_rng};
use crate::sample::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dist2d {
    TwoMoons,
    Checkerboard,
    GaussMix8,
    Spiral,
}

impl Dist2d {
    pub fn name(self) -> &'static str {
        match self {
            Dist2d::TwoMoons => "two-moons",
            Dist2d::Checkerboard => "checkerboard",
            Dist2d::GaussMix8 => "gauss-mix8",
            Dist2d::Spiral => "spiral",
        }
    }
}

impl fmt::Display for Dist2d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dist2d {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "two-moons" | "twomoons" | "moons" => Ok(Dist2d::TwoMoons),
            "checkerboard" => Ok(Dist2d::Checkerboard),
            "gauss-mix8" | "gaussmix8" | "8gaussians" => Ok(Dist2d::GaussMix8),
            "spiral" => Ok(Dist2d::Spiral),
            other => Err(Error::InvalidArgument(format!("unknown 2d distribution {other:?}"))),
        }
    }
}

/// `n` points from `kind`, standardized to zero mean and unit variance per axis.
pub fn make_2d(kind: Dist2d, n: usize, noise: f64, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be ≥ 1".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be ≥ 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut pts = Array2::<f64>::zeros((n, 2));
    for i in 0..n {
        let (x, y) = match kind {
            Dist2d::TwoMoons => {
                let theta = PI * rng.random::<f64>();
                if i % 2 == 0 {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                }
            }
            Dist2d::Checkerboard => {
                let x1: f64 = rng.random_range(-2.0..2.0);
                let x2: f64 = rng.random::<f64>() - 2.0 * f64::from(rng.random_range(0..2u8));
                (x1, x2 + x1.floor().rem_euclid(2.0))
            }
            Dist2d::GaussMix8 => {
                let angle = 2.0 * PI * (i % 8) as f64 / 8.0;
                (2.0 * angle.cos(), 2.0 * angle.sin())
            }
            Dist2d::Spiral => {
                let theta = 3.0 * PI * rng.random::<f64>().sqrt();
                (theta * theta.cos() / PI, theta * theta.sin() / PI)
            }
        };
        pts[[i, 0]] = x;
        pts[[i, 1]] = y;
    }
    if noise > 0.0 {
        let eps = gaussian_draw(&mut rng, 2 * n);
        for (p, e) in pts.iter_mut().zip(eps) {
            *p += noise * e;
        }
    }
    standardize(&mut pts);
    SampleSet::from_rows(pts)
}

fn standardize(pts: &mut Array2<f64>) {
    let mean = pts.mean_axis(Axis(0)).expect("non-empty");
    *pts -= &mean;
    for mut col in pts.columns_mut() {
        let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        if var > 0.0 {
            let sd = var.sqrt();
            col.mapv_inplace(|v| v / sd);
        }
    }
}

/// Pixels of the central square where blob centers are placed.
pub fn blob_region(side: usize) -> Vec<usize> {
    let lo = side / 4;
    let hi = side - side / 4;
    let mut idx = Vec::new();
    for r in lo..hi {
        for c in lo..hi {
            idx.push(r * side + c);
        }
    }
    idx
}

pub fn corner_pixels(side: usize) -> [usize; 4] {
    [0, side - 1, (side - 1) * side, side * side - 1]
}

/// `n` procedural `side × side` images in `[-1, 1]`: a smooth linear
/// background plus one sharp bright disk centered in the central square.
pub fn make_blob_images(n: usize, side: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be ≥ 1".into()));
    }
    if !(2..=16).contains(&side) {
        return Err(Error::InvalidArgument(format!(
            "image side must be in [2, 16], got {side}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut data = Array2::<f64>::zeros((n, side * side));
    let s = side as f64;
    let lo = (side / 4) as f64;
    let hi = (side - side / 4) as f64;
    for mut img in data.rows_mut() {
        let angle = 2.0 * PI * rng.random::<f64>();
        let slope = 0.3 * rng.random::<f64>();
        let offset = -0.6 + 0.2 * rng.random::<f64>();
        let cx = rng.random_range(lo..hi);
        let cy = rng.random_range(lo..hi);
        let radius = s * rng.random_range(0.1..0.2);
        for r in 0..side {
            for c in 0..side {
                let (u, v) = ((c as f64 + 0.5) / s - 0.5, (r as f64 + 0.5) / s - 0.5);
                let bg = offset + slope * (angle.cos() * u + angle.sin() * v);
                let d = ((c as f64 + 0.5 - cx).powi(2) + (r as f64 + 0.5 - cy).powi(2)).sqrt();
                let blob = 1.6 / (1.0 + (4.0 * (d - radius)).exp());
                img[r * side + c] = (bg + blob).clamp(-1.0, 1.0);
            }
        }
    }
    SampleSet::new(data, vec![side, side])
}
