//! Sample-quality metrics and the steps-versus-quality sweep.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};
use crate::rng::{gaussian_draw, permutation, Rng};
use crate::sample::SampleSet;

/// Squared 2-Wasserstein distance between two sorted 1-D empirical measures
/// with uniform weights, by matching quantile functions.
pub fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    let scale = (na * nb) as f64;
    while i < na && j < nb {
        // Next breakpoints (i+1)/na and (j+1)/nb, compared exactly in integers.
        let ea = (i + 1) * nb;
        let eb = (j + 1) * na;
        let next = ea.min(eb) as f64 / scale;
        let d = a[i] - b[j];
        total += (next - u) * d * d;
        u = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    total
}

fn check_pair(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidArgument("metric needs non-empty sample sets".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::dim("metric sample dimension", a.ncols(), b.ncols()));
    }
    Ok(())
}

fn sorted(v: Array1<f64>) -> Vec<f64> {
    let mut out = v.into_raw_vec_and_offset().0;
    out.sort_by(f64::total_cmp);
    out
}

/// Sliced squared 2-Wasserstein distance: mean over `projections` random unit
/// directions of the 1-D squared W2 between the projected sets.
pub fn sliced_w2(a: &SampleSet, b: &SampleSet, projections: usize, rng: &mut Rng) -> Result<f64> {
    sliced_w2_rows(a.data(), b.data(), projections, rng)
}

pub fn sliced_w2_rows(a: ArrayView2<f64>, b: ArrayView2<f64>, projections: usize, rng: &mut Rng) -> Result<f64> {
    check_pair(a, b)?;
    if projections == 0 {
        return Err(Error::InvalidArgument("projections must be ≥ 1".into()));
    }
    let d = a.ncols();
    let mut total = 0.0;
    for _ in 0..projections {
        let mut dir = Array1::from(gaussian_draw(rng, d));
        let norm = dir.dot(&dir).sqrt();
        dir /= norm;
        let pa = sorted(a.dot(&dir));
        let pb = sorted(b.dot(&dir));
        total += w2_sq_sorted(&pa, &pb);
    }
    Ok(total / projections as f64)
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Unbiased MMD² with kernel `exp(−‖u−v‖² / (2·bandwidth²))`.
///
/// Equal-size sets use the paired U-statistic (cross terms with `i == j`
/// dropped); otherwise the two-sample form with within-set diagonals removed.
/// Either can dip slightly below zero when both sets share a distribution.
pub fn mmd_rbf(a: &SampleSet, b: &SampleSet, bandwidth: f64) -> Result<f64> {
    mmd_rbf_rows(a.data(), b.data(), bandwidth)
}

pub fn mmd_rbf_rows(a: ArrayView2<f64>, b: ArrayView2<f64>, bandwidth: f64) -> Result<f64> {
    check_pair(a, b)?;
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument("bandwidth must be > 0".into()));
    }
    let (m, n) = (a.nrows(), b.nrows());
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument("unbiased MMD needs ≥ 2 points per set".into()));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let k = |u, v| (-gamma * sq_dist(u, v)).exp();
    let mut kaa = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            kaa += k(a.row(i), a.row(j));
        }
    }
    let mut kbb = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            kbb += k(b.row(i), b.row(j));
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    if m == n {
        // Paired U-statistic: cross terms skip i == j, so identical sets score 0.
        let mut kab = 0.0;
        for i in 0..m {
            for j in 0..n {
                if i != j {
                    kab += k(a.row(i), b.row(j));
                }
            }
        }
        return Ok(2.0 * (kaa + kbb - kab) / (mf * (mf - 1.0)));
    }
    let mut kab = 0.0;
    for i in 0..m {
        for j in 0..n {
            kab += k(a.row(i), b.row(j));
        }
    }
    Ok(2.0 * kaa / (mf * (mf - 1.0)) + 2.0 * kbb / (nf * (nf - 1.0)) - 2.0 * kab / (mf * nf))
}

/// Median pairwise distance over the pooled sets (at most `max_points` rows
/// from each, taken in order).
pub fn median_bandwidth(a: &SampleSet, b: &SampleSet, max_points: usize) -> Result<f64> {
    check_pair(a.data(), b.data())?;
    let (av, bv) = (a.data(), b.data());
    let rows: Vec<_> = av
        .rows()
        .into_iter()
        .take(max_points)
        .chain(bv.rows().into_iter().take(max_points))
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            dists.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    dists.sort_by(f64::total_cmp);
    let med = dists[dists.len() / 2];
    Ok(if med > 0.0 { med } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    pub null_mean: f64,
    pub null_std: f64,
    /// Fraction of permuted statistics at least as large as the observed one.
    pub p_value: f64,
}

/// Permutation null for the MMD statistic: pool, reshuffle, re-split.
pub fn mmd_permutation_test(
    a: &SampleSet,
    b: &SampleSet,
    bandwidth: f64,
    permutations: usize,
    rng: &mut Rng,
) -> Result<PermutationTest> {
    let statistic = mmd_rbf(a, b, bandwidth)?;
    let pooled = ndarray::concatenate(ndarray::Axis(0), &[a.data(), b.data()])
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let m = a.len();
    let mut null = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        let p = permutation(rng, pooled.nrows());
        let pa = pooled.select(ndarray::Axis(0), &p[..m]);
        let pb = pooled.select(ndarray::Axis(0), &p[m..]);
        null.push(mmd_rbf_rows(pa.view(), pb.view(), bandwidth)?);
    }
    let k = null.len().max(1) as f64;
    let null_mean = null.iter().sum::<f64>() / k;
    let null_std = (null.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
    let exceed = null.iter().filter(|&&v| v >= statistic).count();
    Ok(PermutationTest {
        statistic,
        null_mean,
        null_std,
        p_value: (exceed as f64 + 1.0) / (k + 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub steps: usize,
    pub metric: f64,
    /// Wall time of one generator call.
    pub seconds: f64,
}

/// Runs `generator(steps)` for each entry and scores it against `reference`.
pub fn step_sweep<G, M>(
    mut generator: G,
    reference: &SampleSet,
    steps_list: &[usize],
    metric: M,
) -> Result<Vec<SweepRow>>
where
    G: FnMut(usize) -> Result<SampleSet>,
    M: Fn(&SampleSet, &SampleSet) -> Result<f64>,
{
    if steps_list.is_empty() {
        return Err(Error::InvalidArgument("steps list must be non-empty".into()));
    }
    steps_list
        .iter()
        .map(|&steps| {
            let start = Instant::now();
            let samples = generator(steps)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(SweepRow {
                steps,
                metric: metric(&samples, reference)?,
                seconds,
            })
        })
        .collect()
}

/// One labelled row of the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: String,
    pub prior: String,
    pub solver: String,
    pub steps: usize,
    pub metric: f64,
    pub seconds_per_batch: f64,
}

pub const SWEEP_HEADER: &str = "method,prior,solver,steps,metric,seconds_per_batch";

pub fn write_sweep_csv(records: &[SweepRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method, r.prior, r.solver, r.steps, r.metric, r.seconds_per_batch
        )?;
    }
    Ok(())
}

/// Gnuplot script plotting metric against time per batch, one series per prior.
pub fn gnuplot_script(csv_name: &str, png_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set terminal pngcairo size 800,600\n\
         set output '{png_name}'\n\
         set xlabel 'seconds per batch'\n\
         set ylabel 'sliced W2'\n\
         set logscale y\n\
         set key top right\n\
         plot '{csv_name}' using (strcol(2) eq 'gaussian' ? $6 : 1/0):5 skip 1 with linespoints title 'gaussian prior', \\\n\
         \x20    '{csv_name}' using (strcol(2) eq 'learned' ? $6 : 1/0):5 skip 1 with linespoints title 'learned prior'\n"
    )
}
