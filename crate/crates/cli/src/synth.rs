//! Seeded synthetic indicator tables.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sqcsef::{Error, IndicatorSpec, RawDataset, Result};

pub const MIN_SAMPLES: usize = 8;
const CALIBRATION_ROUNDS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTarget {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub correlation: Array2<f64>,
    pub targets: Vec<ColumnTarget>,
    pub seed: u64,
}

fn lower_cholesky(r: &Array2<f64>) -> Result<Array2<f64>> {
    let n = r.nrows();
    if r.ncols() != n {
        return Err(Error::Config("target correlation must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (r[[i, j]] - r[[j, i]]).abs() > 1e-9 {
                return Err(Error::Config("target correlation is not symmetric".into()));
            }
        }
    }
    let dm = DMatrix::from_fn(n, n, |i, j| r[[i, j]]);
    let l = dm
        .cholesky()
        .ok_or_else(|| Error::Config("target correlation is not positive definite".into()))?
        .l();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| l[(i, j)]))
}

fn moments(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn shape(z: &[f64], loc: f64, scale: f64, t: &ColumnTarget, integer: bool) -> Vec<f64> {
    z.iter()
        .map(|&v| {
            let x = (loc + scale * v).clamp(t.min, t.max);
            if integer {
                x.round()
            } else {
                x
            }
        })
        .collect()
}

/// Correlated normal draws mapped onto each column's target range and
/// moments. Location and scale are refined so the clipped (and, for integer
/// indicators, rounded) column hits the target mean and deviation; the
/// extreme rows are then pinned to the target min and max.
pub fn synth_generate(spec: &SynthSpec, indicators: &[IndicatorSpec]) -> Result<RawDataset> {
    let n = indicators.len();
    if spec.m < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: spec.m,
        });
    }
    if spec.targets.len() != n || spec.correlation.nrows() != n {
        return Err(Error::Config(format!(
            "{n} indicators, {} targets, {}x{} correlation",
            spec.targets.len(),
            spec.correlation.nrows(),
            spec.correlation.ncols()
        )));
    }
    for t in &spec.targets {
        let ok = t.min < t.max && t.std > 0.0 && (t.min..=t.max).contains(&t.mean);
        if !ok || ![t.min, t.max, t.mean, t.std].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("inconsistent column target {t:?}")));
        }
    }
    let l = lower_cholesky(&spec.correlation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let white = Array2::from_shape_fn((spec.m, n), |_| StandardNormal.sample(&mut rng));
    let mut z = white.dot(&l.t());
    // exact zero mean and unit deviation per column before shaping
    for mut col in z.axis_iter_mut(Axis(1)) {
        let (mean, sd) = moments(&col.to_vec());
        col.mapv_inplace(|v| (v - mean) / sd);
    }

    let mut out = Array2::zeros((spec.m, n));
    for (j, (t, ind)) in spec.targets.iter().zip(indicators).enumerate() {
        let zc: Vec<f64> = z.column(j).to_vec();
        let (mut loc, mut scale) = (t.mean, t.std);
        for _ in 0..CALIBRATION_ROUNDS {
            let (mean, sd) = moments(&shape(&zc, loc, scale, t, ind.integer_valued));
            loc += t.mean - mean;
            if sd > 0.0 {
                scale *= t.std / sd;
            }
        }
        let mut col = shape(&zc, loc, scale, t, ind.integer_valued);
        let lo = (0..spec.m)
            .min_by(|&a, &b| zc[a].total_cmp(&zc[b]))
            .expect("m > 0");
        let hi = (0..spec.m)
            .max_by(|&a, &b| zc[a].total_cmp(&zc[b]))
            .expect("m > 0");
        col[lo] = t.min;
        col[hi] = t.max;
        for (i, v) in col.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    RawDataset::new(
        indicators.to_vec(),
        out,
        format!("synthetic(seed={})", spec.seed),
    )
}

/// Standardized data with `k` planted clusters. Cluster `c` is centered at
/// `0.2 + 0.6 c / (k - 1)` in every coordinate plus a small per-coordinate
/// offset, with Gaussian noise of deviation `noise`, clipped to `[0, 1]`.
/// Returns the matrix and the planted labels (balanced, shuffled).
pub fn planted_clusters(
    m: usize,
    n: usize,
    k: usize,
    noise: f64,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if k < 2 || m < k || n == 0 {
        return Err(Error::Config(format!(
            "cannot plant {k} clusters in {m} x {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Array2::from_shape_fn((k, n), |(c, _)| {
        let offset: f64 = StandardNormal.sample(&mut rng);
        0.2 + 0.6 * c as f64 / (k - 1) as f64 + 0.03 * offset
    });
    let mut labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let data = Array2::from_shape_fn((m, n), |(i, j)| {
        let e: f64 = StandardNormal.sample(&mut rng);
        (centers[[labels[i], j]] + noise * e).clamp(0.0, 1.0)
    });
    Ok((data, labels))
}

/// Best accuracy over all relabelings of `predicted` onto `truth`.
pub fn permutation_accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    let k = truth
        .iter()
        .chain(predicted)
        .copied()
        .max()
        .map_or(0, |x| x + 1);
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &counts, &mut best);
    best as f64 / truth.len() as f64
}

fn permute(perm: &mut [usize], at: usize, counts: &[Vec<usize>], best: &mut usize) {
    if at == perm.len() {
        let hits = perm.iter().enumerate().map(|(p, &t)| counts[p][t]).sum();
        *best = (*best).max(hits);
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        permute(perm, at + 1, counts, best);
        perm.swap(at, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{huangqiu_correlation, huangqiu_indicators, huangqiu_targets};
    use sqcsef::stats::pearson;

    fn default_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            m: 200,
            correlation: huangqiu_correlation(),
            targets: huangqiu_targets(),
            seed,
        }
    }

    #[test]
    fn preset_hits_targets() {
        let d = synth_generate(&default_spec(7), &huangqiu_indicators()).unwrap();
        for (j, t) in huangqiu_targets().iter().enumerate() {
            let col = d.column(j).to_vec();
            let (mean, sd) = moments(&col);
            let se = t.std / (200f64).sqrt();
            assert!(
                (mean - t.mean).abs() < se,
                "column {j}: mean {mean} vs {}",
                t.mean
            );
            assert!((sd - t.std).abs() < 0.1 * t.std, "column {j}: sd {sd}");
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (t.min, t.max));
        }
        assert!(d.column(2).iter().all(|x| x.fract() == 0.0));
    }

    #[test]
    fn correlation_is_reproduced_on_average() {
        // a single 200-row draw has a correlation standard error near 0.05
        let r = huangqiu_correlation();
        let seeds = 20;
        let mut mean_r = Array2::<f64>::zeros((6, 6));
        for seed in 0..seeds {
            let d = synth_generate(&default_spec(seed), &huangqiu_indicators()).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    mean_r[[a, b]] +=
                        pearson(d.column(a), d.column(b)).unwrap().coefficient / seeds as f64;
                }
            }
        }
        for a in [0, 1, 3, 4, 5] {
            for b in [0, 1, 3, 4, 5] {
                if a < b {
                    let got = mean_r[[a, b]];
                    assert!((got - r[[a, b]]).abs() < 0.1, "r({a},{b}) = {got}");
                }
            }
        }
    }

    #[test]
    fn identity_correlation_and_determinism() {
        let mut spec = default_spec(3);
        spec.correlation = Array2::eye(6);
        let a = synth_generate(&spec, &huangqiu_indicators()).unwrap();
        let b = synth_generate(&spec, &huangqiu_indicators()).unwrap();
        assert_eq!(a, b);
        for x in [0, 1, 3, 4, 5] {
            for y in [0, 1, 3, 4, 5] {
                if x < y {
                    assert!(pearson(a.column(x), a.column(y)).unwrap().coefficient.abs() < 0.2);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = default_spec(1);
        spec.m = 2;
        assert!(synth_generate(&spec, &huangqiu_indicators()).is_err());
        let mut spec = default_spec(1);
        spec.correlation[[0, 5]] = -0.9;
        spec.correlation[[5, 0]] = -0.9;
        assert!(matches!(
            synth_generate(&spec, &huangqiu_indicators()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn planted_and_accuracy() {
        let (d, l) = planted_clusters(30, 4, 3, 0.05, 2).unwrap();
        assert_eq!(d.dim(), (30, 4));
        assert_eq!(l.iter().filter(|&&x| x == 1).count(), 10);
        let relabeled: Vec<usize> = l.iter().map(|&x| (x + 1) % 3).collect();
        assert_eq!(permutation_accuracy(&l, &relabeled), 1.0);
        assert!((permutation_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]) - 0.75).abs() < 1e-15);
    }
}
