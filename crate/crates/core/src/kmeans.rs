//! Lloyd's K-Means with seeded multi-restart.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{centroids_of, inertia_of, sq_dist, ClusteringResult, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `k` distinct rows drawn uniformly.
    #[default]
    Random,
    KmeansPlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 3,
            tol: 1e-6,
            max_iter: 300,
            n_restarts: 10,
            seed: 0,
            init: Init::Random,
        }
    }
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        KMeansConfig {
            k,
            ..Default::default()
        }
    }
}

/// One Lloyd descent from fixed initial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every centroid update.
    pub inertia_trace: Vec<f64>,
}

fn nearest(row: ndarray::ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Runs assignment / mean-update steps until no centroid moves by `tol` or
/// more, or `max_iter` updates have been made.
///
/// A cluster left empty by the assignment step takes over the sample that
/// lies farthest from its own centroid.
pub fn lloyd(
    data: ArrayView2<'_, f64>,
    initial: Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> LloydRun {
    let k = initial.nrows();
    let m = data.nrows();
    let mut centroids = initial;
    let mut assignments = vec![0usize; m];
    let mut dists = vec![0.0; m];
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter.max(1) {
        iterations += 1;
        for (i, row) in data.rows().into_iter().enumerate() {
            let (c, d) = nearest(row, centroids.view());
            assignments[i] = c;
            dists[i] = d;
        }
        repair_empty(data, &mut assignments, &mut dists, &mut centroids);

        let updated = centroids_of(data, &assignments, k);
        let shift = updated
            .rows()
            .into_iter()
            .zip(centroids.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(inertia_of(data, &assignments, centroids.view()));
        if shift < tol {
            break;
        }
    }
    LloydRun {
        inertia: *trace.last().expect("at least one iteration"),
        assignments,
        centroids,
        iterations,
        inertia_trace: trace,
    }
}

fn repair_empty(
    data: ArrayView2<'_, f64>,
    assignments: &mut [usize],
    dists: &mut [f64],
    centroids: &mut Array2<f64>,
) {
    let k = centroids.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // farthest sample among clusters that can spare one
        let donor = (0..assignments.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { return };
        log::debug!("k-means: re-seeding empty cluster {empty} with sample {i}");
        assignments[i] = empty;
        dists[i] = 0.0;
        centroids.row_mut(empty).assign(&data.row(i));
    }
}

fn distinct_rows(data: ArrayView2<'_, f64>) -> usize {
    data.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

fn initial_centroids(
    data: ArrayView2<'_, f64>,
    k: usize,
    init: Init,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let m = data.nrows();
    let picks: Vec<usize> = match init {
        Init::Random => rand::seq::index::sample(rng, m, k).into_vec(),
        Init::KmeansPlusPlus => {
            let mut picks = vec![rng.random_range(0..m)];
            let mut d2: Vec<f64> = data
                .rows()
                .into_iter()
                .map(|r| sq_dist(r, data.row(picks[0])))
                .collect();
            while picks.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    let mut chosen = m - 1;
                    for (i, &d) in d2.iter().enumerate() {
                        if u < d {
                            chosen = i;
                            break;
                        }
                        u -= d;
                    }
                    chosen
                } else {
                    rng.random_range(0..m)
                };
                picks.push(next);
                for (i, r) in data.rows().into_iter().enumerate() {
                    d2[i] = d2[i].min(sq_dist(r, data.row(next)));
                }
            }
            picks
        }
    };
    let mut c = Array2::zeros((k, data.ncols()));
    for (dst, &i) in c.rows_mut().into_iter().zip(&picks) {
        let mut dst = dst;
        dst.assign(&data.row(i));
    }
    c
}

/// Best-of-`n_restarts` Lloyd clustering. Restart `r` draws its initial
/// centroids from ChaCha8 stream `r` of `cfg.seed`, so results do not depend
/// on scheduling.
pub fn fit(data: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<ClusteringResult> {
    let (m, n) = data.dim();
    if cfg.k == 0 || cfg.n_restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::Config(
            "k, n_restarts and max_iter must be positive".into(),
        ));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!(
            "tol must be positive, got {}",
            cfg.tol
        )));
    }
    if cfg.k > m {
        return Err(Error::Config(format!(
            "k = {} exceeds the number of samples {m}",
            cfg.k
        )));
    }
    if n == 0 || data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(
            "k-means input must be non-empty and finite".into(),
        ));
    }
    let distinct = distinct_rows(data);
    if distinct < cfg.k {
        return Err(Error::Degenerate(format!(
            "only {distinct} distinct samples for k = {}",
            cfg.k
        )));
    }

    let runs: Vec<LloydRun> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let init = initial_centroids(data, cfg.k, cfg.init, &mut rng);
            lloyd(data, init, cfg.tol, cfg.max_iter)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("n_restarts > 0");
    Ok(ClusteringResult {
        assignments: best.assignments,
        centroids: best.centroids,
        inertia: best.inertia,
        iterations: best.iterations,
        method: Method::Kmeans,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    #[test]
    fn separated_pairs() {
        let data = array![[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]];
        let res = fit(
            data.view(),
            &KMeansConfig {
                seed: 3,
                ..KMeansConfig::new(2)
            },
        )
        .unwrap();
        assert_eq!(res.assignments[0], res.assignments[1]);
        assert_eq!(res.assignments[2], res.assignments[3]);
        assert_ne!(res.assignments[0], res.assignments[2]);
        let c0 = res.centroids.row(res.assignments[0]).to_vec();
        let c1 = res.centroids.row(res.assignments[2]).to_vec();
        assert_eq!(c0, vec![0.0, 0.5]);
        assert_eq!(c1, vec![10.0, 10.5]);
        assert_eq!(res.inertia, 1.0);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let data = array![[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]];
        let res = fit(data.view(), &KMeansConfig::new(1)).unwrap();
        let mean = data.mean_axis(Axis(0)).unwrap();
        assert!((&res.centroids.row(0) - &mean)
            .iter()
            .all(|d| d.abs() < 1e-12));
        let expect: f64 = data
            .rows()
            .into_iter()
            .map(|r| sq_dist(r, mean.view()))
            .sum();
        assert!((res.inertia - expect).abs() < 1e-12);
    }

    #[test]
    fn config_and_degenerate_errors() {
        let data = array![[0.0], [1.0]];
        assert!(matches!(
            fit(data.view(), &KMeansConfig::new(3)),
            Err(Error::Config(_))
        ));
        let same = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            fit(same.view(), &KMeansConfig::new(2)),
            Err(Error::Degenerate(_))
        ));
        let two = array![[0.0], [0.0], [1.0], [1.0]];
        assert!(matches!(
            fit(two.view(), &KMeansConfig::new(3)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // both initial centroids on the same far point: the second stays empty
        let data = array![[0.0], [0.1], [5.0], [5.2]];
        let init = array![[0.0], [0.0]];
        let run = lloyd(data.view(), init, 1e-9, 100);
        let mut sizes = [0; 2];
        for &a in &run.assignments {
            sizes[a] += 1;
        }
        assert!(sizes.iter().all(|&s| s > 0));
        assert!((run.inertia - (0.005 + 0.02)).abs() < 1e-12);
    }

    #[test]
    fn centroids_are_member_means_and_trace_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = Array2::from_shape_fn((60, 3), |_| rng.random::<f64>());
        let res = fit(
            data.view(),
            &KMeansConfig {
                seed: 5,
                ..KMeansConfig::new(4)
            },
        )
        .unwrap();
        let means = centroids_of(data.view(), &res.assignments, 4);
        assert!((&means - &res.centroids).iter().all(|d| d.abs() < 1e-9));

        let init = initial_centroids(
            data.view(),
            4,
            Init::Random,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let run = lloyd(data.view(), init, 1e-12, 300);
        assert!(run.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn deterministic_and_plus_plus() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Array2::from_shape_fn((40, 2), |_| rng.random::<f64>());
        let cfg = KMeansConfig {
            seed: 9,
            ..KMeansConfig::new(3)
        };
        assert_eq!(
            fit(data.view(), &cfg).unwrap(),
            fit(data.view(), &cfg).unwrap()
        );
        let pp = KMeansConfig {
            init: Init::KmeansPlusPlus,
            ..cfg
        };
        let res = fit(data.view(), &pp).unwrap();
        assert_eq!(res.k(), 3);
        assert!(res.sizes().iter().all(|&s| s > 0));
    }
}
