use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmeans,
    Cvcl,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Kmeans => "kmeans",
            Method::Cvcl => "cvcl",
        })
    }
}

/// A hard partition of the samples together with its centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared Euclidean distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Builds a result from labels alone: centroids are per-cluster means.
    /// Empty labels are dropped and the rest renumbered in ascending order.
    pub fn from_labels(
        data: ArrayView2<'_, f64>,
        labels: &[usize],
        method: Method,
    ) -> Result<Self> {
        if labels.len() != data.nrows() {
            return Err(Error::Domain(format!(
                "{} labels for {} samples",
                labels.len(),
                data.nrows()
            )));
        }
        let k_raw = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; k_raw];
        for &l in labels {
            counts[l] += 1;
        }
        let mut remap = vec![usize::MAX; k_raw];
        let mut notes = Vec::new();
        let mut next = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > 0 {
                remap[c] = next;
                next += 1;
            } else {
                notes.push(format!("cluster {c} received no samples and was dropped"));
            }
        }
        let assignments: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
        let centroids = centroids_of(data, &assignments, next);
        let inertia = inertia_of(data, &assignments, centroids.view());
        Ok(ClusteringResult {
            assignments,
            centroids,
            inertia,
            iterations: 0,
            method,
            notes,
        })
    }
}

pub(crate) fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn centroids_of(
    data: ArrayView2<'_, f64>,
    assignments: &[usize],
    k: usize,
) -> Array2<f64> {
    let mut c = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &a) in data.rows().into_iter().zip(assignments) {
        let mut dst = c.row_mut(a);
        dst += &row;
        counts[a] += 1;
    }
    for (mut row, &n) in c.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    c
}

pub(crate) fn inertia_of(
    data: ArrayView2<'_, f64>,
    assignments: &[usize],
    centroids: ArrayView2<'_, f64>,
) -> f64 {
    data.rows()
        .into_iter()
        .zip(assignments)
        .map(|(row, &a)| sq_dist(row, centroids.row(a)))
        .sum()
}
