//! Internal validity indices: silhouette, Calinski-Harabasz, Davies-Bouldin.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clustering::{centroids_of, sq_dist, Method};
use crate::error::{Error, Result};

fn cluster_sizes(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Vec<usize>> {
    if labels.len() != data.nrows() {
        return Err(Error::Domain(format!(
            "{} labels for {} samples",
            labels.len(),
            data.nrows()
        )));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Domain(format!(
            "validity indices need at least 2 clusters, got {k}"
        )));
    }
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Domain(format!("cluster {c} is empty")));
    }
    Ok(sizes)
}

/// Mean silhouette width. Members of singleton clusters score 0, as does a
/// sample whose `a` and `b` are both zero.
pub fn silhouette(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let sizes = cluster_sizes(data, labels)?;
    let k = sizes.len();
    let m = data.nrows();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..m {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..m {
            if i != j {
                sums[labels[j]] += sq_dist(data.row(i), data.row(j)).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

/// Between-to-within dispersion ratio. Infinite when every cluster is a
/// single repeated point but the clusters differ.
pub fn calinski_harabasz(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let sizes = cluster_sizes(data, labels)?;
    let (m, k) = (data.nrows(), sizes.len());
    if m <= k {
        return Err(Error::Domain(format!(
            "Calinski-Harabasz needs more samples than clusters ({m} <= {k})"
        )));
    }
    let centroids = centroids_of(data, labels, k);
    let overall = data.mean_axis(ndarray::Axis(0)).expect("non-empty data");
    let between: f64 = (0..k)
        .map(|c| sizes[c] as f64 * sq_dist(centroids.row(c), overall.view()))
        .sum();
    let within: f64 = (0..m)
        .map(|i| sq_dist(data.row(i), centroids.row(labels[i])))
        .sum();
    if between == 0.0 {
        return Ok(0.0);
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (m - k) as f64))
}

pub fn davies_bouldin(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let sizes = cluster_sizes(data, labels)?;
    let k = sizes.len();
    let centroids: Array2<f64> = centroids_of(data, labels, k);
    let mut scatter = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += sq_dist(data.row(i), centroids.row(l)).sqrt();
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = sq_dist(centroids.row(i), centroids.row(j)).sqrt();
            if d == 0.0 {
                return Err(Error::Domain(format!(
                    "clusters {i} and {j} have coincident centroids"
                )));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub method: Method,
    pub silhouette: f64,
    /// `f64::INFINITY` (serialized as `"inf"`) for zero within-cluster dispersion.
    #[serde(with = "maybe_infinite")]
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
}

impl ValidityReport {
    pub fn compute(data: ArrayView2<'_, f64>, labels: &[usize], method: Method) -> Result<Self> {
        Ok(ValidityReport {
            method,
            silhouette: silhouette(data, labels)?,
            calinski_harabasz: calinski_harabasz(data, labels)?,
            davies_bouldin: davies_bouldin(data, labels)?,
        })
    }

    pub fn markdown_table(reports: &[ValidityReport]) -> String {
        let mut out = String::from(
            "| Method | Silhouette | Calinski-Harabasz | Davies-Bouldin |\n|---|---|---|---|\n",
        );
        for r in reports {
            let ch = if r.calinski_harabasz.is_finite() {
                format!("{:.4}", r.calinski_harabasz)
            } else {
                "inf".to_owned()
            };
            out.push_str(&format!(
                "| {} | {:.4} | {ch} | {:.4} |\n",
                r.method, r.silhouette, r.davies_bouldin
            ));
        }
        out
    }
}

mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}
