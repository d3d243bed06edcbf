//! Factor analysis over an indicator correlation matrix: sampling adequacy,
//! principal-component extraction, varimax rotation and the view partition
//! derived from the rotated loadings.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Minimum KMO measure for factor analysis to proceed without override.
pub const KMO_GATE: f64 = 0.80;
/// Cumulative explained variance the factor count should reach.
pub const CUMULATIVE_TARGET: f64 = 80.0;

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;
const VARIMAX_TOL: f64 = 1e-8;
const VARIMAX_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adequacy {
    pub kmo: f64,
    pub bartlett_chi2: f64,
    pub bartlett_dof: usize,
    pub bartlett_p: f64,
}

impl Adequacy {
    pub fn passes_gate(&self) -> bool {
        self.kmo >= KMO_GATE
    }
}

fn to_dmatrix(r: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[[i, j]])
}

fn check_correlation_matrix(r: ArrayView2<'_, f64>) -> Result<()> {
    let (n, c) = r.dim();
    if n == 0 || n != c {
        return Err(Error::Domain(format!(
            "correlation matrix must be square, got {n}x{c}"
        )));
    }
    for i in 0..n {
        if (r[[i, i]] - 1.0).abs() > SYMMETRY_TOL {
            return Err(Error::Domain(format!(
                "diagonal entry {i} is {}, not 1",
                r[[i, i]]
            )));
        }
        for j in 0..i {
            if !r[[i, j]].is_finite() || (r[[i, j]] - r[[j, i]]).abs() > SYMMETRY_TOL {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// KMO measure of sampling adequacy and Bartlett's test of sphericity for
/// a correlation matrix estimated from `m` samples.
pub fn adequacy(r: ArrayView2<'_, f64>, m: usize) -> Result<Adequacy> {
    check_correlation_matrix(r)?;
    let n = r.nrows();
    if m <= n {
        return Err(Error::InsufficientData {
            needed: n + 1,
            got: m,
        });
    }
    let rm = to_dmatrix(r);
    let det = rm.clone().lu().determinant();
    if !(det > 0.0) {
        return Err(Error::Singular(format!(
            "determinant {det:e}; KMO undefined"
        )));
    }
    let inv = rm.try_inverse().ok_or_else(|| {
        Error::Singular("correlation matrix has no inverse; KMO undefined".into())
    })?;

    let (mut r2, mut a2) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let partial = -inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt();
                r2 += r[[i, j]].powi(2);
                a2 += partial * partial;
            }
        }
    }
    let kmo = if r2 + a2 > 0.0 { r2 / (r2 + a2) } else { 0.0 };
    let dof = n * (n - 1) / 2;
    let chi2 = -((m as f64 - 1.0) - (2.0 * n as f64 + 5.0) / 6.0) * det.ln();
    let bartlett_p = if dof == 0 {
        1.0
    } else {
        special::chi_square_sf(chi2.max(0.0), dof as f64)
    };
    Ok(Adequacy {
        kmo,
        bartlett_chi2: chi2,
        bartlett_dof: dof,
        bartlett_p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// All `N` eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub unrotated_loadings: Array2<f64>,
    pub rotated_loadings: Array2<f64>,
    /// Orthogonal `Q` with `rotated = unrotated . Q`.
    pub rotation: Array2<f64>,
    /// Column sums of squared rotated loadings.
    pub rotated_eigenvalues: Vec<f64>,
    /// Percent of total variance per eigenvalue.
    pub variance_explained: Vec<f64>,
    pub cumulative_explained: Vec<f64>,
    pub n_factors: usize,
}

/// Percent and cumulative percent of variance for each eigenvalue of an
/// `n`-indicator correlation matrix.
pub fn variance_explained(eigenvalues: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let pct: Vec<f64> = eigenvalues.iter().map(|l| 100.0 * l / n as f64).collect();
    let cum = pct
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    (pct, cum)
}

/// Principal-component extraction on `r` followed by varimax rotation of the
/// first `n_factors` loading columns.
pub fn extract_factors(r: ArrayView2<'_, f64>, n_factors: usize) -> Result<FactorModel> {
    check_correlation_matrix(r)?;
    let n = r.nrows();
    if n_factors == 0 || n_factors > n {
        return Err(Error::Config(format!(
            "n_factors must be in 1..={n}, got {n_factors}"
        )));
    }
    let eig = to_dmatrix(r).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if let Some(&min) = eigenvalues.last() {
        if min < -PSD_TOL {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {min:e})"
            )));
        }
    }

    let mut loadings = Array2::zeros((n, n_factors));
    for (j, &idx) in order.iter().take(n_factors).enumerate() {
        let v = eig.eigenvectors.column(idx);
        // deterministic sign: largest-magnitude entry positive
        let pivot = (0..n).fold(0, |b, i| if v[i].abs() > v[b].abs() { i } else { b });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = eigenvalues[j].max(0.0).sqrt() * sign;
        for i in 0..n {
            loadings[[i, j]] = v[i] * scale;
        }
    }

    let rotated = varimax_rotate(loadings.view());
    let rotated_eigenvalues = rotated
        .loadings
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect();
    let (variance_explained, cumulative_explained) = variance_explained(&eigenvalues, n);
    Ok(FactorModel {
        eigenvalues,
        unrotated_loadings: loadings,
        rotated_loadings: rotated.loadings,
        rotation: rotated.rotation,
        rotated_eigenvalues,
        variance_explained,
        cumulative_explained,
        n_factors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Varimax {
    pub loadings: Array2<f64>,
    pub rotation: Array2<f64>,
    /// Criterion value before rotation and after each sweep.
    pub criterion_trace: Vec<f64>,
}

/// Raw varimax criterion `sum_j [sum_i b_ij^4 - (sum_i b_ij^2)^2 / N]`.
pub fn varimax_criterion(b: ArrayView2<'_, f64>) -> f64 {
    let n = b.nrows() as f64;
    b.axis_iter(Axis(1))
        .map(|c| {
            let s2: f64 = c.iter().map(|x| x * x).sum();
            let s4: f64 = c.iter().map(|x| x.powi(4)).sum();
            s4 - s2 * s2 / n
        })
        .sum()
}

/// Angle that maximizes the varimax criterion of columns `x`, `y` under the
/// planar rotation `x' = x cos + y sin`, `y' = -x sin + y cos`.
pub fn varimax_pair_angle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi * xi - yi * yi;
        let v = 2.0 * xi * yi;
        a += u;
        b += v;
        c += u * u - v * v;
        d += 2.0 * u * v;
    }
    let num = d - 2.0 * a * b / n;
    let den = c - (a * a - b * b) / n;
    0.25 * num.atan2(den)
}

fn rotate_columns(m: &mut Array2<f64>, p: usize, q: usize, phi: f64) {
    let (s, c) = phi.sin_cos();
    for i in 0..m.nrows() {
        let (x, y) = (m[[i, p]], m[[i, q]]);
        m[[i, p]] = x * c + y * s;
        m[[i, q]] = -x * s + y * c;
    }
}

/// Varimax with Kaiser row normalization, by sweeps of pairwise planar
/// rotations. Columns of the result are sign-fixed (largest-magnitude entry
/// positive) and ordered by descending sum of squares.
pub fn varimax_rotate(loadings: ArrayView2<'_, f64>) -> Varimax {
    let (n, k) = loadings.dim();
    let mut rotation = Array2::eye(k);
    if k < 2 {
        return Varimax {
            loadings: loadings.to_owned(),
            rotation,
            criterion_trace: vec![varimax_criterion(loadings)],
        };
    }
    let h: Array1<f64> = loadings
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut b = loadings.to_owned();
    for (mut row, &hi) in b.axis_iter_mut(Axis(0)).zip(&h) {
        if hi > 0.0 {
            row /= hi;
        }
    }

    let mut trace = vec![varimax_criterion(b.view())];
    for _ in 0..VARIMAX_MAX_SWEEPS {
        for p in 0..k {
            for q in p + 1..k {
                let x = b.column(p).to_vec();
                let y = b.column(q).to_vec();
                let phi = varimax_pair_angle(&x, &y);
                if phi != 0.0 {
                    rotate_columns(&mut b, p, q, phi);
                    rotate_columns(&mut rotation, p, q, phi);
                }
            }
        }
        let v = varimax_criterion(b.view());
        let prev = *trace.last().unwrap();
        trace.push(v);
        if (v - prev).abs() < VARIMAX_TOL {
            break;
        }
    }

    let mut rotated = loadings.dot(&rotation);
    debug_assert_eq!(rotated.nrows(), n);
    for j in 0..k {
        let col = rotated.column(j);
        let pivot = (0..n).fold(0, |best, i| {
            if col[i].abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        if col[pivot] < 0.0 {
            rotated.column_mut(j).mapv_inplace(|x| -x);
            rotation.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    let ss: Vec<f64> = rotated
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ss[b].total_cmp(&ss[a]));
    let loadings = rotated.select(Axis(1), &order);
    let rotation = rotation.select(Axis(1), &order);
    Varimax {
        loadings,
        rotation,
        criterion_trace: trace,
    }
}

/// Weights proportional to the rotated eigenvalues, summing to one.
pub fn view_weights(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(Error::Domain("no eigenvalues given".into()));
    }
    if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::Domain(format!(
            "view eigenvalue {bad} is not positive"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    Ok(eigenvalues.iter().map(|l| l / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub name: String,
    pub indicators: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPartition {
    pub views: Vec<View>,
    pub weights: Vec<f64>,
}

impl ViewPartition {
    /// A partition from explicit groups. `strengths` are positive per-view
    /// values (typically rotated eigenvalues) normalized into weights.
    pub fn from_groups(
        names: Vec<String>,
        groups: Vec<Vec<usize>>,
        strengths: &[f64],
        n_indicators: usize,
    ) -> Result<Self> {
        if names.len() != groups.len() || groups.len() != strengths.len() {
            return Err(Error::Partition(
                "names, groups and weights differ in length".into(),
            ));
        }
        let mut seen = vec![false; n_indicators];
        for (name, g) in names.iter().zip(&groups) {
            if g.is_empty() {
                return Err(Error::Partition(format!("view '{name}' is empty")));
            }
            for &i in g {
                if i >= n_indicators {
                    return Err(Error::Partition(format!(
                        "indicator index {i} out of range"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!(
                        "indicator {i} appears in more than one view"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!(
                "indicator {i} is not in any view"
            )));
        }
        let weights = view_weights(strengths)?;
        let views = names
            .into_iter()
            .zip(groups)
            .map(|(name, indicators)| View { name, indicators })
            .collect();
        Ok(ViewPartition { views, weights })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }
}

/// Assigns each indicator to the factor on which its absolute rotated
/// loading is largest. Factors that end up without indicators are dropped
/// and the remaining weights renormalized.
pub fn partition_views(model: &FactorModel, names: Option<&[String]>) -> Result<ViewPartition> {
    let (n, k) = model.rotated_loadings.dim();
    if let Some(names) = names {
        if names.len() != k {
            return Err(Error::Partition(format!(
                "{} view names for {k} factors",
                names.len()
            )));
        }
    }
    let mut groups = vec![Vec::new(); k];
    for i in 0..n {
        let row = model.rotated_loadings.row(i);
        let mut best = 0;
        for j in 1..k {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        if (0..k).any(|j| j != best && row[j].abs() == row[best].abs()) {
            log::warn!(
                "indicator {i} loads equally on several factors; assigned to factor{}",
                best + 1
            );
        }
        groups[best].push(i);
    }
    let mut view_names = Vec::new();
    let mut kept = Vec::new();
    let mut strengths = Vec::new();
    for (j, g) in groups.into_iter().enumerate() {
        let name = names.map_or_else(|| format!("factor{}", j + 1), |ns| ns[j].clone());
        if g.is_empty() {
            log::warn!("{name} is not the primary factor of any indicator; view dropped");
            continue;
        }
        view_names.push(name);
        kept.push(g);
        strengths.push(model.rotated_eigenvalues[j]);
    }
    ViewPartition::from_groups(view_names, kept, &strengths, n)
}

/// Factor-count hints: Kaiser count, the first count reaching the cumulative
/// target, and the scree elbow (largest second difference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGuidance {
    pub kaiser: usize,
    pub cumulative_80: usize,
    pub scree_elbow: usize,
}

pub fn factor_guidance(eigenvalues: &[f64]) -> FactorGuidance {
    let n = eigenvalues.len();
    let kaiser = eigenvalues.iter().filter(|&&l| l > 1.0).count();
    let (_, cum) = variance_explained(eigenvalues, n);
    let cumulative_80 = cum
        .iter()
        .position(|&c| c >= CUMULATIVE_TARGET)
        .map_or(n, |i| i + 1);
    let scree_elbow = if n < 3 {
        1
    } else {
        (1..n - 1)
            .max_by(|&a, &b| {
                let da = eigenvalues[a - 1] - 2.0 * eigenvalues[a] + eigenvalues[a + 1];
                let db = eigenvalues[b - 1] - 2.0 * eigenvalues[b] + eigenvalues[b + 1];
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .map_or(1, |i| i + 1)
    };
    FactorGuidance {
        kaiser,
        cumulative_80,
        scree_elbow,
    }
}

impl FactorModel {
    pub fn variance_table_markdown(&self) -> String {
        let mut s = String::from("| Factor | Eigenvalue | Variance Explained | Cumulative Variance Explained |\n|---|---|---|---|\n");
        for (i, l) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3}% | {:.3}% |",
                i + 1,
                l,
                self.variance_explained[i],
                self.cumulative_explained[i]
            );
        }
        s
    }

    pub fn rotated_table_markdown(&self, names: &[String]) -> String {
        let k = self.n_factors;
        let mut s = String::from("| Index |");
        for j in 0..k {
            let _ = write!(s, " factor{} |", j + 1);
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(k));
        s.push('\n');
        for (i, name) in names.iter().enumerate() {
            let _ = write!(s, "| {name} |");
            for j in 0..k {
                let _ = write!(s, " {:.3} |", self.rotated_loadings[[i, j]]);
            }
            s.push('\n');
        }
        s.push_str("| Eigenvalue after Rotating |");
        for l in &self.rotated_eigenvalues {
            let _ = write!(s, " {l:.3} |");
        }
        s.push('\n');
        s
    }
}
