//! Correlation with significance testing, Jarque-Bera normality testing and
//! the distribution tails behind their p-values.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Significance level at which normality is "not rejected".
pub const NORMALITY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p: f64,
}

fn check_pair(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(x.len())
}

fn is_constant(x: ArrayView1<'_, f64>) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Pearson correlation with a two-sided t-test on `M - 2` degrees of freedom.
pub fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Correlation> {
    let m = check_pair(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    let n = m as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    if 1.0 - r.abs() <= 4.0 * f64::EPSILON {
        return Ok(Correlation {
            coefficient: r.signum(),
            p: 0.0,
        });
    }
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    Ok(Correlation {
        coefficient: r,
        p: special::student_t_two_sided(t, n - 2.0),
    })
}

/// 1-based ranks, tied values sharing their average rank.
pub fn average_ranks(x: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation via `1 - 6 sum(d^2) / (M (M^2 - 1))`, tested with
/// `r_s * sqrt(M - 1) ~ N(0, 1)`.
///
/// Ties get average ranks and are substituted into the same formula, which
/// only approximates Pearson-on-ranks when ties are present.
pub fn spearman(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Correlation> {
    let m = check_pair(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    let n = m as f64;
    let rs = (1.0 - 6.0 * d2 / (n * (n * n - 1.0))).clamp(-1.0, 1.0);
    Ok(Correlation {
        coefficient: rs,
        p: special::normal_two_sided(rs * (n - 1.0).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarqueBera {
    pub statistic: f64,
    pub p: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Jarque-Bera statistic from population moments, p-value from chi-square(2).
pub fn jarque_bera(x: ArrayView1<'_, f64>) -> Result<JarqueBera> {
    let m = x.len();
    if m < 8 {
        return Err(Error::InsufficientData { needed: 8, got: m });
    }
    let n = m as f64;
    let mean = x.sum() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 || is_constant(x) {
        return Err(Error::Degenerate(
            "zero variance: skewness and kurtosis undefined".into(),
        ));
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);
    let statistic = n / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
    Ok(JarqueBera {
        statistic,
        p: special::chi_square_sf(statistic, 2.0),
        skewness,
        kurtosis,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityEntry {
    pub name: String,
    pub jb: f64,
    pub p: f64,
    /// Normality not rejected at alpha = 0.01 (`p >= 0.01`).
    pub normal_at_99: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub entries: Vec<NormalityEntry>,
}

impl NormalityReport {
    pub fn is_normal(&self, j: usize) -> bool {
        self.entries[j].normal_at_99
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Index | JB | p-value | Fail to reject normality (alpha = 0.01) |\n|---|---|---|---|\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.4} | {} |",
                e.name,
                e.jb,
                e.p,
                if e.normal_at_99 { "yes" } else { "no" }
            );
        }
        s
    }
}

pub fn normality_report(rows: ArrayView2<'_, f64>, names: &[String]) -> Result<NormalityReport> {
    let entries = rows
        .axis_iter(Axis(1))
        .zip(names)
        .map(|(col, name)| {
            let jb = jarque_bera(col)?;
            Ok(NormalityEntry {
                name: name.clone(),
                jb: jb.statistic,
                p: jb.p,
                normal_at_99: jb.p >= NORMALITY_ALPHA,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalityReport { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub coefficient: Option<f64>,
    pub p: Option<f64>,
    pub method: CorrelationMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CorrelationCell {
    pub fn stars(&self) -> &'static str {
        self.p.map_or("", significance_stars)
    }
}

/// `*` for p < 0.10, `**` for p < 0.05, `***` for p < 0.01.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub names: Vec<String>,
    pub cells: Vec<Vec<CorrelationCell>>,
}

/// Pairwise correlations: Pearson when both indicators pass the normality
/// check, Spearman otherwise. Failed pairs are kept as annotated cells.
pub fn correlation_report(
    rows: ArrayView2<'_, f64>,
    names: &[String],
    normality: &NormalityReport,
) -> Result<CorrelationReport> {
    let n = rows.ncols();
    if n < 2 {
        return Err(Error::Config(
            "correlation analysis needs at least two indicators".into(),
        ));
    }
    if names.len() != n || normality.entries.len() != n {
        return Err(Error::Config(
            "indicator names / normality entries do not match the table".into(),
        ));
    }
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let method = if normality.is_normal(i) && normality.is_normal(j) {
                CorrelationMethod::Pearson
            } else {
                CorrelationMethod::Spearman
            };
            if i == j {
                row.push(CorrelationCell {
                    coefficient: Some(1.0),
                    p: Some(1.0),
                    method,
                    error: None,
                });
                continue;
            }
            let (x, y) = (rows.column(i), rows.column(j));
            let res = match method {
                CorrelationMethod::Pearson => pearson(x, y),
                CorrelationMethod::Spearman => spearman(x, y),
            };
            row.push(match res {
                Ok(c) => CorrelationCell {
                    coefficient: Some(c.coefficient),
                    p: Some(c.p),
                    method,
                    error: None,
                },
                Err(e) => CorrelationCell {
                    coefficient: None,
                    p: None,
                    method,
                    error: Some(e.to_string()),
                },
            });
        }
        cells.push(row);
    }
    Ok(CorrelationReport {
        names: names.to_vec(),
        cells,
    })
}

impl CorrelationReport {
    /// The coefficient matrix, failing if any pair could not be computed.
    pub fn coefficient_matrix(&self) -> Result<Array2<f64>> {
        let n = self.names.len();
        let mut r = Array2::zeros((n, n));
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                r[[i, j]] = cell.coefficient.ok_or_else(|| {
                    Error::UndefinedCorrelation(format!(
                        "{} vs {}: {}",
                        self.names[i],
                        self.names[j],
                        cell.error.as_deref().unwrap_or("missing")
                    ))
                })?;
            }
        }
        Ok(r)
    }

    fn fmt_cell(cell: &CorrelationCell) -> (String, String) {
        match (cell.coefficient, cell.p) {
            (Some(c), Some(p)) => (format!("{c:.4}{}", cell.stars()), format!("{p:.4}")),
            _ => ("n/a".into(), "n/a".into()),
        }
    }

    fn table(&self, rows: &[usize], cols: &[usize]) -> String {
        let mut s = String::from("| |");
        for &j in cols {
            let _ = write!(s, " {} |", self.names[j]);
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(cols.len()));
        s.push('\n');
        for &i in rows {
            let (mut coef, mut pval) = (
                format!("| {} |", self.names[i]),
                String::from("| (p-value) |"),
            );
            for &j in cols {
                let (c, p) = Self::fmt_cell(&self.cells[i][j]);
                let _ = write!(coef, " {c} |");
                let _ = write!(pval, " {p} |");
            }
            s.push_str(&coef);
            s.push('\n');
            s.push_str(&pval);
            s.push('\n');
        }
        s
    }

    /// Pearson block among the normal indicators, then Spearman rows for
    /// each remaining indicator against all others.
    pub fn to_markdown(&self) -> String {
        let n = self.names.len();
        let pearson: Vec<usize> = (0..n)
            .filter(|&i| {
                (0..n).any(|j| j != i && self.cells[i][j].method == CorrelationMethod::Pearson)
            })
            .collect();
        let others: Vec<usize> = (0..n).filter(|i| !pearson.contains(i)).collect();
        let mut s = String::new();
        if pearson.len() >= 2 {
            s.push_str("Pearson correlation coefficients\n\n");
            s.push_str(&self.table(&pearson, &pearson));
        }
        if !others.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            s.push_str("Spearman correlation coefficients\n\n");
            let cols: Vec<usize> = (0..n)
                .filter(|j| others.len() == n || !others.contains(j))
                .collect();
            let cols = if cols.is_empty() {
                (0..n).collect()
            } else {
                cols
            };
            s.push_str(&self.table(&others, &cols));
        }
        s.push_str("\n`*` p < 0.10, `**` p < 0.05, `***` p < 0.01\n");
        s
    }

    /// One coefficient row followed by one p-value row per indicator.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,kind");
        for name in &self.names {
            let _ = write!(s, ",{}", csv_field(name));
        }
        s.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            for kind in ["coefficient", "p_value", "method"] {
                let _ = write!(s, "{},{kind}", csv_field(&self.names[i]));
                for cell in row {
                    let v = match kind {
                        "coefficient" => {
                            cell.coefficient.map(|c| c.to_string()).unwrap_or_default()
                        }
                        "p_value" => cell.p.map(|c| c.to_string()).unwrap_or_default(),
                        _ => format!("{:?}", cell.method).to_lowercase(),
                    };
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        }
        s
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distribution {
    StdNormal,
    StudentT { dof: u32 },
    ChiSquare { dof: u32 },
}

/// Lower CDF `P(X <= x)`.
pub fn tail_probability(dist: Distribution, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {x}")));
    }
    Ok(match dist {
        Distribution::StdNormal => special::normal_cdf(x),
        Distribution::StudentT { dof } => {
            if dof == 0 {
                return Err(Error::Domain("Student t needs dof >= 1".into()));
            }
            special::student_t_cdf(x, dof as f64)
        }
        Distribution::ChiSquare { dof } => {
            if dof == 0 {
                return Err(Error::Domain("chi-square needs dof >= 1".into()));
            }
            special::chi_square_cdf(x, dof as f64)
        }
    })
}
