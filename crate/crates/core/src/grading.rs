//! Cluster geometry, level boundaries and half-meeting grading standards.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{ClusteringResult, Method};
use crate::dataset::{Direction, IndicatorSpec, Scaling};
use crate::error::{Error, Result};

/// Center and radius of one cluster in standardized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    /// Index of the cluster in the clustering it came from.
    #[serde(default)]
    pub cluster: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_attribute_std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

impl ClusterGeometry {
    pub fn from_center_radius(cluster: usize, center: Vec<f64>, radius: f64) -> Self {
        ClusterGeometry {
            cluster,
            center,
            radius,
            per_attribute_std: None,
            size: None,
        }
    }

    pub fn center_mean(&self) -> f64 {
        self.center.iter().sum::<f64>() / self.center.len() as f64
    }
}

/// A list of cluster geometries as exchanged in JSON, e.g. replayed from a
/// published table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub clusters: Vec<ClusterGeometry>,
}

impl GeometrySet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: GeometrySet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.clusters.first() else {
            return Err(Error::Domain("geometry lists no clusters".into()));
        };
        let n = first.center.len();
        for (i, g) in self.clusters.iter().enumerate() {
            let geo = |message: String| {
                Err(Error::Geometry {
                    cluster: i,
                    message,
                })
            };
            if g.center.is_empty() || g.center.len() != n {
                return geo(format!(
                    "center has {} coordinates, expected {n}",
                    g.center.len()
                ));
            }
            if g.center.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return geo("center coordinates must lie in [0, 1]".into());
            }
            if !(g.radius >= 0.0) || !g.radius.is_finite() {
                return geo(format!(
                    "radius {} is not a finite non-negative number",
                    g.radius
                ));
            }
            if let Some(s) = &g.per_attribute_std {
                if s.len() != n || s.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return geo("per-attribute deviations do not match the center".into());
                }
            }
        }
        Ok(())
    }
}

/// Per-cluster means, sample deviations and radii of the standardized data.
pub fn cluster_geometry(
    data: ArrayView2<'_, f64>,
    result: &ClusteringResult,
) -> Result<Vec<ClusterGeometry>> {
    let (m, n) = data.dim();
    if result.assignments.len() != m {
        return Err(Error::Domain(format!(
            "{} assignments for {m} samples",
            result.assignments.len()
        )));
    }
    let k = result.k();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in result.assignments.iter().enumerate() {
        if a >= k {
            return Err(Error::Domain(format!(
                "assignment {a} out of range for k = {k}"
            )));
        }
        members[a].push(i);
    }
    members
        .iter()
        .enumerate()
        .map(|(c, idx)| {
            if idx.len() < 2 {
                return Err(Error::Geometry {
                    cluster: c,
                    message: format!("{} member(s); a radius needs at least 2", idx.len()),
                });
            }
            let size = idx.len() as f64;
            let mut center = vec![0.0; n];
            for &i in idx {
                for j in 0..n {
                    center[j] += data[[i, j]];
                }
            }
            center.iter_mut().for_each(|x| *x /= size);
            let std: Vec<f64> = (0..n)
                .map(|j| {
                    let ss: f64 = idx
                        .iter()
                        .map(|&i| (data[[i, j]] - center[j]).powi(2))
                        .sum();
                    (ss / (size - 1.0)).sqrt()
                })
                .collect();
            let radius = std.iter().map(|s| s * s).sum::<f64>().sqrt();
            Ok(ClusterGeometry {
                cluster: c,
                center,
                radius,
                per_attribute_std: Some(std),
                size: Some(idx.len()),
            })
        })
        .collect()
}

/// Cluster indices from best to worst by descending mean center coordinate.
pub fn order_clusters(geoms: &[ClusterGeometry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..geoms.len()).collect();
    // stable sort keeps the original order among equal means
    order.sort_by(|&a, &b| geoms[b].center_mean().total_cmp(&geoms[a].center_mean()));
    order
}

/// `lb_k = c_k (1 - r / |c|)`, clamped to `[0, 1]`.
pub fn lower_bounds(g: &ClusterGeometry) -> Result<Vec<f64>> {
    let norm = g.center.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Domain(format!(
            "cluster {} has a zero center",
            g.cluster
        )));
    }
    let shrink = 1.0 - g.radius / norm;
    if shrink < 0.0 {
        log::warn!(
            "cluster {}: radius {} exceeds center norm {norm}; lower bound clamped",
            g.cluster,
            g.radius
        );
    }
    Ok(g.center
        .iter()
        .map(|c| (c * shrink).clamp(0.0, 1.0))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<=")]
    AtMost,
}

impl Relation {
    pub fn holds(self, x: f64, threshold: f64) -> bool {
        match self {
            Relation::AtLeast => x >= threshold,
            Relation::AtMost => x <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtLeast => "≥",
            Relation::AtMost => "≤",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub indicator: String,
    pub relation: Relation,
    /// Threshold in original units; integer indicators are already rounded.
    pub value: f64,
    /// The real-valued threshold before integer rounding.
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    /// Empty for the worst level.
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Option<Method>,
    /// SHA-256 of the configuration or geometry the standard was built from.
    pub config_hash: String,
}

impl Provenance {
    pub fn new(method: Option<Method>, config: &[u8]) -> Self {
        let digest = Sha256::digest(config);
        Provenance {
            method,
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingStandard {
    /// Best level first.
    pub levels: Vec<Level>,
    pub min_conditions: usize,
    pub indicators: Vec<IndicatorSpec>,
    /// Lower bounds in standardized space, one row per non-worst level.
    pub standardized_bounds: Vec<Vec<f64>>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Outcome of grading one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub level: usize,
    pub name: String,
    /// Conditions satisfied at each level tested, best first.
    pub conditions_met: Vec<usize>,
}

pub fn roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(v, s) in &TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

// guards floor/ceil against representation error just past an integer
const INTEGER_SLACK: f64 = 1e-9;

/// Builds a standard from geometries already ordered best to worst.
pub fn build_standard(
    geoms: &[ClusterGeometry],
    scaling: &Scaling,
    provenance: Provenance,
) -> Result<GradingStandard> {
    if geoms.len() < 2 {
        return Err(Error::Standard(format!(
            "need at least 2 clusters, got {}",
            geoms.len()
        )));
    }
    let n = scaling.len();
    if let Some(g) = geoms.iter().find(|g| g.center.len() != n) {
        return Err(Error::Standard(format!(
            "cluster {} has {} coordinates for {n} indicators",
            g.cluster,
            g.center.len()
        )));
    }
    let mut notes = Vec::new();
    let mut levels = Vec::with_capacity(geoms.len());
    let mut bounds = Vec::with_capacity(geoms.len() - 1);
    for (li, g) in geoms[..geoms.len() - 1].iter().enumerate() {
        let lb = lower_bounds(g)?;
        if g.radius > g.center.iter().map(|c| c * c).sum::<f64>().sqrt() {
            notes.push(format!(
                "level {}: radius exceeds center norm; bounds clamped to 0",
                roman(li + 1)
            ));
        }
        let mut thresholds = Vec::with_capacity(n);
        for (j, spec) in scaling.indicators.iter().enumerate() {
            let exact = scaling.denormalize(j, lb[j])?;
            let relation = match spec.direction {
                Direction::Maximize => Relation::AtLeast,
                Direction::Minimize => Relation::AtMost,
            };
            let value = match (spec.integer_valued, relation) {
                (false, _) => exact,
                (true, Relation::AtMost) => (exact + INTEGER_SLACK).floor(),
                (true, Relation::AtLeast) => (exact - INTEGER_SLACK).ceil(),
            };
            thresholds.push(Threshold {
                indicator: spec.name.clone(),
                relation,
                value,
                exact,
            });
        }
        levels.push(Level {
            name: roman(li + 1),
            thresholds,
        });
        bounds.push(lb);
    }
    levels.push(Level {
        name: roman(geoms.len()),
        thresholds: Vec::new(),
    });

    for w in 0..levels.len().saturating_sub(2) {
        let (upper, lower) = (&levels[w], &levels[w + 1]);
        if upper
            .thresholds
            .iter()
            .zip(&lower.thresholds)
            .all(|(a, b)| a.value == b.value)
        {
            let msg = format!(
                "levels {} and {} have identical thresholds",
                upper.name, lower.name
            );
            log::warn!("{msg}");
            notes.push(msg);
        }
        for (a, b) in upper.thresholds.iter().zip(&lower.thresholds) {
            let inverted = match a.relation {
                Relation::AtLeast => a.value < b.value,
                Relation::AtMost => a.value > b.value,
            };
            if inverted {
                let msg = format!(
                    "{}: level {} threshold {} is less strict than level {} threshold {}",
                    a.indicator, upper.name, a.value, lower.name, b.value
                );
                log::warn!("{msg}");
                notes.push(msg);
            }
        }
    }

    Ok(GradingStandard {
        levels,
        min_conditions: n.div_ceil(2),
        indicators: scaling.indicators.clone(),
        standardized_bounds: bounds,
        provenance,
        notes,
    })
}

impl GradingStandard {
    /// First level, best first, whose satisfied-condition count reaches
    /// `min_conditions`; the worst level otherwise. NaN meets no condition.
    pub fn grade_sample(&self, sample: &[f64]) -> Result<Grade> {
        if sample.len() != self.indicators.len() {
            return Err(Error::Domain(format!(
                "sample has {} values for {} indicators",
                sample.len(),
                self.indicators.len()
            )));
        }
        let mut conditions_met = Vec::new();
        for (li, level) in self.levels.iter().enumerate() {
            if level.thresholds.is_empty() {
                break;
            }
            let met = level
                .thresholds
                .iter()
                .zip(sample)
                .filter(|(t, &x)| t.relation.holds(x, t.value))
                .count();
            conditions_met.push(met);
            if met >= self.min_conditions {
                return Ok(Grade {
                    level: li,
                    name: level.name.clone(),
                    conditions_met,
                });
            }
        }
        let worst = self.levels.len() - 1;
        Ok(Grade {
            level: worst,
            name: self.levels[worst].name.clone(),
            conditions_met,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let std: GradingStandard = serde_json::from_str(text)?;
        std.validate()?;
        Ok(std)
    }

    fn validate(&self) -> Result<()> {
        let n = self.indicators.len();
        let bad = |m: &str| Err(Error::Standard(m.to_owned()));
        if self.levels.len() < 2 || n == 0 {
            return bad("a standard needs indicators and at least two levels");
        }
        let (last, rest) = self.levels.split_last().expect("checked length");
        if !last.thresholds.is_empty() || rest.iter().any(|l| l.thresholds.len() != n) {
            return bad("every level but the last needs one threshold per indicator");
        }
        if self.min_conditions == 0 || self.min_conditions > n {
            return bad("min_conditions out of range");
        }
        Ok(())
    }

    /// The standard as a two-column markdown table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Level | Standard |\n|---|---|\n");
        let k = self.min_conditions;
        let mut passed: Vec<&str> = Vec::new();
        for level in &self.levels {
            let lead = if level.thresholds.is_empty() {
                format!("Not meet the condition of level {}", passed.join(","))
            } else if passed.is_empty() {
                format!("Meet at least {k} of the following conditions:")
            } else {
                format!(
                    "Not meet the condition of level {} and meet at least {k} of the following conditions:",
                    passed.join(",")
                )
            };
            let conds: Vec<String> = level
                .thresholds
                .iter()
                .zip(&self.indicators)
                .map(|(t, spec)| {
                    format!(
                        "{} {} {}",
                        t.indicator,
                        t.relation.symbol(),
                        format_value(t.value, spec)
                    )
                })
                .collect();
            if conds.is_empty() {
                out.push_str(&format!("| {} | {lead} |\n", level.name));
            } else {
                out.push_str(&format!(
                    "| {} | {lead}<br>{} |\n",
                    level.name,
                    conds.join("<br>")
                ));
            }
            passed.push(&level.name);
        }
        out
    }
}

/// A threshold with its unit at the indicator's display precision.
pub fn format_value(value: f64, spec: &IndicatorSpec) -> String {
    let decimals = if spec.integer_valued {
        0
    } else {
        spec.decimals
            .unwrap_or(if value.abs() < 1.0 { 3 } else { 2 })
    } as usize;
    if spec.unit.is_empty() {
        format!("{value:.decimals$}")
    } else {
        format!("{value:.decimals$} {}", spec.unit)
    }
}
