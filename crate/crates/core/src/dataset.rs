//! Raw indicator tables, forwardization, min-max scaling and its inverse.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub direction: Direction,
    #[serde(default, rename = "integer")]
    pub integer_valued: bool,
    /// Decimal places used when thresholds are shown in tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimals: Option<u32>,
}

impl IndicatorSpec {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, direction: Direction) -> Self {
        IndicatorSpec {
            name: name.into(),
            unit: unit.into(),
            direction,
            integer_valued: false,
            decimals: None,
        }
    }

    pub fn integer(mut self) -> Self {
        self.integer_valued = true;
        self
    }

    pub fn with_decimals(mut self, decimals: u32) -> Self {
        self.decimals = Some(decimals);
        self
    }
}

/// An `M x N` table of measurements, one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    indicators: Vec<IndicatorSpec>,
    rows: Array2<f64>,
    source: String,
}

impl RawDataset {
    pub fn new(
        indicators: Vec<IndicatorSpec>,
        rows: Array2<f64>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let (m, n) = rows.dim();
        if indicators.is_empty() {
            return Err(Error::Config("at least one indicator is required".into()));
        }
        if n != indicators.len() {
            return Err(Error::load(
                None,
                None,
                format!(
                    "table has {n} columns but {} indicators are declared",
                    indicators.len()
                ),
            ));
        }
        if m < 2 {
            return Err(Error::InsufficientData { needed: 2, got: m });
        }
        check_unique_names(&indicators)?;
        for (j, spec) in indicators.iter().enumerate() {
            for (i, &x) in rows.column(j).iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::load(
                        Some(i + 1),
                        Some(&spec.name),
                        "value is not finite",
                    ));
                }
                if spec.integer_valued && x.fract() != 0.0 {
                    return Err(Error::load(
                        Some(i + 1),
                        Some(&spec.name),
                        format!("integer indicator holds non-integer value {x}"),
                    ));
                }
            }
        }
        Ok(RawDataset {
            indicators,
            rows,
            source: source.into(),
        })
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.indicators
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.rows.column(j)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_indicators(&self) -> usize {
        self.rows.ncols()
    }

    pub fn indicator_index(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|s| s.name == name)
    }
}

fn check_unique_names(indicators: &[IndicatorSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for spec in indicators {
        if !seen.insert(spec.name.as_str()) {
            return Err(Error::Config(format!(
                "indicator '{}' declared twice",
                spec.name
            )));
        }
    }
    Ok(())
}

/// Affine parameters of one forwardized column.
///
/// `lo`/`hi` are the extremes of the column after forwardization. For
/// minimized indicators `reflect_about` holds the original column maximum
/// used by `x' = max - x`, so both transforms can be undone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect_about: Option<f64>,
}

impl ScaleParams {
    /// Parameters implied by an observed original-unit range `[min, max]`.
    pub fn from_range(direction: Direction, min: f64, max: f64) -> Self {
        match direction {
            Direction::Maximize => ScaleParams {
                lo: min,
                hi: max,
                reflect_about: None,
            },
            Direction::Minimize => ScaleParams {
                lo: 0.0,
                hi: max - min,
                reflect_about: Some(max),
            },
        }
    }

    fn forward(&self, x: f64) -> f64 {
        match self.reflect_about {
            Some(m) => m - x,
            None => x,
        }
    }
}

/// Indicator metadata together with the per-column scaling that maps
/// original units onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub indicators: Vec<IndicatorSpec>,
    pub params: Vec<ScaleParams>,
}

impl Scaling {
    /// Builds a scaling from known original-unit ranges, e.g. the min/max of
    /// a published descriptive-statistics table.
    pub fn from_ranges(indicators: Vec<IndicatorSpec>, ranges: &[(f64, f64)]) -> Result<Self> {
        if indicators.len() != ranges.len() {
            return Err(Error::Config(format!(
                "{} indicators but {} ranges",
                indicators.len(),
                ranges.len()
            )));
        }
        check_unique_names(&indicators)?;
        let mut params = Vec::with_capacity(ranges.len());
        for (spec, &(min, max)) in indicators.iter().zip(ranges) {
            if !(min.is_finite() && max.is_finite()) || max <= min {
                return Err(Error::ConstantColumn {
                    indicator: spec.name.clone(),
                });
            }
            params.push(ScaleParams::from_range(spec.direction, min, max));
        }
        Ok(Scaling { indicators, params })
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn denormalize(&self, j: usize, v: f64) -> Result<f64> {
        denormalize_value(v, &self.indicators[j], &self.params[j])
    }

    pub fn normalize(&self, j: usize, x: f64) -> f64 {
        normalize_value(x, &self.indicators[j], &self.params[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedDataset {
    matrix: Array2<f64>,
    scaling: Scaling,
}

impl StandardizedDataset {
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.scaling.indicators
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_indicators(&self) -> usize {
        self.matrix.ncols()
    }

    /// Maps the standardized matrix back to original units.
    pub fn denormalize_all(&self) -> Result<Array2<f64>> {
        let mut out = self.matrix.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            for v in col.iter_mut() {
                *v = self.scaling.denormalize(j, *v)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl IndicatorSummary {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub indicators: Vec<IndicatorSummary>,
}

/// Per-indicator min, max, mean and sample standard deviation (divisor `M - 1`).
pub fn describe(d: &RawDataset) -> Result<DescriptiveStats> {
    let names: Vec<&str> = d.indicators().iter().map(|s| s.name.as_str()).collect();
    describe_columns(d.rows(), &names)
}

pub fn describe_columns(rows: ArrayView2<'_, f64>, names: &[&str]) -> Result<DescriptiveStats> {
    let m = rows.nrows();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let indicators = rows
        .axis_iter(Axis(1))
        .zip(names)
        .map(|(col, name)| {
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = col.sum() / m as f64;
            let ss: f64 = col.iter().map(|x| (x - mean).powi(2)).sum();
            IndicatorSummary {
                name: (*name).to_owned(),
                min,
                max,
                // clamp guards the summation rounding on constant columns
                mean: mean.clamp(min, max),
                std: (ss / (m - 1) as f64).sqrt(),
            }
        })
        .collect();
    Ok(DescriptiveStats { indicators })
}

/// Turns every minimized indicator into a maximized one via `x' = max(x) - x`.
pub fn forwardize(d: &RawDataset) -> RawDataset {
    let mut rows = d.rows.clone();
    for (spec, mut col) in d.indicators.iter().zip(rows.axis_iter_mut(Axis(1))) {
        if spec.direction == Direction::Minimize {
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            col.mapv_inplace(|x| max - x);
        }
    }
    RawDataset {
        indicators: d.indicators.clone(),
        rows,
        source: d.source.clone(),
    }
}

/// Forwardizes, then min-max scales every column onto `[0, 1]`.
pub fn normalize(d: &RawDataset) -> Result<StandardizedDataset> {
    let mut matrix = d.rows.clone();
    let mut params = Vec::with_capacity(d.n_indicators());
    for (spec, mut col) in d.indicators.iter().zip(matrix.axis_iter_mut(Axis(1))) {
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::ConstantColumn {
                indicator: spec.name.clone(),
            });
        }
        let p = ScaleParams::from_range(spec.direction, min, max);
        let span = p.hi - p.lo;
        col.mapv_inplace(|x| (p.forward(x) - p.lo) / span);
        params.push(p);
    }
    Ok(StandardizedDataset {
        matrix,
        scaling: Scaling {
            indicators: d.indicators.clone(),
            params,
        },
    })
}

/// Maps a standardized value back to original units, undoing both the
/// min-max scaling and (for minimized indicators) the forward transform.
pub fn denormalize_value(v: f64, indicator: &IndicatorSpec, params: &ScaleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!(
            "standardized value {v} for '{}' is outside [0, 1]",
            indicator.name
        )));
    }
    let forwardized = params.lo + v * (params.hi - params.lo);
    Ok(match (indicator.direction, params.reflect_about) {
        (Direction::Minimize, Some(m)) => m - forwardized,
        _ => forwardized,
    })
}

/// Standardizes an original-unit value. Values outside the fitted range map
/// outside `[0, 1]`.
pub fn normalize_value(x: f64, indicator: &IndicatorSpec, params: &ScaleParams) -> f64 {
    let f = match (indicator.direction, params.reflect_about) {
        (Direction::Minimize, Some(m)) => m - x,
        _ => x,
    };
    (f - params.lo) / (params.hi - params.lo)
}

/// Reads a CSV whose header names every indicator in `specs` (in any order).
/// Columns are returned in `specs` order.
pub fn read_csv_table<R: Read>(reader: R, specs: &[IndicatorSpec]) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::load(Some(0), None, format!("unreadable header: {e}")))?
        .clone();

    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if position.insert(h, i).is_some() {
            return Err(Error::load(Some(0), Some(h), "duplicate header"));
        }
    }
    let missing: Vec<&str> = specs
        .iter()
        .map(|s| s.name.as_str())
        .filter(|n| !position.contains_key(n))
        .collect();
    let extra: Vec<&str> = headers
        .iter()
        .filter(|h| !specs.iter().any(|s| s.name == *h))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::load(
            Some(0),
            None,
            format!(
                "header does not match indicators; missing: [{}], unexpected: [{}]",
                missing.join(", "),
                extra.join(", ")
            ),
        ));
    }
    let order: Vec<usize> = specs.iter().map(|s| position[s.name.as_str()]).collect();

    let mut values = Vec::new();
    let mut m = 0;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::load(Some(row), None, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::load(
                Some(row),
                None,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (spec, &col) in specs.iter().zip(&order) {
            let cell = &record[col];
            if cell.is_empty() {
                return Err(Error::load(Some(row), Some(&spec.name), "missing value"));
            }
            let x: f64 = cell.parse().map_err(|_| {
                Error::load(
                    Some(row),
                    Some(&spec.name),
                    format!("non-numeric value '{cell}'"),
                )
            })?;
            if !x.is_finite() {
                return Err(Error::load(
                    Some(row),
                    Some(&spec.name),
                    format!("non-finite value '{cell}'"),
                ));
            }
            values.push(x);
        }
        m += 1;
    }
    Array2::from_shape_vec((m, specs.len()), values)
        .map_err(|e| Error::load(None, None, e.to_string()))
}

pub fn load_csv(path: impl AsRef<Path>, specs: &[IndicatorSpec]) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_csv_table(file, specs)?;
    RawDataset::new(specs.to_vec(), rows, path.display().to_string())
}

/// Indicator metadata as stored in the sidecar TOML file.
///
/// ```toml
/// [[indicator]]
/// name = "Number of Lateral Branches"
/// unit = "count"
/// direction = "minimize"
/// integer = true
/// min = 0      # optional observed range, needed only to replay
/// max = 7      # published geometry without the raw table
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    #[serde(rename = "indicator")]
    pub entries: Vec<IndicatorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEntry {
    #[serde(flatten)]
    pub spec: IndicatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl IndicatorConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: IndicatorConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("indicator config: {e}")))?;
        if cfg.entries.is_empty() {
            return Err(Error::Config("indicator config lists no indicators".into()));
        }
        check_unique_names(&cfg.specs())?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("indicator config is always representable as TOML")
    }

    pub fn specs(&self) -> Vec<IndicatorSpec> {
        self.entries.iter().map(|e| e.spec.clone()).collect()
    }

    /// The scaling implied by the configured `min`/`max` ranges.
    pub fn scaling(&self) -> Result<Scaling> {
        let ranges = self
            .entries
            .iter()
            .map(|e| match (e.min, e.max) {
                (Some(lo), Some(hi)) => Ok((lo, hi)),
                _ => Err(Error::Config(format!(
                    "indicator '{}' has no min/max range",
                    e.spec.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Scaling::from_ranges(self.specs(), &ranges)
    }
}
