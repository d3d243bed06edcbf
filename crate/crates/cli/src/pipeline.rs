//! End-to-end run: load, test, factor, cluster, grade.

use serde::{Deserialize, Serialize};
use sqcsef::cluster_eval::ValidityReport;
use sqcsef::cvcl::{self, CvclModel, EpochRecord};
use sqcsef::dataset::{self, IndicatorConfig};
use sqcsef::factors::{self, Adequacy, FactorGuidance, FactorModel, ViewPartition};
use sqcsef::grading::{self, ClusterGeometry, GradingStandard, Provenance};
use sqcsef::stats::{self, CorrelationReport, NormalityReport};
use sqcsef::{kmeans, ClusteringResult, DescriptiveStats, Error, ErrorKind, IndicatorSpec, Method};

use crate::config::{PipelineConfig, DEFAULT_FACTORS};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage '{stage}' failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl StageError {
    pub fn kind(&self) -> ErrorKind {
        self.source.kind()
    }
}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> AtStage<T> for sqcsef::Result<T> {
    fn at(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Everything a run produces, in the order the tables appear in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    /// The run configuration; the output directory is left out so that
    /// runs written to different places are identical.
    pub config: PipelineConfig,
    pub indicators: Vec<IndicatorSpec>,
    pub n_samples: usize,
    pub descriptive: DescriptiveStats,
    pub normality: NormalityReport,
    pub correlation: CorrelationReport,
    /// Absent when a k-means run could not complete factor analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_analysis: Option<FactorAnalysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<ViewPartition>,
    pub clustering: ClusteringResult,
    /// Cluster geometry ordered best level first.
    pub geometry: Vec<ClusterGeometry>,
    pub standard: GradingStandard,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<ValidityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_log: Option<Vec<EpochRecord>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunReport {
    /// Boundary points in standardized space, one per non-worst level.
    pub fn boundary_points(&self) -> &[Vec<f64>] {
        &self.standard.standardized_bounds
    }

    pub fn to_json(&self) -> sqcsef::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> sqcsef::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorAnalysis {
    pub adequacy: Adequacy,
    pub model: FactorModel,
    pub guidance: FactorGuidance,
}

pub struct PipelineOutput {
    pub report: RunReport,
    pub model: Option<CvclModel>,
}

fn echo(cfg: &PipelineConfig) -> PipelineConfig {
    let mut c = cfg.clone();
    c.out = Default::default();
    c
}

fn resolve_views(
    cfg: &PipelineConfig,
    names: &[String],
    model: &FactorModel,
) -> sqcsef::Result<ViewPartition> {
    let fa = &cfg.factors;
    if fa.manual_views.is_empty() {
        return factors::partition_views(model, None);
    }
    let groups = fa
        .manual_views
        .iter()
        .map(|v| {
            v.iter()
                .map(|n| {
                    names.iter().position(|x| x == n).ok_or_else(|| {
                        Error::Partition(format!("unknown indicator '{n}' in manual views"))
                    })
                })
                .collect::<sqcsef::Result<Vec<usize>>>()
        })
        .collect::<sqcsef::Result<Vec<_>>>()?;
    let view_names = if fa.view_names.is_empty() {
        (1..=groups.len()).map(|i| format!("view{i}")).collect()
    } else {
        fa.view_names.clone()
    };
    // weight each manual view by the variance its indicators carry after rotation
    let strengths: Vec<f64> = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&i| {
                    model
                        .rotated_loadings
                        .row(i)
                        .iter()
                        .map(|l| l * l)
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    ViewPartition::from_groups(view_names, groups, &strengths, names.len())
}

fn analyse_factors(
    cfg: &PipelineConfig,
    correlation: &CorrelationReport,
    n_samples: usize,
    notes: &mut Vec<String>,
) -> Result<FactorAnalysis, StageError> {
    let r = correlation.coefficient_matrix().at("correlation")?;
    let adequacy = factors::adequacy(r.view(), n_samples).at("adequacy")?;
    if !adequacy.passes_gate() {
        if cfg.method == Method::Cvcl && !cfg.allow_inadequate {
            return Err(StageError {
                stage: "adequacy",
                source: Error::Inadequate {
                    kmo: adequacy.kmo,
                    gate: factors::KMO_GATE,
                },
            });
        }
        let msg = format!("KMO {:.3} is below {:.2}", adequacy.kmo, factors::KMO_GATE);
        log::warn!("{msg}");
        notes.push(msg);
    }
    let n_factors = cfg
        .factors
        .n_factors
        .unwrap_or(DEFAULT_FACTORS.min(r.nrows()));
    let model = factors::extract_factors(r.view(), n_factors).at("factors")?;
    let guidance = factors::factor_guidance(&model.eigenvalues);
    Ok(FactorAnalysis {
        adequacy,
        model,
        guidance,
    })
}

/// Runs every stage in memory. Nothing is written.
pub fn execute(cfg: &PipelineConfig) -> Result<PipelineOutput, StageError> {
    cfg.validate().at("config")?;
    let ind_cfg = IndicatorConfig::load(&cfg.indicators).at("load")?;
    let specs = ind_cfg.specs();
    let raw = dataset::load_csv(&cfg.dataset, &specs).at("load")?;
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let mut notes = Vec::new();

    let descriptive = dataset::describe(&raw).at("describe")?;
    let standardized = dataset::normalize(&raw).at("normalize")?;
    let normality = stats::normality_report(raw.rows(), &names).at("normality")?;
    let correlation =
        stats::correlation_report(raw.rows(), &names, &normality).at("correlation")?;
    let factor_analysis = match analyse_factors(cfg, &correlation, raw.n_samples(), &mut notes) {
        Ok(fa) => Some(fa),
        // factor analysis only feeds the view partition, which k-means does not use
        Err(e) if cfg.method == Method::Kmeans => {
            log::warn!("factor analysis skipped: {e}");
            notes.push(format!("factor analysis skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };

    let m = standardized.matrix();
    let (clustering, views, model) = match cfg.method {
        Method::Kmeans => (
            kmeans::fit(m, &cfg.kmeans_config()).at("kmeans")?,
            None,
            None,
        ),
        Method::Cvcl => {
            let fa = factor_analysis
                .as_ref()
                .expect("cvcl runs abort when factor analysis fails");
            let partition = resolve_views(cfg, &names, &fa.model).at("views")?;
            let data = cvcl::build_views(&standardized, &partition).at("views")?;
            let mut ccfg = cfg.cvcl_config();
            if ccfg.view_weights.is_empty() {
                ccfg.view_weights = partition.weights.clone();
            }
            let (model, result) = cvcl::fit(&data, &ccfg).at("cvcl")?;
            (result, Some(partition), Some(model))
        }
    };
    notes.extend(clustering.notes.iter().cloned());

    let geoms = grading::cluster_geometry(m, &clustering).at("geometry")?;
    let order = grading::order_clusters(&geoms);
    let ordered: Vec<ClusterGeometry> = order.iter().map(|&i| geoms[i].clone()).collect();
    let echo_cfg = echo(cfg);
    let provenance = Provenance::new(Some(cfg.method), echo_cfg.to_toml().as_bytes());
    let standard =
        grading::build_standard(&ordered, standardized.scaling(), provenance).at("standard")?;
    notes.extend(standard.notes.iter().cloned());

    let validity = match ValidityReport::compute(m, &clustering.assignments, cfg.method) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("validity indices unavailable: {e}");
            notes.push(format!("validity indices unavailable: {e}"));
            None
        }
    };

    let report = RunReport {
        tool_version: TOOL_VERSION.to_owned(),
        config: echo_cfg,
        indicators: specs,
        n_samples: raw.n_samples(),
        descriptive,
        normality,
        correlation,
        factor_analysis,
        views,
        clustering,
        geometry: ordered,
        standard,
        validity,
        training_log: model.as_ref().map(|m| m.log.clone()),
        notes,
    };
    Ok(PipelineOutput { report, model })
}

/// Runs the pipeline and writes every artifact into `cfg.out`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, StageError> {
    let out = execute(cfg)?;
    crate::report::write_run(&out.report, &cfg.out).at("write")?;
    if let Some(model) = &out.model {
        model.save(cfg.out.join("cvcl_model.json")).at("write")?;
    }
    Ok(out.report)
}
