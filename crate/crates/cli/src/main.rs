use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqcsef::cvcl::{self, Preset};
use sqcsef::dataset::{self, IndicatorConfig};
use sqcsef::factors;
use sqcsef::grading::{self, ClusterGeometry, GeometrySet, GradingStandard, Provenance};
use sqcsef::stats;
use sqcsef::{kmeans, Error, ErrorKind, Method, RawDataset};
use sqcsef_cli::config::{PipelineConfig, DEFAULT_FACTORS};
use sqcsef_cli::inputs::{dataset_csv, parse_correlation_csv, read_text, write_text};
use sqcsef_cli::pipeline::{self, RunReport, StageError};
use sqcsef_cli::presets;
use sqcsef_cli::report::{self, Format};
use sqcsef_cli::synth::{synth_generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "sqcsef",
    version,
    about = "Build seedling quality grading standards from indicator tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Sample table (CSV with one column per indicator).
    #[arg(long)]
    data: PathBuf,
    /// Indicator definitions (TOML).
    #[arg(long)]
    indicators: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics of a sample table.
    Describe {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jarque-Bera normality and Pearson/Spearman correlation tables.
    Correlate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KMO/Bartlett adequacy, PCA extraction and varimax rotation.
    Factor {
        #[arg(long, required_unless_present = "correlation")]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        indicators: Option<PathBuf>,
        /// Square correlation matrix (CSV) instead of a sample table.
        #[arg(long, conflicts_with = "data", requires = "samples")]
        correlation: Option<PathBuf>,
        /// Number of samples behind --correlation.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_FACTORS)]
        n_factors: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster the standardized table and report ordered cluster geometry.
    Cluster {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "kmeans")]
        method: MethodArg,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        n_factors: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a grading standard from cluster geometry.
    Standard {
        /// Indicator definitions; min/max give the scaling unless --data is set.
        #[arg(long)]
        indicators: PathBuf,
        /// Cluster centers and radii (JSON), e.g. from `cluster` or a published table.
        #[arg(long)]
        inject_geometry: PathBuf,
        /// Take the scaling from this sample table instead of the configured ranges.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grade new samples against a saved standard.
    Grade {
        #[arg(long)]
        standard: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline from a config, or re-render a saved run.
    Report {
        /// Pipeline config (TOML); relative paths in it resolve against its directory.
        #[arg(long, required_unless_present = "from", conflicts_with = "from")]
        config: Option<PathBuf>,
        /// A saved run.json to re-render.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the clustering method.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Override the number of levels.
        #[arg(long)]
        k: Option<usize>,
        /// Replace the config's network settings with a preset.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cvcl even when the KMO adequacy gate fails.
        #[arg(long)]
        allow_inadequate: bool,
        /// Renderings to write; all of them when omitted.
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// Generate a synthetic sample table shaped like the Huangqiu indicators.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the matching indicator definitions here.
        #[arg(long)]
        indicators_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Kmeans,
    Cvcl,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Kmeans => Method::Kmeans,
            MethodArg::Cvcl => Method::Cvcl,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PresetArg {
    DeskScale,
    PaperScale,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::DeskScale => Preset::DeskScale,
            PresetArg::PaperScale => Preset::PaperScale,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let kind = match self {
            CliError::Core(e) => e.kind(),
            CliError::Stage(e) => e.kind(),
        };
        match kind {
            ErrorKind::Config => 2,
            ErrorKind::Data | ErrorKind::Io => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

type CliResult = Result<(), CliError>;

macro_rules! outln {
    ($o:expr) => {
        writeln!($o).expect("writing to a String cannot fail")
    };
    ($o:expr, $($arg:tt)*) => {
        writeln!($o, $($arg)*).expect("writing to a String cannot fail")
    };
}

fn load_input(input: &Input) -> Result<RawDataset, Error> {
    let cfg = IndicatorConfig::load(&input.indicators)?;
    dataset::load_csv(&input.data, &cfg.specs())
}

fn names_of(d: &RawDataset) -> Vec<String> {
    d.indicators().iter().map(|s| s.name.clone()).collect()
}

fn emit_json<T: serde::Serialize>(dir: Option<&Path>, name: &str, value: &T) -> Result<(), Error> {
    if let Some(dir) = dir {
        write_text(&dir.join(name), &serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn describe(o: &mut String, input: &Input, out: Option<&Path>) -> CliResult {
    let raw = load_input(input)?;
    let d = dataset::describe(&raw)?;
    outln!(
        o,
        "| Index | Minimum | Maximum | Mean | Standard Deviation |\n|---|---|---|---|---|"
    );
    for s in &d.indicators {
        outln!(
            o,
            "| {} | {} | {} | {:.4} | {:.4} |",
            s.name,
            s.min,
            s.max,
            s.mean,
            s.std
        );
    }
    emit_json(out, "descriptive.json", &d)?;
    Ok(())
}

fn correlate(o: &mut String, input: &Input, out: Option<&Path>) -> CliResult {
    let raw = load_input(input)?;
    let names = names_of(&raw);
    let normality = stats::normality_report(raw.rows(), &names)?;
    let corr = stats::correlation_report(raw.rows(), &names, &normality)?;
    outln!(o, "{}\n{}", normality.to_markdown(), corr.to_markdown());
    emit_json(out, "normality.json", &normality)?;
    emit_json(out, "correlation.json", &corr)?;
    if let Some(dir) = out {
        write_text(&dir.join("correlation.csv"), &corr.to_csv())?;
    }
    Ok(())
}

fn factor(
    o: &mut String,
    data: Option<&Path>,
    indicators: Option<&Path>,
    correlation: Option<&Path>,
    samples: Option<usize>,
    n_factors: usize,
    out: Option<&Path>,
) -> CliResult {
    let (names, r, m) = match (correlation, data, indicators) {
        (Some(path), _, _) => {
            let (names, r) = parse_correlation_csv(&read_text(path)?)?;
            (names, r, samples.expect("clap enforces --samples"))
        }
        (None, Some(data), Some(ind)) => {
            let raw = load_input(&Input {
                data: data.to_owned(),
                indicators: ind.to_owned(),
            })?;
            let names = names_of(&raw);
            let normality = stats::normality_report(raw.rows(), &names)?;
            let r =
                stats::correlation_report(raw.rows(), &names, &normality)?.coefficient_matrix()?;
            (names, r, raw.n_samples())
        }
        _ => {
            return Err(Error::Config(
                "give --data with --indicators, or --correlation with --samples".into(),
            )
            .into())
        }
    };
    let adequacy = factors::adequacy(r.view(), m)?;
    let model = factors::extract_factors(r.view(), n_factors)?;
    let guidance = factors::factor_guidance(&model.eigenvalues);
    let views = factors::partition_views(&model, None)?;
    outln!(
        o,
        "KMO {:.3}, Bartlett chi-square {:.2} (dof {}, p {:.3}){}\n",
        adequacy.kmo,
        adequacy.bartlett_chi2,
        adequacy.bartlett_dof,
        adequacy.bartlett_p,
        if adequacy.passes_gate() {
            ""
        } else {
            "; below the 0.80 adequacy gate"
        }
    );
    outln!(
        o,
        "{}\n{}",
        model.variance_table_markdown(),
        model.rotated_table_markdown(&names)
    );
    outln!(
        o,
        "Kaiser rule {}, cumulative >= 80% at {}, scree elbow at {}",
        guidance.kaiser,
        guidance.cumulative_80,
        guidance.scree_elbow
    );
    for (v, w) in views.views.iter().zip(&views.weights) {
        let members: Vec<&str> = v.indicators.iter().map(|&i| names[i].as_str()).collect();
        outln!(o, "{}: {} (weight {:.4})", v.name, members.join(", "), w);
    }
    if let Some(dir) = out {
        emit_json(Some(dir), "adequacy.json", &adequacy)?;
        emit_json(Some(dir), "factors.json", &model)?;
        emit_json(Some(dir), "views.json", &views)?;
        write_text(
            &dir.join("scree.csv"),
            &report::scree_csv(&model.eigenvalues),
        )?;
        write_text(
            &dir.join("scree.svg"),
            &report::scree_svg(&model.eigenvalues),
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cluster(
    o: &mut String,
    input: &Input,
    method: Method,
    k: usize,
    seed: u64,
    preset: Option<Preset>,
    n_factors: Option<usize>,
    out: Option<&Path>,
) -> CliResult {
    let raw = load_input(input)?;
    let std = dataset::normalize(&raw)?;
    let mut cfg = PipelineConfig::new(&input.data, &input.indicators, method, k);
    cfg.seed = seed;
    cfg.preset = preset;
    let result = match method {
        Method::Kmeans => kmeans::fit(std.matrix(), &cfg.kmeans_config())?,
        Method::Cvcl => {
            let names = names_of(&raw);
            let normality = stats::normality_report(raw.rows(), &names)?;
            let r =
                stats::correlation_report(raw.rows(), &names, &normality)?.coefficient_matrix()?;
            let model = factors::extract_factors(
                r.view(),
                n_factors.unwrap_or(DEFAULT_FACTORS.min(names.len())),
            )?;
            let partition = factors::partition_views(&model, None)?;
            let data = cvcl::build_views(&std, &partition)?;
            let mut ccfg = cfg.cvcl_config();
            ccfg.view_weights = partition.weights.clone();
            let (model, result) = cvcl::fit(&data, &ccfg)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_owned(),
                    source: e,
                })?;
                model.save(dir.join("cvcl_model.json"))?;
            }
            result
        }
    };
    let geoms = grading::cluster_geometry(std.matrix(), &result)?;
    let ordered: Vec<ClusterGeometry> = grading::order_clusters(&geoms)
        .into_iter()
        .map(|i| geoms[i].clone())
        .collect();
    outln!(
        o,
        "| Level | Cluster | Size | Center | Radius |\n|---|---|---|---|---|"
    );
    for (li, g) in ordered.iter().enumerate() {
        let center: Vec<String> = g.center.iter().map(|c| format!("{c:.4}")).collect();
        outln!(
            o,
            "| {} | C{} | {} | ({}) | {:.4} |",
            grading::roman(li + 1),
            g.cluster + 1,
            g.size.unwrap_or(0),
            center.join(","),
            g.radius
        );
    }
    emit_json(out, "clustering.json", &result)?;
    emit_json(
        out,
        "geometry.json",
        &GeometrySet {
            method: Some(method),
            clusters: ordered,
        },
    )?;
    Ok(())
}

fn standard(
    o: &mut String,
    indicators: &Path,
    geometry: &Path,
    data: Option<&Path>,
    out: Option<&Path>,
) -> CliResult {
    let ind = IndicatorConfig::load(indicators)?;
    let text = read_text(geometry)?;
    let set = GeometrySet::from_json(&text)?;
    let scaling = match data {
        Some(d) => dataset::normalize(&dataset::load_csv(d, &ind.specs())?)?
            .scaling()
            .clone(),
        None => ind.scaling()?,
    };
    let ordered: Vec<ClusterGeometry> = grading::order_clusters(&set.clusters)
        .into_iter()
        .map(|i| set.clusters[i].clone())
        .collect();
    let std = grading::build_standard(
        &ordered,
        &scaling,
        Provenance::new(set.method, text.as_bytes()),
    )?;
    outln!(o, "Boundary points:");
    for (b, l) in std.standardized_bounds.iter().zip(&std.levels) {
        let v: Vec<String> = b.iter().map(|x| format!("{x:.4}")).collect();
        outln!(o, "  level {}: ({})", l.name, v.join(","));
    }
    outln!(o, "\n{}", std.to_markdown());
    for n in &std.notes {
        outln!(o, "note: {n}");
    }
    if let Some(dir) = out {
        write_text(&dir.join("standard.json"), &std.to_json()?)?;
        write_text(&dir.join("standard.md"), &std.to_markdown())?;
    }
    Ok(())
}

fn grade(o: &mut String, standard: &Path, samples: &Path, out: Option<&Path>) -> CliResult {
    let std = GradingStandard::from_json(&read_text(standard)?)?;
    let file = std::fs::File::open(samples).map_err(|e| Error::Io {
        path: samples.to_owned(),
        source: e,
    })?;
    let rows = dataset::read_csv_table(file, &std.indicators)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["sample", "level"].into_iter().map(str::to_owned).chain(
        std.levels
            .iter()
            .filter(|l| !l.thresholds.is_empty())
            .map(|l| format!("met_{}", l.name)),
    );
    w.write_record(header)
        .map_err(|e| Error::Config(e.to_string()))?;
    for (i, row) in rows.rows().into_iter().enumerate() {
        let g = std.grade_sample(&row.to_vec())?;
        let mut rec = vec![(i + 1).to_string(), g.name.clone()];
        rec.extend(g.conditions_met.iter().map(usize::to_string));
        // levels after the accepted one were never tested
        rec.resize(2 + std.levels.len() - 1, String::new());
        w.write_record(&rec)
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let text =
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8");
    match out {
        Some(p) => write_text(p, &text)?,
        None => o.push_str(&text),
    }
    Ok(())
}

struct Overrides {
    seed: Option<u64>,
    method: Option<Method>,
    k: Option<usize>,
    preset: Option<Preset>,
    out: Option<PathBuf>,
    allow_inadequate: bool,
}

fn run_report(
    o: &mut String,
    config: Option<&Path>,
    from: Option<&Path>,
    ov: Overrides,
    formats: &[Format],
) -> CliResult {
    let formats = if formats.is_empty() {
        vec![Format::Json, Format::Markdown, Format::CsvBundle]
    } else {
        formats.to_vec()
    };
    if let Some(path) = from {
        let r = RunReport::from_json(&read_text(path)?)?;
        let dir = ov
            .out
            .ok_or_else(|| Error::Config("--from needs --out".into()))?;
        for f in formats {
            report::render(&r, f, &dir)?;
        }
        return Ok(());
    }
    let mut cfg = PipelineConfig::load(config.expect("clap enforces --config or --from"))?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(m) = ov.method {
        cfg.method = m;
    }
    if let Some(k) = ov.k {
        cfg.k = k;
    }
    if let Some(p) = ov.preset {
        cfg.preset = Some(p);
        cfg.cvcl = None;
    }
    if let Some(o) = ov.out {
        cfg.out = o;
    }
    cfg.allow_inadequate |= ov.allow_inadequate;
    let output = pipeline::execute(&cfg)?;
    for f in formats {
        report::render(&output.report, f, &cfg.out)?;
    }
    if let Some(model) = &output.model {
        model.save(cfg.out.join("cvcl_model.json"))?;
    }
    outln!(o, "{}", output.report.standard.to_markdown());
    outln!(o, "artifacts written to {}", cfg.out.display());
    Ok(())
}

fn synth(out: &Path, m: usize, seed: u64, indicators_out: Option<&Path>) -> CliResult {
    let spec = SynthSpec {
        m,
        correlation: presets::huangqiu_correlation(),
        targets: presets::huangqiu_targets(),
        seed,
    };
    let d = synth_generate(&spec, &presets::huangqiu_indicators())?;
    write_text(out, &dataset_csv(&d))?;
    if let Some(p) = indicators_out {
        write_text(p, &presets::huangqiu_config().to_toml())?;
    }
    Ok(())
}

fn dispatch(o: &mut String, cmd: Command) -> CliResult {
    match cmd {
        Command::Describe { input, out } => describe(o, &input, out.as_deref()),
        Command::Correlate { input, out } => correlate(o, &input, out.as_deref()),
        Command::Factor {
            data,
            indicators,
            correlation,
            samples,
            n_factors,
            out,
        } => factor(
            o,
            data.as_deref(),
            indicators.as_deref(),
            correlation.as_deref(),
            samples,
            n_factors,
            out.as_deref(),
        ),
        Command::Cluster {
            input,
            method,
            k,
            seed,
            preset,
            n_factors,
            out,
        } => cluster(
            o,
            &input,
            method.into(),
            k,
            seed,
            preset.map(Into::into),
            n_factors,
            out.as_deref(),
        ),
        Command::Standard {
            indicators,
            inject_geometry,
            data,
            out,
        } => standard(
            o,
            &indicators,
            &inject_geometry,
            data.as_deref(),
            out.as_deref(),
        ),
        Command::Grade {
            standard,
            samples,
            out,
        } => grade(o, &standard, &samples, out.as_deref()),
        Command::Report {
            config,
            from,
            seed,
            method,
            k,
            preset,
            out,
            allow_inadequate,
            format,
        } => run_report(
            o,
            config.as_deref(),
            from.as_deref(),
            Overrides {
                seed,
                method: method.map(Into::into),
                k,
                preset: preset.map(Into::into),
                out,
                allow_inadequate,
            },
            &format,
        ),
        Command::Synth {
            out,
            m,
            seed,
            indicators_out,
        } => synth(&out, m, seed, indicators_out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut out = String::new();
    let result = dispatch(&mut out, cli.command);
    // a closed pipe downstream is not a failure of the command
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
