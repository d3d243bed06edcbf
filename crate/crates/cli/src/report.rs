//! Markdown, JSON, CSV and SVG renderings of a run.

use std::fmt::Write as _;
use std::path::Path;

use sqcsef::cluster_eval::ValidityReport;
use sqcsef::grading::GeometrySet;
use sqcsef::{Error, Result};

use crate::pipeline::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Markdown,
    Json,
    CsvBundle,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::Io { path, source: e })
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn fmt_vec(v: &[f64], decimals: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.decimals$}")).collect();
    format!("({})", parts.join(","))
}

/// One file per table; every number at full round-trip precision.
pub fn csv_bundle(r: &RunReport) -> Vec<(String, String)> {
    let mut files = Vec::new();
    files.push((
        "descriptive.csv".into(),
        csv_string(
            &["index", "min", "max", "mean", "std"],
            r.descriptive
                .indicators
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.min.to_string(),
                        s.max.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                    ]
                })
                .collect(),
        ),
    ));
    files.push((
        "normality.csv".into(),
        csv_string(
            &["index", "jb", "p_value", "normal_at_99"],
            r.normality
                .entries
                .iter()
                .map(|e| {
                    vec![
                        e.name.clone(),
                        e.jb.to_string(),
                        e.p.to_string(),
                        e.normal_at_99.to_string(),
                    ]
                })
                .collect(),
        ),
    ));
    files.push(("correlation.csv".into(), r.correlation.to_csv()));
    if let Some(fa) = &r.factor_analysis {
        files.push((
            "adequacy.csv".into(),
            csv_string(
                &["kmo", "bartlett_chi2", "bartlett_dof", "bartlett_p"],
                vec![vec![
                    fa.adequacy.kmo.to_string(),
                    fa.adequacy.bartlett_chi2.to_string(),
                    fa.adequacy.bartlett_dof.to_string(),
                    fa.adequacy.bartlett_p.to_string(),
                ]],
            ),
        ));
        let f = &fa.model;
        files.push((
            "variance.csv".into(),
            csv_string(
                &["factor", "eigenvalue", "variance_explained", "cumulative"],
                (0..f.eigenvalues.len())
                    .map(|i| {
                        vec![
                            (i + 1).to_string(),
                            f.eigenvalues[i].to_string(),
                            f.variance_explained[i].to_string(),
                            f.cumulative_explained[i].to_string(),
                        ]
                    })
                    .collect(),
            ),
        ));
        files.push(("scree.csv".into(), scree_csv(&f.eigenvalues)));
        let mut header = vec!["index".to_string()];
        header.extend((1..=f.n_factors).map(|j| format!("factor{j}")));
        let mut rows: Vec<Vec<String>> = r
            .indicators
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut row = vec![s.name.clone()];
                row.extend(f.rotated_loadings.row(i).iter().map(|x| x.to_string()));
                row
            })
            .collect();
        let mut last = vec!["eigenvalue_after_rotating".to_string()];
        last.extend(f.rotated_eigenvalues.iter().map(|x| x.to_string()));
        rows.push(last);
        files.push((
            "rotated.csv".into(),
            csv_string(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows),
        ));
    }
    if let Some(v) = &r.views {
        files.push((
            "views.csv".into(),
            csv_string(
                &["view", "weight", "indicators"],
                v.views
                    .iter()
                    .zip(&v.weights)
                    .map(|(view, w)| {
                        let members: Vec<&str> = view
                            .indicators
                            .iter()
                            .map(|&i| r.indicators[i].name.as_str())
                            .collect();
                        vec![view.name.clone(), w.to_string(), members.join(";")]
                    })
                    .collect(),
            ),
        ));
    }
    let mut header = vec![
        "level".to_string(),
        "cluster".into(),
        "size".into(),
        "radius".into(),
    ];
    header.extend(r.indicators.iter().map(|s| format!("center_{}", s.name)));
    files.push((
        "geometry.csv".into(),
        csv_string(
            &header.iter().map(String::as_str).collect::<Vec<_>>(),
            r.geometry
                .iter()
                .zip(&r.standard.levels)
                .map(|(g, l)| {
                    let mut row = vec![
                        l.name.clone(),
                        g.cluster.to_string(),
                        g.size.map(|s| s.to_string()).unwrap_or_default(),
                        g.radius.to_string(),
                    ];
                    row.extend(g.center.iter().map(|x| x.to_string()));
                    row
                })
                .collect(),
        ),
    ));
    files.push((
        "standard.csv".into(),
        csv_string(
            &[
                "level",
                "indicator",
                "relation",
                "threshold",
                "exact",
                "boundary",
            ],
            r.standard
                .levels
                .iter()
                .zip(&r.standard.standardized_bounds)
                .flat_map(|(l, b)| {
                    l.thresholds.iter().zip(b).map(move |(t, lb)| {
                        vec![
                            l.name.clone(),
                            t.indicator.clone(),
                            match t.relation {
                                sqcsef::grading::Relation::AtLeast => ">=".into(),
                                sqcsef::grading::Relation::AtMost => "<=".into(),
                            },
                            t.value.to_string(),
                            t.exact.to_string(),
                            lb.to_string(),
                        ]
                    })
                })
                .collect(),
        ),
    ));
    if let Some(v) = &r.validity {
        files.push((
            "validity.csv".into(),
            csv_string(
                &[
                    "method",
                    "silhouette",
                    "calinski_harabasz",
                    "davies_bouldin",
                ],
                vec![vec![
                    v.method.to_string(),
                    v.silhouette.to_string(),
                    v.calinski_harabasz.to_string(),
                    v.davies_bouldin.to_string(),
                ]],
            ),
        ));
    }
    if let Some(log) = &r.training_log {
        files.push((
            "training_log.csv".into(),
            csv_string(
                &["epoch", "stage", "l_pre", "l_c", "l_a", "total"],
                log.iter()
                    .map(|e| {
                        vec![
                            e.epoch.to_string(),
                            e.stage.to_string(),
                            e.losses.l_pre.to_string(),
                            e.losses.l_c.to_string(),
                            e.losses.l_a.to_string(),
                            e.losses.total.to_string(),
                        ]
                    })
                    .collect(),
            ),
        ));
    }
    files.push((
        "assignments.csv".into(),
        csv_string(
            &["sample", "cluster"],
            r.clustering
                .assignments
                .iter()
                .enumerate()
                .map(|(i, c)| vec![(i + 1).to_string(), c.to_string()])
                .collect(),
        ),
    ));
    files
}

pub fn scree_csv(eigenvalues: &[f64]) -> String {
    csv_string(
        &["factor", "eigenvalue"],
        eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| vec![(i + 1).to_string(), l.to_string()])
            .collect(),
    )
}

/// Line chart of the eigenvalues with one marker per factor.
pub fn scree_svg(eigenvalues: &[f64]) -> String {
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let n = eigenvalues.len().max(1);
    let top = eigenvalues.iter().cloned().fold(1.0f64, f64::max).ceil();
    let x = |i: usize| {
        pad + (w - 2.0 * pad)
            * if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.5
            }
    };
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v / top);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Factor</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">Eigenvalue</text>"#,
        h / 2.0,
        h / 2.0
    );
    let pts: Vec<String> = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        pts.join(" ")
    );
    for (i, &v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>{v:.3}</title></circle>"#,
            x(i),
            y(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x(i),
            h - pad + 16.0,
            i + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{:.2}" text-anchor="end">{top}</text>"#,
        pad - 6.0,
        y(top) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{:.2}" text-anchor="end">0</text>"#,
        pad - 6.0,
        y(0.0) + 4.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn render_markdown(r: &RunReport) -> String {
    let mut s = String::new();
    let method = r.config.method;
    let _ = writeln!(s, "# Seedling quality classification standard ({method})\n");
    let _ = writeln!(
        s,
        "Tool version {}; {} samples, {} indicators, k = {}, seed = {}.\n",
        r.tool_version,
        r.n_samples,
        r.indicators.len(),
        r.config.k,
        r.config.seed
    );

    s.push_str("## Descriptive statistics\n\n| Index | Minimum | Maximum | Mean | Standard Deviation |\n|---|---|---|---|---|\n");
    for d in &r.descriptive.indicators {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            d.name, d.min, d.max, d.mean, d.std
        );
    }

    s.push_str("\n## Normality (Jarque-Bera)\n\n");
    s.push_str(&r.normality.to_markdown());
    s.push_str("\n## Correlation\n\n");
    s.push_str(&r.correlation.to_markdown());

    let names: Vec<String> = r.indicators.iter().map(|i| i.name.clone()).collect();
    if let Some(fa) = &r.factor_analysis {
        let a = &fa.adequacy;
        let _ = writeln!(
            s,
            "\n## Sampling adequacy\n\n| KMO Measure of Sampling Adequacy | Bartlett chi-square | dof | Significance of Bartlett's test |\n|---|---|---|---|\n| {:.3} | {:.2} | {} | {:.3} |",
            a.kmo, a.bartlett_chi2, a.bartlett_dof, a.bartlett_p
        );

        s.push_str("\n## Total variance explained\n\n");
        s.push_str(&fa.model.variance_table_markdown());
        let g = &fa.guidance;
        let _ = writeln!(
            s,
            "\nFactor-count guidance: Kaiser rule {}, cumulative >= 80% at {}, scree elbow at {}; {} factors retained.\n\n![Scree plot](scree.svg)",
            g.kaiser, g.cumulative_80, g.scree_elbow, fa.model.n_factors
        );
        s.push_str("\n## Rotated component matrix\n\n");
        s.push_str(&fa.model.rotated_table_markdown(&names));
    }

    if let Some(v) = &r.views {
        s.push_str("\n## Views\n\n| View | Indicators | Weight |\n|---|---|---|\n");
        for (view, w) in v.views.iter().zip(&v.weights) {
            let members: Vec<&str> = view.indicators.iter().map(|&i| names[i].as_str()).collect();
            let _ = writeln!(s, "| {} | {} | {:.4} |", view.name, members.join(", "), w);
        }
    }

    s.push_str("\n## Clusters\n\n| Level | Cluster | Size | Center of Cluster | Radius of Cluster |\n|---|---|---|---|---|\n");
    for (gm, l) in r.geometry.iter().zip(&r.standard.levels) {
        let _ = writeln!(
            s,
            "| {} | C{} | {} | {} | {:.4} |",
            l.name,
            gm.cluster + 1,
            gm.size.map(|x| x.to_string()).unwrap_or_default(),
            fmt_vec(&gm.center, 4),
            gm.radius
        );
    }
    s.push_str("\nBoundary points:\n\n");
    for (b, l) in r.boundary_points().iter().zip(&r.standard.levels) {
        let _ = writeln!(s, "- level {}: {}", l.name, fmt_vec(b, 4));
    }

    let _ = writeln!(s, "\n## Grading standard\n\n{}", r.standard.to_markdown());

    if let Some(v) = &r.validity {
        s.push_str("## Internal evaluation\n\n");
        s.push_str(&ValidityReport::markdown_table(std::slice::from_ref(v)));
    }
    if let Some(log) = &r.training_log {
        if let (Some(first), Some(last)) = (log.first(), log.last()) {
            let _ = writeln!(
                s,
                "\n## Training\n\n{} epochs; total loss {:.4} at epoch 1 and {:.4} at epoch {}.",
                log.len(),
                first.losses.total,
                last.losses.total,
                last.epoch
            );
        }
    }
    if !r.notes.is_empty() {
        s.push_str("\n## Notes\n\n");
        for n in &r.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}

pub fn render(r: &RunReport, format: Format, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    match format {
        Format::Markdown => {
            write_file(dir, "report.md", &render_markdown(r))?;
            match &r.factor_analysis {
                Some(fa) => write_file(dir, "scree.svg", &scree_svg(&fa.model.eigenvalues)),
                None => Ok(()),
            }
        }
        Format::Json => {
            write_file(dir, "run.json", &r.to_json()?)?;
            write_file(dir, "standard.json", &r.standard.to_json()?)?;
            let set = GeometrySet {
                method: Some(r.config.method),
                clusters: r.geometry.clone(),
            };
            write_file(dir, "geometry.json", &serde_json::to_string_pretty(&set)?)
        }
        Format::CsvBundle => {
            for (name, text) in csv_bundle(r) {
                write_file(dir, &name, &text)?;
            }
            Ok(())
        }
    }
}

/// Writes every rendering of `r` into `dir`.
pub fn write_run(r: &RunReport, dir: &Path) -> Result<()> {
    for f in [Format::Json, Format::Markdown, Format::CsvBundle] {
        render(r, f, dir)?;
    }
    Ok(())
}
