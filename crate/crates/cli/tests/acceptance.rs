//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};
use sqcsef::cluster_eval;
use sqcsef::cvcl::{self, CvclConfig, CvclModel, Preset, Stage};
use sqcsef::dataset;
use sqcsef::factors;
use sqcsef::grading::{GradingStandard, Relation};
use sqcsef::kmeans::{self, KMeansConfig};
use sqcsef::stats::{self, Distribution};
use sqcsef::Method;
use sqcsef_cli::config::PipelineConfig;
use sqcsef_cli::inputs::dataset_csv;
use sqcsef_cli::pipeline;
use sqcsef_cli::presets;
use sqcsef_cli::synth::{permutation_accuracy, planted_clusters, synth_generate, SynthSpec};

type Outcome = Result<String, String>;
type Bounds = [[f64; 6]; 2];
/// Printed continuous thresholds per level: height, root, weight, chlorophyll.
type PrintedLevels = [[f64; 4]; 2];

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    check(t < limit, format!("took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

/// Builds a standard by running the binary on the published geometry.
fn standard_from_cli(method: &str, dir: &Path) -> Result<GradingStandard, String> {
    let out = dir.join(method);
    let status = Command::new(env!("CARGO_BIN_EXE_sqcsef"))
        .arg("standard")
        .arg("--indicators")
        .arg(fixture("huangqiu.toml"))
        .arg("--inject-geometry")
        .arg(fixture(&format!("{method}_geometry.json")))
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        status.status.success(),
        format!("standard exited with {}", status.status),
    )?;
    let text = std::fs::read_to_string(out.join("standard.json")).map_err(|e| e.to_string())?;
    GradingStandard::from_json(&text).map_err(|e| e.to_string())
}

const KMEANS_BOUNDS: Bounds = [
    [0.6620, 0.6791, 0.6895, 0.5351, 0.5426, 0.7498],
    [0.4521, 0.4620, 0.7690, 0.3132, 0.3233, 0.4745],
];
const CVCL_BOUNDS: Bounds = [
    [0.5875, 0.5674, 0.7045, 0.4367, 0.5067, 0.6540],
    [0.4189, 0.4244, 0.7499, 0.3064, 0.2724, 0.4315],
];

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (method, printed) in [("kmeans", KMEANS_BOUNDS), ("cvcl", CVCL_BOUNDS)] {
        let s = standard_from_cli(method, dir.path())?;
        check(
            s.standardized_bounds.len() == 2,
            "expected two boundary vectors",
        )?;
        for (got, want) in s.standardized_bounds.iter().zip(printed) {
            for (g, w) in got.iter().zip(want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    let t = within_time(start, Duration::from_secs(1))?;
    check(worst <= 5e-4, format!("max deviation {worst:.2e} > 5e-4"))?;
    Ok(format!(
        "4 boundary vectors, max deviation {worst:.1e}, {t:.0?}"
    ))
}

const HEIGHT: usize = 0;
const DIAMETER: usize = 1;
const BRANCHES: usize = 2;
const ROOT: usize = 3;
const WEIGHT: usize = 4;
const CHLOROPHYLL: usize = 5;

fn criterion_2() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let targets = presets::huangqiu_targets();
    let mut count = 0;
    let mut worst: f64 = 0.0;
    let printed: [(&str, PrintedLevels, Bounds); 2] = [
        (
            "kmeans",
            [[46.8, 26.7, 55.35, 49.9], [36.6, 17.6, 35.77, 42.4]],
            KMEANS_BOUNDS,
        ),
        (
            "cvcl",
            [[43.2, 22.7, 52.13, 47.3], [35.0, 17.3, 31.23, 41.2]],
            CVCL_BOUNDS,
        ),
    ];
    for (method, table, bounds) in printed {
        let s = standard_from_cli(method, dir.path())?;
        for (li, row) in table.iter().enumerate() {
            let th = &s.levels[li].thresholds;
            for (&j, &want) in [HEIGHT, ROOT, WEIGHT, CHLOROPHYLL].iter().zip(row) {
                check(
                    th[j].relation == Relation::AtLeast,
                    format!("{method} {} relation", th[j].indicator),
                )?;
                let d = (th[j].value - want).abs();
                worst = worst.max(d);
                check(
                    d <= 0.05,
                    format!(
                        "{method} level {} {}: {} vs {want}",
                        li + 1,
                        th[j].indicator,
                        th[j].value
                    ),
                )?;
                count += 1;
            }
            // formula-consistent values from the printed boundary points
            let gd = &targets[DIAMETER];
            let want_gd = gd.min + bounds[li][DIAMETER] * (gd.max - gd.min);
            check(
                (th[DIAMETER].value - want_gd).abs() <= 2e-4,
                format!(
                    "{method} ground diameter {} vs {want_gd}",
                    th[DIAMETER].value
                ),
            )?;
            let lb = &targets[BRANCHES];
            let want_lb = (lb.max - bounds[li][BRANCHES] * (lb.max - lb.min)).floor();
            check(
                th[BRANCHES].relation == Relation::AtMost,
                "lateral branches must be an upper limit",
            )?;
            check(
                th[BRANCHES].value == want_lb,
                format!(
                    "{method} lateral branches {} vs {want_lb}",
                    th[BRANCHES].value
                ),
            )?;
            if method == "cvcl" {
                let expect = [2.0, 1.0][li];
                check(
                    th[BRANCHES].value == expect,
                    format!("S_cvcl lateral branches {}", th[BRANCHES].value),
                )?;
            }
        }
    }
    check(
        count == 16,
        format!("{count} continuous thresholds checked"),
    )?;
    Ok(format!(
        "16 continuous thresholds within {worst:.3} units; S_cvcl branches 2/1; ground diameter and S_kmeans branches \
         match the formula (reference values 0.495/0.425, 0.459/0.412 and 3/2 disagree with the indicator ranges)"
    ))
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sample = [37.9, 0.497, 0.0, 14.2, 52.82, 42.4];
    let km = standard_from_cli("kmeans", dir.path())?
        .grade_sample(&sample)
        .map_err(|e| e.to_string())?;
    let cv = standard_from_cli("cvcl", dir.path())?
        .grade_sample(&sample)
        .map_err(|e| e.to_string())?;
    check(
        km.name == "II",
        format!("S_kmeans grades sample 12 as {}", km.name),
    )?;
    check(
        cv.name == "I",
        format!("S_cvcl grades sample 12 as {}", cv.name),
    )?;
    Ok(format!(
        "S_kmeans level {} (conditions met {:?}), S_cvcl level {} (conditions met {:?})",
        km.name, km.conditions_met, cv.name, cv.conditions_met
    ))
}

fn criterion_4() -> Outcome {
    let listed = [3.922, 0.894, 0.607, 0.330, 0.219, 0.027];
    let pct = [65.372, 14.907, 10.123, 5.498, 3.650, 0.450];
    let cum = [65.372, 80.279, 90.402, 95.900, 99.550, 100.000];
    // the listed eigenvalues are 3-decimal roundings; the percentage columns
    // were computed before rounding, so use the eigenvalues of the published
    // correlation matrix and require that they round to the listed ones
    let model = factors::extract_factors(presets::huangqiu_correlation().view(), 3)
        .map_err(|e| e.to_string())?;
    for (e, l) in model.eigenvalues.iter().zip(listed) {
        check(
            (e * 1000.0).round() / 1000.0 == l,
            format!("eigenvalue {e} does not round to {l}"),
        )?;
    }
    let (p, c) = factors::variance_explained(&model.eigenvalues, 6);
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        worst = worst.max((p[i] - pct[i]).abs()).max((c[i] - cum[i]).abs());
    }
    check(
        worst <= 1e-3,
        format!("variance columns off by {worst:.4} pp"),
    )?;

    let w = factors::view_weights(&[2.585, 1.799, 1.040]).map_err(|e| e.to_string())?;
    let sum: f64 = w.iter().sum();
    check(
        (w[1] - 0.3317).abs() <= 1e-4,
        format!("weight 2 = {}", w[1]),
    )?;
    check(
        (w[2] - 0.1917).abs() <= 1e-4,
        format!("weight 3 = {}", w[2]),
    )?;
    check((sum - 1.0).abs() <= 1e-12, format!("weights sum to {sum}"))?;
    Ok(format!(
        "variance columns within {worst:.1e} pp; view weights ({:.4}, {:.4}, {:.4})",
        w[0], w[1], w[2]
    ))
}

fn toy_model() -> (CvclModel, cvcl::ViewData) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = Array2::from_shape_fn((10, 4), |_| rng.random_range(0.05..1.0));
    let data = cvcl::views_from_matrix(m.view(), &[vec![0, 1], vec![2, 3]]).expect("two views");
    let cfg = CvclConfig {
        k: 3,
        encoder_hidden: vec![5],
        latent_dim: 3,
        head_hidden: vec![4],
        alpha: 0.8,
        beta: 1.2,
        seed: 13,
        ..CvclConfig::default()
    };
    let mut model = CvclModel::new(&data.dims(), &cfg).expect("valid toy config");
    // zero biases let a sample with all hidden units dead land exactly on
    // a downstream ReLU kink, where central differences are one-sided
    for l in model.parameters_mut() {
        l.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    (model, data)
}

fn max_gradient_error(stage: Stage) -> Result<(f64, usize), String> {
    let (mut model, data) = toy_model();
    let (_, grads) = model
        .loss_and_gradients(&data, stage)
        .map_err(|e| e.to_string())?;
    let objective = |m: &CvclModel| {
        let p = m.total_loss(&data).expect("finite toy loss");
        match stage {
            Stage::Pretrain => p.l_pre,
            Stage::Train => p.total,
        }
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (t, g) in grads.iter().enumerate() {
        let (rows, cols) = g.weight.dim();
        for idx in 0..rows * cols + g.bias.len() {
            let analytic = if idx < rows * cols {
                g.weight[[idx / cols, idx % cols]]
            } else {
                g.bias[idx - rows * cols]
            };
            let bump = |m: &mut CvclModel, d: f64| {
                let l = &mut m.parameters_mut()[t];
                if idx < rows * cols {
                    l.weight[[idx / cols, idx % cols]] += d;
                } else {
                    l.bias[idx - rows * cols] += d;
                }
            };
            bump(&mut model, h);
            let up = objective(&model);
            bump(&mut model, -2.0 * h);
            let down = objective(&model);
            bump(&mut model, h);
            let fd = (up - down) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(analytic.abs()) + 1e-6;
            check(
                (fd - analytic).abs() <= tol,
                format!("{stage} tensor {t} entry {idx}: fd {fd} vs analytic {analytic}"),
            )?;
            worst = worst.max((fd - analytic).abs() / tol);
            checked += 1;
        }
    }
    Ok((worst, checked))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (w_pre, n) = max_gradient_error(Stage::Pretrain)?;
    let (w_full, _) = max_gradient_error(Stage::Train)?;
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "{n} parameters per objective, worst error/tolerance {:.2} (L_pre) and {:.2} (L), {t:.0?}",
        w_pre, w_full
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (m, truth) = planted_clusters(200, 6, 3, 0.08, 1).map_err(|e| e.to_string())?;
    let groups = vec![vec![0, 4, 5], vec![1, 3], vec![2]];
    let data = cvcl::views_from_matrix(m.view(), &groups).map_err(|e| e.to_string())?;
    let mut cfg = CvclConfig::preset(Preset::DeskScale, 3);
    cfg.view_weights = factors::view_weights(&[2.585, 1.799, 1.040]).map_err(|e| e.to_string())?;
    check(cfg.lr == 5e-4, format!("preset lr {}", cfg.lr))?;
    let (model, result) = cvcl::fit(&data, &cfg).map_err(|e| e.to_string())?;
    let acc = permutation_accuracy(&truth, &result.assignments);
    let first = model.log[0].losses.total;
    let twentieth = model.log[19].losses.total;
    check(
        model.log[19].epoch == 20,
        "log is not numbered from epoch 1",
    )?;
    let t = within_time(start, Duration::from_secs(300))?;
    check(acc >= 0.90, format!("accuracy {acc:.3} < 0.90"))?;
    check(
        twentieth < 0.5 * first,
        format!("epoch-20 loss {twentieth:.3} not below half of epoch-1 loss {first:.3}"),
    )?;
    Ok(format!(
        "accuracy {acc:.3}, loss {first:.1} at epoch 1 -> {twentieth:.1} at epoch 20, {t:.1?}"
    ))
}

fn exhaustive_optimum(data: ArrayView2<'_, f64>, k: usize) -> f64 {
    let m = data.nrows();
    let mut labels = vec![0usize; m];
    let mut best = f64::INFINITY;
    loop {
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            let mut total = 0.0;
            for c in 0..k {
                let members: Vec<usize> = (0..m).filter(|&i| labels[i] == c).collect();
                let mut mean = Array1::<f64>::zeros(data.ncols());
                for &i in &members {
                    mean += &data.row(i);
                }
                mean /= members.len() as f64;
                for &i in &members {
                    total += (&data.row(i) - &mean).mapv(|d| d * d).sum();
                }
            }
            best = best.min(total);
        }
        // next labeling in base k
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let m = rng.random_range(4..=8);
        let k = rng.random_range(2..=3);
        let dims = rng.random_range(1..=3);
        let data = Array2::from_shape_fn((m, dims), |_| rng.random::<f64>());
        let res = kmeans::fit(
            data.view(),
            &KMeansConfig {
                seed: inst,
                n_restarts: 20,
                ..KMeansConfig::new(k)
            },
        )
        .map_err(|e| e.to_string())?;
        let opt = exhaustive_optimum(data.view(), k);
        let d = (res.inertia - opt).abs();
        worst = worst.max(d);
        check(
            d <= 1e-9,
            format!(
                "instance {inst} (M={m}, k={k}): inertia {} vs optimum {opt}",
                res.inertia
            ),
        )?;
    }
    Ok(format!("50 instances, max |inertia - optimum| {worst:.1e}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Oracle {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
}

impl Oracle {
    fn members(&self, c: usize) -> Vec<&Vec<f64>> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p)
            .collect()
    }

    fn centroid(pts: &[&Vec<f64>]) -> Vec<f64> {
        let d = pts[0].len();
        (0..d)
            .map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64)
            .collect()
    }

    fn silhouette(&self) -> f64 {
        let mut total = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            let own = self.labels[i];
            let same: Vec<f64> = (0..self.points.len())
                .filter(|&j| j != i && self.labels[j] == own)
                .map(|j| dist(p, &self.points[j]))
                .collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().sum::<f64>() / same.len() as f64;
            let b = (0..self.k)
                .filter(|&c| c != own)
                .map(|c| {
                    let m = self.members(c);
                    m.iter().map(|q| dist(p, q)).sum::<f64>() / m.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        total / self.points.len() as f64
    }

    fn calinski_harabasz(&self) -> f64 {
        let all: Vec<&Vec<f64>> = self.points.iter().collect();
        let g = Self::centroid(&all);
        let (mut between, mut within) = (0.0, 0.0);
        for c in 0..self.k {
            let m = self.members(c);
            let cc = Self::centroid(&m);
            between += m.len() as f64 * dist(&cc, &g).powi(2);
            within += m.iter().map(|p| dist(p, &cc).powi(2)).sum::<f64>();
        }
        let n = self.points.len() as f64;
        let k = self.k as f64;
        (between / (k - 1.0)) / (within / (n - k))
    }

    fn davies_bouldin(&self) -> f64 {
        let cents: Vec<Vec<f64>> = (0..self.k)
            .map(|c| Self::centroid(&self.members(c)))
            .collect();
        let scatter: Vec<f64> = (0..self.k)
            .map(|c| {
                let m = self.members(c);
                m.iter().map(|p| dist(p, &cents[c])).sum::<f64>() / m.len() as f64
            })
            .collect();
        (0..self.k)
            .map(|i| {
                (0..self.k)
                    .filter(|&j| j != i)
                    .map(|j| (scatter[i] + scatter[j]) / dist(&cents[i], &cents[j]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / self.k as f64
    }
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + inst);
        let k = 2 + (inst as usize % 3);
        let points: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mut labels: Vec<usize> = (0..10).map(|i| i % k).collect();
        for i in (1..10).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let data = Array2::from_shape_fn((10, 2), |(i, j)| points[i][j]);
        let o = Oracle {
            points,
            labels: labels.clone(),
            k,
        };
        let pairs = [
            (
                "silhouette",
                cluster_eval::silhouette(data.view(), &labels),
                o.silhouette(),
            ),
            (
                "calinski-harabasz",
                cluster_eval::calinski_harabasz(data.view(), &labels),
                o.calinski_harabasz(),
            ),
            (
                "davies-bouldin",
                cluster_eval::davies_bouldin(data.view(), &labels),
                o.davies_bouldin(),
            ),
        ];
        for (name, got, want) in pairs {
            let got = got.map_err(|e| format!("{name}: {e}"))?;
            let d = (got - want).abs();
            worst = worst.max(d);
            check(
                d <= 1e-9,
                format!("instance {inst} {name}: {got} vs {want}"),
            )?;
        }
    }
    Ok(format!(
        "20 instances x 3 indices, max deviation {worst:.1e}"
    ))
}

fn criterion_9() -> Outcome {
    let mut normal_ok = 0;
    let mut exp_rejected = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
        let x = Array1::from_shape_fn(5000, |_| StandardNormal.sample(&mut rng));
        if stats::jarque_bera(x.view()).map_err(|e| e.to_string())?.p >= 0.01 {
            normal_ok += 1;
        }
        let y = Array1::from_shape_fn(5000, |_| Exp1.sample(&mut rng));
        if stats::jarque_bera(y.view()).map_err(|e| e.to_string())?.p < 0.01 {
            exp_rejected += 1;
        }
    }
    check(
        normal_ok >= 95,
        format!("normal samples accepted in {normal_ok}/100"),
    )?;
    check(
        exp_rejected >= 95,
        format!("exponential samples rejected in {exp_rejected}/100"),
    )?;

    let mut worst: f64 = 0.0;
    for x in [0.0, 0.1, 0.5, 1.0, 2.0, 3.7, 8.0, 20.0] {
        let chi = stats::tail_probability(Distribution::ChiSquare { dof: 2 }, x)
            .map_err(|e| e.to_string())?;
        worst = worst.max((chi - (1.0 - (-x / 2.0).exp())).abs());
    }
    for t in [-30.0, -2.5, -1.0, -0.2, 0.0, 0.7, 1.0, 4.0, 100.0] {
        let p = stats::tail_probability(Distribution::StudentT { dof: 1 }, t)
            .map_err(|e| e.to_string())?;
        worst = worst.max((p - (0.5 + t.atan() / std::f64::consts::PI)).abs());
    }
    let z0 = stats::tail_probability(Distribution::StdNormal, 0.0).map_err(|e| e.to_string())?;
    worst = worst.max((z0 - 0.5).abs());
    check(
        worst <= 1e-8,
        format!("tail probability off by {worst:.2e}"),
    )?;

    let mut rank_worst: f64 = 0.0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + trial);
        let x = Array1::from_shape_fn(50, |_| rng.random::<f64>());
        let y = Array1::from_shape_fn(50, |i| x[i] * 0.5 + rng.random::<f64>());
        let rs = stats::spearman(x.view(), y.view())
            .map_err(|e| e.to_string())?
            .coefficient;
        let rx = Array1::from(stats::average_ranks(x.view()));
        let ry = Array1::from(stats::average_ranks(y.view()));
        let pr = stats::pearson(rx.view(), ry.view())
            .map_err(|e| e.to_string())?
            .coefficient;
        rank_worst = rank_worst.max((rs - pr).abs());
    }
    check(
        rank_worst <= 1e-12,
        format!("Spearman vs Pearson of ranks: {rank_worst:.2e}"),
    )?;
    Ok(format!(
        "JB accepts {normal_ok}/100 normal, rejects {exp_rejected}/100 exponential; tails within {worst:.1e}; \
         Spearman vs ranked Pearson {rank_worst:.1e}"
    ))
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable run directory") {
            let p = entry.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).expect("readable artifact");
                files.push((
                    p.strip_prefix(dir).expect("inside run dir").to_owned(),
                    bytes,
                ));
            }
        }
    }
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let spec = SynthSpec {
        m: 200,
        correlation: presets::huangqiu_correlation(),
        targets: presets::huangqiu_targets(),
        seed: 7,
    };
    let raw = synth_generate(&spec, &presets::huangqiu_indicators()).map_err(|e| e.to_string())?;
    let std = dataset::normalize(&raw).map_err(|e| e.to_string())?;
    let back = std.denormalize_all().map_err(|e| e.to_string())?;
    let worst = (&back - &raw.rows())
        .iter()
        .fold(0.0f64, |a, d| a.max(d.abs()));
    check(
        worst <= 1e-12,
        format!("normalize/denormalize error {worst:.2e}"),
    )?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("data.csv");
    let toml = dir.path().join("indicators.toml");
    std::fs::write(&csv, dataset_csv(&raw)).map_err(|e| e.to_string())?;
    std::fs::write(&toml, presets::huangqiu_config().to_toml()).map_err(|e| e.to_string())?;
    let mut n_files = 0;
    for method in [Method::Kmeans, Method::Cvcl] {
        let mut trees = Vec::new();
        for run in 0..2 {
            let mut cfg = PipelineConfig::new(&csv, &toml, method, 3);
            cfg.seed = 11;
            cfg.allow_inadequate = true;
            cfg.out = dir.path().join(format!("{method}-{run}"));
            pipeline::run_pipeline(&cfg).map_err(|e| e.to_string())?;
            trees.push(read_tree(&cfg.out));
        }
        check(!trees[0].is_empty(), "no artifacts written")?;
        check(trees[0] == trees[1], format!("{method} runs differ"))?;
        n_files += trees[0].len();
    }
    Ok(format!(
        "round-trip error {worst:.1e}; {n_files} artifacts byte-identical across repeated kmeans and cvcl runs"
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("boundary-point reproduction", criterion_1),
        ("threshold reproduction", criterion_2),
        ("sample-12 grading", criterion_3),
        ("factor tables", criterion_4),
        ("gradient correctness", criterion_5),
        ("cvcl behavior", criterion_6),
        ("k-means oracle", criterion_7),
        ("validity-index oracles", criterion_8),
        ("statistics suite", criterion_9),
        ("round-trip and determinism", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
