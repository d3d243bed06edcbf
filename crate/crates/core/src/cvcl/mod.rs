//! Weighted multi-view contrastive deep clustering.
//!
//! Each view has its own autoencoder; a shared head maps every latent code
//! to a soft cluster assignment. Training runs in two full-batch stages:
//! reconstruction only, then reconstruction plus the cross-view contrastive
//! loss and the cluster-balance regularizer.

pub mod nn;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusteringResult, Method};
use crate::dataset::StandardizedDataset;
use crate::error::{Error, Result};
use crate::factors::ViewPartition;
use nn::{Adam, AdamConfig, Linear, LinearGrad, Mlp, MlpCache};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    DeskScale,
    PaperScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvclConfig {
    pub k: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Hidden widths of the shared head; a final layer maps to `k` logits.
    pub head_hidden: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub pre_epochs: usize,
    pub train_epochs: usize,
    pub seed: u64,
    /// One positive weight per view, summing to one. Empty means uniform.
    pub view_weights: Vec<f64>,
}

impl Default for CvclConfig {
    fn default() -> Self {
        CvclConfig::preset(Preset::DeskScale, 3)
    }
}

impl CvclConfig {
    pub fn preset(preset: Preset, k: usize) -> Self {
        let (encoder_hidden, latent_dim, head_hidden) = match preset {
            Preset::DeskScale => (vec![16, 32, 64], 128, vec![128, 64]),
            Preset::PaperScale => (vec![64, 128, 256, 512, 1024], 2048, vec![2048, 1024, 1024]),
        };
        CvclConfig {
            k,
            encoder_hidden,
            latent_dim,
            head_hidden,
            alpha: 1.0,
            beta: 1.0,
            lr: 5e-4,
            pre_epochs: 50,
            train_epochs: 150,
            seed: 0,
            view_weights: Vec::new(),
        }
    }

    pub fn validate(&self, n_views: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return bad(format!("cvcl needs k >= 2, got {}", self.k));
        }
        if self.latent_dim == 0
            || self
                .encoder_hidden
                .iter()
                .chain(&self.head_hidden)
                .any(|&w| w == 0)
        {
            return bad("layer widths must be positive".into());
        }
        if !(self.alpha >= 0.0)
            || !(self.beta >= 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return bad("alpha and beta must be finite and non-negative".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.pre_epochs == 0 || self.train_epochs == 0 {
            return bad("pre_epochs and train_epochs must be positive".into());
        }
        if !self.view_weights.is_empty() {
            check_weights(&self.view_weights, n_views)?;
            let sum: f64 = self.view_weights.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("view weights sum to {sum}, not 1"));
            }
        }
        Ok(())
    }

    /// Configured weights, or uniform ones when none were given.
    pub fn weights_for(&self, n_views: usize) -> Vec<f64> {
        if self.view_weights.is_empty() {
            vec![1.0 / n_views as f64; n_views]
        } else {
            self.view_weights.clone()
        }
    }
}

fn check_weights(w: &[f64], n_views: usize) -> Result<()> {
    if w.len() != n_views {
        return Err(Error::Config(format!(
            "{} view weights for {n_views} views",
            w.len()
        )));
    }
    if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !w.iter().any(|x| *x > 0.0) {
        return Err(Error::Config(
            "view weights must be non-negative, finite and not all zero".into(),
        ));
    }
    Ok(())
}

/// Column blocks of the standardized matrix, one per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewData {
    pub views: Vec<Array2<f64>>,
    pub indicators: Vec<Vec<usize>>,
    /// The full standardized matrix; cluster centroids are taken from it.
    pub full: Array2<f64>,
}

impl ViewData {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.full.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(Array2::ncols).collect()
    }
}

pub fn build_views(d: &StandardizedDataset, p: &ViewPartition) -> Result<ViewData> {
    views_from_matrix(
        d.matrix(),
        &p.views
            .iter()
            .map(|v| v.indicators.clone())
            .collect::<Vec<_>>(),
    )
}

pub fn views_from_matrix(m: ArrayView2<'_, f64>, groups: &[Vec<usize>]) -> Result<ViewData> {
    if groups.is_empty() {
        return Err(Error::Partition("no views".into()));
    }
    let n = m.ncols();
    let mut views = Vec::with_capacity(groups.len());
    for (v, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Partition(format!("view {v} is empty")));
        }
        if let Some(&bad) = g.iter().find(|&&j| j >= n) {
            return Err(Error::Partition(format!(
                "indicator index {bad} out of range"
            )));
        }
        views.push(m.select(Axis(1), g));
    }
    Ok(ViewData {
        views,
        indicators: groups.to_vec(),
        full: m.to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrices {
    pub h: Vec<Array2<f64>>,
    pub p: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Train,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_pre: f64,
    pub l_c: f64,
    pub l_a: f64,
    /// `l_pre + alpha * l_c + beta * l_a`.
    pub total: f64,
}

/// Losses at the parameters used for the update of `epoch` (1-based, counted
/// across both stages).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    #[serde(flatten)]
    pub losses: LossParts,
}

impl EpochRecord {
    /// The quantity minimized in this record's stage.
    pub fn objective(&self) -> f64 {
        match self.stage {
            Stage::Pretrain => self.losses.l_pre,
            Stage::Train => self.losses.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvclModel {
    pub config: CvclConfig,
    pub view_dims: Vec<usize>,
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    pub head: Mlp,
    pub log: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: CvclModel,
}

struct ViewForward {
    enc: MlpCache,
    dec: MlpCache,
    head: MlpCache,
    recon: Array2<f64>,
    h: Array2<f64>,
}

impl CvclModel {
    /// Fresh parameters drawn from `cfg.seed`. Decoders mirror the encoder widths.
    pub fn new(view_dims: &[usize], cfg: &CvclConfig) -> Result<Self> {
        cfg.validate(view_dims.len())?;
        if view_dims.is_empty() || view_dims.contains(&0) {
            return Err(Error::Partition(
                "every view needs at least one indicator".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut encoders = Vec::new();
        let mut decoders = Vec::new();
        for &d in view_dims {
            let mut widths = vec![d];
            widths.extend(&cfg.encoder_hidden);
            widths.push(cfg.latent_dim);
            encoders.push(Mlp::new(&widths, &mut rng));
            widths.reverse();
            decoders.push(Mlp::new(&widths, &mut rng));
        }
        let mut head_widths = vec![cfg.latent_dim];
        head_widths.extend(&cfg.head_hidden);
        head_widths.push(cfg.k);
        let head = Mlp::new(&head_widths, &mut rng);
        Ok(CvclModel {
            config: cfg.clone(),
            view_dims: view_dims.to_vec(),
            encoders,
            decoders,
            head,
            log: Vec::new(),
        })
    }

    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }

    fn check_data(&self, data: &ViewData) -> Result<()> {
        if data.dims() != self.view_dims {
            return Err(Error::Partition(format!(
                "model expects view widths {:?}, data has {:?}",
                self.view_dims,
                data.dims()
            )));
        }
        if data.n_samples() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(())
    }

    /// Every parameter tensor in a fixed order: encoders, decoders, head.
    pub fn parameters(&self) -> Vec<&Linear> {
        self.encoders
            .iter()
            .chain(&self.decoders)
            .chain(std::iter::once(&self.head))
            .flat_map(|m| m.layers.iter())
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Linear> {
        self.encoders
            .iter_mut()
            .chain(self.decoders.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .flat_map(|m| m.layers.iter_mut())
            .collect()
    }

    fn forward(&self, data: &ViewData) -> Vec<ViewForward> {
        data.views
            .iter()
            .enumerate()
            .map(|(v, e)| {
                let (z, enc) = self.encoders[v].forward_cached(e.view());
                let (recon, dec) = self.decoders[v].forward_cached(z.view());
                let (logits, head) = self.head.forward_cached(z.view());
                ViewForward {
                    enc,
                    dec,
                    head,
                    recon,
                    h: softmax_rows(&logits),
                }
            })
            .collect()
    }

    /// Head outputs `H` per view.
    pub fn soft_assign(&self, data: &ViewData) -> Result<Vec<Array2<f64>>> {
        self.check_data(data)?;
        Ok(data
            .views
            .iter()
            .enumerate()
            .map(|(v, e)| {
                softmax_rows(&self.head.forward(self.encoders[v].forward(e.view()).view()))
            })
            .collect())
    }

    pub fn assignment_matrices(&self, data: &ViewData) -> Result<AssignmentMatrices> {
        let h = self.soft_assign(data)?;
        let p = h
            .iter()
            .map(|h| target_distribution(h.view()))
            .collect::<Result<_>>()?;
        Ok(AssignmentMatrices { h, p })
    }

    pub fn total_loss(&self, data: &ViewData) -> Result<LossParts> {
        self.check_data(data)?;
        let fw = self.forward(data);
        self.losses_of(data, &fw)
    }

    fn losses_of(&self, data: &ViewData, fw: &[ViewForward]) -> Result<LossParts> {
        let l_pre = reconstruction_loss(data, fw);
        let ps: Vec<Array2<f64>> = fw
            .iter()
            .map(|f| target_distribution(f.h.view()))
            .collect::<Result<_>>()?;
        let l_c = if ps.len() >= 2 {
            contrastive_loss(&ps)?
        } else {
            0.0
        };
        let l_a = entropy_regularizer(&ps);
        let cfg = &self.config;
        Ok(LossParts {
            l_pre,
            l_c,
            l_a,
            total: l_pre + cfg.alpha * l_c + cfg.beta * l_a,
        })
    }

    /// Losses at the current parameters and the gradient of the `stage`
    /// objective with respect to every tensor in [`Self::parameters`] order.
    pub fn loss_and_gradients(
        &self,
        data: &ViewData,
        stage: Stage,
    ) -> Result<(LossParts, Vec<LinearGrad>)> {
        self.check_data(data)?;
        let fw = self.forward(data);
        let parts = self.losses_of(data, &fw)?;
        let n_v = self.n_views();

        let mut grad_z: Vec<Array2<f64>> = Vec::with_capacity(n_v);
        let mut dec_grads = Vec::with_capacity(n_v);
        for (v, f) in fw.iter().enumerate() {
            let g_recon = (&f.recon - &data.views[v]) * 2.0;
            let (g, gz) = self.decoders[v].backward(&f.dec, g_recon);
            dec_grads.push(g);
            grad_z.push(gz);
        }

        let mut head_grad: Vec<LinearGrad> = self
            .head
            .layers
            .iter()
            .map(LinearGrad::zeros_like)
            .collect();
        if stage == Stage::Train && (self.config.alpha != 0.0 || self.config.beta != 0.0) {
            let ps: Vec<Array2<f64>> = fw
                .iter()
                .map(|f| target_distribution(f.h.view()))
                .collect::<Result<_>>()?;
            let mut g_p: Vec<Array2<f64>> = ps.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
            if n_v >= 2 && self.config.alpha != 0.0 {
                for (v, g) in contrastive_grad(&ps)?.into_iter().enumerate() {
                    g_p[v].scaled_add(self.config.alpha, &g);
                }
            }
            if self.config.beta != 0.0 {
                for (v, p) in ps.iter().enumerate() {
                    g_p[v].scaled_add(self.config.beta, &entropy_grad(p.view()));
                }
            }
            for (v, f) in fw.iter().enumerate() {
                let g_h = target_distribution_backward(f.h.view(), ps[v].view(), g_p[v].view());
                let g_logits = softmax_backward(f.h.view(), g_h.view());
                let (g, gz) = self.head.backward(&f.head, g_logits);
                for (acc, gi) in head_grad.iter_mut().zip(&g) {
                    acc.add_assign(gi);
                }
                grad_z[v] += &gz;
            }
        }

        let mut enc_grads = Vec::with_capacity(n_v);
        for (v, f) in fw.iter().enumerate() {
            let (g, _) = self.encoders[v].backward(&f.enc, std::mem::take(&mut grad_z[v]));
            enc_grads.push(g);
        }
        let grads = enc_grads
            .into_iter()
            .flatten()
            .chain(dec_grads.into_iter().flatten())
            .chain(head_grad)
            .collect();
        Ok((parts, grads))
    }

    fn run_stage(&mut self, data: &ViewData, stage: Stage, epochs: usize) -> Result<()> {
        self.check_data(data)?;
        let refs = self.parameters();
        let mut adam = Adam::new(AdamConfig::with_lr(self.config.lr), &refs);
        for _ in 0..epochs {
            let epoch = self.log.len() + 1;
            let (parts, grads) = self.loss_and_gradients(data, stage)?;
            let objective = match stage {
                Stage::Pretrain => parts.l_pre,
                Stage::Train => parts.total,
            };
            let grads_finite = grads
                .iter()
                .all(|g| g.weight.iter().chain(&g.bias).all(|x| x.is_finite()));
            if !objective.is_finite() || !grads_finite {
                return Err(Error::Divergence {
                    stage: stage.to_string(),
                    epoch,
                });
            }
            self.log.push(EpochRecord {
                epoch,
                stage,
                losses: parts,
            });
            log::debug!("cvcl {stage} epoch {epoch}: objective {objective:.6}");
            let n_head = self.head.layers.len();
            let mut params = self.parameters_mut();
            if stage == Stage::Pretrain {
                // the head does not take part in reconstruction
                let n = params.len() - n_head;
                adam_step_prefix(&mut adam, &mut params, grads, n);
            } else {
                adam.step(&mut params, &grads);
            }
        }
        Ok(())
    }

    /// Autoencoder stage: minimizes the reconstruction loss alone.
    pub fn pretrain(&mut self, data: &ViewData) -> Result<()> {
        self.run_stage(data, Stage::Pretrain, self.config.pre_epochs)
    }

    /// Joint stage: minimizes `l_pre + alpha * l_c + beta * l_a`.
    pub fn train(&mut self, data: &ViewData) -> Result<()> {
        self.run_stage(data, Stage::Train, self.config.train_epochs)
    }

    /// Weighted argmax of the per-view target distributions.
    pub fn assign(&self, data: &ViewData, weights: &[f64]) -> Result<ClusteringResult> {
        check_weights(weights, self.n_views())?;
        let mats = self.assignment_matrices(data)?;
        let labels = weighted_argmax(&mats.p, weights);
        let mut result = ClusteringResult::from_labels(data.full.view(), &labels, Method::Cvcl)?;
        for note in &result.notes {
            log::warn!("cvcl: {note}");
        }
        result.iterations = self.log.len();
        Ok(result)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        cp.model.check_shapes()?;
        Ok(cp.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check_shapes(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("inconsistent checkpoint: {m}")));
        let n_v = self.view_dims.len();
        if n_v == 0 || self.encoders.len() != n_v || self.decoders.len() != n_v {
            return bad("view count does not match the networks".into());
        }
        if let Err(e) = self.config.validate(n_v) {
            return bad(e.to_string());
        }
        let chain_ok = |m: &Mlp| {
            !m.layers.is_empty()
                && m.layers.iter().all(|l| l.bias.len() == l.fan_out())
                && m.layers.windows(2).all(|w| w[0].fan_out() == w[1].fan_in())
        };
        let latent = self.config.latent_dim;
        for v in 0..n_v {
            let (e, d) = (&self.encoders[v], &self.decoders[v]);
            if !chain_ok(e) || !chain_ok(d) {
                return bad(format!("view {v} layers do not chain"));
            }
            let mut mirrored = d.widths();
            mirrored.reverse();
            if e.widths() != mirrored
                || e.widths()[0] != self.view_dims[v]
                || *e.widths().last().unwrap() != latent
            {
                return bad(format!("view {v} widths are not a mirrored autoencoder"));
            }
        }
        let hw = self.head.widths();
        if !chain_ok(&self.head) || hw[0] != latent || *hw.last().unwrap() != self.config.k {
            return bad("head widths".into());
        }
        let finite = self
            .parameters()
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()));
        if !finite {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }
}

fn adam_step_prefix(adam: &mut Adam, params: &mut [&mut Linear], grads: Vec<LinearGrad>, n: usize) {
    // zero gradients leave Adam moments at zero, so masked tensors stay put
    let grads: Vec<LinearGrad> = grads
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            if i < n {
                g
            } else {
                LinearGrad {
                    weight: g.weight * 0.0,
                    bias: g.bias * 0.0,
                }
            }
        })
        .collect();
    adam.step(params, &grads);
}

/// Pretrains, trains and assigns with the configured (or uniform) weights.
pub fn fit(data: &ViewData, cfg: &CvclConfig) -> Result<(CvclModel, ClusteringResult)> {
    let mut model = CvclModel::new(&data.dims(), cfg)?;
    model.pretrain(data)?;
    model.train(data)?;
    let result = model.assign(data, &cfg.weights_for(data.n_views()))?;
    Ok((model, result))
}

fn reconstruction_loss(data: &ViewData, fw: &[ViewForward]) -> f64 {
    fw.iter()
        .zip(&data.views)
        .map(|(f, e)| (&f.recon - e).mapv(|d| d * d).sum())
        .sum()
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn softmax_backward(h: ArrayView2<'_, f64>, g_h: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for ((mut o, hr), gr) in out.rows_mut().into_iter().zip(h.rows()).zip(g_h.rows()) {
        let dot = hr.dot(&gr);
        o.assign(&(&hr * &(&gr - dot)));
    }
    out
}

/// Sharpened targets `p_rc = (h_rc^2 / f_c) / sum_j (h_rj^2 / f_j)` with
/// `f_c` the column sums of `h`.
pub fn target_distribution(h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let f = h.sum_axis(Axis(0));
    if let Some(c) = f.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate(format!(
            "cluster {c} has no assignment mass"
        )));
    }
    let mut g = h.mapv(|x| x * x);
    g /= &f;
    let s = g.sum_axis(Axis(1));
    if let Some(r) = s.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Degenerate(format!(
            "sample {r} has an all-zero assignment row"
        )));
    }
    g /= &s.insert_axis(Axis(1));
    Ok(g)
}

fn target_distribution_backward(
    h: ArrayView2<'_, f64>,
    p: ArrayView2<'_, f64>,
    g_p: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let f = h.sum_axis(Axis(0));
    let mut g2 = h.mapv(|x| x * x);
    g2 /= &f;
    let s = g2.sum_axis(Axis(1));
    // d/dg of p = g / rowsum(g)
    let row_dot = (&g_p * &p).sum_axis(Axis(1));
    let dg = (&g_p - &row_dot.insert_axis(Axis(1))) / &s.insert_axis(Axis(1));
    // g_rc = h_rc^2 / f_c, f_c = sum_i h_ic
    let col_term: Array1<f64> = (&dg * &g2).sum_axis(Axis(0)) / &f;
    let mut out = &dg * &h * 2.0 / &f;
    out -= &col_term;
    out
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(
            "cosine similarity of vectors of different length".into(),
        ));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Cosine similarity of every column pair, plus the unit-normalized columns
/// and column norms needed for the gradient.
struct ColumnCosines {
    s: Array2<f64>,
    unit_a: Array2<f64>,
    unit_b: Array2<f64>,
    norm_a: Array1<f64>,
    norm_b: Array1<f64>,
}

fn unit_columns(p: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = p.map_axis(Axis(0), |c| c.dot(&c).sqrt());
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::Domain(
            "assignment column is identically zero".into(),
        ));
    }
    Ok((p / &norms, norms))
}

fn column_cosines(a: &Array2<f64>, b: &Array2<f64>) -> Result<ColumnCosines> {
    let (unit_a, norm_a) = unit_columns(a)?;
    let (unit_b, norm_b) = unit_columns(b)?;
    Ok(ColumnCosines {
        s: unit_a.t().dot(&unit_b),
        unit_a,
        unit_b,
        norm_a,
        norm_b,
    })
}

/// `l^(1,2)` between the columns of two views and its gradients with
/// respect to both matrices.
fn pair_loss(p1: &Array2<f64>, p2: &Array2<f64>) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let k = p1.ncols();
    let within = column_cosines(p1, p1)?;
    let cross = column_cosines(p1, p2)?;
    let e_w = within.s.mapv(f64::exp);
    let e_x = cross.s.mapv(f64::exp);
    let mut loss = 0.0;
    // weights on each similarity term: w_within[j,k], w_cross[j,k]
    let mut w_within = Array2::zeros((k, k));
    let mut w_cross = Array2::zeros((k, k));
    for c in 0..k {
        let denom: f64 =
            (0..k).filter(|&j| j != c).map(|j| e_w[[j, c]]).sum::<f64>() + e_x.column(c).sum();
        loss += denom.ln() - cross.s[[c, c]];
        for j in 0..k {
            if j != c {
                w_within[[j, c]] = e_w[[j, c]] / denom / k as f64;
            }
            w_cross[[j, c]] = e_x[[j, c]] / denom / k as f64;
        }
        w_cross[[c, c]] -= 1.0 / k as f64;
    }
    loss /= k as f64;

    // ds(a,b)/da = (b_hat - s a_hat) / |a|
    let mut g1 = Array2::zeros(p1.raw_dim());
    let mut g2 = Array2::zeros(p2.raw_dim());
    for j in 0..k {
        for c in 0..k {
            let w = w_within[[j, c]];
            if w != 0.0 {
                let s = within.s[[j, c]];
                let (uj, uc) = (within.unit_a.column(j), within.unit_a.column(c));
                let gj = (&uc - &(&uj * s)) * (w / within.norm_a[j]);
                let gc = (&uj - &(&uc * s)) * (w / within.norm_a[c]);
                let mut col = g1.column_mut(j);
                col += &gj;
                let mut col = g1.column_mut(c);
                col += &gc;
            }
            let w = w_cross[[j, c]];
            let s = cross.s[[j, c]];
            let (ua, ub) = (cross.unit_a.column(j), cross.unit_b.column(c));
            let ga = (&ub - &(&ua * s)) * (w / cross.norm_a[j]);
            let gb = (&ua - &(&ub * s)) * (w / cross.norm_b[c]);
            let mut col = g1.column_mut(j);
            col += &ga;
            let mut col = g2.column_mut(c);
            col += &gb;
        }
    }
    Ok((loss, g1, g2))
}

/// `L_c = 1/2 sum over ordered view pairs of l^(v1,v2)`.
pub fn contrastive_loss(ps: &[Array2<f64>]) -> Result<f64> {
    if ps.len() < 2 {
        return Err(Error::Domain(
            "contrastive loss needs at least two views".into(),
        ));
    }
    let mut total = 0.0;
    for a in 0..ps.len() {
        for b in 0..ps.len() {
            if a != b {
                total += pair_loss(&ps[a], &ps[b])?.0;
            }
        }
    }
    Ok(0.5 * total)
}

fn contrastive_grad(ps: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    let mut grads: Vec<Array2<f64>> = ps.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
    for a in 0..ps.len() {
        for b in 0..ps.len() {
            if a != b {
                let (_, ga, gb) = pair_loss(&ps[a], &ps[b])?;
                grads[a].scaled_add(0.5, &ga);
                grads[b].scaled_add(0.5, &gb);
            }
        }
    }
    Ok(grads)
}

/// Negative entropy of each view's cluster-size distribution, summed.
pub fn entropy_regularizer(ps: &[Array2<f64>]) -> f64 {
    ps.iter()
        .map(|p| {
            let m = p.nrows() as f64;
            p.sum_axis(Axis(0))
                .iter()
                .map(|s| s / m)
                .filter(|&q| q > 0.0)
                .map(|q| q * q.ln())
                .sum::<f64>()
        })
        .sum()
}

fn entropy_grad(p: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = p.nrows() as f64;
    let q = p.sum_axis(Axis(0)) / m;
    let col = q.mapv(|q| if q > 0.0 { (q.ln() + 1.0) / m } else { 0.0 });
    Array2::from_shape_fn(p.raw_dim(), |(_, c)| col[c])
}

/// Per-sample argmax of `sum_v w_v p^(v)`; ties go to the lower cluster.
pub fn weighted_argmax(ps: &[Array2<f64>], weights: &[f64]) -> Vec<usize> {
    let (m, k) = ps[0].dim();
    let n_v = ps.len() as f64;
    (0..m)
        .map(|i| {
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..k {
                let score = ps
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| w * p[[i, c]])
                    .sum::<f64>()
                    / n_v;
                if score > best.1 {
                    best = (c, score);
                }
            }
            best.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_data() -> ViewData {
        // offset keeps pre-activations away from the ReLU kink at zero bias
        let m = Array2::from_shape_fn((12, 3), |(i, j)| {
            ((i * 7 + j * 3) % 11) as f64 / 10.0 + 0.037
        });
        views_from_matrix(m.view(), &[vec![0, 2], vec![1]]).unwrap()
    }

    fn toy_config() -> CvclConfig {
        CvclConfig {
            k: 3,
            encoder_hidden: vec![5],
            latent_dim: 4,
            head_hidden: vec![6],
            alpha: 0.7,
            beta: 1.3,
            seed: 21,
            ..CvclConfig::default()
        }
    }

    #[test]
    fn target_distribution_examples() {
        let p = target_distribution(array![[0.6, 0.4], [0.2, 0.8]].view()).unwrap();
        assert!((p[[0, 0]] - 0.7714).abs() < 1e-4);
        assert!((p[[0, 1]] - 0.2286).abs() < 1e-4);
        // (0.04 / 0.8) / (0.04 / 0.8 + 0.64 / 1.2) = 3 / 35
        assert!((p[[1, 0]] - 3.0 / 35.0).abs() < 1e-12);
        assert!((p[[1, 1]] - 32.0 / 35.0).abs() < 1e-12);

        let uniform = Array2::from_elem((4, 3), 1.0 / 3.0);
        let pu = target_distribution(uniform.view()).unwrap();
        assert!(pu.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));

        let onehot = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(target_distribution(onehot.view()).unwrap(), onehot);

        let dead = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(matches!(
            target_distribution(dead.view()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cosine_examples() {
        assert!(
            (cosine_similarity(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() - 10.0 / 14.0).abs()
                < 1e-15
        );
        assert!((cosine_similarity(&[2.0, 1.0], &[2.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn contrastive_loss_orthonormal_columns() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let per_pair = (2.0 + 1f64.exp()).ln() - 1.0;
        let lc = contrastive_loss(&[p.clone(), p.clone()]).unwrap();
        // two ordered pairs, halved
        assert!((lc - per_pair).abs() < 1e-12);
        assert!(contrastive_loss(std::slice::from_ref(&p)).is_err());
        let zero_col = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(contrastive_loss(&[p, zero_col]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let m = 10;
        let p = Array2::from_shape_fn((m, 3), |(i, c)| [0.5, 0.3, 0.2][c] + 0.0 * i as f64);
        let la = entropy_regularizer(&[p]);
        assert!(
            (la - (0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln())).abs() < 1e-12
        );
        assert!((la + 1.0297).abs() < 1e-4);
        let balanced = Array2::from_elem((6, 3), 1.0 / 3.0);
        let la = entropy_regularizer(&[balanced.clone(), balanced]);
        assert!((la + 2.0 * 3f64.ln()).abs() < 1e-12);
        let one = Array2::from_shape_fn((5, 2), |(_, c)| if c == 0 { 1.0 } else { 0.0 });
        assert_eq!(entropy_regularizer(&[one]), 0.0);
    }

    #[test]
    fn weighted_argmax_examples() {
        let p1 = array![[0.6, 0.4]];
        let p2 = array![[0.2, 0.8]];
        assert_eq!(
            weighted_argmax(&[p1.clone(), p2.clone()], &[0.4766, 0.3317]),
            vec![1]
        );
        assert_eq!(
            weighted_argmax(&[p1.clone(), p2.clone()], &[1.0, 0.0]),
            vec![0]
        );
        assert_eq!(weighted_argmax(&[p1, p2], &[4.766, 3.317]), vec![1]);
        let tie = array![[0.5, 0.5]];
        assert_eq!(weighted_argmax(&[tie], &[1.0]), vec![0]);
    }

    #[test]
    fn zero_head_gives_uniform_rows() {
        let data = toy_data();
        let mut model = CvclModel::new(&data.dims(), &toy_config()).unwrap();
        for l in &mut model.head.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let h = model.soft_assign(&data).unwrap();
        assert!(h
            .iter()
            .all(|h| h.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15)));
    }

    #[test]
    fn build_views_slices_columns() {
        let m = Array2::from_shape_fn((4, 6), |(i, j)| (i * 6 + j) as f64);
        let v = views_from_matrix(m.view(), &[vec![0, 4, 5], vec![1, 3], vec![2]]).unwrap();
        assert_eq!(v.dims(), vec![3, 2, 1]);
        assert_eq!(v.views[0].column(1), m.column(4));
        let all = views_from_matrix(m.view(), &[(0..6).collect()]).unwrap();
        assert_eq!(all.views[0], m);
        assert!(matches!(
            views_from_matrix(m.view(), &[vec![0], vec![]]),
            Err(Error::Partition(_))
        ));
    }

    fn check_gradients(stage: Stage) {
        let data = toy_data();
        let mut model = CvclModel::new(&data.dims(), &toy_config()).unwrap();
        let (_, grads) = model.loss_and_gradients(&data, stage).unwrap();
        let objective = |m: &CvclModel| {
            let p = m.total_loss(&data).unwrap();
            match stage {
                Stage::Pretrain => p.l_pre,
                Stage::Train => p.total,
            }
        };
        let h = 1e-6;
        for (t, g) in grads.iter().enumerate() {
            for idx in 0..g.weight.len() + g.bias.len() {
                let analytic = {
                    if idx < g.weight.len() {
                        g.weight[[idx / g.weight.ncols(), idx % g.weight.ncols()]]
                    } else {
                        g.bias[idx - g.weight.len()]
                    }
                };
                let bump = |m: &mut CvclModel, d: f64| {
                    let l = &mut m.parameters_mut()[t];
                    let wl = l.weight.len();
                    if idx < wl {
                        let cols = l.weight.ncols();
                        l.weight[[idx / cols, idx % cols]] += d;
                    } else {
                        l.bias[idx - wl] += d;
                    }
                };
                bump(&mut model, h);
                let up = objective(&model);
                bump(&mut model, -2.0 * h);
                let down = objective(&model);
                bump(&mut model, h);
                let fd = (up - down) / (2.0 * h);
                let tol = 1e-4 * fd.abs().max(analytic.abs()) + 1e-6;
                assert!(
                    (fd - analytic).abs() <= tol,
                    "tensor {t} entry {idx}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn pretrain_gradients_match_finite_differences() {
        check_gradients(Stage::Pretrain);
    }

    #[test]
    fn full_gradients_match_finite_differences() {
        check_gradients(Stage::Train);
    }

    #[test]
    fn linear_autoencoder_reaches_identity() {
        let data = toy_data();
        let cfg = CvclConfig {
            encoder_hidden: vec![],
            latent_dim: 2,
            lr: 0.01,
            pre_epochs: 4000,
            ..toy_config()
        };
        let only_first = views_from_matrix(data.full.view(), &[vec![0, 2]]).unwrap();
        let mut model = CvclModel::new(&only_first.dims(), &cfg).unwrap();
        model.pretrain(&only_first).unwrap();
        let last = model.log.last().unwrap().losses.l_pre;
        assert!(last < 1e-6, "final reconstruction loss {last}");
        assert!(model.log.iter().all(|r| r.losses.l_pre.is_finite()));
        assert!(last <= model.log[0].losses.l_pre);
    }

    #[test]
    fn alpha_beta_zero_total_is_reconstruction() {
        let data = toy_data();
        let cfg = CvclConfig {
            alpha: 0.0,
            beta: 0.0,
            ..toy_config()
        };
        let model = CvclModel::new(&data.dims(), &cfg).unwrap();
        let p = model.total_loss(&data).unwrap();
        assert_eq!(p.total, p.l_pre);
    }

    #[test]
    fn training_is_deterministic_and_checkpoint_roundtrips() {
        let data = toy_data();
        let cfg = CvclConfig {
            pre_epochs: 5,
            train_epochs: 5,
            ..toy_config()
        };
        let (a, ra) = fit(&data, &cfg).unwrap();
        let (b, rb) = fit(&data, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(ra, rb);
        assert_eq!(a.log.len(), 10);
        let reloaded = CvclModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(reloaded, a);
        let w = cfg.weights_for(2);
        assert_eq!(
            reloaded.assign(&data, &w).unwrap(),
            a.assign(&data, &w).unwrap()
        );
        let mut broken: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        broken["version"] = 99.into();
        assert!(CvclModel::from_json(&broken.to_string()).is_err());
    }
}
