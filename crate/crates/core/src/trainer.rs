//! Full-graph training of the two-branch autoencoder.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clusterer::{CLUSTER_PCA_DIM, DEFAULT_B_SMOOTH};
use crate::error::{Error, Result};
use crate::graph::{knn_graph, CorruptionPlan, GraphKind, SpatialGraph, DEFAULT_K};
use crate::ingest::{CoordinateSet, ExpressionMatrix, FeatureMatrix};
use crate::model::{BranchGraph, LossBreakdown, LossWeights, ModelInputs, MpgaModel};
use crate::preprocess::{fit_pca, normalize_expression, select_hvg};
use crate::tensor::{adam_step, AdamConfig};

/// Per-gene transform applied to the selected genes before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneScaling {
    None,
    /// Subtract each gene's mean.
    Center,
    /// Subtract the mean and divide by the standard deviation.
    Standardize,
}

/// Which parts of the method are active. All on is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub use_image_modality: bool,
    pub use_contrastive: bool,
    pub use_smoothing: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            use_image_modality: true,
            use_contrastive: true,
            use_smoothing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    /// Components used to build the similarity graph.
    pub pca_dim: usize,
    pub k_neighbors: usize,
    pub m_keep: usize,
    pub loss_weights: LossWeights,
    pub toggles: Toggles,
    pub b_smooth: usize,
    pub n_clusters: usize,
    /// Library-size normalization and log1p before HVG selection.
    pub normalize: bool,
    pub gene_scaling: GeneScaling,
    /// Standardize each image-feature column before training.
    pub scale_features: bool,
    /// Principal components kept before the mixture fit; 0 clusters the
    /// reconstruction directly.
    pub cluster_pca_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            learning_rate: 1e-3,
            seed: 0,
            hidden_dims: vec![512, 64],
            pca_dim: 50,
            k_neighbors: DEFAULT_K,
            m_keep: 3000,
            loss_weights: LossWeights::default(),
            toggles: Toggles::default(),
            b_smooth: DEFAULT_B_SMOOTH,
            n_clusters: 0,
            normalize: true,
            gene_scaling: GeneScaling::Center,
            scale_features: true,
            cluster_pca_dim: CLUSTER_PCA_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return fail(format!("hidden_dims must be nonempty and positive, got {:?}", self.hidden_dims));
        }
        if self.n_clusters < 2 {
            return fail(format!("n_clusters must be >= 2, got {}", self.n_clusters));
        }
        if self.pca_dim == 0 || self.k_neighbors == 0 || self.m_keep == 0 || self.b_smooth == 0 {
            return fail("pca_dim, k_neighbors, m_keep and b_smooth must be >= 1".into());
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()?;
        self.loss_weights.validate()
    }
}

/// Loss components and fusion weights after one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let depth = self.records.first().map_or(0, |r| r.alphas.len());
        let mut out = String::from("epoch,l_rec,l_cl,l_cl_c,l_total");
        for l in 1..=depth {
            write!(out, ",alpha_{l}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            let b = &r.losses;
            write!(out, "{},{},{},{},{}", r.epoch, b.rec, b.cl, b.cl_c, b.total).unwrap();
            for a in &r.alphas {
                write!(out, ",{a}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Model inputs after preprocessing, plus the graphs they were built from.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub x_gene: Array2<f64>,
    pub x_image: Array2<f64>,
    pub gene_ids: Vec<String>,
    pub spot_ids: Vec<String>,
    pub proximity: SpatialGraph,
    pub similarity: SpatialGraph,
    pub gene_graph: BranchGraph,
    pub image_graph: BranchGraph,
}

impl PreparedData {
    pub fn inputs(&self) -> ModelInputs<'_> {
        ModelInputs {
            x_gene: self.x_gene.view(),
            x_image: self.x_image.view(),
            gene_graph: &self.gene_graph,
            image_graph: &self.image_graph,
        }
    }
}

fn scale_columns(x: &mut Array2<f64>, divide_by_sd: bool) {
    let n = x.nrows() as f64;
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if divide_by_sd && sd > 0.0 { 1.0 / sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) * scale);
    }
}

/// Normalizes and filters expression, builds the proximity graph on
/// coordinates and the similarity graph on expression principal
/// components, and assembles the second branch's input.
///
/// Without the image modality the second branch receives the expression
/// matrix itself over the similarity graph.
pub fn prepare(
    expr: &ExpressionMatrix,
    feats: Option<&FeatureMatrix>,
    coords: &CoordinateSet,
    cfg: &TrainConfig,
) -> Result<PreparedData> {
    let n = expr.n_spots();
    if coords.spot_ids() != expr.spot_ids() {
        return Err(Error::Dimension("coordinates are not aligned with expression".into()));
    }
    let normalized = if cfg.normalize { normalize_expression(expr)? } else { expr.clone() };
    let kept = select_hvg(&normalized, cfg.m_keep)?;
    let mut x_gene = kept.values().clone();
    match cfg.gene_scaling {
        GeneScaling::None => {}
        GeneScaling::Center => scale_columns(&mut x_gene, false),
        GeneScaling::Standardize => scale_columns(&mut x_gene, true),
    }

    let d = cfg.pca_dim.min(n).min(x_gene.ncols());
    let scores = fit_pca(x_gene.view(), d)?.transform(x_gene.view())?;
    let similarity = knn_graph(scores.view(), cfg.k_neighbors, GraphKind::Similarity)?;
    let proximity = knn_graph(coords.to_matrix().view(), cfg.k_neighbors, GraphKind::Proximity)?;

    let x_image = if cfg.toggles.use_image_modality {
        let f = feats.ok_or_else(|| {
            Error::InvalidArgument("image modality enabled but no image features given".into())
        })?;
        if f.spot_ids() != expr.spot_ids() {
            return Err(Error::Dimension("image features are not aligned with expression".into()));
        }
        let mut x = f.values().clone();
        if cfg.scale_features {
            scale_columns(&mut x, true);
        }
        x
    } else {
        x_gene.clone()
    };

    Ok(PreparedData {
        gene_graph: BranchGraph::from_graph(&proximity),
        image_graph: BranchGraph::from_graph(&similarity),
        x_gene,
        x_image,
        gene_ids: kept.gene_ids().to_vec(),
        spot_ids: kept.spot_ids().to_vec(),
        proximity,
        similarity,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: MpgaModel,
    /// Decoder output of a final pass without corruption, one row per spot.
    pub reconstruction: Array2<f64>,
    pub history: TrainHistory,
}

/// Trains on already prepared inputs.
///
/// Each epoch draws a fresh corruption permutation, shared by both
/// modalities, from a stream derived from `cfg.seed`. Without the
/// contrastive toggle no corrupted pass is run and the discriminators are
/// left untouched.
pub fn train_prepared(data: &PreparedData, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let n = data.x_gene.nrows();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MpgaModel::new(data.x_gene.ncols(), data.x_image.ncols(), &cfg.hidden_dims, &mut init_rng)?;
    let mut corruption_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    corruption_rng.set_stream(1);
    let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
    let inputs = data.inputs();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let plan = cfg
            .toggles
            .use_contrastive
            .then(|| CorruptionPlan::from_seed(n, corruption_rng.next_u64()));
        let state = model.forward(&inputs, plan.as_ref())?;
        let losses = model.losses(&state, inputs.x_gene, cfg.loss_weights)?;
        if !losses.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                value: losses.total,
            });
        }
        model.backward(&state, &inputs, cfg.loss_weights)?;
        if cfg.toggles.use_contrastive {
            adam_step(&mut model.params_mut(), &adam);
        } else {
            adam_step(&mut model.autoencoder_params_mut(), &adam);
        }
        history.records.push(EpochRecord {
            epoch,
            losses,
            alphas: model.alphas(),
        });
        if epoch % 100 == 0 || epoch == cfg.epochs {
            log::info!(
                "epoch {epoch}/{}: l_rec={:.4} l_cl={:.4} l_cl_c={:.4} l_total={:.4}",
                cfg.epochs,
                losses.rec,
                losses.cl,
                losses.cl_c,
                losses.total
            );
        }
    }

    let reconstruction = model.forward(&inputs, None)?.decoder.output().clone();
    Ok(TrainOutput {
        model,
        reconstruction,
        history,
    })
}

/// Preprocesses and trains in one call.
pub fn train(
    expr: &ExpressionMatrix,
    feats: Option<&FeatureMatrix>,
    coords: &CoordinateSet,
    cfg: &TrainConfig,
) -> Result<(PreparedData, TrainOutput)> {
    cfg.validate()?;
    let data = prepare(expr, feats, coords, cfg)?;
    let out = train_prepared(&data, cfg)?;
    Ok((data, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthSpec};

    fn tiny() -> crate::synthgen::SyntheticDataset {
        generate(&SynthSpec {
            rows: 6,
            cols: 6,
            n_domains: 3,
            n_genes: 12,
            image_dim: 4,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden_dims: vec![16, 4],
            pca_dim: 5,
            n_clusters: 3,
            b_smooth: 5,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn run(cfg: &TrainConfig) -> (PreparedData, TrainOutput) {
        let d = tiny();
        train(&d.expression, Some(&d.features), &d.coordinates, cfg).unwrap()
    }

    #[test]
    fn one_epoch_history() {
        let (_, out) = run(&small_cfg(1));
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.reconstruction.dim(), (36, 12));
        let csv = out.history.to_csv();
        assert!(csv.starts_with("epoch,l_rec,l_cl,l_cl_c,l_total,alpha_1,alpha_2\n1,"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..small_cfg(1) }.validate().is_err());
        assert!(TrainConfig { hidden_dims: vec![], ..small_cfg(1) }.validate().is_err());
        assert!(TrainConfig { n_clusters: 1, ..small_cfg(1) }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..small_cfg(1) }.validate().is_err());
        assert!(small_cfg(1).validate().is_ok());
    }

    #[test]
    fn same_seed_same_history() {
        let (_, a) = run(&small_cfg(15));
        let (_, b) = run(&small_cfg(15));
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        let (_, c) = run(&TrainConfig { seed: 4, ..small_cfg(15) });
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn reconstruction_improves_without_contrastive_weight() {
        let mut cfg = small_cfg(200);
        cfg.loss_weights.theta2 = 0.0;
        let (_, out) = run(&cfg);
        let rec: Vec<f64> = out.history.records.iter().map(|r| r.losses.rec).collect();
        let tail = rec[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < rec[0], "{} -> {tail}", rec[0]);
    }

    #[test]
    fn discriminators_frozen_without_contrastive() {
        let mut cfg = small_cfg(10);
        cfg.toggles.use_contrastive = false;
        let (data, out) = run(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = MpgaModel::new(data.x_gene.ncols(), data.x_image.ncols(), &cfg.hidden_dims, &mut rng).unwrap();
        assert_eq!(out.model.disc_gene, init.disc_gene);
        assert_eq!(out.model.disc_image, init.disc_image);
        assert_ne!(out.model.decoder, init.decoder);
        assert!(out.history.records.iter().all(|r| r.losses.cl == 0.0 && r.losses.cl_c == 0.0));
    }

    #[test]
    fn no_image_mode_feeds_expression_twice() {
        let mut cfg = small_cfg(1);
        cfg.toggles.use_image_modality = false;
        let d = tiny();
        let data = prepare(&d.expression, None, &d.coordinates, &cfg).unwrap();
        assert_eq!(data.x_image, data.x_gene);
        assert_eq!(data.similarity.kind(), GraphKind::Similarity);
        cfg.toggles.use_image_modality = true;
        assert!(prepare(&d.expression, None, &d.coordinates, &cfg).is_err());
    }

    #[test]
    fn features_are_standardized() {
        let (data, _) = run(&small_cfg(1));
        for col in data.x_image.axis_iter(Axis(1)) {
            let mean = col.sum() / 36.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = small_cfg(3);
        cfg.learning_rate = 1e300;
        let d = tiny();
        match train(&d.expression, Some(&d.features), &d.coordinates, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
