//! Preprocess → train → cluster → smooth, as one call.

use crate::clusterer::{gmm_cluster, reduce_for_clustering, smooth_labels, GmmModel, LabelVector};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::trainer::{train, PreparedData, TrainConfig, TrainOutput};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prepared: PreparedData,
    pub training: TrainOutput,
    pub gmm: GmmModel,
    /// Mixture labels before smoothing.
    pub raw_labels: LabelVector,
    /// Final labels; equal to `raw_labels` when smoothing is off.
    pub labels: LabelVector,
}

/// Runs the whole method on one dataset.
pub fn run(dataset: &Dataset, cfg: &TrainConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let n = dataset.expression.n_spots();
    if cfg.n_clusters > n {
        return Err(Error::InvalidArgument(format!(
            "n_clusters={} exceeds the {n} spots",
            cfg.n_clusters
        )));
    }
    if cfg.toggles.use_smoothing && cfg.b_smooth >= n {
        return Err(Error::InvalidArgument(format!(
            "b_smooth={} must be below the {n} spots",
            cfg.b_smooth
        )));
    }
    let features = if cfg.toggles.use_image_modality {
        dataset.features.as_ref()
    } else {
        None
    };
    let (prepared, training) = train(&dataset.expression, features, &dataset.coordinates, cfg)?;
    let cluster_input = if cfg.cluster_pca_dim > 0 {
        reduce_for_clustering(training.reconstruction.view(), cfg.cluster_pca_dim)?
    } else {
        training.reconstruction.clone()
    };
    let (raw_labels, gmm) = gmm_cluster(cluster_input.view(), cfg.n_clusters, cfg.seed)?;
    let labels = if cfg.toggles.use_smoothing {
        smooth_labels(&raw_labels, &dataset.coordinates, cfg.b_smooth)?
    } else {
        raw_labels.clone()
    };
    Ok(RunOutput {
        prepared,
        training,
        gmm,
        raw_labels,
        labels,
    })
}
