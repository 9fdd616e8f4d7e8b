//! Seeded synthetic tissue sections with planted spatial domains.
//!
//! Spots sit on a rows×cols lattice. Domains are the Voronoi cells of
//! randomly placed lattice centers. Each domain raises its own block of
//! marker genes; every spot also gets a mock image-feature vector drawn
//! around its domain's feature centroid.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::clusterer::LabelVector;
use crate::error::{Error, Result};
use crate::ingest::{CoordinateSet, ExpressionMatrix, FeatureMatrix, FeatureSource};
use crate::table::write_atomic;

/// Mean expression of a non-marker gene.
pub const BASE_EXPRESSION: f64 = 2.0;
const MAX_CENTER_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_domains: usize,
    pub n_genes: usize,
    /// Width of each domain's marker-gene block.
    pub markers_per_domain: usize,
    /// Mean shift of a domain's marker genes.
    pub signature_strength: f64,
    pub noise_sd: f64,
    pub image_dim: usize,
    /// Scale of the per-domain feature centroids against unit noise.
    pub image_signal: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            n_domains: 4,
            n_genes: 60,
            markers_per_domain: 2,
            signature_strength: 1.0,
            noise_sd: 0.5,
            image_dim: 12,
            image_signal: 1.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.rows, self.cols, self.n_domains, self.n_genes, self.markers_per_domain, self.image_dim].contains(&0) {
            return Err(Error::InvalidArgument("synthetic spec counts must all be >= 1".into()));
        }
        if self.rows * self.cols < self.n_domains {
            return Err(Error::InvalidArgument(format!(
                "{} domains do not fit on a {}x{} grid",
                self.n_domains, self.rows, self.cols
            )));
        }
        let reals = [self.signature_strength, self.noise_sd, self.image_signal];
        if reals.iter().any(|v| !v.is_finite()) || self.noise_sd < 0.0 {
            return Err(Error::InvalidArgument(
                "signature_strength and image_signal must be finite, noise_sd finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Genes `[d·w, (d+1)·w)` mark domain `d`, clipped to the gene count.
    pub fn marker_block(&self, domain: usize) -> std::ops::Range<usize> {
        let width = self.markers_per_domain;
        let start = (domain * width).min(self.n_genes);
        start..((domain + 1) * width).min(self.n_genes)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub expression: ExpressionMatrix,
    pub coordinates: CoordinateSet,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
}

/// Paths written by [`SyntheticDataset::write`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub expression: PathBuf,
    pub coordinates: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            expression: dir.join("expression.csv"),
            coordinates: dir.join("coords.csv"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

impl SyntheticDataset {
    pub fn write(&self, dir: &Path) -> Result<DatasetPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths::in_dir(dir);
        write_atomic(&paths.expression, self.expression.to_csv().as_bytes())?;
        write_atomic(&paths.coordinates, self.coordinates.to_csv().as_bytes())?;
        write_atomic(&paths.features, self.features.to_csv().as_bytes())?;
        let labels = self.labels.to_csv(self.expression.spot_ids())?;
        write_atomic(&paths.labels, labels.as_bytes())?;
        Ok(paths)
    }
}

/// Whether each label's lattice cells form one 4-connected component.
pub fn domains_contiguous(labels: &[usize], rows: usize, cols: usize) -> bool {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; labels.len()];
    let mut components = vec![0usize; k];
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        let label = labels[start];
        components[label] += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            let mut next = Vec::with_capacity(4);
            if r > 0 {
                next.push(i - cols);
            }
            if r + 1 < rows {
                next.push(i + cols);
            }
            if c > 0 {
                next.push(i - 1);
            }
            if c + 1 < cols {
                next.push(i + 1);
            }
            for j in next {
                if !seen[j] && labels[j] == label {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    components.iter().all(|&c| c <= 1)
}

fn voronoi(spec: &SynthSpec, centers: &[usize]) -> Vec<usize> {
    let n = spec.rows * spec.cols;
    (0..n)
        .map(|i| {
            let (r, c) = ((i / spec.cols) as i64, (i % spec.cols) as i64);
            let mut best = (i64::MAX, 0);
            for (d, &s) in centers.iter().enumerate() {
                let (sr, sc) = ((s / spec.cols) as i64, (s % spec.cols) as i64);
                let dist = (r - sr).pow(2) + (c - sc).pow(2);
                if dist < best.0 {
                    best = (dist, d);
                }
            }
            best.1
        })
        .collect()
}

/// Draws a dataset from `spec`. Center draws that yield a disconnected
/// domain are rejected and redrawn from the same stream.
pub fn generate(spec: &SynthSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut domains = None;
    for _ in 0..MAX_CENTER_DRAWS {
        let centers = sample(&mut rng, n, spec.n_domains).into_vec();
        let labels = voronoi(spec, &centers);
        if domains_contiguous(&labels, spec.rows, spec.cols) {
            domains = Some(labels);
            break;
        }
    }
    let domains = domains.ok_or_else(|| {
        Error::InvalidArgument("could not place contiguous domains on the grid".into())
    })?;

    let mut expr = Array2::zeros((n, spec.n_genes));
    for (i, mut row) in expr.outer_iter_mut().enumerate() {
        let markers = spec.marker_block(domains[i]);
        for (g, v) in row.iter_mut().enumerate() {
            let mean = BASE_EXPRESSION + if markers.contains(&g) { spec.signature_strength } else { 0.0 };
            let noise: f64 = rng.sample(StandardNormal);
            let draw = mean + spec.noise_sd * noise;
            *v = if draw > 0.0 { draw } else { 0.0 };
        }
    }

    let centroids = Array2::from_shape_simple_fn((spec.n_domains, spec.image_dim), || {
        rng.sample::<f64, _>(StandardNormal)
    });
    let features = Array2::from_shape_fn((n, spec.image_dim), |(i, j)| {
        spec.image_signal * centroids[[domains[i], j]] + rng.sample::<f64, _>(StandardNormal)
    });

    let spot_ids: Vec<String> = (0..n).map(|i| format!("spot_{i:04}")).collect();
    let gene_ids: Vec<String> = (0..spec.n_genes).map(|g| format!("gene_{g:03}")).collect();
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| [(i % spec.cols) as f64, (i / spec.cols) as f64])
        .collect();

    Ok(SyntheticDataset {
        expression: ExpressionMatrix::new(expr, spot_ids.clone(), gene_ids)?,
        coordinates: CoordinateSet::new(coords, spot_ids.clone())?,
        features: FeatureMatrix::new(features, spot_ids, FeatureSource::Precomputed)?,
        labels: LabelVector::new(domains, spec.n_domains)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterer::gmm_cluster;
    use crate::metrics::ari;

    #[test]
    fn shapes_and_ids() {
        let d = generate(&SynthSpec::default()).unwrap();
        assert_eq!(d.expression.values().dim(), (400, 60));
        assert_eq!(d.features.values().dim(), (400, 12));
        assert_eq!(d.coordinates.len(), 400);
        assert_eq!(d.labels.k(), 4);
        assert_eq!(d.coordinates.coords()[21], [1.0, 1.0]);
        assert!(d.expression.values().iter().all(|&v| v >= 0.0));
        assert!(d.labels.histogram().iter().all(|&c| c > 0));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SynthSpec::default();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.expression, b.expression);
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        let c = generate(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.expression, c.expression);
    }

    #[test]
    fn domains_are_contiguous_across_seeds() {
        for seed in 0..40 {
            let spec = SynthSpec { seed, n_domains: 6, ..SynthSpec::default() };
            let d = generate(&spec).unwrap();
            assert!(domains_contiguous(d.labels.labels(), 20, 20), "seed {seed}");
        }
    }

    #[test]
    fn contiguity_check() {
        assert!(domains_contiguous(&[0, 0, 1, 1], 2, 2));
        assert!(!domains_contiguous(&[0, 1, 1, 0], 2, 2));
        assert!(!domains_contiguous(&[0, 1, 0], 1, 3));
    }

    #[test]
    fn marker_blocks_are_disjoint() {
        let spec = SynthSpec::default();
        let blocks: Vec<_> = (0..4).map(|d| spec.marker_block(d)).collect();
        assert_eq!(blocks[0], 0..2);
        assert_eq!(blocks[3], 6..8);
        let tiny = SynthSpec { n_genes: 3, n_domains: 5, ..spec };
        assert_eq!(tiny.marker_block(4), 3..3);
    }

    #[test]
    fn noiseless_domains_are_recoverable() {
        let spec = SynthSpec { noise_sd: 0.0, image_signal: 10.0, ..SynthSpec::default() };
        let d = generate(&spec).unwrap();
        let (pred, _) = gmm_cluster(d.expression.values().view(), 4, 0).unwrap();
        assert_eq!(ari(pred.labels(), d.labels.labels()).unwrap(), 1.0);
    }

    #[test]
    fn single_domain_is_constant() {
        let d = generate(&SynthSpec { n_domains: 1, ..SynthSpec::default() }).unwrap();
        assert!(d.labels.labels().iter().all(|&l| l == 0));
        assert_eq!(ari(d.labels.labels(), &vec![3; 400]).unwrap(), 1.0);
    }

    #[test]
    fn invalid_specs() {
        let base = SynthSpec::default();
        assert!(generate(&SynthSpec { rows: 0, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { rows: 1, cols: 2, n_domains: 3, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { noise_sd: -1.0, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { image_signal: f64::NAN, ..base }).is_err());
    }

    #[test]
    fn write_round_trips_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(&SynthSpec { rows: 4, cols: 5, n_domains: 2, n_genes: 6, ..SynthSpec::default() }).unwrap();
        let paths = d.write(dir.path()).unwrap();
        let back = crate::ingest::load_dataset(&paths.expression, &paths.coordinates, Some(&paths.features)).unwrap();
        assert_eq!(back.expression, d.expression);
        assert_eq!(back.coordinates, d.coordinates);
        assert_eq!(back.features.unwrap(), d.features);
        let (_, labels) = crate::table::read_labels(&paths.labels).unwrap();
        assert_eq!(labels, d.labels.labels());
    }
}
