//! Gaussian-mixture clustering of the reconstructed expression and spatial
//! majority smoothing of the resulting labels.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::nearest;
use crate::ingest::CoordinateSet;
use crate::preprocess::fit_pca;

pub const DEFAULT_B_SMOOTH: usize = 50;
/// Dimension the reconstruction is projected to before the mixture fit.
pub const CLUSTER_PCA_DIM: usize = 20;

const LLOYD_ITERATIONS: usize = 100;
/// Seeded k-means++ / Lloyd restarts; the lowest-inertia one seeds EM.
const KMEANS_RESTARTS: usize = 10;

/// Cluster assignment per spot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} is not below k={k}")));
        }
        Ok(Self { labels, k })
    }

    /// Takes `k` as one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of spots per label id, indexed `0..k`.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.k];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    pub fn to_csv(&self, spot_ids: &[String]) -> Result<String> {
        if spot_ids.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} spot ids for {} labels",
                spot_ids.len(),
                self.labels.len()
            )));
        }
        let mut out = String::from("spot_id,label\n");
        for (id, l) in spot_ids.iter().zip(&self.labels) {
            writeln!(out, "{id},{l}").unwrap();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub regularization: f64,
    /// Stop once the mean per-point log-likelihood improves by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            regularization: 1e-6,
            tolerance: 1e-6,
            max_iterations: 300,
        }
    }
}

/// Fitted full-covariance mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub means: Vec<Array1<f64>>,
    pub covariances: Vec<Array2<f64>>,
    pub weights: Vec<f64>,
    /// Mean per-point log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
}

struct Component {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
    log_weight: f64,
}

fn component(mean: DVector<f64>, cov: DMatrix<f64>, weight: f64) -> Result<(Component, DMatrix<f64>)> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mixture covariance is not positive definite".into()))?
        .unpack();
    let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((
        Component {
            mean,
            chol,
            log_det,
            log_weight: weight.ln(),
        },
        cov,
    ))
}

impl Component {
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let y = self
            .chol
            .solve_lower_triangular(&(x - &self.mean))
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * (d * (2.0 * PI).ln() + self.log_det + y.norm_squared())
    }
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

fn argmin_by_distance(x: &DVector<f64>, centers: &[DVector<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(x, center);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

fn kmeans_plus_plus(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every point already coincides with a center.
            Err(_) => rng.random_range(0..n),
        };
        centers.push(points[next].clone());
        let newest = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, newest));
        }
    }
    centers
}

fn lloyd(points: &[DVector<f64>], centers: &mut [DVector<f64>]) -> Vec<usize> {
    let mut assign: Vec<usize> = points.iter().map(|p| argmin_by_distance(p, centers)).collect();
    for _ in 0..LLOYD_ITERATIONS {
        let dim = points[0].len();
        let mut sums = vec![DVector::zeros(dim); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a] += p;
            counts[a] += 1;
        }
        for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s / n as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| argmin_by_distance(p, centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

fn covariance(points: &[DVector<f64>], resp: impl Fn(usize) -> f64, mean: &DVector<f64>, mass: f64, reg: f64) -> DMatrix<f64> {
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    for (i, p) in points.iter().enumerate() {
        let r = resp(i);
        if r > 0.0 {
            let c = p - mean;
            cov.ger(r, &c, &c, 1.0);
        }
    }
    cov /= mass;
    for j in 0..d {
        cov[(j, j)] += reg;
    }
    // Keep exact symmetry for the factorization.
    (&cov + cov.transpose()) * 0.5
}

fn e_step(points: &[DVector<f64>], comps: &[Component]) -> (Vec<Vec<f64>>, f64) {
    let rows: Vec<(Vec<f64>, f64)> = points
        .par_iter()
        .map(|p| {
            let logs: Vec<f64> = comps.iter().map(|c| c.log_weight + c.log_density(p)).collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            (logs.iter().map(|l| (l - total).exp()).collect(), total)
        })
        .collect();
    let ll = rows.iter().map(|r| r.1).sum::<f64>() / points.len() as f64;
    (rows.into_iter().map(|r| r.0).collect(), ll)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fits a `k`-component full-covariance Gaussian mixture to the rows of `x`
/// by EM and labels each row with its most responsible component.
///
/// Initialization is the best of several seeded k-means++ + Lloyd runs. A
/// component left with less than one point's worth of responsibility is
/// restarted once at the point farthest from every other mean; a second
/// collapse of the same component is an error.
pub fn gmm_cluster(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<(LabelVector, GmmModel)> {
    gmm_cluster_with(x, k, seed, &GmmConfig::default())
}

pub fn gmm_cluster_with(
    x: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    cfg: &GmmConfig,
) -> Result<(LabelVector, GmmModel)> {
    let (n, d) = x.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot fit {k} components to {n} points"
        )));
    }
    if d == 0 {
        return Err(Error::Dimension("mixture input has no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("mixture input contains non-finite values".into()));
    }
    let points: Vec<DVector<f64>> = x
        .outer_iter()
        .map(|r| DVector::from_iterator(d, r.iter().copied()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<DVector<f64>>, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers = kmeans_plus_plus(&points, k, &mut rng);
        let assign = lloyd(&points, &mut centers);
        let inertia: f64 = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centers[a])).sum();
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, centers, assign));
        }
    }
    let (_, centers, assign) = best.expect("at least one restart");

    let global_mean = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / n as f64;
    let global_cov = covariance(&points, |_| 1.0, &global_mean, n as f64, cfg.regularization);

    let mut comps = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for (c, center) in centers.into_iter().enumerate() {
        let members = assign.iter().filter(|&&a| a == c).count();
        let cov = if members >= 2 {
            covariance(
                &points,
                |i| if assign[i] == c { 1.0 } else { 0.0 },
                &center,
                members as f64,
                cfg.regularization,
            )
        } else {
            global_cov.clone()
        };
        let weight = members.max(1) as f64 / n as f64;
        let (comp, cov) = component(center, cov, weight)?;
        comps.push(comp);
        covs.push(cov);
    }
    normalize_log_weights(&mut comps);

    let mut restarted = vec![false; k];
    let mut history = Vec::new();
    let mut converged = false;
    let mut skip_check = false;
    let mut resp = Vec::new();
    for _ in 0..cfg.max_iterations {
        let (r, ll) = e_step(&points, &comps);
        resp = r;
        if let Some(&prev) = history.last() {
            if !skip_check && ll - prev < cfg.tolerance {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        skip_check = false;

        let mut next = Vec::with_capacity(k);
        let mut next_covs = Vec::with_capacity(k);
        let mut collapsed = Vec::new();
        for c in 0..k {
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            if mass < 1.0 {
                collapsed.push(c);
                next.push(None);
                continue;
            }
            let mean = points
                .iter()
                .zip(&resp)
                .fold(DVector::zeros(d), |acc, (p, r)| acc + p * r[c])
                / mass;
            let cov = covariance(&points, |i| resp[i][c], &mean, mass, cfg.regularization);
            next.push(Some((mean, cov, mass / n as f64)));
        }
        for &c in &collapsed {
            if restarted[c] {
                return Err(Error::ComponentCollapse { component: c });
            }
            restarted[c] = true;
            log::warn!("mixture component {c} collapsed; restarting it at the farthest point");
            let others: Vec<DVector<f64>> = next.iter().flatten().map(|(m, _, _)| m.clone()).collect();
            let far = farthest_point(&points, &others);
            next[c] = Some((points[far].clone(), global_cov.clone(), 1.0 / k as f64));
            skip_check = true;
        }
        comps.clear();
        next_covs.clear();
        for (mean, cov, w) in next.into_iter().flatten() {
            let (comp, cov) = component(mean, cov, w)?;
            comps.push(comp);
            next_covs.push(cov);
        }
        covs = next_covs;
        normalize_log_weights(&mut comps);
    }
    if !converged {
        let (r, ll) = e_step(&points, &comps);
        resp = r;
        history.push(ll);
    }

    let labels = resp.iter().map(|r| argmax(r)).collect();
    let model = GmmModel {
        means: comps.iter().map(|c| Array1::from_iter(c.mean.iter().copied())).collect(),
        covariances: covs
            .iter()
            .map(|m| Array2::from_shape_fn((d, d), |(i, j)| m[(i, j)]))
            .collect(),
        weights: comps.iter().map(|c| c.log_weight.exp()).collect(),
        log_likelihood: history,
    };
    Ok((LabelVector::new(labels, k)?, model))
}

fn normalize_log_weights(comps: &mut [Component]) {
    let total: f64 = comps.iter().map(|c| c.log_weight.exp()).sum();
    let shift = total.ln();
    for c in comps {
        c.log_weight -= shift;
    }
}

fn farthest_point(points: &[DVector<f64>], means: &[DVector<f64>]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let d = means
            .iter()
            .map(|m| sq_dist(p, m))
            .fold(f64::INFINITY, f64::min);
        if d > best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Projects `x` onto its top `min(max_dim, columns, rows)` principal axes.
pub fn reduce_for_clustering(x: ArrayView2<'_, f64>, max_dim: usize) -> Result<Array2<f64>> {
    let d = max_dim.min(x.ncols()).min(x.nrows());
    fit_pca(x, d)?.transform(x)
}

/// Reassigns each spot to the majority label among its `b` nearest spots
/// (self excluded), reading only the input labels.
///
/// When several labels share the top count, a spot whose current label is
/// among them keeps it; otherwise the smallest of them wins.
pub fn smooth_labels(labels: &LabelVector, coords: &CoordinateSet, b: usize) -> Result<LabelVector> {
    let n = labels.len();
    if coords.len() != n {
        return Err(Error::Dimension(format!(
            "{} coordinates for {n} labels",
            coords.len()
        )));
    }
    if b == 0 || b >= n {
        return Err(Error::InvalidArgument(format!(
            "smoothing needs 1 <= b < N, got b={b}, N={n}"
        )));
    }
    let points = coords.to_matrix();
    let input = labels.labels();
    let smoothed: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut votes = vec![0usize; labels.k()];
            for j in nearest(points.view(), i, b) {
                votes[input[j]] += 1;
            }
            let top = *votes.iter().max().expect("k >= 1 when labels exist");
            if votes[input[i]] == top {
                input[i]
            } else {
                votes.iter().position(|&v| v == top).unwrap()
            }
        })
        .collect();
    LabelVector::new(smoothed, labels.k())
}
