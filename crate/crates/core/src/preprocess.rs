//! Library-size normalization, highly-variable-gene selection, and PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::ExpressionMatrix;

/// Total count each spot is scaled to before the log transform.
pub const TARGET_LIBRARY_SIZE: f64 = 10_000.0;

/// Above this size on both axes, PCA switches to randomized subspace iteration.
const EXACT_PCA_LIMIT: usize = 1000;

/// Per-column sample variance (N−1 denominator; zero for a single row).
pub fn column_variances(x: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = x.nrows();
    if n < 2 {
        return Array1::zeros(x.ncols());
    }
    let means = x.mean_axis(Axis(0)).expect("nonempty");
    let mut var = Array1::zeros(x.ncols());
    for row in x.outer_iter() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&means) {
            let d: f64 = x - m;
            *v += d * d;
        }
    }
    var / (n - 1) as f64
}

/// Column indices of the `m_keep` highest-variance genes, highest first.
/// Equal variances keep their original column order.
pub fn hvg_indices(x: ArrayView2<'_, f64>, m_keep: usize) -> Vec<usize> {
    let var = column_variances(x);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(m_keep.min(x.ncols()));
    order
}

/// Keeps the `m_keep` genes with the largest sample variance, ordered by
/// descending variance.
pub fn select_hvg(expr: &ExpressionMatrix, m_keep: usize) -> Result<ExpressionMatrix> {
    if m_keep == 0 {
        return Err(Error::InvalidArgument("m_keep must be >= 1".into()));
    }
    if m_keep > expr.n_genes() {
        log::warn!(
            "requested {m_keep} highly variable genes but only {} are available; keeping all",
            expr.n_genes()
        );
    }
    let keep = hvg_indices(expr.values().view(), m_keep);
    let values = expr.values().select(Axis(1), &keep);
    let genes = keep.iter().map(|&j| expr.gene_ids()[j].clone()).collect();
    ExpressionMatrix::new(values, expr.spot_ids().to_vec(), genes)
}

/// Scales every spot to [`TARGET_LIBRARY_SIZE`] total counts, then applies `ln(1 + v)`.
pub fn normalize_expression(expr: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    let mut values = expr.values().clone();
    for (i, mut row) in values.outer_iter_mut().enumerate() {
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(Error::ZeroCountSpot(expr.spot_ids()[i].clone()));
        }
        let scale = TARGET_LIBRARY_SIZE / total;
        row.mapv_inplace(|v| (v * scale).ln_1p());
    }
    ExpressionMatrix::new(values, expr.spot_ids().to_vec(), expr.gene_ids().to_vec())
}

/// Principal axes of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// d×M, orthonormal rows.
    pub components: Array2<f64>,
    pub means: Array1<f64>,
    /// Variance along each component, nonincreasing.
    pub explained_variance: Array1<f64>,
}

impl PcaBasis {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Scores `(x − means)·componentsᵀ`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::Dimension(format!(
                "PCA fitted on {} columns, got {}",
                self.means.len(),
                x.ncols()
            )));
        }
        Ok((&x - &self.means).dot(&self.components.t()))
    }

    /// Maps scores back to the original space.
    pub fn inverse_transform(&self, scores: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if scores.ncols() != self.n_components() {
            return Err(Error::Dimension(format!(
                "{} components, got {} score columns",
                self.n_components(),
                scores.ncols()
            )));
        }
        Ok(scores.dot(&self.components) + &self.means)
    }
}

fn to_nalgebra(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Fits the top-`d` principal axes of `x` (rows are observations).
///
/// When `d` exceeds the rank of the centered data the trailing components
/// span an orthonormal completion and carry zero variance.
pub fn fit_pca(x: ArrayView2<'_, f64>, d: usize) -> Result<PcaBasis> {
    let (n, m) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::Dimension("PCA needs a nonempty matrix".into()));
    }
    if d == 0 || d > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "PCA dimension {d} must lie in 1..={}",
            n.min(m)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("PCA input contains non-finite values".into()));
    }
    let means = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = &x - &means;
    let denom = (n.max(2) - 1) as f64;

    let (variances, mut components) = if n.min(m) > EXACT_PCA_LIMIT {
        randomized_axes(centered.view(), d, denom)?
    } else if m <= n {
        let cov = centered.t().dot(&centered) / denom;
        let (vals, vecs) = sorted_eigen(to_nalgebra(cov.view()));
        let comps = Array2::from_shape_fn((d, m), |(k, j)| vecs[(j, k)]);
        (vals[..d].to_vec(), comps)
    } else {
        // Gram route: right singular vectors from left ones, v = Xᵀu / ‖Xᵀu‖.
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, vecs) = sorted_eigen(to_nalgebra(gram.view()));
        let mut comps = Array2::zeros((d, m));
        for k in 0..d {
            let u = Array1::from_shape_fn(n, |i| vecs[(i, k)]);
            comps.row_mut(k).assign(&centered.t().dot(&u));
        }
        (vals[..d].to_vec(), comps)
    };
    orthonormalize_rows(&mut components);
    for mut row in components.outer_iter_mut() {
        let pivot = row
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let explained_variance = Array1::from_iter(variances.into_iter().map(|v| v.max(0.0)));
    Ok(PcaBasis {
        components,
        means,
        explained_variance,
    })
}

/// Two passes of modified Gram–Schmidt. Rows that vanish (rank deficiency)
/// are replaced by the first standard basis vector independent of the rows
/// kept so far.
fn orthonormalize_rows(rows: &mut Array2<f64>) {
    let (k, m) = rows.dim();
    let tol = 1e-10;
    for i in 0..k {
        let mut candidate = rows.row(i).to_owned();
        let scale = candidate.dot(&candidate).sqrt();
        let mut basis_probe = 0;
        loop {
            for _ in 0..2 {
                for j in 0..i {
                    let prev = rows.row(j);
                    let proj = prev.dot(&candidate);
                    candidate.scaled_add(-proj, &prev);
                }
            }
            let norm = candidate.dot(&candidate).sqrt();
            if norm > tol * scale.max(1.0) && norm > tol {
                candidate /= norm;
                break;
            }
            candidate = Array1::zeros(m);
            candidate[basis_probe] = 1.0;
            basis_probe += 1;
        }
        rows.row_mut(i).assign(&candidate);
    }
}

fn orthonormal_columns(y: &Array2<f64>) -> Array2<f64> {
    let qr = to_nalgebra(y.view()).qr();
    let q = qr.q();
    Array2::from_shape_fn((q.nrows(), q.ncols()), |(i, j)| q[(i, j)])
}

/// Randomized range finder with power iterations, followed by an exact
/// eigendecomposition of the projected problem.
fn randomized_axes(
    centered: ArrayView2<'_, f64>,
    d: usize,
    denom: f64,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let (n, m) = centered.dim();
    let width = (d + 10).min(n.min(m));
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d9ca);
    let omega = Array2::from_shape_fn((m, width), |_| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_columns(&centered.dot(&omega));
    for _ in 0..4 {
        let z = orthonormal_columns(&centered.t().dot(&q));
        q = orthonormal_columns(&centered.dot(&z));
    }
    let b = q.t().dot(&centered);
    let small = b.dot(&b.t()) / denom;
    let (vals, vecs) = sorted_eigen(to_nalgebra(small.view()));
    let mut comps = Array2::zeros((d, m));
    for k in 0..d {
        let u = Array1::from_shape_fn(width, |i| vecs[(i, k)]);
        comps.row_mut(k).assign(&b.t().dot(&u));
    }
    Ok((vals[..d].to_vec(), comps))
}
