//! Dense building blocks with hand-derived gradients: GCN layers, the
//! bilinear discriminator, Adam, and the parameter checkpoint format.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A learnable matrix with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    adam_m: Array2<f64>,
    adam_v: Array2<f64>,
    step_count: u64,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let shape = value.raw_dim();
        Self {
            value,
            grad: Array2::zeros(shape),
            adam_m: Array2::zeros(shape),
            adam_v: Array2::zeros(shape),
            step_count: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    /// Uniform Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::new(Array2::from_shape_fn((fan_in, fan_out), |_| {
            rng.random_range(-limit..=limit)
        }))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be a nonnegative real, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update per parameter, then clears the gradients.
pub fn adam_step(params: &mut [&mut Param], cfg: &AdamConfig) {
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        ndarray::Zip::from(&mut p.value)
            .and(&mut p.adam_m)
            .and(&mut p.adam_v)
            .and(&p.grad)
            .for_each(|w, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
        p.zero_grad();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Inputs and outputs of one layer application, needed by its backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Array2<f64>,
    output: Array2<f64>,
}

impl LayerCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// `σ(Ã · Z · W + B)` with `B` broadcast over rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Param::glorot(fan_in, fan_out, rng),
            bias: Param::zeros(1, fan_out),
            activation,
        }
    }

    pub fn from_parts(weight: Array2<f64>, bias: Array2<f64>, activation: Activation) -> Result<Self> {
        if bias.dim() != (1, weight.ncols()) {
            return Err(Error::Dimension(format!(
                "bias {:?} does not match weight {:?}",
                bias.dim(),
                weight.dim()
            )));
        }
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            activation,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.ncols()
    }

    fn check_shapes(&self, adj: &CsrMatrix, input: ArrayView2<'_, f64>) -> Result<()> {
        if adj.n_rows() != adj.n_cols() || adj.n_cols() != input.nrows() {
            return Err(Error::Dimension(format!(
                "adjacency {}x{} with {} input rows",
                adj.n_rows(),
                adj.n_cols(),
                input.nrows()
            )));
        }
        if input.ncols() != self.fan_in() {
            return Err(Error::Dimension(format!(
                "layer expects {} input features, got {}",
                self.fan_in(),
                input.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, adj: &CsrMatrix, input: ArrayView2<'_, f64>) -> Result<LayerCache> {
        self.check_shapes(adj, input)?;
        // Multiply in whichever order keeps the sparse product narrow.
        let mut pre = if self.fan_out() <= self.fan_in() {
            adj.matmul(input.dot(&self.weight.value).view())?
        } else {
            adj.matmul(input)?.dot(&self.weight.value)
        };
        pre += &self.bias.value;
        let act = self.activation;
        pre.mapv_inplace(|v| act.apply(v));
        Ok(LayerCache {
            input: input.to_owned(),
            output: pre,
        })
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the layer input when `want_input_grad` is set.
    pub fn backward(
        &mut self,
        adj: &CsrMatrix,
        cache: &LayerCache,
        grad_out: ArrayView2<'_, f64>,
        want_input_grad: bool,
    ) -> Result<Option<Array2<f64>>> {
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::Dimension(format!(
                "output gradient {:?} does not match cached output {:?}",
                grad_out.dim(),
                cache.output.dim()
            )));
        }
        let act = self.activation;
        let mut delta = grad_out.to_owned();
        ndarray::Zip::from(&mut delta)
            .and(&cache.output)
            .for_each(|d, &y| *d *= act.derivative_from_output(y));
        self.bias.grad += &delta.sum_axis(Axis(0)).insert_axis(Axis(0));
        // (ÃZ)ᵀδ = Zᵀ(Ãᵀδ); the propagated δ also feeds the input gradient.
        let propagated = adj.transpose_matmul(delta.view())?;
        self.weight.grad += &cache.input.t().dot(&propagated);
        Ok(want_input_grad.then(|| propagated.dot(&self.weight.value.t())))
    }
}

/// Raw bilinear scores `z_iᵀ · W · g_i` for every row pair.
pub fn bilinear_logits(
    z: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    w: &Param,
) -> Result<Array1<f64>> {
    let f = w.value.nrows();
    if z.dim() != g.dim() || z.ncols() != f || w.value.ncols() != f {
        return Err(Error::Dimension(format!(
            "discriminator {:?} on pairs {:?} / {:?}",
            w.value.dim(),
            z.dim(),
            g.dim()
        )));
    }
    Ok((z.dot(&w.value) * g).sum_axis(Axis(1)))
}

/// Probability that `(z, g)` is a positive pair: `sigmoid(zᵀ · W · g)`.
pub fn bilinear_discriminator(
    z: ArrayView1<'_, f64>,
    g: ArrayView1<'_, f64>,
    w: &Param,
) -> Result<f64> {
    let logits = bilinear_logits(z.insert_axis(Axis(0)), g.insert_axis(Axis(0)), w)?;
    Ok(sigmoid(logits[0]))
}

/// Given `∂L/∂logit_i`, accumulates into `W.grad` and returns `(∂L/∂z, ∂L/∂g)`.
pub fn bilinear_backward(
    z: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    w: &mut Param,
    grad_logits: ArrayView1<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = grad_logits.insert_axis(Axis(1));
    let scaled_g = &g * &scale;
    let grad_z = scaled_g.dot(&w.value.t());
    let grad_g = z.dot(&w.value) * scale;
    w.grad += &z.t().dot(&scaled_g);
    (grad_z, grad_g)
}

const CHECKPOINT_MAGIC: &str = "stmmc-checkpoint,1";

/// Named matrices in the checkpoint text format:
///
/// ```text
/// stmmc-checkpoint,1
/// matrix,<name>,<rows>,<cols>
/// <v>,<v>,...        (one line per row, shortest round-trip exponent form)
/// ```
pub fn format_checkpoint(entries: &[(String, &Array2<f64>)]) -> String {
    let mut out = String::from(CHECKPOINT_MAGIC);
    out.push('\n');
    for (name, m) in entries {
        writeln!(out, "matrix,{name},{},{}", m.nrows(), m.ncols()).unwrap();
        for row in m.outer_iter() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{v:e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_checkpoint(text: &str, origin: &Path) -> Result<Vec<(String, Array2<f64>)>> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == CHECKPOINT_MAGIC => {}
        _ => {
            return Err(Error::MalformedHeader {
                path: origin.to_path_buf(),
                reason: format!("expected '{CHECKPOINT_MAGIC}'"),
            })
        }
    }
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        if header.is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split(',').collect();
        if parts.len() != 4 || parts[0] != "matrix" {
            return Err(err(ln, format!("expected 'matrix,<name>,<rows>,<cols>', found '{header}'")));
        }
        let rows: usize = parts[2].parse().map_err(|_| err(ln, "bad row count".into()))?;
        let cols: usize = parts[3].parse().map_err(|_| err(ln, "bad column count".into()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| err(ln, format!("matrix '{}' truncated", parts[1])))?;
            let before = data.len();
            for field in line.split(',') {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| err(ln, format!("not a number: '{field}'")))?,
                );
            }
            if data.len() - before != cols {
                return Err(err(ln, format!("expected {cols} values, found {}", data.len() - before)));
            }
        }
        let m = Array2::from_shape_vec((rows, cols), data).expect("row lengths checked");
        out.push((parts[1].to_string(), m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn identity_layer_passes_input() {
        let z = array![[1.0, -2.0], [0.5, 3.0]];
        let eye = CsrMatrix::identity(2);
        let layer = GcnLayer::from_parts(Array2::eye(2), Array2::zeros((1, 2)), Activation::Identity).unwrap();
        assert_eq!(layer.forward(&eye, z.view()).unwrap().output(), &z);
        let relu = GcnLayer::from_parts(Array2::eye(2), Array2::zeros((1, 2)), Activation::Relu).unwrap();
        assert_eq!(relu.forward(&eye, z.view()).unwrap().output()[[0, 1]], 0.0);
    }

    #[test]
    fn forward_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let adj_dense = random(5, 5, &mut rng).mapv(f64::abs);
        let adj = CsrMatrix::from_dense(adj_dense.view());
        let z = random(5, 3, &mut rng);
        for act in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
            let layer = GcnLayer::from_parts(random(3, 2, &mut rng), random(1, 2, &mut rng), act).unwrap();
            let out = layer.forward(&adj, z.view()).unwrap();
            for i in 0..5 {
                for o in 0..2 {
                    let mut s = layer.bias.value[[0, o]];
                    for j in 0..5 {
                        for f in 0..3 {
                            s += adj_dense[[i, j]] * z[[j, f]] * layer.weight.value[[f, o]];
                        }
                    }
                    let expect = match act {
                        Activation::Identity => s,
                        Activation::Relu => s.max(0.0),
                        Activation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
                    };
                    assert!((out.output()[[i, o]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GcnLayer::new(3, 2, Activation::Relu, &mut rng);
        assert!(layer.forward(&CsrMatrix::identity(4), Array2::zeros((4, 2)).view()).is_err());
        assert!(layer.forward(&CsrMatrix::identity(4), Array2::zeros((3, 3)).view()).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let adj = CsrMatrix::identity(4);
        let mut layer = GcnLayer::new(3, 2, Activation::Relu, &mut rng);
        let cache = layer.forward(&adj, random(4, 3, &mut rng).view()).unwrap();
        let gin = layer.backward(&adj, &cache, Array2::zeros((4, 2)).view(), true).unwrap().unwrap();
        assert!(gin.iter().all(|&v| v == 0.0));
        assert!(layer.weight.grad.iter().all(|&v| v == 0.0));
        assert!(layer.bias.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_input_transpose_times_cotangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let adj = CsrMatrix::identity(4);
        let mut layer = GcnLayer::new(3, 2, Activation::Identity, &mut rng);
        let z = random(4, 3, &mut rng);
        let go = random(4, 2, &mut rng);
        let cache = layer.forward(&adj, z.view()).unwrap();
        layer.backward(&adj, &cache, go.view(), false).unwrap();
        let expect = z.t().dot(&go);
        for (a, b) in layer.weight.grad.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(layer.backward(&adj, &cache, Array2::zeros((3, 2)).view(), false).is_err());
    }

    /// Scalar probe loss Σ c ⊙ layer(z), checked against central differences.
    #[test]
    fn layer_gradients_match_finite_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let adj = CsrMatrix::from_dense(random(5, 5, &mut rng).mapv(f64::abs).view());
        for act in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
            let mut layer = GcnLayer::new(3, 4, act, &mut rng);
            layer.bias.value = random(1, 4, &mut rng);
            let z = random(5, 3, &mut rng);
            let c = random(5, 4, &mut rng);
            let loss = |l: &GcnLayer, z: &Array2<f64>| (l.forward(&adj, z.view()).unwrap().output() * &c).sum();
            let cache = layer.forward(&adj, z.view()).unwrap();
            let gz = layer.backward(&adj, &cache, c.view(), true).unwrap().unwrap();

            for idx in 0..12 {
                let (r, cc) = (idx / 4, idx % 4);
                let mut p = layer.clone();
                p.weight.value[[r, cc]] += h;
                let mut m = layer.clone();
                m.weight.value[[r, cc]] -= h;
                let fd = (loss(&p, &z) - loss(&m, &z)) / (2.0 * h);
                assert!(rel_err(fd, layer.weight.grad[[r, cc]]) < 1e-4, "{act:?} W[{r},{cc}]");
            }
            for o in 0..4 {
                let mut p = layer.clone();
                p.bias.value[[0, o]] += h;
                let mut m = layer.clone();
                m.bias.value[[0, o]] -= h;
                let fd = (loss(&p, &z) - loss(&m, &z)) / (2.0 * h);
                assert!(rel_err(fd, layer.bias.grad[[0, o]]) < 1e-4, "{act:?} B[{o}]");
            }
            for i in 0..5 {
                for f in 0..3 {
                    let mut zp = z.clone();
                    zp[[i, f]] += h;
                    let mut zm = z.clone();
                    zm[[i, f]] -= h;
                    let fd = (loss(&layer, &zp) - loss(&layer, &zm)) / (2.0 * h);
                    assert!(rel_err(fd, gz[[i, f]]) < 1e-4, "{act:?} Z[{i},{f}]");
                }
            }
        }
    }

    #[test]
    fn adam_zero_gradient_and_zero_rate_are_no_ops() {
        let mut p = Param::new(array![[1.0, -2.0]]);
        adam_step(&mut [&mut p], &AdamConfig::default());
        assert_eq!(p.value, array![[1.0, -2.0]]);
        assert_eq!(p.step_count(), 1);
        p.grad = array![[3.0, -0.5]];
        adam_step(&mut [&mut p], &AdamConfig::with_learning_rate(0.0));
        assert_eq!(p.value, array![[1.0, -2.0]]);
        assert!(p.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Param::new(array![[1.0, 1.0, 1.0]]);
        p.grad = array![[0.3, -7.0, 1e-3]];
        adam_step(&mut [&mut p], &AdamConfig::with_learning_rate(0.01));
        for (v, expect) in p.value.iter().zip([0.99, 1.01, 0.99]) {
            assert!((v - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_matches_scalar_reference_on_quadratic() {
        let cfg = AdamConfig::with_learning_rate(0.1);
        let mut p = Param::new(array![[1.0]]);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            p.grad[[0, 0]] = 2.0 * p.value[[0, 0]];
            adam_step(&mut [&mut p], &cfg);
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.value[[0, 0]] - w).abs() < 1e-15, "step {t}");
        }
    }

    #[test]
    fn adam_config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn discriminator_closed_forms() {
        let w = Param::new(Array2::eye(3));
        let e = array![0.0, 1.0, 0.0];
        let p = bilinear_discriminator(e.view(), e.view(), &w).unwrap();
        assert!((p - 0.7310585786300049).abs() < 1e-12);
        let zero = Array1::zeros(3);
        assert_eq!(bilinear_discriminator(zero.view(), e.view(), &w).unwrap(), 0.5);
    }

    #[test]
    fn discriminator_matches_direct_and_finite_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random(1, 4, &mut rng);
        let g = random(1, 4, &mut rng);
        let mut w = Param::new(random(4, 4, &mut rng));
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                s += z[[0, a]] * w.value[[a, b]] * g[[0, b]];
            }
        }
        let prob = |z: &Array2<f64>, g: &Array2<f64>, w: &Param| {
            bilinear_discriminator(z.row(0), g.row(0), w).unwrap()
        };
        let p = prob(&z, &g, &w);
        assert!((p - 1.0 / (1.0 + (-s).exp())).abs() < 1e-14);
        // ∂p/∂logit = p(1 − p)
        let dl = Array1::from_elem(1, p * (1.0 - p));
        let (gz, gg) = bilinear_backward(z.view(), g.view(), &mut w, dl.view());
        for j in 0..4 {
            let mut zp = z.clone();
            zp[[0, j]] += h;
            let mut zm = z.clone();
            zm[[0, j]] -= h;
            assert!(rel_err((prob(&zp, &g, &w) - prob(&zm, &g, &w)) / (2.0 * h), gz[[0, j]]) < 1e-4);
            let mut gp = g.clone();
            gp[[0, j]] += h;
            let mut gm = g.clone();
            gm[[0, j]] -= h;
            assert!(rel_err((prob(&z, &gp, &w) - prob(&z, &gm, &w)) / (2.0 * h), gg[[0, j]]) < 1e-4);
            for k in 0..4 {
                let mut wp = w.clone();
                wp.value[[j, k]] += h;
                let mut wm = w.clone();
                wm.value[[j, k]] -= h;
                let fd = (prob(&z, &g, &wp) - prob(&z, &g, &wm)) / (2.0 * h);
                assert!(rel_err(fd, w.grad[[j, k]]) < 1e-4);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = array![[1.0, -2.5e-300], [f64::MAX, 0.1]];
        let b = array![[std::f64::consts::PI]];
        let text = format_checkpoint(&[("a".into(), &a), ("layer.0.bias".into(), &b)]);
        let back = parse_checkpoint(&text, Path::new("mem")).unwrap();
        assert_eq!(back, vec![("a".to_string(), a), ("layer.0.bias".to_string(), b)]);
        assert!(parse_checkpoint("nope\n", Path::new("mem")).is_err());
        assert!(parse_checkpoint("stmmc-checkpoint,1\nmatrix,a,2,1\n1\n", Path::new("mem")).is_err());
    }
}
