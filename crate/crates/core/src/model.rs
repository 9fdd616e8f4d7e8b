//! The two-branch graph autoencoder: per-modality GCN encoders, per-layer
//! convex fusion, a graph decoder over the proximity graph, and the
//! reconstruction and corrupted-graph contrastive objectives.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{community_operator, corrupt_features, CorruptionPlan, SpatialGraph};
use crate::sparse::CsrMatrix;
use crate::tensor::{
    bilinear_backward, bilinear_logits, sigmoid, Activation, GcnLayer, LayerCache, Param,
};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

/// Strengths of the reconstruction and contrastive terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub theta1: f64,
    pub theta2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            theta1: 10.0,
            theta2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 >= 0.0 && self.theta2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be nonnegative, got θ1={} θ2={}",
                self.theta1, self.theta2
            )));
        }
        Ok(())
    }
}

/// Propagation and neighbor-mean operators for one branch's graph.
#[derive(Debug, Clone)]
pub struct BranchGraph {
    pub adjacency: CsrMatrix,
    pub community: CsrMatrix,
}

impl BranchGraph {
    pub fn from_graph(g: &SpatialGraph) -> Self {
        Self {
            adjacency: g.normalized_adjacency().clone(),
            community: community_operator(g),
        }
    }
}

/// Node features and graphs for both branches.
#[derive(Debug, Clone, Copy)]
pub struct ModelInputs<'a> {
    pub x_gene: ArrayView2<'a, f64>,
    pub x_image: ArrayView2<'a, f64>,
    /// Proximity graph; also used by the decoder.
    pub gene_graph: &'a BranchGraph,
    /// Similarity graph.
    pub image_graph: &'a BranchGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpgaModel {
    pub gene_layers: Vec<GcnLayer>,
    pub image_layers: Vec<GcnLayer>,
    /// 1×L; `α_l = sigmoid(logit_l)`.
    pub fusion_logits: Param,
    pub decoder: GcnLayer,
    pub disc_gene: Param,
    pub disc_image: Param,
}

impl MpgaModel {
    /// Glorot-initialized weights, zero biases, and α = 0.5 at every layer.
    /// `hidden` lists the encoder widths; its last entry is the embedding size.
    pub fn new<R: Rng + ?Sized>(
        gene_in: usize,
        image_in: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) || gene_in == 0 || image_in == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid model widths: gene_in={gene_in} image_in={image_in} hidden={hidden:?}"
            )));
        }
        let stack = |input: usize, rng: &mut R| {
            let mut fan_in = input;
            hidden
                .iter()
                .map(|&fan_out| {
                    let layer = GcnLayer::new(fan_in, fan_out, Activation::Relu, rng);
                    fan_in = fan_out;
                    layer
                })
                .collect::<Vec<_>>()
        };
        let gene_layers = stack(gene_in, rng);
        let image_layers = stack(image_in, rng);
        let f = *hidden.last().unwrap();
        let decoder = GcnLayer::new(f, gene_in, Activation::Identity, rng);
        let disc_gene = Param::glorot(f, f, rng);
        let disc_image = Param::glorot(f, f, rng);
        Ok(Self {
            gene_layers,
            image_layers,
            fusion_logits: Param::zeros(1, hidden.len()),
            decoder,
            disc_gene,
            disc_image,
        })
    }

    pub fn depth(&self) -> usize {
        self.gene_layers.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.gene_layers.last().map_or(0, GcnLayer::fan_out)
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.fusion_logits.value.iter().map(|&l| sigmoid(l)).collect()
    }

    /// Every parameter paired with a stable name, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (prefix, layers) in [("gene", &self.gene_layers), ("image", &self.image_layers)] {
            for (l, layer) in layers.iter().enumerate() {
                out.push((format!("{prefix}.{l}.weight"), &layer.weight));
                out.push((format!("{prefix}.{l}.bias"), &layer.bias));
            }
        }
        out.push(("fusion.logits".into(), &self.fusion_logits));
        out.push(("decoder.weight".into(), &self.decoder.weight));
        out.push(("decoder.bias".into(), &self.decoder.bias));
        out.push(("disc.gene".into(), &self.disc_gene));
        out.push(("disc.image".into(), &self.disc_image));
        out
    }

    /// Mutable parameters in the same order as [`MpgaModel::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for layers in [&mut self.gene_layers, &mut self.image_layers] {
            for layer in layers.iter_mut() {
                out.push(&mut layer.weight);
                out.push(&mut layer.bias);
            }
        }
        out.push(&mut self.fusion_logits);
        out.push(&mut self.decoder.weight);
        out.push(&mut self.decoder.bias);
        out.push(&mut self.disc_gene);
        out.push(&mut self.disc_image);
        out
    }

    /// Parameters that the reconstruction objective alone can move.
    pub fn autoencoder_params_mut(&mut self) -> Vec<&mut Param> {
        let mut all = self.params_mut();
        all.truncate(all.len() - 2);
        all
    }

    /// Overwrites parameter values from named matrices (e.g. a checkpoint).
    pub fn load_named(&mut self, entries: &[(String, Array2<f64>)]) -> Result<()> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        let params = self.params_mut();
        if entries.len() != names.len() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} matrices, model has {}",
                entries.len(),
                names.len()
            )));
        }
        for ((name, p), (entry_name, value)) in names.iter().zip(params).zip(entries) {
            if name != entry_name || p.value.dim() != value.dim() {
                return Err(Error::Dimension(format!(
                    "checkpoint entry '{entry_name}' {:?} does not match parameter '{name}' {:?}",
                    value.dim(),
                    p.value.dim()
                )));
            }
            *p = Param::new(value.clone());
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &ModelInputs<'_>) -> Result<()> {
        let n = inputs.x_gene.nrows();
        if inputs.x_image.nrows() != n {
            return Err(Error::Dimension(format!(
                "gene features have {n} rows, image features {}",
                inputs.x_image.nrows()
            )));
        }
        for (name, g) in [("gene", inputs.gene_graph), ("image", inputs.image_graph)] {
            if g.adjacency.n_rows() != n || g.community.n_rows() != n {
                return Err(Error::Dimension(format!(
                    "{name} graph has {} nodes, data has {n} spots",
                    g.adjacency.n_rows()
                )));
            }
        }
        Ok(())
    }
}

/// Runs a GCN stack, returning every layer's cache.
fn run_stack(layers: &[GcnLayer], adj: &CsrMatrix, x: ArrayView2<'_, f64>) -> Result<Vec<LayerCache>> {
    let mut caches: Vec<LayerCache> = Vec::with_capacity(layers.len());
    for layer in layers {
        let cache = match caches.last() {
            Some(prev) => layer.forward(adj, prev.output().view())?,
            None => layer.forward(adj, x)?,
        };
        caches.push(cache);
    }
    Ok(caches)
}

fn backprop_stack(
    layers: &mut [GcnLayer],
    adj: &CsrMatrix,
    caches: &[LayerCache],
    grad_top: Array2<f64>,
) -> Result<()> {
    let mut grad = grad_top;
    for (l, layer) in layers.iter_mut().enumerate().rev() {
        match layer.backward(adj, &caches[l], grad.view(), l > 0)? {
            Some(g) => grad = g,
            None => break,
        }
    }
    Ok(())
}

/// Per-layer embeddings of both branches and their fusions.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub gene: Vec<LayerCache>,
    pub image: Vec<LayerCache>,
    /// `Z^(l) = α_l Z_G^(l) + (1 − α_l) Z_I^(l)` for every layer.
    pub fused: Vec<Array2<f64>>,
}

impl Encoding {
    pub fn gene_embedding(&self) -> &Array2<f64> {
        self.gene.last().expect("nonempty stack").output()
    }

    pub fn image_embedding(&self) -> &Array2<f64> {
        self.image.last().expect("nonempty stack").output()
    }

    pub fn final_embedding(&self) -> &Array2<f64> {
        self.fused.last().expect("nonempty stack")
    }
}

/// Convex combination `α·Z_G + (1 − α)·Z_I`.
pub fn fuse(z_gene: ArrayView2<'_, f64>, z_image: ArrayView2<'_, f64>, alpha: f64) -> Result<Array2<f64>> {
    if z_gene.dim() != z_image.dim() {
        return Err(Error::Dimension(format!(
            "cannot fuse {:?} with {:?}",
            z_gene.dim(),
            z_image.dim()
        )));
    }
    let mut out = z_gene.to_owned();
    Zip::from(&mut out)
        .and(z_image)
        .for_each(|g, &i| *g = alpha * *g + (1.0 - alpha) * i);
    Ok(out)
}

/// Embeds both modalities through their own GCN stacks (`Z^(0)` = raw features).
pub fn encode(
    model: &MpgaModel,
    x_gene: ArrayView2<'_, f64>,
    x_image: ArrayView2<'_, f64>,
    gene_adj: &CsrMatrix,
    image_adj: &CsrMatrix,
) -> Result<Encoding> {
    let gene = run_stack(&model.gene_layers, gene_adj, x_gene)?;
    let image = run_stack(&model.image_layers, image_adj, x_image)?;
    let fused = gene
        .iter()
        .zip(&image)
        .zip(model.alphas())
        .map(|((g, i), a)| fuse(g.output().view(), i.output().view(), a))
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoding { gene, image, fused })
}

/// Reconstructs expression from the final fused embedding over the proximity graph.
pub fn decode(model: &MpgaModel, z_final: ArrayView2<'_, f64>, gene_adj: &CsrMatrix) -> Result<Array2<f64>> {
    Ok(model.decoder.forward(gene_adj, z_final)?.output().clone())
}

/// `Σ_i ‖x_i − x̂_i‖²`, summed over spots.
pub fn reconstruction_loss(x: ArrayView2<'_, f64>, x_rec: ArrayView2<'_, f64>) -> Result<f64> {
    if x.dim() != x_rec.dim() {
        return Err(Error::Dimension(format!(
            "reconstruction {:?} vs data {:?}",
            x_rec.dim(),
            x.dim()
        )));
    }
    let mut total = 0.0;
    Zip::from(x).and(x_rec).for_each(|&a, &b| total += (a - b) * (a - b));
    Ok(total)
}

/// One modality's ingredients for a contrastive term. For the original-graph
/// loss `anchor` holds the community means of `embeddings`; for the symmetric
/// loss it holds those of `corrupted`.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveTerm<'a> {
    pub embeddings: ArrayView2<'a, f64>,
    pub corrupted: ArrayView2<'a, f64>,
    pub anchor: ArrayView2<'a, f64>,
    pub discriminator: &'a Param,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `−Σ_i [log Θ(pos_i, a_i) + log(1 − Θ(neg_i, a_i))]` together with the
/// derivatives of that sum with respect to both logit vectors.
fn pair_cross_entropy(
    positive: ArrayView2<'_, f64>,
    negative: ArrayView2<'_, f64>,
    anchor: ArrayView2<'_, f64>,
    disc: &Param,
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let pos_logits = bilinear_logits(positive, anchor, disc)?;
    let neg_logits = bilinear_logits(negative, anchor, disc)?;
    let mut loss = 0.0;
    let mut d_pos = Array1::zeros(pos_logits.len());
    let mut d_neg = Array1::zeros(neg_logits.len());
    for i in 0..pos_logits.len() {
        let p = sigmoid(pos_logits[i]);
        let q = sigmoid(neg_logits[i]);
        loss -= clamp_prob(p).ln() + (1.0 - clamp_prob(q)).ln();
        // Clamped probabilities are constant, so their derivative is zero.
        if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p) {
            d_pos[i] = p - 1.0;
        }
        if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&q) {
            d_neg[i] = q;
        }
    }
    Ok((loss, d_pos, d_neg))
}

fn spot_count(terms: &[ContrastiveTerm<'_>]) -> Result<f64> {
    let n = terms
        .first()
        .map(|t| t.embeddings.nrows())
        .ok_or_else(|| Error::InvalidArgument("no modalities given".into()))?;
    if n == 0 || terms.iter().any(|t| t.embeddings.nrows() != n) {
        return Err(Error::Dimension("modalities disagree on spot count".into()));
    }
    Ok(n as f64)
}

/// Original-graph contrastive loss: positives `(z_i, g_i)`, negatives
/// `(z*_i, g_i)`, summed over modalities and divided by N.
pub fn contrastive_loss(terms: &[ContrastiveTerm<'_>]) -> Result<f64> {
    let n = spot_count(terms)?;
    let mut total = 0.0;
    for t in terms {
        total += pair_cross_entropy(t.embeddings, t.corrupted, t.anchor, t.discriminator)?.0;
    }
    Ok(total / n)
}

/// Corrupted-graph mirror: positives `(z*_i, g*_i)`, negatives `(z_i, g*_i)`.
pub fn symmetric_contrastive_loss(terms: &[ContrastiveTerm<'_>]) -> Result<f64> {
    let n = spot_count(terms)?;
    let mut total = 0.0;
    for t in terms {
        total += pair_cross_entropy(t.corrupted, t.embeddings, t.anchor, t.discriminator)?.0;
    }
    Ok(total / n)
}

/// `θ1·L_Rec + θ2·(L_CL + L_CL_C)`.
pub fn total_loss(rec: f64, cl: f64, cl_c: f64, weights: LossWeights) -> f64 {
    weights.theta1 * rec + weights.theta2 * (cl + cl_c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub cl: f64,
    pub cl_c: f64,
    pub total: f64,
}

/// Corrupted-graph embeddings and the community means of both graphs.
#[derive(Debug, Clone)]
pub struct ContrastiveState {
    pub corrupted: Encoding,
    pub community_gene: Array2<f64>,
    pub community_image: Array2<f64>,
    pub community_gene_corrupt: Array2<f64>,
    pub community_image_corrupt: Array2<f64>,
}

/// Everything one training step computes on the way to the loss.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub original: Encoding,
    pub decoder: LayerCache,
    pub contrastive: Option<ContrastiveState>,
}

impl ForwardState {
    pub fn reconstruction(&self) -> &Array2<f64> {
        self.decoder.output()
    }
}

impl MpgaModel {
    /// Forward pass. With a corruption plan, also embeds the row-shuffled
    /// features on the unchanged graphs and computes community means.
    pub fn forward(&self, inputs: &ModelInputs<'_>, corruption: Option<&CorruptionPlan>) -> Result<ForwardState> {
        self.check_inputs(inputs)?;
        let (ga, ia) = (&inputs.gene_graph.adjacency, &inputs.image_graph.adjacency);
        let original = encode(self, inputs.x_gene, inputs.x_image, ga, ia)?;
        let decoder = self.decoder.forward(ga, original.final_embedding().view())?;
        let contrastive = match corruption {
            None => None,
            Some(plan) => {
                let xg = corrupt_features(inputs.x_gene, plan)?;
                let xi = corrupt_features(inputs.x_image, plan)?;
                let corrupted = encode(self, xg.view(), xi.view(), ga, ia)?;
                let cg = &inputs.gene_graph.community;
                let ci = &inputs.image_graph.community;
                Some(ContrastiveState {
                    community_gene: cg.matmul(original.gene_embedding().view())?,
                    community_image: ci.matmul(original.image_embedding().view())?,
                    community_gene_corrupt: cg.matmul(corrupted.gene_embedding().view())?,
                    community_image_corrupt: ci.matmul(corrupted.image_embedding().view())?,
                    corrupted,
                })
            }
        };
        Ok(ForwardState {
            original,
            decoder,
            contrastive,
        })
    }

    fn contrastive_terms<'a>(&'a self, state: &'a ForwardState) -> Option<[[ContrastiveTerm<'a>; 2]; 2]> {
        let c = state.contrastive.as_ref()?;
        let o = &state.original;
        let term = |z: &'a Array2<f64>, zc: &'a Array2<f64>, a: &'a Array2<f64>, d: &'a Param| ContrastiveTerm {
            embeddings: z.view(),
            corrupted: zc.view(),
            anchor: a.view(),
            discriminator: d,
        };
        let (zg, zi) = (o.gene_embedding(), o.image_embedding());
        let (zgc, zic) = (c.corrupted.gene_embedding(), c.corrupted.image_embedding());
        Some([
            [
                term(zg, zgc, &c.community_gene, &self.disc_gene),
                term(zi, zic, &c.community_image, &self.disc_image),
            ],
            [
                term(zg, zgc, &c.community_gene_corrupt, &self.disc_gene),
                term(zi, zic, &c.community_image_corrupt, &self.disc_image),
            ],
        ])
    }

    /// Loss components for a forward state. Without corruption both
    /// contrastive terms are reported as zero.
    pub fn losses(&self, state: &ForwardState, x_gene: ArrayView2<'_, f64>, weights: LossWeights) -> Result<LossBreakdown> {
        let rec = reconstruction_loss(x_gene, state.reconstruction().view())?;
        let (cl, cl_c) = match self.contrastive_terms(state) {
            Some([original, mirrored]) => (contrastive_loss(&original)?, symmetric_contrastive_loss(&mirrored)?),
            None => (0.0, 0.0),
        };
        Ok(LossBreakdown {
            rec,
            cl,
            cl_c,
            total: total_loss(rec, cl, cl_c, weights),
        })
    }

    /// Accumulates `∂L_Total/∂θ` for every parameter into its `grad`.
    pub fn backward(&mut self, state: &ForwardState, inputs: &ModelInputs<'_>, weights: LossWeights) -> Result<()> {
        let n_layers = self.depth();
        let ga = &inputs.gene_graph.adjacency;
        let ia = &inputs.image_graph.adjacency;
        let o = &state.original;

        // Reconstruction: ∂(θ1 Σ‖x − x̂‖²)/∂x̂ = 2θ1(x̂ − x).
        let grad_rec = (state.reconstruction() - &inputs.x_gene) * (2.0 * weights.theta1);
        let grad_fused = self
            .decoder
            .backward(ga, &state.decoder, grad_rec.view(), true)?
            .expect("input gradient requested");
        let alpha = sigmoid(self.fusion_logits.value[[0, n_layers - 1]]);
        let mut grad_zg = &grad_fused * alpha;
        let mut grad_zi = &grad_fused * (1.0 - alpha);
        let mut d_alpha = 0.0;
        Zip::from(&grad_fused)
            .and(o.gene_embedding())
            .and(o.image_embedding())
            .for_each(|&g, &a, &b| d_alpha += g * (a - b));
        self.fusion_logits.grad[[0, n_layers - 1]] += d_alpha * alpha * (1.0 - alpha);

        if let Some(c) = &state.contrastive {
            let n = inputs.x_gene.nrows() as f64;
            let scale = weights.theta2 / n;
            let (gz, grad_zgc) = contrastive_gradients(
                o.gene_embedding(),
                c.corrupted.gene_embedding(),
                &c.community_gene,
                &c.community_gene_corrupt,
                &inputs.gene_graph.community,
                &mut self.disc_gene,
                scale,
            )?;
            grad_zg += &gz;
            let (gz, grad_zic) = contrastive_gradients(
                o.image_embedding(),
                c.corrupted.image_embedding(),
                &c.community_image,
                &c.community_image_corrupt,
                &inputs.image_graph.community,
                &mut self.disc_image,
                scale,
            )?;
            grad_zi += &gz;
            backprop_stack(&mut self.gene_layers, ga, &c.corrupted.gene, grad_zgc)?;
            backprop_stack(&mut self.image_layers, ia, &c.corrupted.image, grad_zic)?;
        }

        backprop_stack(&mut self.gene_layers, ga, &o.gene, grad_zg)?;
        backprop_stack(&mut self.image_layers, ia, &o.image, grad_zi)?;
        Ok(())
    }
}


/// Gradients of `scale·(pair terms of L_CL + L_CL_C)` for one modality with
/// respect to the original and corrupted embeddings, routing community-mean
/// gradients back through the neighbor-mean operator. Accumulates the
/// discriminator gradient.
fn contrastive_gradients(
    z: &Array2<f64>,
    zc: &Array2<f64>,
    g: &Array2<f64>,
    gc: &Array2<f64>,
    community: &CsrMatrix,
    disc: &mut Param,
    scale: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    // Original-graph loss: (z, g) positive, (z*, g) negative.
    let (_, d_pos, d_neg) = pair_cross_entropy(z.view(), zc.view(), g.view(), disc)?;
    let (mut grad_z, grad_g1) = bilinear_backward(z.view(), g.view(), disc, (d_pos * scale).view());
    let (mut grad_zc, grad_g2) = bilinear_backward(zc.view(), g.view(), disc, (d_neg * scale).view());
    let grad_g = grad_g1 + grad_g2;

    // Corrupted-graph loss: (z*, g*) positive, (z, g*) negative.
    let (_, d_pos, d_neg) = pair_cross_entropy(zc.view(), z.view(), gc.view(), disc)?;
    let (gzc, grad_gc1) = bilinear_backward(zc.view(), gc.view(), disc, (d_pos * scale).view());
    let (gz, grad_gc2) = bilinear_backward(z.view(), gc.view(), disc, (d_neg * scale).view());
    grad_zc += &gzc;
    grad_z += &gz;
    let grad_gc = grad_gc1 + grad_gc2;

    grad_z += &community.transpose_matmul(grad_g.view())?;
    grad_zc += &community.transpose_matmul(grad_gc.view())?;
    Ok((grad_z, grad_zc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{knn_graph, GraphKind};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_stack_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = MpgaModel::new(3, 3, &[3], &mut rng).unwrap();
        for layer in model.gene_layers.iter_mut().chain(model.image_layers.iter_mut()) {
            *layer = GcnLayer::from_parts(Array2::eye(3), Array2::zeros((1, 3)), Activation::Identity).unwrap();
        }
        let x = random(4, 3, &mut rng);
        let eye = CsrMatrix::identity(4);
        let enc = encode(&model, x.view(), x.view(), &eye, &eye).unwrap();
        assert_eq!(enc.gene_embedding(), &x);
        assert_eq!(enc.final_embedding(), &x);
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = MpgaModel::new(3, 2, &[4, 2], &mut rng).unwrap();
        for layer in model.gene_layers.iter_mut().chain(model.image_layers.iter_mut()) {
            layer.weight.value.fill(0.0);
        }
        let eye = CsrMatrix::identity(5);
        let enc = encode(&model, random(5, 3, &mut rng).view(), random(5, 2, &mut rng).view(), &eye, &eye).unwrap();
        assert!(enc.fused.iter().all(|z| z.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn encode_matches_composed_expression() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = random(6, 2, &mut rng);
        let g = knn_graph(pts.view(), 2, GraphKind::Proximity).unwrap();
        let adj = g.normalized_adjacency().to_dense();
        let model = MpgaModel::new(4, 3, &[5, 2], &mut rng).unwrap();
        let xg = random(6, 4, &mut rng);
        let xi = random(6, 3, &mut rng);
        let csr = g.normalized_adjacency();
        let enc = encode(&model, xg.view(), xi.view(), csr, csr).unwrap();
        let relu = |m: Array2<f64>| m.mapv(|v| v.max(0.0));
        let layer = |l: &GcnLayer, z: &Array2<f64>| relu(adj.dot(z).dot(&l.weight.value) + &l.bias.value);
        let zg = layer(&model.gene_layers[1], &layer(&model.gene_layers[0], &xg));
        let zi = layer(&model.image_layers[1], &layer(&model.image_layers[0], &xi));
        let expect = &zg * 0.5 + &zi * 0.5;
        for (a, b) in enc.final_embedding().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(3, 2, &mut rng);
        let b = random(3, 2, &mut rng);
        assert_eq!(fuse(a.view(), b.view(), sigmoid(800.0)).unwrap(), a);
        assert_eq!(fuse(a.view(), a.view(), 0.5).unwrap(), a);
        let out = fuse(a.view(), b.view(), 0.3).unwrap();
        for ((o, x), y) in out.iter().zip(&a).zip(&b) {
            assert!((o - (0.3 * x + 0.7 * y)).abs() < 1e-15);
            assert!(*o >= x.min(*y) - 1e-15 && *o <= x.max(*y) + 1e-15);
        }
        assert!(fuse(a.view(), random(2, 2, &mut rng).view(), 0.5).is_err());
    }

    #[test]
    fn decode_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = MpgaModel::new(3, 3, &[3], &mut rng).unwrap();
        let eye = CsrMatrix::identity(4);
        assert!(decode(&model, Array2::zeros((4, 3)).view(), &eye).unwrap().iter().all(|&v| v == 0.0));
        model.decoder = GcnLayer::from_parts(Array2::eye(3), Array2::zeros((1, 3)), Activation::Identity).unwrap();
        let z = random(4, 3, &mut rng);
        assert_eq!(decode(&model, z.view(), &eye).unwrap(), z);
    }

    #[test]
    fn reconstruction_loss_examples() {
        let x = array![[1.0, 2.0]];
        assert_eq!(reconstruction_loss(x.view(), x.view()).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(array![[3.0, 4.0]].view(), array![[0.0, 0.0]].view()).unwrap(), 25.0);
        assert!(reconstruction_loss(x.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn uninformative_discriminator_gives_four_log_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = Param::zeros(2, 2);
        let z = random(5, 2, &mut rng);
        let zc = random(5, 2, &mut rng);
        let g = random(5, 2, &mut rng);
        let t = ContrastiveTerm {
            embeddings: z.view(),
            corrupted: zc.view(),
            anchor: g.view(),
            discriminator: &zero,
        };
        let four_log_two = 4.0 * std::f64::consts::LN_2;
        assert!((contrastive_loss(&[t, t]).unwrap() - four_log_two).abs() < 1e-12);
        assert!((symmetric_contrastive_loss(&[t, t]).unwrap() - four_log_two).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_hits_clamp_floor() {
        // Positives score +∞ and negatives −∞ under a huge identity weight.
        let big = Param::new(Array2::eye(1) * 1e6);
        let z = array![[1.0], [1.0]];
        let zc = array![[-1.0], [-1.0]];
        let t = ContrastiveTerm {
            embeddings: z.view(),
            corrupted: zc.view(),
            anchor: z.view(),
            discriminator: &big,
        };
        let loss = contrastive_loss(&[t, t]).unwrap();
        let floor = -4.0 * (1.0 - PROB_FLOOR).ln();
        assert!((loss - floor).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.0, 2.0, 3.0, LossWeights::default()), 15.0);
        let w = LossWeights { theta1: 0.0, theta2: 1.0 };
        assert_eq!(total_loss(5.0, 1.0, 1.0, w), 2.0);
        let w = LossWeights { theta1: 10.0, theta2: 0.0 };
        assert_eq!(total_loss(0.5, 7.0, 9.0, w), 5.0);
        assert!(LossWeights { theta1: -1.0, theta2: 0.0 }.validate().is_err());
    }

    #[test]
    fn checkpoint_names_round_trip_through_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = MpgaModel::new(5, 4, &[3, 2], &mut rng).unwrap();
        let entries: Vec<(String, Array2<f64>)> = model
            .named_params()
            .into_iter()
            .map(|(n, p)| (n, p.value.clone()))
            .collect();
        let mut other = MpgaModel::new(5, 4, &[3, 2], &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        other.load_named(&entries).unwrap();
        assert_eq!(other, model);
        let mut wrong = MpgaModel::new(5, 4, &[3, 3], &mut rng).unwrap();
        assert!(wrong.load_named(&entries).is_err());
    }
}
