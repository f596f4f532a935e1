//! Differentiable layers with hand-written reverse passes.
//!
//! Weights are stored `input × output`, so a layer computes `H W` with one
//! node per row of `H`.
//!
//! * GCN: `h_i' = σ(Σ_{j∈IN(i)} W h_j / sqrt(|IN(i)| |IN(j)|) + b)`
//! * RGCN: `h_i' = σ(Σ_r Σ_{j∈N_i^r} W_r h_j / |N_i^r| + W_0 h_i + b)` with
//!   `W_r = Σ_b a_rb V_b`
//! * GAT: `h_i' = σ(Σ_{j∈N_i} α_ij W h_j + b)`,
//!   `α_ij = softmax_j LeakyReLU(a_lᵀ W h_i + a_rᵀ W h_j)`
//! * Dense: `y = σ(x W + b)`

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::batch::Topology;
use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};
use crate::graph::EdgeRelation;

pub const LEAKY_SLOPE: f64 = 0.2;
/// Parameters are drawn from `U(-s, s)` with `s = INIT_GAIN / sqrt(fan_in)`,
/// giving unit-variance pre-activations for unit-variance inputs.
pub const INIT_GAIN: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMerge {
    Concat,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Gcn,
    Rgcn { num_relations: usize, num_bases: usize },
    Gat { heads: usize, merge: HeadMerge },
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 {
            return Err(Error::Config(format!("layer widths must be positive: {self:?}")));
        }
        match self.kind {
            LayerKind::Rgcn {
                num_relations,
                num_bases,
            } => {
                if num_relations == 0 || num_relations > EdgeRelation::NUM_NEIGHBOR_RELATIONS {
                    return Err(Error::Config(format!(
                        "rgcn supports 1..={} relations, got {num_relations}",
                        EdgeRelation::NUM_NEIGHBOR_RELATIONS
                    )));
                }
                if num_bases == 0 || num_bases > num_relations {
                    return Err(Error::Config(format!(
                        "rgcn bases must be in 1..={num_relations}, got {num_bases}"
                    )));
                }
            }
            LayerKind::Gat { heads, merge } => {
                if heads == 0 {
                    return Err(Error::Config("gat needs at least one head".into()));
                }
                if merge == HeadMerge::Concat && !self.output.is_multiple_of(heads) {
                    return Err(Error::Config(format!(
                        "gat output {} not divisible by {heads} heads",
                        self.output
                    )));
                }
            }
            LayerKind::Gcn | LayerKind::Dense => {}
        }
        Ok(())
    }

    pub fn is_graph_layer(&self) -> bool {
        !matches!(self.kind, LayerKind::Dense)
    }

    /// Width of one attention head.
    fn head_width(&self) -> usize {
        match self.kind {
            LayerKind::Gat {
                heads,
                merge: HeadMerge::Concat,
            } => self.output / heads,
            _ => self.output,
        }
    }
}

/// A layer and its parameter tensors.
///
/// Parameter order: GCN/Dense `[W, b]`; RGCN `[W_0, a, V_1..V_B, b]`;
/// GAT `[W, attention (heads × 2·head_width), b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<Matrix>,
}

/// Intermediate values kept from the forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub z: Matrix,
    pub out: Matrix,
    extra: CacheExtra,
}

#[derive(Debug, Clone)]
enum CacheExtra {
    Gcn { agg: Matrix },
    Rgcn { agg: Vec<Matrix>, weights: Vec<Matrix> },
    Gat { proj: Matrix, raw: Vec<f64>, alpha: Vec<f64> },
    Dense,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let s = INIT_GAIN / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..s))
}

impl Layer {
    pub fn init(spec: LayerSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (fin, fout) = (spec.input, spec.output);
        let params = match spec.kind {
            LayerKind::Gcn | LayerKind::Dense => {
                vec![uniform(fin, fout, fin, rng), Matrix::zeros(1, fout)]
            }
            LayerKind::Rgcn {
                num_relations,
                num_bases,
            } => {
                let mut p = vec![uniform(fin, fout, fin, rng)];
                p.push(if num_bases == num_relations {
                    Matrix::identity(num_relations)
                } else {
                    uniform(num_relations, num_bases, num_bases, rng)
                });
                for _ in 0..num_bases {
                    p.push(uniform(fin, fout, fin, rng));
                }
                p.push(Matrix::zeros(1, fout));
                p
            }
            LayerKind::Gat { heads, .. } => {
                let hw = spec.head_width();
                vec![
                    uniform(fin, heads * hw, fin, rng),
                    uniform(heads, 2 * hw, hw, rng),
                    Matrix::zeros(1, fout),
                ]
            }
        };
        Ok(Layer { spec, params })
    }

    /// Checks that parameter shapes agree with the spec.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let (fin, fout) = (self.spec.input, self.spec.output);
        let expected: Vec<(usize, usize)> = match self.spec.kind {
            LayerKind::Gcn | LayerKind::Dense => vec![(fin, fout), (1, fout)],
            LayerKind::Rgcn {
                num_relations,
                num_bases,
            } => {
                let mut e = vec![(fin, fout), (num_relations, num_bases)];
                e.extend(std::iter::repeat_n((fin, fout), num_bases));
                e.push((1, fout));
                e
            }
            LayerKind::Gat { heads, .. } => {
                let hw = self.spec.head_width();
                vec![(fin, heads * hw), (heads, 2 * hw), (1, fout)]
            }
        };
        let actual: Vec<(usize, usize)> = self.params.iter().map(Matrix::shape).collect();
        if actual != expected {
            return Err(Error::Shape(format!(
                "layer parameters {actual:?} do not match spec {expected:?}"
            )));
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    pub fn forward(&self, input: &Matrix, topo: Option<&Topology>) -> Result<LayerCache> {
        if input.cols() != self.spec.input {
            return Err(Error::Shape(format!(
                "layer expects width {}, got {}",
                self.spec.input,
                input.cols()
            )));
        }
        let need_topo = || {
            topo.filter(|t| t.num_nodes == input.rows())
                .ok_or_else(|| Error::Shape("graph layer needs a topology matching the input rows".into()))
        };
        let (mut z, extra) = match self.spec.kind {
            LayerKind::Dense => (input.matmul(&self.params[0])?, CacheExtra::Dense),
            LayerKind::Gcn => {
                let topo = need_topo()?;
                let mut agg = Matrix::zeros(input.rows(), input.cols());
                for e in &topo.gcn {
                    axpy(e.weight, input.row(e.src), agg.row_mut(e.dst));
                }
                (agg.matmul(&self.params[0])?, CacheExtra::Gcn { agg })
            }
            LayerKind::Rgcn {
                num_relations,
                num_bases,
            } => self.rgcn_forward(input, need_topo()?, num_relations, num_bases)?,
            LayerKind::Gat { heads, merge } => self.gat_forward(input, need_topo()?, heads, merge)?,
        };
        z.add_row_broadcast(self.params.last().expect("bias").as_slice())?;
        let out = self.spec.activation.apply(&z);
        if !out.is_finite() {
            return Err(Error::NonFinite(format!("{:?} layer", self.spec.kind)));
        }
        Ok(LayerCache { z, out, extra })
    }

    fn rgcn_forward(
        &self,
        input: &Matrix,
        topo: &Topology,
        num_relations: usize,
        num_bases: usize,
    ) -> Result<(Matrix, CacheExtra)> {
        if let Some(r) = (num_relations..topo.relations.len()).find(|&r| !topo.relations[r].edges.is_empty()) {
            return Err(Error::Graph(format!(
                "edge relation {:?} has no weight in a {num_relations}-relation layer",
                EdgeRelation::ALL[r]
            )));
        }
        let coeffs = &self.params[1];
        let bases = &self.params[2..2 + num_bases];
        let mut z = input.matmul(&self.params[0])?;
        let mut aggs = Vec::with_capacity(num_relations);
        let mut weights = Vec::with_capacity(num_relations);
        for (r, block) in topo.relations.iter().take(num_relations).enumerate() {
            let mut w_r = Matrix::zeros(self.spec.input, self.spec.output);
            for (b, basis) in bases.iter().enumerate() {
                let a = coeffs.get(r, b);
                if a != 0.0 {
                    w_r.add_scaled(a, basis)?;
                }
            }
            let mut agg = Matrix::zeros(block.rows.len(), input.cols());
            for e in &block.edges {
                axpy(e.weight, input.row(e.src), agg.row_mut(e.dst));
            }
            let contribution = agg.matmul(&w_r)?;
            for (local, &row) in block.rows.iter().enumerate() {
                axpy(1.0, contribution.row(local), z.row_mut(row));
            }
            aggs.push(agg);
            weights.push(w_r);
        }
        Ok((z, CacheExtra::Rgcn { agg: aggs, weights }))
    }

    fn gat_forward(&self, input: &Matrix, topo: &Topology, heads: usize, merge: HeadMerge) -> Result<(Matrix, CacheExtra)> {
        let n = input.rows();
        let hw = self.spec.head_width();
        let attn = &self.params[1];
        let proj = input.matmul(&self.params[0])?;
        let (left, right) = attention_scores(&proj, attn, heads, hw);
        let edges = topo.in_sources.len();
        let mut raw = vec![0.0; edges * heads];
        let mut alpha = vec![0.0; edges * heads];
        let mut z = Matrix::zeros(n, self.spec.output);
        let mean_scale = 1.0 / heads as f64;
        for i in 0..n {
            let (start, end) = (topo.in_offsets[i], topo.in_offsets[i + 1]);
            if start == end {
                return Err(Error::Graph(format!("node {i} has no incoming edge for attention")));
            }
            for k in 0..heads {
                let mut max = f64::NEG_INFINITY;
                for idx in start..end {
                    let j = topo.in_sources[idx];
                    let r = left[i * heads + k] + right[j * heads + k];
                    raw[idx * heads + k] = r;
                    let t = leaky(r);
                    alpha[idx * heads + k] = t;
                    max = max.max(t);
                }
                let mut total = 0.0;
                for idx in start..end {
                    let a = (alpha[idx * heads + k] - max).exp();
                    alpha[idx * heads + k] = a;
                    total += a;
                }
                let (offset, scale) = match merge {
                    HeadMerge::Concat => (k * hw, 1.0),
                    HeadMerge::Mean => (0, mean_scale),
                };
                for idx in start..end {
                    let a = alpha[idx * heads + k] / total;
                    alpha[idx * heads + k] = a;
                    let j = topo.in_sources[idx];
                    let src = &proj.row(j)[k * hw..(k + 1) * hw];
                    axpy(a * scale, src, &mut z.row_mut(i)[offset..offset + hw]);
                }
            }
        }
        Ok((z, CacheExtra::Gat { proj, raw, alpha }))
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to `input`.
    pub fn backward(
        &self,
        input: &Matrix,
        cache: &LayerCache,
        d_out: &Matrix,
        topo: Option<&Topology>,
        grads: &mut [Matrix],
    ) -> Result<Matrix> {
        if d_out.shape() != cache.out.shape() {
            return Err(Error::Shape("output gradient shape mismatch".into()));
        }
        let mut dz = d_out.clone();
        self.spec.activation.backprop(&cache.z, &cache.out, &mut dz);
        let last = grads.len() - 1;
        dz.add_column_sums_into(grads[last].as_mut_slice());
        let topo = || topo.ok_or_else(|| Error::Shape("graph layer needs a topology".into()));

        match (&self.spec.kind, &cache.extra) {
            (LayerKind::Dense, CacheExtra::Dense) => {
                input.add_t_matmul_into(&dz, &mut grads[0])?;
                dz.matmul_t(&self.params[0])
            }
            (LayerKind::Gcn, CacheExtra::Gcn { agg }) => {
                agg.add_t_matmul_into(&dz, &mut grads[0])?;
                let d_agg = dz.matmul_t(&self.params[0])?;
                let mut d_in = Matrix::zeros(input.rows(), input.cols());
                for e in &topo()?.gcn {
                    axpy(e.weight, d_agg.row(e.dst), d_in.row_mut(e.src));
                }
                Ok(d_in)
            }
            (LayerKind::Rgcn { num_bases, .. }, CacheExtra::Rgcn { agg, weights }) => {
                let topo = topo()?;
                input.add_t_matmul_into(&dz, &mut grads[0])?;
                let mut d_in = dz.matmul_t(&self.params[0])?;
                let num_bases = *num_bases;
                for (r, (block, (agg_r, w_r))) in topo.relations.iter().zip(agg.iter().zip(weights)).enumerate() {
                    if block.rows.is_empty() {
                        continue;
                    }
                    let dz_r = dz.select_rows(&block.rows);
                    let mut d_w = Matrix::zeros(w_r.rows(), w_r.cols());
                    agg_r.add_t_matmul_into(&dz_r, &mut d_w)?;
                    for b in 0..num_bases {
                        let a = self.params[1].get(r, b);
                        let da = grads[1].get(r, b) + d_w.dot(&self.params[2 + b]);
                        grads[1].set(r, b, da);
                        grads[2 + b].add_scaled(a, &d_w)?;
                    }
                    let d_agg = dz_r.matmul_t(w_r)?;
                    for e in &block.edges {
                        axpy(e.weight, d_agg.row(e.dst), d_in.row_mut(e.src));
                    }
                }
                Ok(d_in)
            }
            (LayerKind::Gat { heads, merge }, CacheExtra::Gat { proj, raw, alpha }) => {
                let topo = topo()?;
                let (heads, merge) = (*heads, *merge);
                let hw = self.spec.head_width();
                let attn = &self.params[1];
                let n = input.rows();
                let mut d_proj = Matrix::zeros(n, heads * hw);
                let mut d_left = vec![0.0; n * heads];
                let mut d_right = vec![0.0; n * heads];
                let mean_scale = 1.0 / heads as f64;
                let mut d_alpha = Vec::new();
                for i in 0..n {
                    let (start, end) = (topo.in_offsets[i], topo.in_offsets[i + 1]);
                    for k in 0..heads {
                        let (offset, scale) = match merge {
                            HeadMerge::Concat => (k * hw, 1.0),
                            HeadMerge::Mean => (0, mean_scale),
                        };
                        let d_agg = &dz.row(i)[offset..offset + hw];
                        d_alpha.clear();
                        let mut weighted = 0.0;
                        for idx in start..end {
                            let j = topo.in_sources[idx];
                            let a = alpha[idx * heads + k];
                            let da = scale * dot(d_agg, &proj.row(j)[k * hw..(k + 1) * hw]);
                            axpy(a * scale, d_agg, &mut d_proj.row_mut(j)[k * hw..(k + 1) * hw]);
                            weighted += a * da;
                            d_alpha.push(da);
                        }
                        for (idx, da) in (start..end).zip(&d_alpha) {
                            let j = topo.in_sources[idx];
                            let a = alpha[idx * heads + k];
                            let de = a * (da - weighted);
                            let slope = if raw[idx * heads + k] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                            let dt = de * slope;
                            d_left[i * heads + k] += dt;
                            d_right[j * heads + k] += dt;
                        }
                    }
                }
                for node in 0..n {
                    for k in 0..heads {
                        let zk = &proj.row(node)[k * hw..(k + 1) * hw];
                        let (dl, dr) = (d_left[node * heads + k], d_right[node * heads + k]);
                        {
                            let g = grads[1].row_mut(k);
                            axpy(dl, zk, &mut g[..hw]);
                            axpy(dr, zk, &mut g[hw..]);
                        }
                        let a = attn.row(k);
                        let dst = &mut d_proj.row_mut(node)[k * hw..(k + 1) * hw];
                        axpy(dl, &a[..hw], dst);
                        axpy(dr, &a[hw..], dst);
                    }
                }
                input.add_t_matmul_into(&d_proj, &mut grads[0])?;
                d_proj.matmul_t(&self.params[0])
            }
            _ => Err(Error::Shape("cache does not belong to this layer".into())),
        }
    }

    /// Attention coefficients of a GAT layer, one row per incoming edge in
    /// CSR order and one column per head.
    pub fn attention(&self, cache: &LayerCache) -> Option<Matrix> {
        match (&self.spec.kind, &cache.extra) {
            (LayerKind::Gat { heads, .. }, CacheExtra::Gat { alpha, .. }) => {
                Matrix::from_vec(alpha.len() / heads, *heads, alpha.clone()).ok()
            }
            _ => None,
        }
    }
}

fn attention_scores(proj: &Matrix, attn: &Matrix, heads: usize, hw: usize) -> (Vec<f64>, Vec<f64>) {
    let n = proj.rows();
    let mut left = vec![0.0; n * heads];
    let mut right = vec![0.0; n * heads];
    for i in 0..n {
        for k in 0..heads {
            let zk = &proj.row(i)[k * hw..(k + 1) * hw];
            let a = attn.row(k);
            left[i * heads + k] = dot(zk, &a[..hw]);
            right[i * heads + k] = dot(zk, &a[hw..]);
        }
    }
    (left, right)
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}
