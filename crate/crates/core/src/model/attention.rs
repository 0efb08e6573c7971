use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;

use super::bind;

/// Top-down cross-scale attention. Block `s` refines the scale-`s+1` latent
/// using the raw scale-`s` latent as query source. Each latent of width `L`
/// is viewed as `P = L/d` tokens of width `d`; attention is single-head with a
/// residual connection back to the refined latent.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossScaleAttention {
    prefix: String,
    scales: usize,
    latent: usize,
    token_dim: usize,
}

/// Node ids produced by one attention pass.
#[derive(Clone, Debug)]
pub struct FusedNodes {
    /// `B × (S·L)` concatenation of the refined latents.
    pub fused: NodeId,
    /// Per block, the `B × P × P` softmax weights.
    pub weights: Vec<NodeId>,
}

impl CrossScaleAttention {
    pub fn new(prefix: impl Into<String>, scales: usize, latent: usize, token_dim: usize) -> Result<Self> {
        if scales == 0 {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if token_dim == 0 || !latent.is_multiple_of(token_dim) {
            return Err(Error::Config(format!("latent width {latent} is not divisible by token width {token_dim}")));
        }
        Ok(Self { prefix: prefix.into(), scales, latent, token_dim })
    }

    pub fn tokens(&self) -> usize {
        self.latent / self.token_dim
    }

    pub fn blocks(&self) -> usize {
        self.scales - 1
    }

    pub fn output_width(&self) -> usize {
        self.scales * self.latent
    }

    /// Query, key, value and output projection names of block `b` (0-based).
    pub fn projection_names(&self, block: usize) -> [String; 4] {
        ["query", "key", "value", "output"].map(|p| format!("{}.b{block}.{p}", self.prefix))
    }

    /// Projections uniform on `±√(3/d)`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let d = self.token_dim;
        let bound = (3.0 / d as f64).sqrt();
        for block in 0..self.blocks() {
            for name in self.projection_names(block) {
                let w = (0..d * d).map(|_| rng.gen_range(-bound..bound)).collect();
                store.insert(name, Tensor::new(vec![d, d], w).unwrap());
            }
        }
    }

    fn project(&self, g: &mut Graph, tokens: NodeId, weight: NodeId, batch: usize) -> Result<NodeId> {
        let p = g.matmul(tokens, weight)?;
        g.reshape(p, vec![batch, self.tokens(), self.token_dim])
    }

    /// `latents[s]: B × L` for each scale → fused `B × (S·L)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, latents: &[NodeId]) -> Result<FusedNodes> {
        if latents.len() != self.scales {
            return Err(Error::Shape {
                node: "cross-scale attention".into(),
                detail: format!("expected {} latents, got {}", self.scales, latents.len()),
            });
        }
        let batch = g.shape(latents[0])[0];
        for &z in latents {
            if g.shape(z) != [batch, self.latent] {
                return Err(Error::Shape {
                    node: "cross-scale attention".into(),
                    detail: format!("latent shape {:?}, expected [{batch}, {}]", g.shape(z), self.latent),
                });
            }
        }
        let (p, d) = (self.tokens(), self.token_dim);
        let mut refined = vec![latents[0]];
        let mut weights = Vec::new();
        for block in 0..self.blocks() {
            let [wq, wk, wv, wo] = self.projection_names(block).map(|n| bind(g, store, &n));
            let (wq, wk, wv, wo) = (wq?, wk?, wv?, wo?);
            let query_src = g.reshape(latents[block], vec![batch * p, d])?;
            let kv_src = g.reshape(latents[block + 1], vec![batch * p, d])?;
            let q = self.project(g, query_src, wq, batch)?;
            let k = self.project(g, kv_src, wk, batch)?;
            let v = self.project(g, kv_src, wv, batch)?;
            let kt = g.transpose(k)?;
            let scores = g.batch_matmul(q, kt)?;
            let scores = g.scale(scores, 1.0 / (d as f64).sqrt())?;
            let attn = g.softmax(scores)?;
            weights.push(attn);
            let mixed = g.batch_matmul(attn, v)?;
            let mixed = g.reshape(mixed, vec![batch * p, d])?;
            let out = g.matmul(mixed, wo)?;
            let out = g.reshape(out, vec![batch, self.latent])?;
            refined.push(g.add(out, latents[block + 1])?);
        }
        let fused = if refined.len() == 1 { refined[0] } else { g.concat(&refined, 1)? };
        Ok(FusedNodes { fused, weights })
    }
}
