//! The motion implicit representation network.
//!
//! For a query time `t` on an observed sequence:
//! 1. each scale `s` extracts a clip on a stride-`2^(s−1)` grid, and an
//!    encoder MLP maps `[clip frames, slot offsets, t]` to a reference vector;
//! 2. a per-scale Fourier-activated MLP turns that into a latent code;
//! 3. cross-scale attention refines the latents top-down and concatenates them;
//! 4. a decoder MLP maps `[fused latents, t]` to the frame.

mod activation;
mod attention;
mod checkpoint;
mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use activation::{ActivationKind, FourierActivation};
pub use attention::{CrossScaleAttention, FusedNodes};
pub use checkpoint::{MODEL_MAGIC, MODEL_VERSION};
pub use mlp::PaidMlp;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::motion::{FeatureStats, MotionSequence};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Queries evaluated per graph when predicting.
const PREDICT_CHUNK: usize = 256;

/// Architecture descriptor. Every field has a default and can be set from
/// the `[model]` table of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Number of temporal scales `S`.
    pub scales: usize,
    /// Harmonics per activation `ζ`.
    pub harmonics: usize,
    /// Latent width `L` per scale.
    pub latent: usize,
    /// Attention token width `d`; `L/d` tokens per latent.
    pub token_dim: usize,
    /// Frames per clip `N`.
    pub clip_frames: usize,
    pub encoder_hidden: usize,
    pub encoder_hidden_layers: usize,
    /// Hidden layers of the per-scale latent MLP (width `L`).
    pub latent_hidden_layers: usize,
    pub decoder_hidden: usize,
    /// Linear layers in the decoder, including the output layer.
    pub decoder_layers: usize,
    /// One activation per MLP instead of one per layer.
    pub share_activations: bool,
    pub activation: ActivationKind,
    /// Base frequency of the activation after each MLP's first layer.
    pub first_omega: f64,
    /// Base frequency of deeper activations.
    pub hidden_omega: f64,
    pub seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            scales: 3,
            harmonics: 16,
            latent: 128,
            token_dim: 16,
            clip_frames: 5,
            encoder_hidden: 128,
            encoder_hidden_layers: 2,
            latent_hidden_layers: 1,
            decoder_hidden: 256,
            decoder_layers: 5,
            share_activations: false,
            activation: ActivationKind::Fourier,
            first_omega: 1.0,
            hidden_omega: 1.0,
            seed: 0,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.scales == 0 {
            return bad("scales must be >= 1");
        }
        if self.scales > 16 {
            return bad("scales must be <= 16");
        }
        if self.harmonics == 0 {
            return bad("harmonics must be >= 1");
        }
        if self.clip_frames == 0 {
            return bad("clip_frames must be >= 1");
        }
        if self.token_dim == 0 || self.latent == 0 || !self.latent.is_multiple_of(self.token_dim) {
            return bad("latent must be a positive multiple of token_dim");
        }
        if self.encoder_hidden == 0 || self.decoder_hidden == 0 {
            return bad("hidden widths must be >= 1");
        }
        if self.decoder_layers == 0 {
            return bad("decoder_layers must be >= 1");
        }
        if !self.first_omega.is_finite() || !self.hidden_omega.is_finite() {
            return bad("activation frequencies must be finite");
        }
        Ok(())
    }

    /// Encoder input width for `dim`-wide frames: clip values, slot offsets and `t`.
    pub fn encoder_input(&self, dim: usize) -> usize {
        self.clip_frames * dim + self.clip_frames + 1
    }

    pub fn stride(&self, scale: usize) -> usize {
        1 << (scale - 1)
    }
}

/// Inputs for a batch of queries: per scale a `B × (N·D + N + 1)` matrix.
#[derive(Clone, Debug)]
pub struct QueryBatch {
    pub times: Vec<f64>,
    pub encoder_inputs: Vec<Tensor>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Registers `name` from `store` as a trainable leaf of `g` (once per graph).
pub(crate) fn bind(g: &mut Graph, store: &ParamStore, name: &str) -> Result<NodeId> {
    Ok(g.param(name, store.expect(name)?.clone()))
}

#[derive(Clone, Debug)]
pub struct Model {
    arch: ArchConfig,
    dim: usize,
    params: ParamStore,
    stats: FeatureStats,
    encoders: Vec<PaidMlp>,
    latents: Vec<PaidMlp>,
    attention: CrossScaleAttention,
    decoder: PaidMlp,
}

impl Model {
    /// Builds the network for `dim`-wide frames and initializes it from
    /// `arch.seed`.
    pub fn new(arch: ArchConfig, dim: usize) -> Result<Self> {
        let mut model = Self::skeleton(arch, dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.arch.seed);
        let (w0, w1) = (model.arch.first_omega, model.arch.hidden_omega);
        for s in 0..model.arch.scales {
            model.encoders[s].init(&mut model.params, &mut rng, w0, w1);
            model.latents[s].init(&mut model.params, &mut rng, w0, w1);
        }
        model.attention.init(&mut model.params, &mut rng);
        model.decoder.init(&mut model.params, &mut rng, w0, w1);
        Ok(model)
    }

    /// Structure without parameter values.
    fn skeleton(arch: ArchConfig, dim: usize) -> Result<Self> {
        arch.validate()?;
        if dim == 0 {
            return Err(Error::Config("feature width must be >= 1".into()));
        }
        let (zeta, shared, kind) = (arch.harmonics, arch.share_activations, arch.activation);
        let mut encoders = Vec::with_capacity(arch.scales);
        let mut latents = Vec::with_capacity(arch.scales);
        for s in 0..arch.scales {
            let mut widths = vec![arch.encoder_input(dim)];
            widths.extend(std::iter::repeat_n(arch.encoder_hidden, arch.encoder_hidden_layers));
            widths.push(arch.latent);
            encoders.push(PaidMlp::new(format!("enc{s}"), widths, zeta, shared, kind)?);
            let widths = vec![arch.latent; arch.latent_hidden_layers + 2];
            latents.push(PaidMlp::new(format!("paid{s}"), widths, zeta, shared, kind)?);
        }
        let attention = CrossScaleAttention::new("att", arch.scales, arch.latent, arch.token_dim)?;
        let mut widths = vec![arch.scales * arch.latent + 1];
        widths.extend(std::iter::repeat_n(arch.decoder_hidden, arch.decoder_layers - 1));
        widths.push(dim);
        let decoder = PaidMlp::new("dec", widths, zeta, shared, kind)?;
        Ok(Self {
            stats: FeatureStats::identity(dim),
            arch,
            dim,
            params: ParamStore::new(),
            encoders,
            latents,
            attention,
            decoder,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    /// Frame width `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        for (name, t) in self.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::format(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::format(format!("missing parameter `{name}`"))),
            }
        }
        if params.len() != self.params.len() {
            return Err(Error::format("unexpected extra parameters"));
        }
        self.params = params;
        Ok(())
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    pub fn set_stats(&mut self, stats: FeatureStats) -> Result<()> {
        if stats.mean.len() != self.dim || stats.std.len() != self.dim {
            return Err(Error::invalid("normalization statistics do not match the feature width"));
        }
        self.stats = stats;
        Ok(())
    }

    pub fn encoders(&self) -> &[PaidMlp] {
        &self.encoders
    }

    pub fn latent_mlps(&self) -> &[PaidMlp] {
        &self.latents
    }

    pub fn attention(&self) -> &CrossScaleAttention {
        &self.attention
    }

    pub fn decoder(&self) -> &PaidMlp {
        &self.decoder
    }

    /// Fails unless `seq` has the feature width this model was built for.
    pub fn check_compatible(&self, seq: &MotionSequence) -> Result<()> {
        if seq.dim() != self.dim {
            return Err(Error::invalid(format!(
                "model expects {}-wide frames, sequence has {}",
                self.dim,
                seq.dim()
            )));
        }
        Ok(())
    }

    /// Builds encoder inputs for `times` on an already-normalized sequence.
    /// Masked frames never enter a clip.
    pub fn queries(&self, seq: &MotionSequence, times: &[f64], mask: Option<&[bool]>) -> Result<QueryBatch> {
        self.check_compatible(seq)?;
        if let Some(m) = mask {
            if m.len() != seq.len() {
                return Err(Error::invalid("mask length differs from sequence length"));
            }
            if m.iter().all(|&hidden| hidden) {
                return Err(Error::invalid("every frame is masked"));
            }
        }
        let width = self.arch.encoder_input(self.dim);
        let n = self.arch.clip_frames;
        let mut encoder_inputs = Vec::with_capacity(self.arch.scales);
        for scale in 1..=self.arch.scales {
            let mut data = Vec::with_capacity(times.len() * width);
            for &t in times {
                let clip = seq.extract_clip_masked(t, scale, n, mask);
                data.extend_from_slice(&clip.values);
                data.extend_from_slice(&clip.offsets);
                data.push(t);
            }
            encoder_inputs.push(Tensor::new(vec![times.len(), width], data)?);
        }
        Ok(QueryBatch { times: times.to_vec(), encoder_inputs })
    }

    /// Per-scale latent codes, each `B × L`.
    pub fn encode_multiscale(&self, g: &mut Graph, batch: &QueryBatch) -> Result<Vec<NodeId>> {
        self.encoders
            .iter()
            .zip(&self.latents)
            .zip(&batch.encoder_inputs)
            .map(|((enc, paid), input)| {
                let x = g.constant(input.clone());
                let r = enc.forward(g, &self.params, x)?;
                paid.forward(g, &self.params, r)
            })
            .collect()
    }

    pub fn fuse_cross_scale(&self, g: &mut Graph, latents: &[NodeId]) -> Result<FusedNodes> {
        self.attention.forward(g, &self.params, latents)
    }

    /// `fused: B × (S·L)` and `times` → `B × D` normalized frames.
    pub fn decode(&self, g: &mut Graph, fused: NodeId, times: &[f64]) -> Result<NodeId> {
        let t = g.constant(Tensor::new(vec![times.len(), 1], times.to_vec())?);
        let input = g.concat(&[fused, t], 1)?;
        self.decoder.forward(g, &self.params, input)
    }

    /// Full forward pass to normalized frames, `B × D`.
    pub fn forward(&self, g: &mut Graph, batch: &QueryBatch) -> Result<NodeId> {
        let latents = self.encode_multiscale(g, batch)?;
        let fused = self.fuse_cross_scale(g, &latents)?;
        self.decode(g, fused.fused, &batch.times)
    }

    /// Frames at `times` (normalized to the span of `seq`), in the units of
    /// `seq`. `mask` hides frames from the clips.
    pub fn predict_masked(&self, seq: &MotionSequence, times: &[f64], mask: Option<&[bool]>) -> Result<Tensor> {
        self.check_compatible(seq)?;
        let normalized = self.stats.normalize(seq)?;
        let chunks: Vec<Result<Vec<f64>>> = times
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let batch = self.queries(&normalized, chunk, mask)?;
                let mut g = Graph::new();
                let out = self.forward(&mut g, &batch)?;
                let mut values = g.value(out).data().to_vec();
                for row in values.chunks_mut(self.dim) {
                    self.stats.denormalize_row(row);
                }
                Ok(values)
            })
            .collect();
        let mut data = Vec::with_capacity(times.len() * self.dim);
        for chunk in chunks {
            data.extend(chunk?);
        }
        Tensor::new(vec![times.len(), self.dim], data)
    }

    pub fn predict(&self, seq: &MotionSequence, times: &[f64]) -> Result<Tensor> {
        self.predict_masked(seq, times, None)
    }

    /// The frame at a single temporal coordinate.
    pub fn predict_frame(&self, seq: &MotionSequence, t: f64) -> Result<Vec<f64>> {
        Ok(self.predict(seq, &[t])?.into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_arch() -> ArchConfig {
        ArchConfig {
            scales: 2,
            harmonics: 3,
            latent: 8,
            token_dim: 4,
            clip_frames: 3,
            encoder_hidden: 6,
            encoder_hidden_layers: 1,
            latent_hidden_layers: 1,
            decoder_hidden: 6,
            decoder_layers: 2,
            seed: 5,
            ..ArchConfig::default()
        }
    }

    fn wave(t: usize, d: usize) -> MotionSequence {
        let rows: Vec<Vec<f64>> =
            (0..t).map(|i| (0..d).map(|j| ((i as f64) * 0.3 + j as f64).sin()).collect()).collect();
        MotionSequence::from_rows(&rows, 30.0).unwrap()
    }

    #[test]
    fn default_arch_matches_published_settings() {
        let a = ArchConfig::default();
        assert_eq!((a.scales, a.harmonics, a.latent, a.token_dim, a.clip_frames), (3, 16, 128, 16, 5));
        assert_eq!((a.decoder_layers, a.decoder_hidden), (5, 256));
        assert!(!a.share_activations);
    }

    #[test]
    fn widths_are_consistent() {
        let m = Model::new(ArchConfig::default(), 263).unwrap();
        assert_eq!(m.encoders()[0].input_width(), 5 * 263 + 5 + 1);
        assert_eq!(m.decoder().input_width(), 3 * 128 + 1);
        assert_eq!(m.decoder().output_width(), 263);
        assert_eq!(m.decoder().layers(), 5);
    }

    #[test]
    fn deterministic_prediction() {
        let m = Model::new(tiny_arch(), 2).unwrap();
        let seq = wave(9, 2);
        let a = m.predict_frame(&seq, 0.37).unwrap();
        let b = m.predict_frame(&seq, 0.37).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn endpoints_and_extrapolation_are_valid_queries() {
        let m = Model::new(tiny_arch(), 2).unwrap();
        let seq = wave(9, 2);
        let out = m.predict(&seq, &[0.0, 1.0, -0.3, 1.4]).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        assert!(out.all_finite());
    }

    #[test]
    fn single_scale_has_one_latent_and_no_attention() {
        let arch = ArchConfig { scales: 1, ..tiny_arch() };
        let m = Model::new(arch, 2).unwrap();
        let seq = wave(9, 2);
        let batch = m.queries(&seq, &[0.5], None).unwrap();
        let mut g = Graph::new();
        let latents = m.encode_multiscale(&mut g, &batch).unwrap();
        assert_eq!(latents.len(), 1);
        let fused = m.fuse_cross_scale(&mut g, &latents).unwrap();
        assert_eq!(g.value(fused.fused), g.value(latents[0]));
        assert!(fused.weights.is_empty());
    }

    #[test]
    fn zero_decoder_gives_zero_frames() {
        let mut m = Model::new(tiny_arch(), 2).unwrap();
        let names: Vec<String> = m.params().names().filter(|n| n.starts_with("dec.")).map(String::from).collect();
        for n in names {
            m.params_mut().get_mut(&n).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = m.predict(&wave(9, 2), &[0.0, 0.5, 2.0]).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_incompatible_width() {
        let m = Model::new(tiny_arch(), 3).unwrap();
        assert!(m.predict(&wave(9, 2), &[0.5]).is_err());
    }

    #[test]
    fn invalid_arch_rejected() {
        assert!(Model::new(ArchConfig { latent: 10, token_dim: 4, ..tiny_arch() }, 2).is_err());
        assert!(Model::new(ArchConfig { scales: 0, ..tiny_arch() }, 2).is_err());
    }
}
