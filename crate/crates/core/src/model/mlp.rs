use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;

use super::activation::{ActivationKind, FourierActivation};
use super::bind;

/// MLP whose hidden layers use [`FourierActivation`]s (or ReLU); the last
/// layer is linear. Parameter values live in a [`ParamStore`] under names
/// prefixed by `prefix`.
#[derive(Clone, Debug, PartialEq)]
pub struct PaidMlp {
    prefix: String,
    widths: Vec<usize>,
    harmonics: usize,
    shared: bool,
    kind: ActivationKind,
}

impl PaidMlp {
    /// `widths = [input, hidden…, output]`; there are `widths.len() − 1`
    /// linear layers, all but the last followed by an activation.
    pub fn new(prefix: impl Into<String>, widths: Vec<usize>, harmonics: usize, shared: bool, kind: ActivationKind) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid MLP widths {widths:?}")));
        }
        if harmonics == 0 {
            return Err(Error::Config("activations need at least one harmonic".into()));
        }
        Ok(Self { prefix: prefix.into(), widths, harmonics, shared, kind })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.bias", self.prefix)
    }

    /// Amplitude, frequency and phase parameter names of the activation used
    /// after `layer`.
    pub fn activation_names(&self, layer: usize) -> [String; 3] {
        let tag = if self.shared { "act".to_string() } else { format!("act{layer}") };
        ["amplitude", "frequency", "phase"].map(|p| format!("{}.{tag}.{p}", self.prefix))
    }

    fn activated_layers(&self) -> usize {
        match self.kind {
            ActivationKind::Fourier => self.layers() - 1,
            ActivationKind::Relu => 0,
        }
    }

    /// Count of learnable activation scalars: `3ζ` when shared, `3ζ` per
    /// activated layer otherwise.
    pub fn activation_param_count(&self) -> usize {
        match (self.activated_layers(), self.shared) {
            (0, _) => 0,
            (_, true) => 3 * self.harmonics,
            (n, false) => 3 * self.harmonics * n,
        }
    }

    pub fn activation(&self, store: &ParamStore, layer: usize) -> Result<FourierActivation> {
        let [a, w, p] = self.activation_names(layer);
        Ok(FourierActivation::new(
            store.expect(&a)?.data().to_vec(),
            store.expect(&w)?.data().to_vec(),
            store.expect(&p)?.data().to_vec(),
        ))
    }

    /// Weights uniform on `±√(6/fan_in)`, zero biases. Activation frequencies
    /// start at `first_omega` after the first layer and `hidden_omega` after
    /// deeper ones; a shared activation uses the first-layer rule.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, first_omega: f64, hidden_omega: f64) {
        for layer in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            store.insert(self.weight_name(layer), Tensor::new(vec![fan_in, fan_out], w).unwrap());
            store.insert(self.bias_name(layer), Tensor::zeros(vec![fan_out]));
            let activated = self.kind == ActivationKind::Fourier && layer + 1 < self.layers();
            if activated && (!self.shared || layer == 0) {
                let omega = if layer == 0 { first_omega } else { hidden_omega };
                let act = FourierActivation::init(self.harmonics, omega, fan_in, rng);
                let [a, f, p] = self.activation_names(layer);
                store.insert(a, Tensor::vector(act.amplitudes));
                store.insert(f, Tensor::vector(act.frequencies));
                store.insert(p, Tensor::vector(act.phases));
            }
        }
    }

    /// `x: B × input` → `B × output`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for layer in 0..self.layers() {
            let w = bind(g, store, &self.weight_name(layer))?;
            let b = bind(g, store, &self.bias_name(layer))?;
            h = g.matmul(h, w)?;
            h = g.add(h, b)?;
            if layer + 1 < self.layers() {
                h = match self.kind {
                    ActivationKind::Fourier => {
                        let [a, f, p] = self.activation_names(layer);
                        let (a, f, p) = (bind(g, store, &a)?, bind(g, store, &f)?, bind(g, store, &p)?);
                        g.fourier(h, a, f, p)?
                    }
                    ActivationKind::Relu => g.relu(h)?,
                };
            }
        }
        Ok(h)
    }
}
