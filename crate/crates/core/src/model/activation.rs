use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Nonlinearity used by the hidden layers of an MLP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// Learnable `σ(x) = Σᵢ Ψᵢ·sin(Ωᵢ·x + Φᵢ)`.
    #[default]
    Fourier,
    Relu,
}

/// Learnable Fourier-series activation with `ζ` harmonics, shared by every
/// neuron of the layer(s) it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierActivation {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

impl FourierActivation {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Self {
        assert!(!amplitudes.is_empty(), "at least one harmonic");
        assert_eq!(amplitudes.len(), frequencies.len());
        assert_eq!(amplitudes.len(), phases.len());
        Self { amplitudes, frequencies, phases }
    }

    /// Harmonic frequencies `Ωᵢ = i·ω₀`, phases uniform on `(−π, π)` and
    /// amplitudes uniform on `±√(6/(n·ζ))` for a layer of fan-in `n`. With
    /// random phases the activation output has variance `1/n` regardless of
    /// its input.
    pub fn init(harmonics: usize, omega0: f64, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (fan_in * harmonics) as f64).sqrt();
        let amplitudes = (0..harmonics).map(|_| rng.gen_range(-bound..bound)).collect();
        let frequencies = (1..=harmonics).map(|i| i as f64 * omega0).collect();
        let phases = (0..harmonics).map(|_| rng.gen_range(-PI..PI)).collect();
        Self { amplitudes, frequencies, phases }
    }

    pub fn harmonics(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
            .map(|((a, w), p)| a * (w * x + p).sin())
            .sum()
    }

    /// Elementwise application.
    pub fn activate(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.eval(v))
    }
}
