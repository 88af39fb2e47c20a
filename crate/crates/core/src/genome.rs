//! Implicit spatial-query genome.
//!
//! A position `v ∈ [0,1]³` is lifted through random Fourier features
//! `[cos(2π·Bv), sin(2π·Bv)]`, passed through a tanh MLP, and read out by two
//! affine heads: five material logits (softmax) and one weight logit (sigmoid).
//! The frequency matrix `B` is sampled once and never evolved; only the MLP
//! parameters are subject to mutation and crossover.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dimension of the query space.
pub const SPATIAL_DIM: usize = 3;
/// Number of material categories produced by the softmax head.
pub const MATERIAL_COUNT: usize = 5;

/// Default hidden widths of the MLP trunk.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("invalid encoding spec: {0}")]
    InvalidSpec(String),
    #[error("hidden layer widths must all be >= 1")]
    InvalidWidth,
    #[error("genome architectures differ")]
    ShapeMismatch,
    #[error("malformed genome: {0}")]
    Malformed(String),
}

/// Shape of the Fourier feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingSpec {
    /// Number of frequency rows `m`; the encoding has `2m` outputs.
    pub frequencies: usize,
    /// Standard deviation of the entries of `B`.
    pub sigma: f64,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self {
            frequencies: 32,
            sigma: 1.0,
        }
    }
}

impl EncodingSpec {
    pub fn validate(&self) -> Result<(), GenomeError> {
        if self.frequencies == 0 {
            return Err(GenomeError::InvalidSpec("frequencies must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(GenomeError::InvalidSpec("sigma must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        2 * self.frequencies
    }
}

/// Affine layer `y = W x + b`, `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    fn is_well_formed(&self) -> bool {
        self.inputs > 0
            && self.outputs > 0
            && self.weights.len() == self.inputs * self.outputs
            && self.bias.len() == self.outputs
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }
}

/// Result of a single spatial query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialQuery {
    /// Softmax over `[Empty, MuscleExpand, MuscleContract, SoftTissue, HardBone]`.
    pub probs: [f64; MATERIAL_COUNT],
    /// Sigmoid weight, strictly inside `(0, 1)`.
    pub weight: f64,
}

/// The single evolvable object: a frozen Fourier basis plus MLP parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub spec: EncodingSpec,
    /// `B`, row-major `m × 3`.
    pub basis: Vec<f64>,
    pub hidden: Vec<Dense>,
    pub material_head: Dense,
    pub weight_head: Dense,
}

impl Genome {
    /// Samples a genome deterministically from `seed`.
    ///
    /// `B` entries are i.i.d. `N(0, sigma²)`; weights follow the uniform
    /// fan-in/fan-out scheme and biases start at zero.
    pub fn sample(spec: EncodingSpec, hidden: &[usize], seed: u64) -> Result<Self, GenomeError> {
        spec.validate()?;
        if hidden.contains(&0) {
            return Err(GenomeError::InvalidWidth);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spec.sigma).map_err(|e| GenomeError::InvalidSpec(e.to_string()))?;
        let basis = (0..spec.frequencies * SPATIAL_DIM)
            .map(|_| normal.sample(&mut rng))
            .collect();

        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = spec.output_width();
        for &w in hidden {
            layers.push(Dense::glorot(width, w, &mut rng));
            width = w;
        }
        let material_head = Dense::glorot(width, MATERIAL_COUNT, &mut rng);
        let weight_head = Dense::glorot(width, 1, &mut rng);
        Ok(Self {
            spec,
            basis,
            hidden: layers,
            material_head,
            weight_head,
        })
    }

    /// A genome with the given basis and every MLP weight and bias zero.
    pub fn zeroed(spec: EncodingSpec, basis: Vec<f64>, hidden: &[usize]) -> Result<Self, GenomeError> {
        spec.validate()?;
        if basis.len() != spec.frequencies * SPATIAL_DIM {
            return Err(GenomeError::Malformed("basis length != 3m".into()));
        }
        if hidden.contains(&0) {
            return Err(GenomeError::InvalidWidth);
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = spec.output_width();
        for &w in hidden {
            layers.push(Dense::zeros(width, w));
            width = w;
        }
        Ok(Self {
            spec,
            basis,
            hidden: layers,
            material_head: Dense::zeros(width, MATERIAL_COUNT),
            weight_head: Dense::zeros(width, 1),
        })
    }

    /// Checks that layer shapes chain from `2m` to both heads and that every
    /// value is finite.
    pub fn validate(&self) -> Result<(), GenomeError> {
        self.spec.validate()?;
        if self.basis.len() != self.spec.frequencies * SPATIAL_DIM {
            return Err(GenomeError::Malformed("basis length != 3m".into()));
        }
        let mut width = self.spec.output_width();
        for (i, layer) in self.hidden.iter().enumerate() {
            if !layer.is_well_formed() || layer.inputs != width {
                return Err(GenomeError::Malformed(format!("hidden layer {i} shape")));
            }
            width = layer.outputs;
        }
        for (name, head, outputs) in [
            ("material head", &self.material_head, MATERIAL_COUNT),
            ("weight head", &self.weight_head, 1),
        ] {
            if !head.is_well_formed() || head.inputs != width || head.outputs != outputs {
                return Err(GenomeError::Malformed(format!("{name} shape")));
            }
        }
        if !self.basis.iter().chain(self.parameters()).all(|x| x.is_finite()) {
            return Err(GenomeError::Malformed("non-finite value".into()));
        }
        Ok(())
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.outputs).collect()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.material_head))
            .chain(std::iter::once(&self.weight_head))
    }

    /// Every evolvable parameter in a fixed order: for each layer (trunk,
    /// material head, weight head) its weights then its biases. `B` is excluded.
    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.material_head))
            .chain(std::iter::once(&mut self.weight_head))
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// True when both genomes share the frequency count and every layer shape.
    pub fn same_architecture(&self, other: &Genome) -> bool {
        self.spec.frequencies == other.spec.frequencies
            && self.hidden.len() == other.hidden.len()
            && self.hidden.iter().zip(&other.hidden).all(|(a, b)| a.same_shape(b))
            && self.material_head.same_shape(&other.material_head)
            && self.weight_head.same_shape(&other.weight_head)
    }

    pub fn encode(&self, v: [f64; 3]) -> Vec<f64> {
        gaussian_encode(v, &self.basis)
    }

    /// Runs the full query. Pure: identical inputs give identical outputs.
    pub fn forward(&self, v: [f64; 3]) -> MaterialQuery {
        let mut h = self.encode(v);
        for layer in &self.hidden {
            h = layer.apply(&h);
            h.iter_mut().for_each(|x| *x = x.tanh());
        }
        let logits = self.material_head.apply(&h);
        let mut material_logits = [0.0; MATERIAL_COUNT];
        material_logits.copy_from_slice(&logits);
        MaterialQuery {
            probs: softmax(&material_logits),
            weight: sigmoid(self.weight_head.apply(&h)[0]),
        }
    }
}

/// `[cos(2π·Bv), sin(2π·Bv)]` for a row-major `m × 3` matrix `B`.
pub fn gaussian_encode(v: [f64; 3], basis: &[f64]) -> Vec<f64> {
    debug_assert_eq!(basis.len() % SPATIAL_DIM, 0);
    let m = basis.len() / SPATIAL_DIM;
    let mut out = vec![0.0; 2 * m];
    for (i, row) in basis.chunks_exact(SPATIAL_DIM).enumerate() {
        let phase = 2.0 * PI * (row[0] * v[0] + row[1] * v[1] + row[2] * v[2]);
        let (s, c) = phase.sin_cos();
        out[i] = c;
        out[m + i] = s;
    }
    out
}

/// Max-subtracted softmax.
pub fn softmax<const N: usize>(logits: &[f64; N]) -> [f64; N] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N];
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Logistic function, held strictly inside `(0, 1)`.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
