//! MLP embedders used as teacher and student.
//!
//! Hidden layers are affine + ReLU; the last layer is affine with no
//! activation, optionally followed by row L2 normalization. An optional
//! linear classifier head reads the (possibly normalized) embedding.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Matrix, Result, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    /// Input width first, embedding width last.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub l2_normalize_output: bool,
    pub classifier_classes: Option<usize>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, l2_normalize_output: bool) -> Self {
        MlpSpec { layer_widths, activation: Activation::Relu, l2_normalize_output, classifier_classes: None }
    }

    pub fn with_classifier(mut self, classes: usize) -> Self {
        self.classifier_classes = Some(classes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {:?}", self.layer_widths)));
        }
        if self.classifier_classes == Some(0) {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn embedding_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }
}

/// Affine layer `x·weight + bias`, `weight` is `in × out`, `bias` is `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn he(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("positive std");
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| normal.sample(rng));
        Dense { weight, bias: Matrix::zeros(1, fan_out) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<Dense>,
    pub classifier: Option<Dense>,
}

impl Parameters {
    /// He initialization: weights `N(0, 2/fan_in)`, zero biases.
    /// Bit-reproducible for a given `(spec, seed)`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_widths
            .windows(2)
            .map(|w| Dense::he(w[0], w[1], &mut rng))
            .collect();
        let classifier = spec.classifier_classes.map(|c| Dense::he(spec.embedding_dim(), c, &mut rng));
        Ok(Parameters { layers, classifier })
    }

    /// Checks every tensor shape against `spec`.
    pub fn check_spec(&self, spec: &MlpSpec) -> Result<()> {
        spec.validate()?;
        let widths = &spec.layer_widths;
        if self.layers.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers for a spec with {} widths",
                self.layers.len(),
                widths.len()
            )));
        }
        for (l, (layer, w)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[0], w[1]) || layer.bias.shape() != (1, w[1]) {
                return Err(Error::Config(format!("layer {l} does not match widths {}→{}", w[0], w[1])));
            }
        }
        match (&self.classifier, spec.classifier_classes) {
            (None, None) => Ok(()),
            (Some(c), Some(n))
                if c.weight.shape() == (spec.embedding_dim(), n) && c.bias.shape() == (1, n) =>
            {
                Ok(())
            }
            _ => Err(Error::Config("classifier head does not match spec".into())),
        }
    }

    /// All tensors in a fixed order: per layer weight then bias, then the
    /// classifier's.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.dense().flat_map(|d| [&d.weight, &d.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .chain(self.classifier.as_mut())
            .flat_map(|d| [&mut d.weight, &mut d.bias])
            .collect()
    }

    fn dense(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().chain(self.classifier.as_ref())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor on `tape`, as leaves when `trainable`, as
    /// constants otherwise.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut reg = |m: &Matrix| if trainable { tape.leaf(m.clone()) } else { tape.constant(m.clone()) };
        let layers = self.layers.iter().map(|d| (reg(&d.weight), reg(&d.bias))).collect();
        let classifier = self.classifier.as_ref().map(|d| (reg(&d.weight), reg(&d.bias)));
        ParamVars { layers, classifier }
    }
}

/// Tape handles of a [`Parameters`] set.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<(Var, Var)>,
    pub classifier: Option<(Var, Var)>,
}

impl ParamVars {
    /// Handles in the order of [`Parameters::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .chain(self.classifier.as_ref())
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    pub embedding: Var,
    pub logits: Option<Var>,
}

pub fn forward(tape: &mut Tape, spec: &MlpSpec, params: &ParamVars, input: Var) -> Result<ModelOutput> {
    let in_cols = tape.value(input).cols();
    if in_cols != spec.input_dim() {
        return Err(Error::dim("forward", tape.value(input).shape(), (tape.value(input).rows(), spec.input_dim())));
    }
    let mut h = input;
    let last = params.layers.len() - 1;
    for (l, &(w, b)) in params.layers.iter().enumerate() {
        h = tape.matmul(h, w)?;
        h = tape.add_row(h, b)?;
        if l < last {
            h = tape.relu(h);
        }
    }
    if spec.l2_normalize_output {
        h = tape.row_l2_normalize(h);
    }
    let logits = match params.classifier {
        Some((w, b)) => {
            let z = tape.matmul(h, w)?;
            Some(tape.add_row(z, b)?)
        }
        None => None,
    };
    Ok(ModelOutput { embedding: h, logits })
}

/// Embeddings (and logits, with a classifier head) without gradient tracking.
pub fn forward_values(spec: &MlpSpec, params: &Parameters, inputs: &Matrix) -> Result<(Matrix, Option<Matrix>)> {
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let x = tape.constant(inputs.clone());
    let out = forward(&mut tape, spec, &vars, x)?;
    let logits = out.logits.map(|v| tape.value(v).clone());
    Ok((tape.value(out.embedding).clone(), logits))
}
