//! Fully connected embedding network with a cosine-margin classification head.

mod am_softmax;
mod optim;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use am_softmax::{cosine_score, softmax, AmSoftmax, AmSoftmaxOutput, CosineHead, NormalizedHead};
pub use optim::{AdamState, OptimizerConfig};

use crate::error::{Error, Result};
use crate::textio::{self, Header};

const CHECKPOINT_MAGIC: &str = "orgate-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub margin: f64,
    pub scale: f64,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    /// Two hidden layers of 128, 64-dimensional embeddings, s=30, m=0.2.
    pub fn desk_default(feature_dim: usize, num_classes: usize, seed: u64) -> Self {
        ModelConfig {
            feature_dim,
            hidden_dims: vec![128, 128],
            embedding_dim: 64,
            num_classes,
            margin: 0.2,
            scale: 30.0,
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 1 || self.embedding_dim < 1 || self.hidden_dims.iter().any(|&d| d < 1) {
            return Err(Error::config("all layer dimensions must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin must be finite and nonnegative"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config("scale must be finite and positive"));
        }
        Ok(())
    }

    pub fn loss(&self) -> AmSoftmax {
        AmSoftmax {
            scale: self.scale,
            margin: self.margin,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut inputs = self.feature_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.embedding_dim)) {
            dims.push((inputs, h));
            inputs = h;
        }
        dims
    }
}

/// Dense layer, `weight` is `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + am_softmax::dot(row, x)),
        );
    }
}

/// Anything that maps features to an embedding.
pub trait Embedder {
    fn embed(&self, features: &[f64]) -> Result<Vec<f64>>;
}

/// Per-layer outputs from one forward pass; `layers[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    layers: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn embedding(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients laid out like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub class_weights: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelState) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
                .collect(),
            class_weights: vec![0.0; model.head.weights.len()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = Vec::with_capacity(2 * self.layers.len() + 1);
        for (w, b) in &self.layers {
            out.push(w);
            out.push(b);
        }
        out.push(&self.class_weights);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::with_capacity(2 * self.layers.len() + 1);
        for (w, b) in &mut self.layers {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.class_weights);
        out
    }
}

/// Network parameters, class weights and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub layers: Vec<Dense>,
    pub head: CosineHead,
    pub optimizer: AdamState,
}

impl ModelState {
    /// Xavier-uniform layers, zero biases, Gaussian class rows; fixed by `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers: Vec<Dense> = config
            .layer_dims()
            .into_iter()
            .map(|(inputs, outputs)| {
                let bound = (6.0 / (inputs + outputs) as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    weight: (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        let head = CosineHead {
            num_classes: config.num_classes,
            dim: config.embedding_dim,
            weights: (0..config.num_classes * config.embedding_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        };
        let mut model = ModelState {
            config,
            layers,
            head,
            optimizer: AdamState::new(&[]),
        };
        model.optimizer = AdamState::new(&model.tensor_lens());
        Ok(model)
    }

    fn tensor_lens(&self) -> Vec<usize> {
        let mut lens: Vec<usize> = self
            .layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        lens.push(self.head.weights.len());
        lens
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head.weights);
        out
    }

    fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.head.weights);
        out
    }

    pub fn loss(&self) -> AmSoftmax {
        self.config.loss()
    }

    /// Forward pass keeping every layer output for backpropagation.
    pub fn forward(&self, features: &[f64], cache: &mut ForwardCache) -> Result<()> {
        if features.len() != self.config.feature_dim {
            return Err(Error::shape(self.config.feature_dim, features.len()));
        }
        cache.layers.resize_with(self.layers.len() + 1, Vec::new);
        cache.layers[0].clear();
        cache.layers[0].extend_from_slice(features);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.layers.split_at_mut(i + 1);
            let out = &mut rest[0];
            layer.forward(&done[i], out);
            if i < last {
                let act = self.config.activation;
                out.iter_mut().for_each(|x| *x = act.apply(*x));
            }
        }
        Ok(())
    }

    /// Backpropagates `grad_embedding` through the network, accumulating into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_embedding: &[f64], grads: &mut Gradients) {
        let mut upstream = grad_embedding.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                let act = self.config.activation;
                upstream
                    .iter_mut()
                    .zip(&cache.layers[i + 1])
                    .for_each(|(g, y)| *g *= act.derivative_from_output(*y));
            }
            let input = &cache.layers[i];
            let (gw, gb) = &mut grads.layers[i];
            for ((row, gb), g) in gw.chunks_exact_mut(layer.inputs).zip(gb.iter_mut()).zip(&upstream) {
                *gb += g;
                row.iter_mut().zip(input).for_each(|(d, x)| *d += g * x);
            }
            if i > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (row, g) in layer.weight.chunks_exact(layer.inputs).zip(&upstream) {
                    next.iter_mut().zip(row).for_each(|(d, w)| *d += g * w);
                }
                upstream = next;
            }
        }
    }

    /// Loss and full parameter gradient for a single labeled sample.
    pub fn sample_gradients(&self, features: &[f64], label: usize) -> Result<(f64, Gradients)> {
        let head = self.head.normalized()?;
        let mut cache = ForwardCache::default();
        self.forward(features, &mut cache)?;
        let loss = self.loss();
        let out = loss.forward(&head, cache.embedding(), label)?;
        let mut grads = Gradients::zeros_like(self);
        let mut grad_embedding = vec![0.0; self.config.embedding_dim];
        loss.backward_into(
            &head,
            cache.embedding(),
            label,
            &out,
            1.0,
            &mut grad_embedding,
            &mut grads.class_weights,
        );
        self.backward_into(&cache, &grad_embedding, &mut grads);
        Ok((out.loss, grads))
    }

    pub fn adam_step(&mut self, optimizer: &OptimizerConfig, grads: &Gradients, lr: f64) -> Result<()> {
        let grads = grads.tensors();
        let mut adam = std::mem::replace(&mut self.optimizer, AdamState::new(&[]));
        let result = adam.step(optimizer, &mut self.tensors_mut(), &grads, lr);
        self.optimizer = adam;
        result
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
        let _ = writeln!(
            out,
            "model={}",
            serde_json::to_string(&self.config).expect("model config serializes")
        );
        let _ = writeln!(out, "adam_step={}", self.optimizer.step);
        out.push_str("---\n");
        let groups = [
            ("param", self.tensors()),
            ("moment1", self.optimizer.first_moment.iter().collect()),
            ("moment2", self.optimizer.second_moment.iter().collect()),
        ];
        for (kind, tensors) in groups {
            for (i, t) in tensors.iter().enumerate() {
                let _ = write!(out, "{kind} {i} {}\n", t.len());
                for (j, x) in t.iter().enumerate() {
                    if j > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{x}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        textio::check_terminated(text)?;
        let lines: Vec<&str> = text.lines().collect();
        textio::check_magic(&lines, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let header = Header::parse(&lines, 1)?;
        let config: ModelConfig = serde_json::from_str(header.get_str("model")?)
            .map_err(|e| Error::parse(2, format!("model config: {e}")))?;
        let mut model = ModelState::new(config).map_err(|e| Error::parse(2, e.to_string()))?;
        model.optimizer.step = header.get("adam_step")?;

        let mut cursor = header.end_line;
        let mut read_group = |kind: &str, targets: Vec<&mut Vec<f64>>| -> Result<()> {
            for (i, target) in targets.into_iter().enumerate() {
                let line_no = cursor + 1;
                let expected_tag = format!("{kind} {i} {}", target.len());
                match lines.get(cursor) {
                    Some(tag) if *tag == expected_tag => {}
                    Some(tag) => {
                        return Err(Error::parse(line_no, format!("expected {expected_tag:?}, found {tag:?}")))
                    }
                    None => return Err(Error::parse(line_no, "truncated checkpoint")),
                }
                let values = lines
                    .get(cursor + 1)
                    .ok_or_else(|| Error::parse(line_no + 1, "truncated checkpoint"))?;
                let parsed = values
                    .split_whitespace()
                    .map(|v| textio::parse_field::<f64>(v, line_no + 1, "value"))
                    .collect::<Result<Vec<f64>>>()?;
                if parsed.len() != target.len() {
                    return Err(Error::parse(
                        line_no + 1,
                        format!("expected {} values, found {}", target.len(), parsed.len()),
                    ));
                }
                *target = parsed;
                cursor += 2;
            }
            Ok(())
        };
        read_group("param", model.tensors_mut())?;
        let AdamState {
            first_moment,
            second_moment,
            ..
        } = &mut model.optimizer;
        read_group("moment1", first_moment.iter_mut().collect())?;
        read_group("moment2", second_moment.iter_mut().collect())?;
        if cursor != lines.len() {
            return Err(Error::parse(cursor + 1, "trailing data after checkpoint"));
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        textio::write_file(path, &self.to_checkpoint_string())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&textio::read_file(path)?)
    }
}

impl Embedder for ModelState {
    fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward(features, &mut cache)?;
        Ok(cache.layers.pop().unwrap_or_default())
    }
}
