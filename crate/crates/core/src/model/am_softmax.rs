//! Additive-margin softmax over cosine similarities to class weight rows.
//!
//! For an embedding `e` with label `y`, logits are `s * (cos_j - m * [j == y])`
//! where `cos_j` is the cosine between `e` and class row `j`; the loss is the
//! cross-entropy of those logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class weight matrix, `num_classes x dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineHead {
    pub num_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

/// Unit-normalized snapshot of a [`CosineHead`]; valid while the weights are unchanged.
#[derive(Debug, Clone)]
pub struct NormalizedHead {
    num_classes: usize,
    dim: usize,
    unit_rows: Vec<f64>,
    norms: Vec<f64>,
}

impl CosineHead {
    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn normalized(&self) -> Result<NormalizedHead> {
        let mut unit_rows = self.weights.clone();
        let mut norms = Vec::with_capacity(self.num_classes);
        for (class, row) in unit_rows.chunks_exact_mut(self.dim).enumerate() {
            let norm = l2_norm(row);
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::numeric(format!("class weight row {class} has norm {norm}")));
            }
            row.iter_mut().for_each(|x| *x /= norm);
            norms.push(norm);
        }
        Ok(NormalizedHead {
            num_classes: self.num_classes,
            dim: self.dim,
            unit_rows,
            norms,
        })
    }
}

impl NormalizedHead {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn unit_row(&self, class: usize) -> &[f64] {
        &self.unit_rows[class * self.dim..(class + 1) * self.dim]
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two nonzero vectors.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numeric("cosine of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmSoftmaxOutput {
    pub loss: f64,
    /// Softmax of the margin-adjusted logits; these are the loss' probabilities.
    pub probabilities: Vec<f64>,
    pub cosines: Vec<f64>,
    pub embedding_norm: f64,
}

impl AmSoftmaxOutput {
    /// Label-independent prediction `softmax(s * cos)`.
    pub fn prediction(&self, scale: f64) -> Vec<f64> {
        let logits: Vec<f64> = self.cosines.iter().map(|c| scale * c).collect();
        softmax(&logits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmSoftmax {
    pub scale: f64,
    pub margin: f64,
}

impl AmSoftmax {
    pub fn cosines(&self, head: &NormalizedHead, embedding: &[f64]) -> Result<(Vec<f64>, f64)> {
        if embedding.len() != head.dim {
            return Err(Error::shape(head.dim, embedding.len()));
        }
        let norm = l2_norm(embedding);
        if !(norm > 0.0) {
            return Err(Error::numeric("zero-norm embedding"));
        }
        if !norm.is_finite() {
            return Err(Error::numeric("non-finite embedding"));
        }
        let cosines = (0..head.num_classes)
            .map(|j| dot(head.unit_row(j), embedding) / norm)
            .collect();
        Ok((cosines, norm))
    }

    pub fn forward(&self, head: &NormalizedHead, embedding: &[f64], label: usize) -> Result<AmSoftmaxOutput> {
        if label >= head.num_classes {
            return Err(Error::Lookup(format!("label {label} outside [0, {})", head.num_classes)));
        }
        let (cosines, embedding_norm) = self.cosines(head, embedding)?;
        let logits: Vec<f64> = cosines
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let m = if j == label { self.margin } else { 0.0 };
                self.scale * (c - m)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        let loss = log_total - logits[label];
        let probabilities = logits.iter().map(|z| (z - log_total).exp()).collect();
        Ok(AmSoftmaxOutput {
            loss,
            probabilities,
            cosines,
            embedding_norm,
        })
    }

    /// Adds `weight` times the loss gradient to `grad_embedding` and `grad_head`
    /// (the latter shaped like the raw class weight matrix).
    pub fn backward_into(
        &self,
        head: &NormalizedHead,
        embedding: &[f64],
        label: usize,
        output: &AmSoftmaxOutput,
        weight: f64,
        grad_embedding: &mut [f64],
        grad_head: &mut [f64],
    ) {
        let dim = head.dim;
        let inv_norm = 1.0 / output.embedding_norm;
        for j in 0..head.num_classes {
            let indicator = if j == label { 1.0 } else { 0.0 };
            let g = weight * self.scale * (output.probabilities[j] - indicator);
            if g == 0.0 {
                continue;
            }
            let cos = output.cosines[j];
            let unit = head.unit_row(j);
            // d cos_j / d e = (u_j - cos_j * e_hat) / |e|
            let ge = g * inv_norm;
            let ge_cos = ge * cos * inv_norm;
            for (d, (u, e)) in grad_embedding.iter_mut().zip(unit.iter().zip(embedding)) {
                *d += ge * u - ge_cos * e;
            }
            // d cos_j / d w_j = (e_hat - cos_j * u_j) / |w_j|
            let gw = g / head.norms[j];
            let row = &mut grad_head[j * dim..(j + 1) * dim];
            for (d, (u, e)) in row.iter_mut().zip(unit.iter().zip(embedding)) {
                *d += gw * (e * inv_norm - cos * u);
            }
        }
    }

    /// Gradients with respect to the embedding and the class weight matrix.
    pub fn backward(
        &self,
        head: &NormalizedHead,
        embedding: &[f64],
        label: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let output = self.forward(head, embedding, label)?;
        let mut grad_embedding = vec![0.0; head.dim];
        let mut grad_head = vec![0.0; head.dim * head.num_classes];
        self.backward_into(head, embedding, label, &output, 1.0, &mut grad_embedding, &mut grad_head);
        Ok((grad_embedding, grad_head))
    }
}
