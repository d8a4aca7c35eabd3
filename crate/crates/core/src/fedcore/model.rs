//! Differentiable classifiers over flat parameter vectors.
//!
//! Two architectures: multinomial (softmax) regression and a one-hidden-layer
//! ReLU MLP. Parameters live in a single flat `Vec<f64>` with an explicit
//! segment layout, so federated averaging is a plain vector operation.
//! Cross-entropy uses the natural log and a log-sum-exp stabilized softmax.

use crate::error::{Error, Result};
use crate::fedcore::dataset::Dataset;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    SoftmaxRegression,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Weight,
    Bias,
}

/// One contiguous slice of the flat parameter vector: a `rows x cols` weight
/// matrix (row-major) or a bias vector (`cols = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Domain(
                "input_dim and num_classes must be positive".into(),
            ));
        }
        if let ModelKind::Mlp { hidden } = self.kind {
            if hidden == 0 {
                return Err(Error::Domain("hidden width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Layer-by-layer layout of the flat parameter vector.
    pub fn segments(&self) -> Vec<Segment> {
        let d = self.input_dim;
        let c = self.num_classes;
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |kind, rows, cols, offset: &mut usize| {
            segments.push(Segment {
                kind,
                offset: *offset,
                rows,
                cols,
            });
            *offset += rows * cols;
        };
        match self.kind {
            ModelKind::SoftmaxRegression => {
                push(SegmentKind::Weight, c, d, &mut offset);
                push(SegmentKind::Bias, c, 1, &mut offset);
            }
            ModelKind::Mlp { hidden } => {
                push(SegmentKind::Weight, hidden, d, &mut offset);
                push(SegmentKind::Bias, hidden, 1, &mut offset);
                push(SegmentKind::Weight, c, hidden, &mut offset);
                push(SegmentKind::Bias, c, 1, &mut offset);
            }
        }
        segments
    }

    pub fn param_count(&self) -> usize {
        self.segments().iter().map(Segment::len).sum()
    }

    pub fn zero_params(&self) -> ModelParams {
        ModelParams {
            values: vec![0.0; self.param_count()],
            segments: self.segments(),
        }
    }

    /// Seeded initialization: weights uniform in (-a, a) with
    /// a = sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        let mut params = self.zero_params();
        for segment in params.segments.clone() {
            if segment.kind == SegmentKind::Weight {
                let bound = (6.0 / (segment.rows + segment.cols) as f64).sqrt();
                for v in &mut params.values[segment.offset..segment.offset + segment.len()] {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        params
    }
}

/// Flat parameter vector plus the segment layout that interprets it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ModelParams {
    /// Wrap a raw vector, checking it against the spec's layout.
    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Dimension {
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter value".into()));
        }
        Ok(Self {
            values,
            segments: spec.segments(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-sample logits (class scores).
fn logits_into(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &[f64],
    hidden_buf: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    let d = spec.input_dim;
    let c = spec.num_classes;
    let p = &params.values;
    out.clear();
    match spec.kind {
        ModelKind::SoftmaxRegression => {
            let bias = c * d;
            for class in 0..c {
                let row = &p[class * d..(class + 1) * d];
                let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                out.push(z + p[bias + class]);
            }
        }
        ModelKind::Mlp { hidden } => {
            let w1_end = hidden * d;
            let b1_end = w1_end + hidden;
            let w2_end = b1_end + c * hidden;
            hidden_buf.clear();
            for h in 0..hidden {
                let row = &p[h * d..(h + 1) * d];
                let a: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + p[w1_end + h];
                hidden_buf.push(a.max(0.0));
            }
            for class in 0..c {
                let row = &p[b1_end + class * hidden..b1_end + (class + 1) * hidden];
                let z: f64 = row
                    .iter()
                    .zip(hidden_buf.iter())
                    .map(|(w, r)| w * r)
                    .sum::<f64>()
                    + p[w2_end + class];
                out.push(z);
            }
        }
    }
}

/// Numerically stable log(sum(exp(z))) and the softmax probabilities.
fn softmax_stats(logits: &[f64], probs: &mut Vec<f64>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    probs.clear();
    for z in logits {
        let e = (z - max).exp();
        probs.push(e);
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

/// Mean cross-entropy loss and its gradient over a batch of sample indices.
///
/// The loss excludes the weight-decay term; decay is applied by the
/// optimizer at update time.
pub fn forward_loss_grad(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    batch: &[usize],
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    if batch.is_empty() {
        return Err(Error::Domain("batch must be non-empty".into()));
    }
    if data.dims() != spec.input_dim || data.num_classes() != spec.num_classes {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: data.dims(),
        });
    }
    if params.len() != spec.param_count() {
        return Err(Error::Dimension {
            expected: spec.param_count(),
            got: params.len(),
        });
    }

    let c = spec.num_classes;
    let d = spec.input_dim;
    let p = &params.values;
    let inv_batch = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;

    let mut logits = Vec::with_capacity(c);
    let mut probs = Vec::with_capacity(c);
    let mut hidden_buf = Vec::new();

    for &sample in batch {
        let x = data.features_of(sample);
        let y = data.label_of(sample);
        logits_into(spec, params, x, &mut hidden_buf, &mut logits);
        let lse = softmax_stats(&logits, &mut probs);
        loss += (lse - logits[y]) * inv_batch;

        match spec.kind {
            ModelKind::SoftmaxRegression => {
                let bias = c * d;
                for class in 0..c {
                    let dz = (probs[class] - f64::from(class == y)) * inv_batch;
                    let grad_row = &mut grad[class * d..(class + 1) * d];
                    for (g, xi) in grad_row.iter_mut().zip(x) {
                        *g += dz * xi;
                    }
                    grad[bias + class] += dz;
                }
            }
            ModelKind::Mlp { hidden } => {
                let w1_end = hidden * d;
                let b1_end = w1_end + hidden;
                let w2_end = b1_end + c * hidden;
                // hidden_buf still holds the ReLU activations of this sample.
                let mut d_hidden = vec![0.0; hidden];
                for class in 0..c {
                    let dz = (probs[class] - f64::from(class == y)) * inv_batch;
                    let w2_row = b1_end + class * hidden;
                    for h in 0..hidden {
                        grad[w2_row + h] += dz * hidden_buf[h];
                        d_hidden[h] += dz * p[w2_row + h];
                    }
                    grad[w2_end + class] += dz;
                }
                for h in 0..hidden {
                    if hidden_buf[h] > 0.0 {
                        let da = d_hidden[h];
                        let grad_row = &mut grad[h * d..(h + 1) * d];
                        for (g, xi) in grad_row.iter_mut().zip(x) {
                            *g += da * xi;
                        }
                        grad[w1_end + h] += da;
                    }
                }
            }
        }
    }

    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(
            "non-finite loss or gradient in forward/backward pass".into(),
        ));
    }
    Ok((loss, grad))
}

/// Classification accuracy (argmax, ties to the lowest class id) and mean
/// cross-entropy loss over a test set.
pub fn evaluate(spec: &ModelSpec, params: &ModelParams, test: &Dataset) -> Result<(f64, f64)> {
    spec.validate()?;
    if test.is_empty() {
        return Err(Error::Domain("test set must be non-empty".into()));
    }
    if test.dims() != spec.input_dim || test.num_classes() != spec.num_classes {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: test.dims(),
        });
    }

    let mut logits = Vec::with_capacity(spec.num_classes);
    let mut probs = Vec::with_capacity(spec.num_classes);
    let mut hidden_buf = Vec::new();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for sample in 0..test.len() {
        let x = test.features_of(sample);
        let y = test.label_of(sample);
        logits_into(spec, params, x, &mut hidden_buf, &mut logits);
        let lse = softmax_stats(&logits, &mut probs);
        loss_sum += lse - logits[y];

        let mut best = 0usize;
        for (class, z) in logits.iter().enumerate() {
            if *z > logits[best] {
                best = class;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok((
        correct as f64 / test.len() as f64,
        loss_sum / test.len() as f64,
    ))
}
