//! Local objective functions: loss, full gradient, and stochastic gradient on
//! mini-batches.
//!
//! Three families are shipped:
//! - `Quadratic`: per-example loss `0.5 * ||theta - x||^2`, so a client's full
//!   objective is a quadratic bowl centered at its feature mean (unit
//!   curvature: strongly convex and smooth with `mu = L = 1`).
//! - `Logistic`: multinomial logistic regression with optional L2; strongly
//!   convex once `l2 > 0`.
//! - `Mlp`: one tanh hidden layer with a cross-entropy head and hand-derived
//!   backprop; smooth and non-convex.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    Logistic { num_classes: usize, l2: f64 },
    Mlp { hidden: usize, num_classes: usize, l2: f64 },
}

impl ObjectiveKind {
    /// Parameter dimension for a given feature dimension.
    pub fn param_dim(&self, feature_dim: usize) -> usize {
        match *self {
            ObjectiveKind::Quadratic => feature_dim,
            ObjectiveKind::Logistic { num_classes, .. } => num_classes * feature_dim,
            ObjectiveKind::Mlp {
                hidden,
                num_classes,
                ..
            } => hidden * feature_dim + hidden + num_classes * hidden + num_classes,
        }
    }

    fn l2(&self) -> f64 {
        match *self {
            ObjectiveKind::Quadratic => 0.0,
            ObjectiveKind::Logistic { l2, .. } | ObjectiveKind::Mlp { l2, .. } => l2,
        }
    }

    /// `(mu, L)` when known analytically. The logistic smoothness bound uses
    /// the worst-case sigmoid curvature `1/4` at the dataset's feature scale.
    pub fn strong_convexity_constants(&self, data: &[LabeledExample]) -> Option<(f64, f64)> {
        match *self {
            ObjectiveKind::Quadratic => Some((1.0, 1.0)),
            ObjectiveKind::Logistic { l2, .. } => {
                let max_x_sq = data
                    .iter()
                    .map(|e| e.x.iter().map(|v| v * v).sum::<f64>())
                    .fold(0.0, f64::max);
                Some((l2, l2 + 0.25 * max_x_sq))
            }
            ObjectiveKind::Mlp { .. } => None,
        }
    }

    /// Predicted class for classifiers; `None` for objectives without a
    /// classification readout.
    pub fn predict(&self, theta: &ParamVector, x: &[f64]) -> Option<usize> {
        match *self {
            ObjectiveKind::Quadratic => None,
            ObjectiveKind::Logistic { num_classes, .. } => {
                let logits = logistic_logits(theta, x, num_classes);
                Some(argmax(&logits))
            }
            ObjectiveKind::Mlp {
                hidden,
                num_classes,
                ..
            } => {
                let layout = MlpLayout::new(x.len(), hidden, num_classes);
                let (_, logits) = layout.forward(theta, x);
                Some(argmax(&logits))
            }
        }
    }
}

/// Mini-batch specification for stochastic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub sampling: BatchSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSampling {
    WithReplacement,
    WithoutReplacementReshuffle,
}

impl BatchSpec {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.sampling == BatchSampling::WithoutReplacementReshuffle
            && self.batch_size > train_len
        {
            return Err(Error::config(format!(
                "batch_size {} exceeds training-set size {} for sampling without replacement",
                self.batch_size, train_len
            )));
        }
        Ok(())
    }
}

/// Mean per-example loss over `data`, plus the L2 term where configured.
pub fn loss(kind: &ObjectiveKind, theta: &ParamVector, data: &[LabeledExample]) -> Result<f64> {
    check_inputs(kind, theta, data)?;
    let mut total = 0.0;
    for ex in data {
        total += example_loss(kind, theta, ex)?;
    }
    let mut value = total / data.len() as f64;
    let l2 = kind.l2();
    if l2 > 0.0 {
        value += 0.5 * l2 * theta.norm_sq();
    }
    Ok(value)
}

/// Exact analytical gradient of `loss` over the given data.
pub fn grad(kind: &ObjectiveKind, theta: &ParamVector, data: &[LabeledExample]) -> Result<ParamVector> {
    check_inputs(kind, theta, data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    grad_on_batch(kind, theta, data, &all)
}

/// Gradient over a sampled batch. Unbiased for `WithReplacement`; a full
/// batch without replacement reproduces `grad` exactly.
pub fn stochastic_grad(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    data: &[LabeledExample],
    batch: BatchSpec,
    rng: &mut impl Rng,
) -> Result<ParamVector> {
    check_inputs(kind, theta, data)?;
    batch.validate(data.len())?;
    let indices = draw_batch(batch, data.len(), rng);
    grad_on_batch(kind, theta, data, &indices)
}

fn draw_batch(batch: BatchSpec, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut indices = match batch.sampling {
        BatchSampling::WithReplacement => (0..batch.batch_size)
            .map(|_| rng.gen_range(0..n))
            .collect::<Vec<_>>(),
        BatchSampling::WithoutReplacementReshuffle => {
            let mut deck: Vec<usize> = (0..n).collect();
            deck.partial_shuffle(rng, batch.batch_size);
            deck.truncate(batch.batch_size);
            deck
        }
    };
    // Canonical index order keeps floating-point accumulation reproducible
    // and makes the full batch sum identically to the full gradient.
    indices.sort_unstable();
    indices
}

/// Cycles through reshuffled epochs of a training set, handing out sorted
/// index batches. Batches never straddle an epoch boundary: when fewer than
/// `batch_size` indices remain, the deck is reshuffled.
pub struct BatchIter {
    spec: BatchSpec,
    deck: Vec<usize>,
    pos: usize,
}

impl BatchIter {
    pub fn new(spec: BatchSpec, train_len: usize) -> Result<Self> {
        spec.validate(train_len)?;
        Ok(BatchIter {
            spec,
            deck: (0..train_len).collect(),
            pos: train_len, // force an initial shuffle
        })
    }

    pub fn next_batch(&mut self, rng: &mut impl Rng) -> Vec<usize> {
        match self.spec.sampling {
            BatchSampling::WithReplacement => {
                let mut b: Vec<usize> = (0..self.spec.batch_size)
                    .map(|_| rng.gen_range(0..self.deck.len()))
                    .collect();
                b.sort_unstable();
                b
            }
            BatchSampling::WithoutReplacementReshuffle => {
                if self.pos + self.spec.batch_size > self.deck.len() {
                    self.deck.shuffle(rng);
                    self.pos = 0;
                }
                let mut b = self.deck[self.pos..self.pos + self.spec.batch_size].to_vec();
                self.pos += self.spec.batch_size;
                b.sort_unstable();
                b
            }
        }
    }
}

fn check_inputs(kind: &ObjectiveKind, theta: &ParamVector, data: &[LabeledExample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::config("objective evaluated on empty data"));
    }
    let feature_dim = data[0].x.len();
    theta.check_dim(kind.param_dim(feature_dim), "objective parameter")?;
    Ok(())
}

/// Mean gradient over the examples named by `indices`, plus the L2 term.
pub fn grad_on_batch(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    data: &[LabeledExample],
    indices: &[usize],
) -> Result<ParamVector> {
    let mut acc = ParamVector::zeros(theta.dim());
    for &i in indices {
        accumulate_example_grad(kind, theta, &data[i], &mut acc)?;
    }
    acc.scale(1.0 / indices.len() as f64);
    let l2 = kind.l2();
    if l2 > 0.0 {
        acc.add_scaled(theta, l2);
    }
    Ok(acc)
}

fn example_loss(kind: &ObjectiveKind, theta: &ParamVector, ex: &LabeledExample) -> Result<f64> {
    match *kind {
        ObjectiveKind::Quadratic => {
            let mut s = 0.0;
            for (t, x) in theta.as_slice().iter().zip(&ex.x) {
                let d = t - x;
                s += d * d;
            }
            Ok(0.5 * s)
        }
        ObjectiveKind::Logistic { num_classes, .. } => {
            check_label(ex.y, num_classes)?;
            let logits = logistic_logits(theta, &ex.x, num_classes);
            Ok(-log_softmax_at(&logits, ex.y))
        }
        ObjectiveKind::Mlp {
            hidden,
            num_classes,
            ..
        } => {
            check_label(ex.y, num_classes)?;
            let layout = MlpLayout::new(ex.x.len(), hidden, num_classes);
            let (_, logits) = layout.forward(theta, &ex.x);
            Ok(-log_softmax_at(&logits, ex.y))
        }
    }
}

fn accumulate_example_grad(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    ex: &LabeledExample,
    acc: &mut ParamVector,
) -> Result<()> {
    match *kind {
        ObjectiveKind::Quadratic => {
            for ((a, t), x) in acc.0.iter_mut().zip(theta.as_slice()).zip(&ex.x) {
                *a += t - x;
            }
            Ok(())
        }
        ObjectiveKind::Logistic { num_classes, .. } => {
            check_label(ex.y, num_classes)?;
            let logits = logistic_logits(theta, &ex.x, num_classes);
            let probs = softmax(&logits);
            let f = ex.x.len();
            for (c, &pc) in probs.iter().enumerate() {
                let coeff = pc - if c == ex.y { 1.0 } else { 0.0 };
                for (j, &xj) in ex.x.iter().enumerate() {
                    acc.0[c * f + j] += coeff * xj;
                }
            }
            Ok(())
        }
        ObjectiveKind::Mlp {
            hidden,
            num_classes,
            ..
        } => {
            check_label(ex.y, num_classes)?;
            let layout = MlpLayout::new(ex.x.len(), hidden, num_classes);
            layout.backward(theta, ex, acc);
            Ok(())
        }
    }
}

fn check_label(y: usize, num_classes: usize) -> Result<()> {
    if y >= num_classes {
        return Err(Error::config(format!(
            "label {y} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

fn logistic_logits(theta: &ParamVector, x: &[f64], num_classes: usize) -> Vec<f64> {
    let f = x.len();
    (0..num_classes)
        .map(|c| {
            x.iter()
                .enumerate()
                .map(|(j, &xj)| theta[c * f + j] * xj)
                .sum()
        })
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits[y] - log_sum
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index layout of the flattened single-hidden-layer network:
/// `[W1 (hidden x features) | b1 | W2 (classes x hidden) | b2]`.
struct MlpLayout {
    features: usize,
    hidden: usize,
    classes: usize,
}

impl MlpLayout {
    fn new(features: usize, hidden: usize, classes: usize) -> Self {
        MlpLayout {
            features,
            hidden,
            classes,
        }
    }

    fn w1(&self, j: usize, f: usize) -> usize {
        j * self.features + f
    }
    fn b1(&self, j: usize) -> usize {
        self.hidden * self.features + j
    }
    fn w2(&self, c: usize, j: usize) -> usize {
        self.hidden * self.features + self.hidden + c * self.hidden + j
    }
    fn b2(&self, c: usize) -> usize {
        self.hidden * self.features + self.hidden + self.classes * self.hidden + c
    }

    /// Returns (hidden activations, logits).
    fn forward(&self, theta: &ParamVector, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = vec![0.0; self.hidden];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut a = theta[self.b1(j)];
            for (f, &xf) in x.iter().enumerate() {
                a += theta[self.w1(j, f)] * xf;
            }
            *hj = a.tanh();
        }
        let mut z = vec![0.0; self.classes];
        for (c, zc) in z.iter_mut().enumerate() {
            let mut a = theta[self.b2(c)];
            for (j, &hj) in h.iter().enumerate() {
                a += theta[self.w2(c, j)] * hj;
            }
            *zc = a;
        }
        (h, z)
    }

    fn backward(&self, theta: &ParamVector, ex: &LabeledExample, acc: &mut ParamVector) {
        let (h, logits) = self.forward(theta, &ex.x);
        let probs = softmax(&logits);

        // dz = p - onehot(y)
        let mut dz = probs;
        dz[ex.y] -= 1.0;

        for (c, &dzc) in dz.iter().enumerate() {
            for (j, &hj) in h.iter().enumerate() {
                acc.0[self.w2(c, j)] += dzc * hj;
            }
            acc.0[self.b2(c)] += dzc;
        }

        for (j, &hj) in h.iter().enumerate() {
            let mut dh = 0.0;
            for (c, &dzc) in dz.iter().enumerate() {
                dh += theta[self.w2(c, j)] * dzc;
            }
            let da = dh * (1.0 - hj * hj);
            for (f, &xf) in ex.x.iter().enumerate() {
                acc.0[self.w1(j, f)] += da * xf;
            }
            acc.0[self.b1(j)] += da;
        }
    }
}
