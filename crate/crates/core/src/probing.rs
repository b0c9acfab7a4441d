//! Layer-wise linear probes for grammatical number.
//!
//! Word representations are mean-pooled over the word's frames (encoder) or
//! generating positions (decoder). The classifier is L2-regularized logistic
//! regression fitted by full-batch gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alignment::FrameSpan;
use crate::error::{Error, Result};
use crate::manifest::Sample;
use crate::mixing::Granularity;
use crate::model::{ForwardCapture, Model};
use crate::selection::{analyze, Selected};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_FOLDS: usize = 3;
pub const DEFAULT_SEED: u64 = 13;
pub const POOLING: &str = "mean";

const STEP: f64 = 0.1;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 10_000;

/// Mean of hidden-state level `level` over `span`.
pub fn extract_target_representation(capture: &ForwardCapture, level: usize, span: FrameSpan) -> Result<Tensor> {
    let h = capture
        .hidden_state(level)
        .ok_or_else(|| Error::Range(format!("no hidden state at level {level}")))?;
    span.check_within(h.rows())?;
    let d = h.cols();
    let mut acc = vec![0.0f64; d];
    for n in span.indices() {
        for (a, &v) in acc.iter_mut().zip(h.row(n)) {
            *a += v as f64;
        }
    }
    let k = span.len() as f64;
    Tensor::vector(acc.into_iter().map(|v| (v / k) as f32).collect())
}

/// Pooled representations of one layer: `[n × d]` rows with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    /// One matrix per hidden-state level, level 0 first.
    pub layers: Vec<Tensor>,
    pub labels: Vec<u8>,
}

impl ProbeDataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.layers.iter().any(|l| l.rows() != n) {
            return Err(Error::Input("every layer needs one row per label".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Input("labels must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Which stack a probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stack {
    Encoder,
    Decoder,
}

impl Stack {
    pub fn name(self) -> &'static str {
        match self {
            Stack::Encoder => "encoder",
            Stack::Decoder => "decoder",
        }
    }
}

/// Target-word representations of every selected utterance at every level of
/// one stack. Decoder targets pool over the positions that generate them.
pub fn build_probe_dataset(
    model: &Model,
    samples: &[Sample],
    selected: &[Selected],
    stack: Stack,
) -> Result<ProbeDataset> {
    if stack == Stack::Decoder && !model.spec.kind.has_decoder() {
        return Err(Error::Usage("decoder probe on an encoder-only model".into()));
    }
    let levels = model.spec.layers_for(stack == Stack::Decoder) + 1;
    let reps = crate::par_map(selected, |sel| -> Result<Vec<Tensor>> {
        let sample = &samples[sel.index];
        let m = &sample.manifest;
        let a = analyze(model, sample, sel.dec_tokens.as_deref(), Granularity::Word)?;
        let (cap, span) = match stack {
            Stack::Encoder => (&a.encoder, sample.spans[m.target_idx]),
            Stack::Decoder => {
                let cap = a
                    .decoder
                    .as_ref()
                    .ok_or_else(|| Error::Data(format!("{}: no decoder transcription", m.id)))?;
                let (s, e) = m
                    .dec_span(m.target_idx)
                    .ok_or_else(|| Error::Data(format!("{}: no token span for the target", m.id)))?;
                (cap, FrameSpan { start: s, end: e })
            }
        };
        (0..levels).map(|l| extract_target_representation(cap, l, span)).collect()
    });
    let reps: Vec<Vec<Tensor>> = reps.into_iter().collect::<Result<_>>()?;
    let d = model.spec.d_model;
    let layers = (0..levels)
        .map(|l| {
            let data: Vec<f32> = reps.iter().flat_map(|r| r[l].data().iter().copied()).collect();
            Tensor::new(vec![reps.len(), d], data)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = selected
        .iter()
        .map(|s| samples[s.index].manifest.label.as_bit())
        .collect();
    Ok(ProbeDataset { layers, labels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f32]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(&a, w)| a as f64 * w).sum::<f64>()
    }

    pub fn predict(&self, x: &[f32]) -> u8 {
        u8::from(self.logit(x) > 0.0)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `λ‖w‖²/2`; the bias is not penalized.
pub fn objective(x: &Tensor, y: &[u8], lambda: f64, w: &[f64], b: f64) -> f64 {
    let n = y.len() as f64;
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z = b + x.row(i).iter().zip(w).map(|(&a, w)| a as f64 * w).sum::<f64>();
        // -log σ(z) for y = 1, -log(1 − σ(z)) for y = 0
        loss += if yi == 1 { log1p_exp(-z) } else { log1p_exp(z) };
    }
    loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`objective`] with respect to `(w, b)`.
pub fn gradient(x: &Tensor, y: &[u8], lambda: f64, w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let n = y.len() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = x.row(i);
        let z = b + row.iter().zip(w).map(|(&a, w)| a as f64 * w).sum::<f64>();
        let r = (sigmoid(z) - yi as f64) / n;
        for (g, &a) in gw.iter_mut().zip(row) {
            *g += r * a as f64;
        }
        gb += r;
    }
    (gw, gb)
}

/// Fits the probe from zero initialization with step 0.1, halving the step
/// (and rejecting the move) whenever the objective would increase.
pub fn train_logistic_l2(x: &Tensor, y: &[u8], lambda: f64) -> Result<LogisticModel> {
    if x.rank() != 2 || x.rows() != y.len() {
        return Err(Error::Dimension("need one feature row per label".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Input(format!("invalid regularization strength {lambda}")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.iter().filter(|&&v| v == 0).count();
    if pos + neg != y.len() {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    if pos < 2 || neg < 2 {
        return Err(Error::Input("need at least two samples of each class".into()));
    }
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = STEP;
    let mut obj = objective(x, y, lambda, &w, b);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let (gw, gb) = gradient(x, y, lambda, &w, b);
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if gnorm <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let nw: Vec<f64> = w.iter().zip(&gw).map(|(v, g)| v - step * g).collect();
        let nb = b - step * gb;
        let nobj = objective(x, y, lambda, &nw, nb);
        if nobj > obj {
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
            continue;
        }
        w = nw;
        b = nb;
        obj = nobj;
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        iterations,
        converged,
    })
}

pub fn accuracy(model: &LogisticModel, x: &Tensor, y: &[u8]) -> f64 {
    let hits = y
        .iter()
        .enumerate()
        .filter(|(i, &yi)| model.predict(x.row(*i)) == yi)
        .count();
    hits as f64 / y.len() as f64
}

/// Stratified fold index of every sample. Each class is shuffled with the
/// seed, the class lists are concatenated, and folds are dealt round-robin.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Input("need at least two folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    let mut fold = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    for f in 0..k {
        for class in [0u8, 1] {
            if !(0..labels.len()).any(|i| fold[i] == f && labels[i] == class) {
                return Err(Error::Stratification(format!("fold {f} has no samples of class {class}")));
            }
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerProbe {
    pub layer: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub layers: Vec<LayerProbe>,
    pub lambda: f64,
    pub folds: usize,
    pub pooling: &'static str,
}

fn subset(x: &Tensor, idx: &[usize]) -> Tensor {
    let d = x.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), d], data).expect("rows are finite")
}

/// k-fold cross-validated probe accuracy for every layer of the dataset.
pub fn kfold_probe(ds: &ProbeDataset, k: usize, lambda: f64, seed: u64) -> Result<ProbeResult> {
    ds.validate()?;
    let folds = stratified_folds(&ds.labels, k, seed)?;
    let per_layer = crate::par_map(&ds.layers, |x| -> Result<Vec<f64>> {
        (0..k)
            .map(|f| {
                let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
                let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
                let ytr: Vec<u8> = train.iter().map(|&i| ds.labels[i]).collect();
                let yte: Vec<u8> = test.iter().map(|&i| ds.labels[i]).collect();
                let model = train_logistic_l2(&subset(x, &train), &ytr, lambda)?;
                Ok(accuracy(&model, &subset(x, &test), &yte))
            })
            .collect()
    });
    let mut layers = Vec::with_capacity(per_layer.len());
    for (layer, accs) in per_layer.into_iter().enumerate() {
        let accs = accs?;
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        layers.push(LayerProbe {
            layer,
            fold_accuracy: accs,
            mean_accuracy: mean,
        });
    }
    Ok(ProbeResult {
        layers,
        lambda,
        folds: k,
        pooling: POOLING,
    })
}
