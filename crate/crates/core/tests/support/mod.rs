//! Naive f64 reference implementation of the transformer forward pass, written
//! with explicit loops and no shared code with the engine, plus random model
//! generators for oracle tests.

#![allow(dead_code, clippy::needless_range_loop)]

use ctxmix::model::{random_init_like, AttentionWeights, FeedForwardWeights, Norm, WeightSet};
use ctxmix::{Model, ModelKind, ModelSpec, Tensor, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).iter().map(|&v| v as f64).collect()).collect()
}

fn vec_of(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn layer_norm(x: &Mat, n: &Norm) -> Mat {
    let g = vec_of(&n.gain);
    let b = vec_of(&n.bias);
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(c, v)| (v - mean) * inv * g[c] + b[c]).collect()
        })
        .collect()
}

fn linear(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    let (din, dout) = (w.rows(), w.cols());
    let b = vec_of(b);
    x.iter()
        .map(|row| {
            (0..dout)
                .map(|o| {
                    let mut s = b[o];
                    for i in 0..din {
                        s += row[i] * w.get(i, o) as f64;
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Multi-head attention without residual. Returns the output and per-head weights.
fn attention(q_in: &Mat, kv_in: &Mat, w: &AttentionWeights, heads: usize, causal: bool) -> (Mat, Vec<Mat>) {
    let q = linear(q_in, &w.w_q, &w.b_q);
    let k = linear(kv_in, &w.w_k, &w.b_k);
    let v = linear(kv_in, &w.w_v, &w.b_v);
    let d = w.w_q.rows();
    let dh = d / heads;
    let mut concat = vec![vec![0.0; d]; q.len()];
    let mut all = Vec::new();
    for h in 0..heads {
        let mut alpha = vec![vec![0.0; k.len()]; q.len()];
        for i in 0..q.len() {
            let visible = if causal { i + 1 } else { k.len() };
            let logits: Vec<f64> = (0..visible)
                .map(|j| (0..dh).map(|r| q[i][h * dh + r] * k[j][h * dh + r]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..visible {
                alpha[i][j] = (logits[j] - m).exp() / z;
                for r in 0..dh {
                    concat[i][h * dh + r] += alpha[i][j] * v[j][h * dh + r];
                }
            }
        }
        all.push(alpha);
    }
    (linear(&concat, &w.w_o, &w.b_o), all)
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn ffn(x: &Mat, w: &FeedForwardWeights) -> Mat {
    let u = layer_norm(x, &w.norm);
    let h: Mat = linear(&u, &w.w_1, &w.b_1)
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    add(x, &linear(&h, &w.w_2, &w.b_2))
}

pub struct Reference {
    /// Output of every layer.
    pub layers: Vec<Mat>,
    /// Attention weights per layer per head (self-attention).
    pub attention: Vec<Vec<Mat>>,
    pub final_hidden: Mat,
    pub logits: Option<Mat>,
}

pub fn encoder(model: &Model, frames: &Tensor) -> Reference {
    let w = &model.weights;
    let mut x = to_mat(frames);
    let mut layers = Vec::new();
    let mut attention_weights = Vec::new();
    for l in &w.encoder {
        let (a, al) = attention(&layer_norm(&x, &l.attn.norm), &layer_norm(&x, &l.attn.norm), &l.attn, model.spec.heads, false);
        x = ffn(&add(&x, &a), &l.ffn);
        layers.push(x.clone());
        attention_weights.push(al);
    }
    let final_hidden = match &w.encoder_norm {
        Some(n) => layer_norm(&x, n),
        None => x,
    };
    let logits = match model.spec.kind {
        ModelKind::EncoderCtc => Some(linear(&final_hidden, &w.head_w, &w.head_b)),
        ModelKind::EncoderDecoder => None,
    };
    Reference {
        layers,
        attention: attention_weights,
        final_hidden,
        logits,
    }
}

pub fn decoder(model: &Model, enc_out: &Mat, tokens: &[u32]) -> Reference {
    let w = &model.weights;
    let tok = w.token_embedding.as_ref().unwrap();
    let pos = w.position_embedding.as_ref().unwrap();
    let mut y: Mat = tokens
        .iter()
        .enumerate()
        .map(|(s, &t)| (0..model.spec.d_model).map(|c| tok.get(t as usize, c) as f64 + pos.get(s, c) as f64).collect())
        .collect();
    let mut layers = Vec::new();
    let mut attention_weights = Vec::new();
    for l in &w.decoder {
        let n = layer_norm(&y, &l.self_attn.norm);
        let (a, al) = attention(&n, &n, &l.self_attn, model.spec.heads, true);
        let z1 = add(&y, &a);
        let (c, _) = attention(&layer_norm(&z1, &l.cross_attn.norm), enc_out, &l.cross_attn, model.spec.heads, false);
        y = ffn(&add(&z1, &c), &l.ffn);
        layers.push(y.clone());
        attention_weights.push(al);
    }
    let final_hidden = match &w.decoder_norm {
        Some(n) => layer_norm(&y, n),
        None => y,
    };
    let logits = Some(linear(&final_hidden, &w.head_w, &w.head_b));
    Reference {
        layers,
        attention: attention_weights,
        final_hidden,
        logits,
    }
}

/// Largest `|a - b| / max(1, |b|)` over all entries.
pub fn max_rel_err(a: &Tensor, b: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for (r, row) in b.iter().enumerate() {
        for (c, &want) in row.iter().enumerate() {
            let got = a.get(r, c) as f64;
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    worst
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()).unwrap()
}

/// A random model with L ≤ 4, d ≤ 32, whose layer norms also get random
/// gains and biases.
pub fn random_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = [1usize, 2, 4][rng.gen_range(0..3)];
    let d = heads * 4 * rng.gen_range(1..=(8 / heads).max(1));
    let d = d.min(32);
    let kind = if rng.gen_bool(0.5) {
        ModelKind::EncoderCtc
    } else {
        ModelKind::EncoderDecoder
    };
    let vocab_size = rng.gen_range(4..12);
    let spec = ModelSpec {
        kind,
        enc_layers: rng.gen_range(1..=4),
        dec_layers: if kind == ModelKind::EncoderDecoder { rng.gen_range(1..=4) } else { 0 },
        d_model: d,
        heads,
        d_ff: 4 * d,
        vocab_size,
        blank_id: (kind == ModelKind::EncoderCtc).then_some(0),
        bos_id: (kind == ModelKind::EncoderDecoder).then_some(0),
        eos_id: (kind == ModelKind::EncoderDecoder).then_some(1),
        unk_id: (kind == ModelKind::EncoderDecoder).then_some(2),
        max_frames: 32,
        max_positions: if kind == ModelKind::EncoderDecoder { 12 } else { 0 },
        final_norm: rng.gen_bool(0.5),
        fixed_duration: None,
    };
    let base: WeightSet = random_init_like(&spec, seed);
    let named = base
        .named()
        .into_iter()
        .map(|(name, t)| {
            let shape = t.shape().to_vec();
            let t = if name.ends_with(".gain") {
                let n = t.len();
                Tensor::new(shape, (0..n).map(|_| 1.0 + rng.gen_range(-0.3..=0.3)).collect()).unwrap()
            } else if name.ends_with(".bias") && name.contains("LN") {
                random_tensor(&mut rng, shape, 0.2)
            } else {
                random_tensor(&mut rng, shape, 1.5 / (d as f32).sqrt())
            };
            (name, t)
        })
        .collect();
    let weights = WeightSet::from_named(&spec, named).unwrap();
    let vocab = Vocab::new((0..vocab_size).map(|i| format!("t{i}")).collect());
    Model::new(spec, weights, vocab).unwrap()
}
