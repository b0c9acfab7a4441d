use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl Norm {
    pub fn identity(d: usize) -> Self {
        Self {
            gain: Tensor::filled(vec![d], 1.0),
            bias: Tensor::zeros(vec![d]),
        }
    }
}

/// One multi-head attention sublayer. Projections are fused `d × d`; head `h`
/// owns columns `h·d_h .. (h+1)·d_h` of `w_q/w_k/w_v` and the same rows of `w_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// Layer norm applied to the query-side input before projection.
    pub norm: Norm,
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
}

impl AttentionWeights {
    pub fn zeros(d: usize) -> Self {
        let m = || Tensor::zeros(vec![d, d]);
        let v = || Tensor::zeros(vec![d]);
        Self {
            norm: Norm::identity(d),
            w_q: m(),
            b_q: v(),
            w_k: m(),
            b_k: v(),
            w_v: m(),
            b_v: v(),
            w_o: m(),
            b_o: v(),
        }
    }

    /// Rows of `w_o` belonging to head `h`.
    pub fn w_o_head(&self, h: usize, head_dim: usize) -> Tensor {
        self.w_o.row_slice(h * head_dim, (h + 1) * head_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardWeights {
    pub norm: Norm,
    pub w_1: Tensor,
    pub b_1: Tensor,
    pub w_2: Tensor,
    pub b_2: Tensor,
}

impl FeedForwardWeights {
    pub fn zeros(d: usize, d_ff: usize) -> Self {
        Self {
            norm: Norm::identity(d),
            w_1: Tensor::zeros(vec![d, d_ff]),
            b_1: Tensor::zeros(vec![d_ff]),
            w_2: Tensor::zeros(vec![d_ff, d]),
            b_2: Tensor::zeros(vec![d]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerWeights {
    pub attn: AttentionWeights,
    pub ffn: FeedForwardWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerWeights {
    pub self_attn: AttentionWeights,
    pub cross_attn: AttentionWeights,
    pub ffn: FeedForwardWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub encoder: Vec<EncoderLayerWeights>,
    pub encoder_norm: Option<Norm>,
    pub decoder: Vec<DecoderLayerWeights>,
    pub decoder_norm: Option<Norm>,
    /// `[vocab × d]`, decoder models only.
    pub token_embedding: Option<Tensor>,
    /// `[max_positions × d]`, decoder models only.
    pub position_embedding: Option<Tensor>,
    /// Output projection `[d × vocab]`: CTC head or decoder LM head.
    pub head_w: Tensor,
    pub head_b: Tensor,
}

fn attn_names(prefix: &str, ln: &str, d: usize, out: &mut Vec<(String, Vec<usize>)>) {
    for p in ["Q", "K", "V", "O"] {
        out.push((format!("{prefix}.W_{p}"), vec![d, d]));
        out.push((format!("{prefix}.b_{p}"), vec![d]));
    }
    out.push((format!("{prefix}.{ln}.gain"), vec![d]));
    out.push((format!("{prefix}.{ln}.bias"), vec![d]));
}

fn ffn_names(prefix: &str, d: usize, d_ff: usize, out: &mut Vec<(String, Vec<usize>)>) {
    out.push((format!("{prefix}.LN_FFN.gain"), vec![d]));
    out.push((format!("{prefix}.LN_FFN.bias"), vec![d]));
    out.push((format!("{prefix}.W_1"), vec![d, d_ff]));
    out.push((format!("{prefix}.b_1"), vec![d_ff]));
    out.push((format!("{prefix}.W_2"), vec![d_ff, d]));
    out.push((format!("{prefix}.b_2"), vec![d]));
}

/// Every parameter name the spec implies, with its shape, in a fixed order.
pub(crate) fn parameter_shapes(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    let (d, ff) = (spec.d_model, spec.d_ff);
    let mut out = Vec::new();
    for l in 1..=spec.enc_layers {
        attn_names(&format!("enc.{l}"), "LN_MHA", d, &mut out);
        ffn_names(&format!("enc.{l}"), d, ff, &mut out);
    }
    if spec.final_norm {
        out.push(("enc.LN_POST.gain".into(), vec![d]));
        out.push(("enc.LN_POST.bias".into(), vec![d]));
    }
    if spec.kind.has_decoder() {
        out.push(("dec.tok_emb".into(), vec![spec.vocab_size, d]));
        out.push(("dec.pos_emb".into(), vec![spec.max_positions, d]));
        for l in 1..=spec.dec_layers {
            attn_names(&format!("dec.{l}.self"), "LN", d, &mut out);
            attn_names(&format!("dec.{l}.cross"), "LN", d, &mut out);
            ffn_names(&format!("dec.{l}"), d, ff, &mut out);
        }
        if spec.final_norm {
            out.push(("dec.LN_POST.gain".into(), vec![d]));
            out.push(("dec.LN_POST.bias".into(), vec![d]));
        }
    }
    out.push(("head.W".into(), vec![d, spec.vocab_size]));
    out.push(("head.b".into(), vec![spec.vocab_size]));
    out
}

struct Taker<'a> {
    map: &'a mut BTreeMap<String, Tensor>,
}

impl Taker<'_> {
    fn take(&mut self, name: &str) -> Result<Tensor> {
        self.map
            .remove(name)
            .ok_or_else(|| Error::Input(format!("missing parameter {name}")))
    }

    fn norm(&mut self, prefix: &str) -> Result<Norm> {
        Ok(Norm {
            gain: self.take(&format!("{prefix}.gain"))?,
            bias: self.take(&format!("{prefix}.bias"))?,
        })
    }

    fn attn(&mut self, prefix: &str, ln: &str) -> Result<AttentionWeights> {
        Ok(AttentionWeights {
            norm: self.norm(&format!("{prefix}.{ln}"))?,
            w_q: self.take(&format!("{prefix}.W_Q"))?,
            b_q: self.take(&format!("{prefix}.b_Q"))?,
            w_k: self.take(&format!("{prefix}.W_K"))?,
            b_k: self.take(&format!("{prefix}.b_K"))?,
            w_v: self.take(&format!("{prefix}.W_V"))?,
            b_v: self.take(&format!("{prefix}.b_V"))?,
            w_o: self.take(&format!("{prefix}.W_O"))?,
            b_o: self.take(&format!("{prefix}.b_O"))?,
        })
    }

    fn ffn(&mut self, prefix: &str) -> Result<FeedForwardWeights> {
        Ok(FeedForwardWeights {
            norm: self.norm(&format!("{prefix}.LN_FFN"))?,
            w_1: self.take(&format!("{prefix}.W_1"))?,
            b_1: self.take(&format!("{prefix}.b_1"))?,
            w_2: self.take(&format!("{prefix}.W_2"))?,
            b_2: self.take(&format!("{prefix}.b_2"))?,
        })
    }
}

fn push_attn(prefix: &str, ln: &str, a: &AttentionWeights, out: &mut Vec<(String, Tensor)>) {
    let pairs = [
        ("W_Q", &a.w_q),
        ("b_Q", &a.b_q),
        ("W_K", &a.w_k),
        ("b_K", &a.b_k),
        ("W_V", &a.w_v),
        ("b_V", &a.b_v),
        ("W_O", &a.w_o),
        ("b_O", &a.b_o),
    ];
    for (n, t) in pairs {
        out.push((format!("{prefix}.{n}"), t.clone()));
    }
    out.push((format!("{prefix}.{ln}.gain"), a.norm.gain.clone()));
    out.push((format!("{prefix}.{ln}.bias"), a.norm.bias.clone()));
}

fn push_ffn(prefix: &str, f: &FeedForwardWeights, out: &mut Vec<(String, Tensor)>) {
    out.push((format!("{prefix}.LN_FFN.gain"), f.norm.gain.clone()));
    out.push((format!("{prefix}.LN_FFN.bias"), f.norm.bias.clone()));
    out.push((format!("{prefix}.W_1"), f.w_1.clone()));
    out.push((format!("{prefix}.b_1"), f.b_1.clone()));
    out.push((format!("{prefix}.W_2"), f.w_2.clone()));
    out.push((format!("{prefix}.b_2"), f.b_2.clone()));
}

impl WeightSet {
    /// Assembles a weight set from named tensors, consuming every name the spec implies.
    /// Leftover names are an error.
    pub fn from_named(spec: &ModelSpec, mut map: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut t = Taker { map: &mut map };
        let mut encoder = Vec::with_capacity(spec.enc_layers);
        for l in 1..=spec.enc_layers {
            let p = format!("enc.{l}");
            encoder.push(EncoderLayerWeights {
                attn: t.attn(&p, "LN_MHA")?,
                ffn: t.ffn(&p)?,
            });
        }
        let encoder_norm = if spec.final_norm {
            Some(t.norm("enc.LN_POST")?)
        } else {
            None
        };
        let mut decoder = Vec::new();
        let (mut token_embedding, mut position_embedding, mut decoder_norm) = (None, None, None);
        if spec.kind.has_decoder() {
            token_embedding = Some(t.take("dec.tok_emb")?);
            position_embedding = Some(t.take("dec.pos_emb")?);
            for l in 1..=spec.dec_layers {
                decoder.push(DecoderLayerWeights {
                    self_attn: t.attn(&format!("dec.{l}.self"), "LN")?,
                    cross_attn: t.attn(&format!("dec.{l}.cross"), "LN")?,
                    ffn: t.ffn(&format!("dec.{l}"))?,
                });
            }
            if spec.final_norm {
                decoder_norm = Some(t.norm("dec.LN_POST")?);
            }
        }
        let head_w = t.take("head.W")?;
        let head_b = t.take("head.b")?;
        if !map.is_empty() {
            let extra: Vec<_> = map.keys().cloned().collect();
            return Err(Error::Input(format!("unexpected parameters: {}", extra.join(", "))));
        }
        let ws = WeightSet {
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            token_embedding,
            position_embedding,
            head_w,
            head_b,
        };
        ws.check_shapes(spec)?;
        Ok(ws)
    }

    /// Named view of every parameter, in the same order as the spec's parameter list.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            let p = format!("enc.{}", i + 1);
            push_attn(&p, "LN_MHA", &l.attn, &mut out);
            push_ffn(&p, &l.ffn, &mut out);
        }
        if let Some(n) = &self.encoder_norm {
            out.push(("enc.LN_POST.gain".into(), n.gain.clone()));
            out.push(("enc.LN_POST.bias".into(), n.bias.clone()));
        }
        if let Some(t) = &self.token_embedding {
            out.push(("dec.tok_emb".into(), t.clone()));
        }
        if let Some(t) = &self.position_embedding {
            out.push(("dec.pos_emb".into(), t.clone()));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            let p = format!("dec.{}", i + 1);
            push_attn(&format!("{p}.self"), "LN", &l.self_attn, &mut out);
            push_attn(&format!("{p}.cross"), "LN", &l.cross_attn, &mut out);
            push_ffn(&p, &l.ffn, &mut out);
        }
        if let Some(n) = &self.decoder_norm {
            out.push(("dec.LN_POST.gain".into(), n.gain.clone()));
            out.push(("dec.LN_POST.bias".into(), n.bias.clone()));
        }
        out.push(("head.W".into(), self.head_w.clone()));
        out.push(("head.b".into(), self.head_b.clone()));
        out
    }

    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<()> {
        let expected = parameter_shapes(spec);
        let actual = self.named();
        if expected.len() != actual.len() {
            return Err(Error::Dimension(format!(
                "weight set has {} parameters, spec implies {}",
                actual.len(),
                expected.len()
            )));
        }
        for ((en, es), (an, at)) in expected.iter().zip(&actual) {
            if en != an || es.as_slice() != at.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {an} has shape {:?}, expected {en} {:?}",
                    at.shape(),
                    es
                )));
            }
        }
        Ok(())
    }
}

/// Fresh weights with the spec's shapes. Projection matrices, biases, embeddings and
/// the head are drawn from `U(-1, 1) / sqrt(d)`; layer norms start at gain 1, bias 0.
pub fn random_init_like(spec: &ModelSpec, seed: u64) -> WeightSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (spec.d_model as f32).sqrt();
    let dist = Uniform::new_inclusive(-scale, scale);
    let mut map = BTreeMap::new();
    for (name, shape) in parameter_shapes(spec) {
        let n: usize = shape.iter().product();
        let t = if is_norm_param(&name) {
            let fill = if name.ends_with(".gain") { 1.0 } else { 0.0 };
            Tensor::filled(shape, fill)
        } else {
            let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
            Tensor::new(shape, data).expect("finite draws")
        };
        map.insert(name, t);
    }
    WeightSet::from_named(spec, map).expect("shapes derived from spec")
}

fn is_norm_param(name: &str) -> bool {
    name.contains(".LN")
}
