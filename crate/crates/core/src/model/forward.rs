use super::weights::{AttentionWeights, DecoderLayerWeights, EncoderLayerWeights, FeedForwardWeights};
use super::{Model, ModelKind};
use crate::error::{Error, Result};
use crate::tensor::{affine, dot, gelu, layer_norm_rows, softmax_slice, Tensor};

/// Attention weights and value vectors of one attention sublayer, per head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCapture {
    /// `[T_q × T_k]` per head.
    pub weights: Vec<Tensor>,
    /// `[T_k × d_h]` per head.
    pub values: Vec<Tensor>,
}

impl AttentionCapture {
    pub fn heads(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCapture {
    pub input: Tensor,
    pub output: Tensor,
    pub self_attn: AttentionCapture,
    /// Decoder layers only.
    pub cross_attn: Option<AttentionCapture>,
}

/// Immutable record of one pass through a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCapture {
    pub layers: Vec<LayerCapture>,
    /// Output of the last layer after the optional final norm.
    pub final_hidden: Tensor,
    /// `[T × vocab]` when the pass ends in a head.
    pub logits: Option<Tensor>,
}

impl ForwardCapture {
    /// Level 0 is the stack input, level `ℓ` the output of layer `ℓ`.
    pub fn hidden_state(&self, level: usize) -> Option<&Tensor> {
        match level {
            0 => self.layers.first().map(|l| &l.input),
            l => self.layers.get(l - 1).map(|c| &c.output),
        }
    }

    pub fn layer(&self, layer: usize) -> Option<&LayerCapture> {
        layer.checked_sub(1).and_then(|i| self.layers.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublayer {
    SelfAttention,
    CrossAttention,
}

/// Zeroes the value vectors at `positions` (all heads) in one sublayer of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub layer: usize,
    pub sublayer: Sublayer,
    pub positions: Vec<usize>,
}

impl Intervention {
    fn mask_for(&self, layer: usize, sub: Sublayer, len: usize) -> Result<Option<Vec<bool>>> {
        if self.layer != layer || self.sublayer != sub {
            return Ok(None);
        }
        Ok(Some(position_mask(&self.positions, len)?))
    }
}

pub(crate) fn position_mask(positions: &[usize], len: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    for &p in positions {
        if p >= len {
            return Err(Error::Range(format!("position {p} outside sequence of {len}")));
        }
        mask[p] = true;
    }
    Ok(mask)
}

fn numeric(layer: usize, what: &str, head: Option<usize>) -> Error {
    let context = match head {
        Some(h) => format!("layer {layer} head {h} ({what})"),
        None => format!("layer {layer} ({what})"),
    };
    Error::Numeric { context }
}

fn relabel(e: Error, layer: usize, what: &str) -> Error {
    match e {
        Error::Numeric { .. } => numeric(layer, what, None),
        other => other,
    }
}

fn checked_add(a: &Tensor, b: &Tensor, layer: usize, what: &str) -> Result<Tensor> {
    let data: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(numeric(layer, what, None));
    }
    Ok(Tensor::new(a.shape().to_vec(), data).expect("finite"))
}

/// Multi-head attention: returns `Σ_h Σ_j α^h_{ij} v^h_j W_O^h + b_O` per query row
/// (no residual) and the per-head capture.
fn multi_head_attention(
    queries: &Tensor,
    keys_values: &Tensor,
    w: &AttentionWeights,
    heads: usize,
    causal: bool,
    zero_values: Option<&[bool]>,
    layer: usize,
) -> Result<(Tensor, AttentionCapture)> {
    let d = w.w_q.rows();
    let dh = d / heads;
    let (tq, tk) = (queries.rows(), keys_values.rows());
    let q = affine(queries, &w.w_q, &w.b_q).map_err(|e| relabel(e, layer, "query"))?;
    let k = affine(keys_values, &w.w_k, &w.b_k).map_err(|e| relabel(e, layer, "key"))?;
    let mut v = affine(keys_values, &w.w_v, &w.b_v).map_err(|e| relabel(e, layer, "value"))?;
    if let Some(mask) = zero_values {
        for (j, &z) in mask.iter().enumerate() {
            if z {
                v.row_mut(j).iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
    let scale = 1.0 / (dh as f64).sqrt();
    let mut acc = vec![0.0f64; tq * d];
    let mut weights = Vec::with_capacity(heads);
    let mut values = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let mut alpha = Tensor::zeros(vec![tq, tk]);
        let mut ctx = vec![0.0f64; dh];
        for i in 0..tq {
            let visible = if causal { (i + 1).min(tk) } else { tk };
            let qi = &q.row(i)[lo..hi];
            let logits: Vec<f32> = (0..visible)
                .map(|j| (dot(qi, &k.row(j)[lo..hi]) * scale) as f32)
                .collect();
            if logits.iter().any(|x| !x.is_finite()) {
                return Err(numeric(layer, "attention logits", Some(h)));
            }
            let probs = softmax_slice(&logits);
            ctx.iter_mut().for_each(|c| *c = 0.0);
            for (j, &a) in probs.iter().enumerate() {
                let vj = &v.row(j)[lo..hi];
                for (c, &x) in ctx.iter_mut().zip(vj) {
                    *c += a as f64 * x as f64;
                }
            }
            alpha.row_mut(i)[..visible].copy_from_slice(&probs);
            let out = &mut acc[i * d..(i + 1) * d];
            for (r, &c) in ctx.iter().enumerate() {
                let wrow = w.w_o.row(lo + r);
                for (o, &wv) in out.iter_mut().zip(wrow) {
                    *o += c * wv as f64;
                }
            }
        }
        weights.push(alpha);
        values.push(v.col_slice(lo, hi));
    }
    let mut out = vec![0.0f32; tq * d];
    for i in 0..tq {
        for c in 0..d {
            out[i * d + c] = (acc[i * d + c] + w.b_o.data()[c] as f64) as f32;
        }
    }
    let out = Tensor::new(vec![tq, d], out).map_err(|_| numeric(layer, "attention output", None))?;
    Ok((out, AttentionCapture { weights, values }))
}

fn feed_forward(z: &Tensor, w: &FeedForwardWeights, layer: usize) -> Result<Tensor> {
    let u = layer_norm_rows(z, &w.norm.gain, &w.norm.bias).map_err(|e| relabel(e, layer, "LN_FFN"))?;
    let hdn = gelu(&affine(&u, &w.w_1, &w.b_1).map_err(|e| relabel(e, layer, "FFN W_1"))?);
    let f = affine(&hdn, &w.w_2, &w.b_2).map_err(|e| relabel(e, layer, "FFN W_2"))?;
    checked_add(z, &f, layer, "FFN residual")
}

/// One pre-LN encoder layer. `zero_values` marks key positions whose value
/// vectors are zeroed in every head.
pub fn encoder_layer_forward(
    x: &Tensor,
    w: &EncoderLayerWeights,
    heads: usize,
    layer: usize,
    zero_values: Option<&[bool]>,
) -> Result<(Tensor, LayerCapture)> {
    let normed = layer_norm_rows(x, &w.attn.norm.gain, &w.attn.norm.bias)
        .map_err(|e| relabel(e, layer, "LN_MHA"))?;
    let (attn, cap) =
        multi_head_attention(&normed, &normed, &w.attn, heads, false, zero_values, layer)?;
    let z = checked_add(x, &attn, layer, "attention residual")?;
    let out = feed_forward(&z, &w.ffn, layer)?;
    Ok((
        out.clone(),
        LayerCapture {
            input: x.clone(),
            output: out,
            self_attn: cap,
            cross_attn: None,
        },
    ))
}

/// One pre-LN decoder layer: causal self-attention, cross-attention over `enc_out`, FFN.
pub fn decoder_layer_forward(
    y: &Tensor,
    enc_out: &Tensor,
    w: &DecoderLayerWeights,
    heads: usize,
    layer: usize,
    zero_self: Option<&[bool]>,
    zero_cross: Option<&[bool]>,
) -> Result<(Tensor, LayerCapture)> {
    let normed = layer_norm_rows(y, &w.self_attn.norm.gain, &w.self_attn.norm.bias)
        .map_err(|e| relabel(e, layer, "self LN"))?;
    let (sa, self_cap) =
        multi_head_attention(&normed, &normed, &w.self_attn, heads, true, zero_self, layer)?;
    let z1 = checked_add(y, &sa, layer, "self-attention residual")?;
    let normed = layer_norm_rows(&z1, &w.cross_attn.norm.gain, &w.cross_attn.norm.bias)
        .map_err(|e| relabel(e, layer, "cross LN"))?;
    let (ca, cross_cap) =
        multi_head_attention(&normed, enc_out, &w.cross_attn, heads, false, zero_cross, layer)?;
    let z2 = checked_add(&z1, &ca, layer, "cross-attention residual")?;
    let out = feed_forward(&z2, &w.ffn, layer)?;
    Ok((
        out.clone(),
        LayerCapture {
            input: y.clone(),
            output: out,
            self_attn: self_cap,
            cross_attn: Some(cross_cap),
        },
    ))
}

impl Model {
    fn check_frames(&self, frames: &Tensor) -> Result<()> {
        if frames.rank() != 2 || frames.cols() != self.spec.d_model {
            return Err(Error::Input(format!(
                "frames must be [T x {}], got {:?}",
                self.spec.d_model,
                frames.shape()
            )));
        }
        let t = frames.rows();
        if t == 0 {
            return Err(Error::Input("empty frame sequence".into()));
        }
        if t > self.spec.max_frames {
            return Err(Error::Input(format!(
                "{t} frames exceed the model maximum of {}",
                self.spec.max_frames
            )));
        }
        Ok(())
    }

    pub fn encoder_forward(&self, frames: &Tensor) -> Result<ForwardCapture> {
        self.encoder_forward_with(frames, None)
    }

    /// Encoder pass with an optional value-zeroing intervention.
    pub fn encoder_forward_with(
        &self,
        frames: &Tensor,
        intervention: Option<&Intervention>,
    ) -> Result<ForwardCapture> {
        self.check_frames(frames)?;
        let t = frames.rows();
        let mut x = frames.clone();
        let mut layers = Vec::with_capacity(self.spec.enc_layers);
        for (i, w) in self.weights.encoder.iter().enumerate() {
            let layer = i + 1;
            let mask = match intervention {
                Some(iv) => iv.mask_for(layer, Sublayer::SelfAttention, t)?,
                None => None,
            };
            let (out, cap) = encoder_layer_forward(&x, w, self.spec.heads, layer, mask.as_deref())?;
            layers.push(cap);
            x = out;
        }
        let final_hidden = match &self.weights.encoder_norm {
            Some(n) => layer_norm_rows(&x, &n.gain, &n.bias)?,
            None => x,
        };
        let logits = match self.spec.kind {
            ModelKind::EncoderCtc => Some(affine(&final_hidden, &self.weights.head_w, &self.weights.head_b)?),
            ModelKind::EncoderDecoder => None,
        };
        Ok(ForwardCapture {
            layers,
            final_hidden,
            logits,
        })
    }

    /// Token embedding plus position embedding for a decoder input sequence.
    pub fn embed_tokens(&self, tokens: &[u32]) -> Result<Tensor> {
        let (tok, pos) = match (&self.weights.token_embedding, &self.weights.position_embedding) {
            (Some(t), Some(p)) => (t, p),
            _ => return Err(Error::Usage("model has no decoder embeddings".into())),
        };
        if tokens.is_empty() {
            return Err(Error::Input("empty decoder input".into()));
        }
        if tokens.len() > pos.rows() {
            return Err(Error::Input(format!(
                "{} decoder positions exceed the table of {}",
                tokens.len(),
                pos.rows()
            )));
        }
        let d = self.spec.d_model;
        let mut out = Tensor::zeros(vec![tokens.len(), d]);
        for (s, &id) in tokens.iter().enumerate() {
            if id as usize >= tok.rows() {
                return Err(Error::Input(format!("token id {id} outside vocabulary")));
            }
            let (te, pe) = (tok.row(id as usize), pos.row(s));
            for (o, (a, b)) in out.row_mut(s).iter_mut().zip(te.iter().zip(pe)) {
                *o = a + b;
            }
        }
        Ok(out)
    }

    /// Teacher-forced decoder pass over `tokens` (which start with the bos id) given the
    /// final encoder output. Returns logits for every position.
    pub fn decoder_forward(
        &self,
        enc_out: &Tensor,
        tokens: &[u32],
        intervention: Option<&Intervention>,
    ) -> Result<ForwardCapture> {
        if !self.spec.kind.has_decoder() {
            return Err(Error::Usage("decoder pass on an encoder-only model".into()));
        }
        let mut y = self.embed_tokens(tokens)?;
        let (s, t) = (tokens.len(), enc_out.rows());
        let mut layers = Vec::with_capacity(self.spec.dec_layers);
        for (i, w) in self.weights.decoder.iter().enumerate() {
            let layer = i + 1;
            let (ms, mc) = match intervention {
                Some(iv) => (
                    iv.mask_for(layer, Sublayer::SelfAttention, s)?,
                    iv.mask_for(layer, Sublayer::CrossAttention, t)?,
                ),
                None => (None, None),
            };
            let (out, cap) = decoder_layer_forward(
                &y,
                enc_out,
                w,
                self.spec.heads,
                layer,
                ms.as_deref(),
                mc.as_deref(),
            )?;
            layers.push(cap);
            y = out;
        }
        let final_hidden = match &self.weights.decoder_norm {
            Some(n) => layer_norm_rows(&y, &n.gain, &n.bias)?,
            None => y,
        };
        let logits = affine(&final_hidden, &self.weights.head_w, &self.weights.head_b)?;
        Ok(ForwardCapture {
            layers,
            final_hidden,
            logits: Some(logits),
        })
    }
}
