use super::{
    identity_gain, silence_attention, silence_ffn, word_forms, Form, FrameLayout, SynthTaskSpec, BETA, GAIN, GAMMA,
    N_IDS,
};
use crate::error::{Error, Result};
use crate::model::{random_init_like, Model, ModelKind, ModelSpec, Norm, Vocab};
use crate::tensor::Tensor;

pub(crate) const BOS: &str = "<bos>";
pub(crate) const EOS: &str = "<eos>";
pub(crate) const UNK: &str = "<unk>";

const TOKEN_NORM2: f32 = 8.0;
const POSITION_NORM2: f32 = 2.0;
/// Scale of the number copied from the cue token.
const KAPPA: f32 = 0.7;

/// Channel layout of the decoder stream.
#[derive(Debug, Clone, Copy)]
struct DecoderLayout {
    num: usize,
    cue: usize,
    bal: usize,
    pad: usize,
    slot0: usize,
    /// Slot count including the end-of-sentence slot.
    slots: usize,
    pos_bal: usize,
    id0: usize,
    tgt: usize,
    hnum: usize,
    sink: usize,
    copy: usize,
    copy_sink: usize,
}

impl DecoderLayout {
    fn new(words: usize) -> Self {
        let slot0 = 5;
        let slots = words + 1;
        let pos_bal = slot0 + slots;
        let id0 = pos_bal + 1;
        let tgt = id0 + N_IDS;
        Self {
            num: 0,
            cue: 1,
            bal: 2,
            pad: 3,
            slot0,
            slots,
            pos_bal,
            id0,
            tgt,
            hnum: tgt + 1,
            sink: tgt + 2,
            copy: tgt + 3,
            copy_sink: tgt + 4,
        }
    }

    fn width(&self) -> usize {
        self.copy_sink + 1
    }
}

pub(crate) fn decoder_vocab() -> Vocab {
    let mut tokens = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
    tokens.extend(word_forms().into_iter().map(|(w, _, _)| w));
    Vocab::new(tokens)
}

/// Encoder-decoder model. The encoder is an identity stack. Decoder layer 1
/// cross-attends from each position to the frames of the word it generates and
/// copies that word's identity, target flag and (for cues) number. The copy
/// layer's self-attention reads the number from the cue token in the prefix
/// at the step that generates the target.
pub fn build_cue_copy_encdec(spec: &SynthTaskSpec) -> Result<Model> {
    spec.validate()?;
    let d = spec.d_model;
    let dh = spec.head_dim();
    let frame = FrameLayout::new(spec.words);
    let lay = DecoderLayout::new(spec.words);
    if lay.width() > d {
        return Err(Error::Construction(format!(
            "decoder stream needs {} channels, d_model is {d}",
            lay.width()
        )));
    }
    let vocab = decoder_vocab();
    let v = vocab.len();
    let mspec = ModelSpec {
        kind: ModelKind::EncoderDecoder,
        enc_layers: spec.enc_layers,
        dec_layers: spec.dec_layers,
        d_model: d,
        heads: spec.heads,
        d_ff: spec.d_ff,
        vocab_size: v,
        blank_id: None,
        bos_id: Some(0),
        eos_id: Some(1),
        unk_id: Some(2),
        max_frames: spec.frames().max(64),
        max_positions: spec.words + 2,
        final_norm: false,
        fixed_duration: None,
    };
    let mut w = random_init_like(&mspec, spec.seed ^ 0xdec0de);
    for layer in &mut w.encoder {
        silence_attention(&mut layer.attn);
        silence_ffn(&mut layer.ffn);
    }
    for layer in &mut w.decoder {
        silence_attention(&mut layer.self_attn);
        silence_attention(&mut layer.cross_attn);
        silence_ffn(&mut layer.ffn);
    }

    // token embeddings: number and cue flag for cue forms, padded to a fixed norm
    let mut tok = Tensor::zeros(vec![v, d]);
    let forms = word_forms();
    for t in 0..v {
        let form = t.checked_sub(3).and_then(|i| forms[i].2);
        let (num, cue) = match form {
            Some(f @ (Form::CueSingular | Form::CuePlural)) => (f.sign(), 1.0),
            _ => (0.0, 0.0),
        };
        let bal = -(num + cue);
        let a = ((TOKEN_NORM2 - num * num - cue * cue - bal * bal) / 2.0).sqrt();
        tok.set(t, lay.num, num);
        tok.set(t, lay.cue, cue);
        tok.set(t, lay.bal, bal);
        tok.set(t, lay.pad, a);
        tok.set(t, lay.pad + 1, -a);
    }
    let mut pos = Tensor::zeros(vec![mspec.max_positions, d]);
    for p in 0..mspec.max_positions {
        pos.set(p, lay.slot0 + p.min(lay.slots - 1), 1.0);
        pos.set(p, lay.pos_bal, -1.0);
    }
    w.token_embedding = Some(tok);
    w.position_embedding = Some(pos);

    // layer 1 cross-attention: position slot p matches the frames of word p
    let c = &mut w.decoder[0].cross_attn;
    c.norm.gain = identity_gain(TOKEN_NORM2 + POSITION_NORM2, d);
    c.norm.bias = Tensor::zeros(vec![d]);
    for m in [&mut c.w_q, &mut c.w_k, &mut c.w_v] {
        *m = Tensor::zeros(vec![d, d]);
    }
    for b in [&mut c.b_q, &mut c.b_k, &mut c.b_v] {
        *b = Tensor::zeros(vec![d]);
    }
    for h in 0..spec.heads {
        for s in 0..spec.words {
            c.w_q.set(lay.slot0 + s, h * dh + s, GAIN);
            c.w_k.set(frame.slot0 + s, h * dh + s, 1.0);
        }
    }
    let reads = (0..N_IDS)
        .map(|i| (frame.id0 + i, lay.id0 + i))
        .chain([(frame.tgt, lay.tgt), (frame.num, lay.hnum)]);
    for (k, (src, dst)) in reads.enumerate() {
        c.w_v.set(src, k, 1.0);
        c.w_o.set(k, dst, 1.0);
        c.w_o.set(k, lay.sink, -1.0);
    }

    // copy layer self-attention: the target step attends to the cue token
    let s = &mut w.decoder[spec.dec_copy_layer - 1].self_attn;
    s.norm = Norm::identity(d);
    for m in [&mut s.w_q, &mut s.w_k, &mut s.w_v] {
        *m = Tensor::zeros(vec![d, d]);
    }
    for b in [&mut s.b_q, &mut s.b_k, &mut s.b_v] {
        *b = Tensor::zeros(vec![d]);
    }
    for h in 0..spec.heads {
        s.w_q.set(lay.tgt, h * dh, GAIN);
        s.w_k.set(lay.cue, h * dh, 1.0);
    }
    s.w_v.set(lay.num, 0, 1.0);
    s.w_o.set(0, lay.copy, KAPPA);
    s.w_o.set(0, lay.copy_sink, -KAPPA);

    let mut head = Tensor::zeros(vec![d, v]);
    let mut bias = Tensor::zeros(vec![v]);
    {
        let b = bias.data_mut();
        b[0] = -100.0;
        b[1] = BETA / 2.0;
        b[2] = -100.0;
    }
    // the end slot is still in the residual stream when it reaches the head
    head.set(lay.slot0 + lay.slots - 1, 1, 2.0 * BETA);
    for (i, (_, id, form)) in forms.into_iter().enumerate() {
        let col = i + 3;
        head.set(lay.id0 + id, col, BETA);
        match form {
            Some(f @ (Form::CueSingular | Form::CuePlural)) => head.set(lay.hnum, col, GAMMA * f.sign()),
            Some(f) => head.set(lay.copy, col, GAMMA * f.sign()),
            None => {}
        }
    }
    w.head_w = head;
    w.head_b = bias;
    Model::new(mspec, w, vocab)
}
