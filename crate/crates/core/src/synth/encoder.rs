use super::{
    identity_gain, silence_attention, silence_ffn, word_forms, Form, FrameLayout, SynthTaskSpec, BETA, FRAME_NORM2,
    GAIN, GAMMA,
};
use crate::error::Result;
use crate::model::{random_init_like, Model, ModelKind, ModelSpec, Vocab};
use crate::tensor::Tensor;

pub(crate) const BLANK: &str = "<blank>";

pub(crate) fn ctc_vocab() -> Vocab {
    let mut tokens = vec![BLANK.to_string()];
    tokens.extend(word_forms().into_iter().map(|(w, _, _)| w));
    Vocab::new(tokens)
}

/// Encoder-only CTC model. Every layer except the copy layer is an exact
/// identity. In the copy layer, target frames attend to cue frames and write
/// the cue's number feature into the copy channel; the CTC head reads it to
/// pick the target's written form.
pub fn build_cue_copy_encoder(spec: &SynthTaskSpec) -> Result<Model> {
    spec.validate()?;
    let d = spec.d_model;
    let dh = spec.head_dim();
    let layout = FrameLayout::new(spec.words);
    let vocab = ctc_vocab();
    let mspec = ModelSpec {
        kind: ModelKind::EncoderCtc,
        enc_layers: spec.enc_layers,
        dec_layers: 0,
        d_model: d,
        heads: spec.heads,
        d_ff: spec.d_ff,
        vocab_size: vocab.len(),
        blank_id: Some(0),
        bos_id: None,
        eos_id: None,
        unk_id: None,
        max_frames: spec.frames().max(64),
        max_positions: 0,
        final_norm: false,
        fixed_duration: None,
    };
    let mut w = random_init_like(&mspec, spec.seed ^ 0x5eed);
    for layer in &mut w.encoder {
        silence_attention(&mut layer.attn);
        silence_ffn(&mut layer.ffn);
    }

    let a = &mut w.encoder[spec.copy_layer - 1].attn;
    a.norm.gain = identity_gain(FRAME_NORM2, d);
    a.norm.bias = Tensor::zeros(vec![d]);
    for m in [&mut a.w_q, &mut a.w_k, &mut a.w_v] {
        *m = Tensor::zeros(vec![d, d]);
    }
    for b in [&mut a.b_q, &mut a.b_k, &mut a.b_v] {
        *b = Tensor::zeros(vec![d]);
    }
    for h in 0..spec.heads {
        a.w_q.set(layout.tgt, h * dh, GAIN);
        a.w_k.set(layout.cue, h * dh, 1.0);
    }
    a.w_v.set(layout.num, 0, 1.0);
    a.w_o.set(0, layout.copy, 1.0);
    a.w_o.set(0, layout.sink, -1.0);

    let v = vocab.len();
    let mut head = Tensor::zeros(vec![d, v]);
    let mut bias = Tensor::zeros(vec![v]);
    bias.data_mut()[0] = BETA / 2.0;
    for (tok, (_, id, form)) in word_forms().into_iter().enumerate() {
        let col = tok + 1;
        head.set(layout.id0 + id, col, BETA);
        match form {
            Some(f @ (Form::CueSingular | Form::CuePlural)) => head.set(layout.num, col, GAMMA * f.sign()),
            Some(f) => head.set(layout.copy, col, GAMMA * f.sign()),
            None => {}
        }
    }
    w.head_w = head;
    w.head_b = bias;
    Model::new(mspec, w, vocab)
}
