//! Toy datasets and hand-built models whose mixing pattern is known.
//!
//! Every utterance is a fixed number of words, each a run of identical frames.
//! One word is a cue (determiner or pronoun) whose frames carry a ±1 number
//! feature; a later word is the target, a homophone whose frames are the same
//! for its singular and plural forms. Utterances come in singular/plural
//! twins that differ only in the cue frames.

mod encdec;
mod encoder;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::WordTiming;
use crate::error::{Error, Result};
use crate::manifest::{write_manifests, Label, Pattern, UtteranceManifest};
use crate::model::{Model, ModelKind, Vocab};
use crate::tensor::Tensor;

pub use encdec::build_cue_copy_encdec;
pub use encoder::build_cue_copy_encoder;

pub(crate) const FILLERS: [&str; 6] = ["alors", "donc", "ici", "puis", "bien", "encore"];
/// Singular and plural form of each cue class.
pub(crate) const CUES: [(&str, &str); 2] = [("le", "les"), ("il", "ils")];
/// Singular and plural form of each homophone target.
pub(crate) const TARGETS: [(&str, &str); 3] = [("livre", "livres"), ("titre", "titres"), ("mange", "mangent")];

/// Logit scale of a word's own identity channel.
pub(crate) const BETA: f32 = 10.0;
/// Logit scale of the number evidence.
pub(crate) const GAMMA: f32 = 3.0;
/// Attention logit gain on the engineered query/key channels.
pub(crate) const GAIN: f32 = 40.0;
/// Squared norm of every input frame.
pub(crate) const FRAME_NORM2: f32 = 49.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTaskSpec {
    pub words: usize,
    pub frames_per_word: usize,
    pub frame_seconds: f64,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub utterances: usize,
    pub enc_layers: usize,
    /// Encoder layer that copies the number feature (1-based).
    pub copy_layer: usize,
    pub dec_layers: usize,
    /// Decoder layer whose self-attention reads the cue token (1-based).
    pub dec_copy_layer: usize,
    pub seed: u64,
}

impl Default for SynthTaskSpec {
    fn default() -> Self {
        Self {
            words: 5,
            frames_per_word: 4,
            frame_seconds: 0.02,
            d_model: 32,
            heads: 2,
            d_ff: 32,
            utterances: 200,
            enc_layers: 4,
            copy_layer: 2,
            dec_layers: 2,
            dec_copy_layer: 2,
            seed: 7,
        }
    }
}

impl SynthTaskSpec {
    pub fn frames(&self) -> usize {
        self.words * self.frames_per_word
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 * self.frame_seconds
    }

    pub(crate) fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Construction(m));
        if self.words < 3 {
            return bad("need at least three words per utterance".into());
        }
        if self.frames_per_word == 0 || self.frame_seconds.is_nan() || self.frame_seconds <= 0.0 {
            return bad("frames per word and frame length must be positive".into());
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must split evenly over heads".into());
        }
        if self.utterances < 2 || !self.utterances.is_multiple_of(2) {
            return bad("utterance count must be even and at least 2".into());
        }
        if self.copy_layer == 0 || self.copy_layer > self.enc_layers {
            return bad("copy layer outside the encoder".into());
        }
        if self.dec_layers < 2 || self.dec_copy_layer < 2 || self.dec_copy_layer > self.dec_layers {
            return bad("decoder copy layer must be a layer after the first".into());
        }
        let frame = FrameLayout::new(self.words);
        if frame.width() > self.d_model {
            return bad(format!("frames need {} channels, d_model is {}", frame.width(), self.d_model));
        }
        if self.head_dim() < frame.ids + 2 || self.head_dim() < self.words + 1 {
            return bad(format!("head width {} is too small", self.head_dim()));
        }
        Ok(())
    }
}

pub(crate) const N_IDS: usize = FILLERS.len() + CUES.len() + TARGETS.len();

/// Channel layout of input frames.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FrameLayout {
    pub num: usize,
    pub cue: usize,
    pub tgt: usize,
    /// Written by the copy layer.
    pub copy: usize,
    pub sink: usize,
    pub id0: usize,
    pub ids: usize,
    pub slot0: usize,
    pub bal: usize,
    pub pad: usize,
}

impl FrameLayout {
    pub fn new(words: usize) -> Self {
        let id0 = 5;
        let slot0 = id0 + N_IDS;
        let bal = slot0 + words;
        Self {
            num: 0,
            cue: 1,
            tgt: 2,
            copy: 3,
            sink: 4,
            id0,
            ids: N_IDS,
            slot0,
            bal,
            pad: bal + 1,
        }
    }

    pub fn width(&self) -> usize {
        self.pad + 2
    }
}

pub(crate) fn filler_id(k: usize) -> usize {
    k
}

pub(crate) fn cue_id(class: usize) -> usize {
    FILLERS.len() + class
}

pub(crate) fn target_id(lexeme: usize) -> usize {
    FILLERS.len() + CUES.len() + lexeme
}

/// Word forms shared by both vocabularies, in id-channel order: every filler,
/// then each cue class's two forms, then each target's two forms, with the id
/// channel each form reads.
pub(crate) fn word_forms() -> Vec<(String, usize, Option<Form>)> {
    let mut v: Vec<(String, usize, Option<Form>)> = FILLERS
        .iter()
        .enumerate()
        .map(|(k, w)| (w.to_string(), filler_id(k), None))
        .collect();
    for (c, (sg, pl)) in CUES.iter().enumerate() {
        v.push((sg.to_string(), cue_id(c), Some(Form::CueSingular)));
        v.push((pl.to_string(), cue_id(c), Some(Form::CuePlural)));
    }
    for (t, (sg, pl)) in TARGETS.iter().enumerate() {
        v.push((sg.to_string(), target_id(t), Some(Form::TargetSingular)));
        v.push((pl.to_string(), target_id(t), Some(Form::TargetPlural)));
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Form {
    CueSingular,
    CuePlural,
    TargetSingular,
    TargetPlural,
}

impl Form {
    /// +1 for plural forms, −1 for singular.
    pub fn sign(self) -> f32 {
        match self {
            Form::CuePlural | Form::TargetPlural => 1.0,
            _ => -1.0,
        }
    }
}

/// One word of a generated utterance before it is rendered to frames.
#[derive(Debug, Clone, Copy)]
struct WordPlan {
    id: usize,
    /// Scale of the id channel.
    strength: f32,
    num: f32,
    cue: bool,
    tgt: bool,
}

fn frame_vector(layout: &FrameLayout, d: usize, w: &WordPlan, slot: usize) -> Result<Vec<f32>> {
    let mut x = vec![0.0f32; d];
    x[layout.num] = w.num;
    x[layout.cue] = f32::from(u8::from(w.cue));
    x[layout.tgt] = f32::from(u8::from(w.tgt));
    x[layout.id0 + w.id] = w.strength;
    x[layout.slot0 + slot] = 1.0;
    let sum: f32 = x.iter().sum();
    x[layout.bal] = -sum;
    let sq: f32 = x.iter().map(|v| v * v).sum();
    let rest = FRAME_NORM2 - sq;
    if rest < 0.0 {
        return Err(Error::Construction("frame norm budget exceeded".into()));
    }
    let a = (rest / 2.0).sqrt();
    x[layout.pad] = a;
    x[layout.pad + 1] = -a;
    Ok(x)
}

/// A generated utterance: its manifest and frame tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub manifest: UtteranceManifest,
    pub frames: Tensor,
}

fn pattern_for(i: usize) -> Pattern {
    [Pattern::Det_Noun, Pattern::Pronoun_Verb, Pattern::Det_Noun_Verb][i % 3]
}

/// Singular/plural twin utterances. Decoder token fields are filled in when
/// `decoder_vocab` is given.
pub fn gen_dataset(spec: &SynthTaskSpec, decoder_vocab: Option<&Vocab>) -> Result<Vec<SynthUtterance>> {
    spec.validate()?;
    let layout = FrameLayout::new(spec.words);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_count = spec.words;
    let fpw = spec.frames_per_word;
    let mut out = Vec::with_capacity(spec.utterances);
    for pair in 0..spec.utterances / 2 {
        let pattern = pattern_for(pair);
        let (cue_class, gap, lexeme) = match pattern {
            Pattern::Det_Noun => (0, 1, rng.gen_range(0..2)),
            Pattern::Pronoun_Verb => (1, 1, 2),
            // the word between determiner and verb is a filler
            Pattern::Det_Noun_Verb => (0, 2, 2),
        };
        let cue_pos = rng.gen_range(0..w_count - gap);
        let target_pos = cue_pos + gap;
        let mut fillers = Vec::with_capacity(w_count);
        let mut prev: Option<usize> = None;
        for i in 0..w_count {
            if i == cue_pos || i == target_pos {
                fillers.push(None);
                prev = None;
                continue;
            }
            let mut choices: Vec<usize> = (0..FILLERS.len()).filter(|&k| Some(k) != prev).collect();
            choices.shuffle(&mut rng);
            let k = choices[0];
            prev = Some(k);
            fillers.push(Some((k, rng.gen_range(0.8f32..1.2))));
        }
        for label in [Label::Singular, Label::Plural] {
            let sign = if label == Label::Plural { 1.0 } else { -1.0 };
            let mut rows = Vec::with_capacity(spec.frames());
            let mut words = Vec::with_capacity(w_count);
            for (i, f) in fillers.iter().enumerate() {
                let (plan, text) = if i == cue_pos {
                    let forms = CUES[cue_class];
                    (
                        WordPlan { id: cue_id(cue_class), strength: 1.0, num: sign, cue: true, tgt: false },
                        if sign > 0.0 { forms.1 } else { forms.0 },
                    )
                } else if i == target_pos {
                    let forms = TARGETS[lexeme];
                    (
                        WordPlan { id: target_id(lexeme), strength: 1.0, num: 0.0, cue: false, tgt: true },
                        if sign > 0.0 { forms.1 } else { forms.0 },
                    )
                } else {
                    let (k, s) = f.expect("filler slot");
                    (
                        WordPlan { id: filler_id(k), strength: s, num: 0.0, cue: false, tgt: false },
                        FILLERS[k],
                    )
                };
                let v = frame_vector(&layout, spec.d_model, &plan, i)?;
                for _ in 0..fpw {
                    rows.push(v.clone());
                }
                let t_s = (i * fpw) as f64 * spec.frame_seconds;
                let t_e = ((i + 1) * fpw) as f64 * spec.frame_seconds;
                words.push(WordTiming { text: text.to_string(), t_s, t_e });
            }
            let id = format!("u{pair:04}-{}", if sign > 0.0 { "pl" } else { "sg" });
            let (dec_spans, dec_tokens) = match decoder_vocab {
                Some(v) => {
                    let toks = words
                        .iter()
                        .map(|w| v.id(&w.text).ok_or_else(|| Error::Construction(format!("'{}' not in vocabulary", w.text))))
                        .collect::<Result<Vec<u32>>>()?;
                    ((0..w_count).map(|i| [i, i + 1]).collect(), Some(toks))
                }
                None => (Vec::new(), None),
            };
            out.push(SynthUtterance {
                manifest: UtteranceManifest {
                    frames_file: format!("frames/{id}.ctxt"),
                    id,
                    words,
                    cue_idx: cue_pos,
                    target_idx: target_pos,
                    label,
                    pattern,
                    dec_spans,
                    duration: Some(spec.duration()),
                    dec_tokens,
                },
                frames: Tensor::from_rows(&rows)?,
            });
        }
    }
    Ok(out)
}

/// Writes `model/`, `frames/` and `manifests.jsonl` under `dir`.
pub fn write_bundle(dir: &Path, model: &Model, data: &[SynthUtterance]) -> Result<()> {
    model.save(&dir.join("model"))?;
    let frames = dir.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
    for u in data {
        u.frames.save(&dir.join(&u.manifest.frames_file))?;
    }
    let ms: Vec<UtteranceManifest> = data.iter().map(|u| u.manifest.clone()).collect();
    write_manifests(&dir.join("manifests.jsonl"), &ms)
}

/// Builds the toy model of `kind` and its dataset.
pub fn build_task(spec: &SynthTaskSpec, kind: ModelKind) -> Result<(Model, Vec<SynthUtterance>)> {
    match kind {
        ModelKind::EncoderCtc => {
            let model = build_cue_copy_encoder(spec)?;
            Ok((model, gen_dataset(spec, None)?))
        }
        ModelKind::EncoderDecoder => {
            let model = build_cue_copy_encdec(spec)?;
            let data = gen_dataset(spec, Some(&model.vocab))?;
            Ok((model, data))
        }
    }
}

/// Zeroes the output projections of an attention sublayer so it adds nothing.
pub(crate) fn silence_attention(a: &mut crate::model::AttentionWeights) {
    let d = a.w_o.rows();
    a.w_o = Tensor::zeros(vec![d, d]);
    a.b_o = Tensor::zeros(vec![d]);
}

pub(crate) fn silence_ffn(f: &mut crate::model::FeedForwardWeights) {
    let (dff, d) = (f.w_2.rows(), f.w_2.cols());
    f.w_2 = Tensor::zeros(vec![dff, d]);
    f.b_2 = Tensor::zeros(vec![d]);
}

/// Layer-norm gain that turns normalization into the identity for zero-mean
/// vectors of squared norm `norm2`.
pub(crate) fn identity_gain(norm2: f32, d: usize) -> Tensor {
    let g = ((norm2 as f64 / d as f64) + crate::tensor::LN_EPS).sqrt() as f32;
    Tensor::filled(vec![d], g)
}
