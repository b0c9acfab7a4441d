//! Pre-LN transformer encoder / decoder with full intermediate capture.
//!
//! Layer numbers are 1-based throughout the public API (layer 1 is the first
//! transformer layer). Hidden-state level 0 is the input to layer 1 and level
//! `ℓ` is the output of layer `ℓ`.

mod decode;
mod forward;
mod io;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decode::{argmax, ctc_decode_greedy, Generation};
pub use forward::{
    decoder_layer_forward, encoder_layer_forward, AttentionCapture, ForwardCapture, Intervention,
    LayerCapture, Sublayer,
};
pub use weights::{
    random_init_like, AttentionWeights, DecoderLayerWeights, EncoderLayerWeights,
    FeedForwardWeights, Norm, WeightSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    EncoderCtc,
    EncoderDecoder,
}

impl ModelKind {
    pub fn has_decoder(self) -> bool {
        matches!(self, ModelKind::EncoderDecoder)
    }
}

/// Constant utterance duration / frame count used by models that pad every
/// input to a fixed length (30 s and 1500 frames for Whisper).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedDuration {
    pub seconds: f64,
    pub frames: usize,
}

impl FixedDuration {
    pub const WHISPER: FixedDuration = FixedDuration {
        seconds: 30.0,
        frames: 1500,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub enc_layers: usize,
    #[serde(default)]
    pub dec_layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bos_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unk_id: Option<u32>,
    pub max_frames: usize,
    /// Rows of the decoder position table.
    #[serde(default)]
    pub max_positions: usize,
    /// Whether a layer norm follows the last layer of each stack.
    #[serde(default)]
    pub final_norm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_duration: Option<FixedDuration>,
}

impl ModelSpec {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Layer count of the stack that a scope reads from.
    pub fn layers_for(&self, decoder: bool) -> usize {
        if decoder {
            self.dec_layers
        } else {
            self.enc_layers
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.d_model < 2 {
            return bad("d_model must be at least 2".into());
        }
        if self.enc_layers == 0 {
            return bad("encoder needs at least one layer".into());
        }
        if self.vocab_size == 0 || self.d_ff == 0 || self.max_frames == 0 {
            return bad("vocab_size, d_ff and max_frames must be positive".into());
        }
        let check_id = |name: &str, id: Option<u32>| -> Result<()> {
            match id {
                Some(i) if (i as usize) < self.vocab_size => Ok(()),
                Some(i) => Err(Error::Input(format!("{name} {i} outside vocabulary"))),
                None => Err(Error::Input(format!("{name} is required for this model kind"))),
            }
        };
        match self.kind {
            ModelKind::EncoderCtc => {
                check_id("blank_id", self.blank_id)?;
                if self.dec_layers != 0 {
                    return bad("encoder-ctc models have no decoder layers".into());
                }
            }
            ModelKind::EncoderDecoder => {
                check_id("bos_id", self.bos_id)?;
                check_id("eos_id", self.eos_id)?;
                check_id("unk_id", self.unk_id)?;
                if self.dec_layers == 0 {
                    return bad("encoder-decoder models need at least one decoder layer".into());
                }
                if self.max_positions < 2 {
                    return bad("max_positions must be at least 2".into());
                }
            }
        }
        if let Some(fd) = self.fixed_duration {
            if fd.frames == 0 || fd.seconds.is_nan() || fd.seconds <= 0.0 {
                return bad("fixed duration needs positive seconds and frames".into());
            }
            if fd.frames > self.max_frames {
                return bad("fixed frame count exceeds max_frames".into());
            }
        }
        Ok(())
    }
}

/// Token strings indexed by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token strings concatenated with every boundary marker and space removed,
    /// for comparing a transcription against reference words.
    pub fn compact(&self, ids: &[u32]) -> String {
        compact_text(&ids.iter().filter_map(|&i| self.token(i)).collect::<String>())
    }

    /// Concatenates token strings and strips word-boundary markers, so pieces
    /// like `["▁li", "vres"]` or `["|livres"]` both spell `livres`.
    pub fn spell(&self, ids: &[u32]) -> String {
        let joined: String = ids.iter().filter_map(|&i| self.token(i)).collect();
        joined
            .trim_matches(|c: char| c.is_whitespace() || c == '|' || c == '▁' || c == 'Ġ')
            .to_string()
    }
}

/// Drops whitespace and the word-boundary markers `|`, `▁` and `Ġ`.
pub fn compact_text(s: &str) -> String {
    s.chars()
        .filter(|&c| !(c.is_whitespace() || c == '|' || c == '▁' || c == 'Ġ'))
        .collect()
}

/// A spec, its weights and its vocabulary.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub weights: WeightSet,
    pub vocab: Vocab,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: WeightSet, vocab: Vocab) -> Result<Self> {
        spec.validate()?;
        weights.check_shapes(&spec)?;
        if vocab.len() != spec.vocab_size {
            return Err(Error::Input(format!(
                "vocabulary has {} tokens, spec says {}",
                vocab.len(),
                spec.vocab_size
            )));
        }
        Ok(Self {
            spec,
            weights,
            vocab,
        })
    }

    /// Same architecture and vocabulary with freshly drawn random weights.
    pub fn random_like(&self, seed: u64) -> Model {
        Model {
            spec: self.spec.clone(),
            weights: random_init_like(&self.spec, seed),
            vocab: self.vocab.clone(),
        }
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        io::save_model(self, dir)
    }

    pub fn load(dir: &std::path::Path) -> Result<Model> {
        io::load_model(dir)
    }
}
