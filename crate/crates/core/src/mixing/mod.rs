//! Word-level context-mixing maps: raw attention (Attn), attention norm (AN)
//! and value zeroing (VZ), within the encoder, within the decoder, and across.
//!
//! A map entry `S[i][j]` says how much word `j` contributes to the
//! representation of word `i` at one layer. Raw scores are kept next to their
//! row-normalized form.

mod analysis;
mod scores;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::FrameSpan;
use crate::error::Error;
use crate::tensor::Tensor;

pub use analysis::{score_all, Analysis, DecoderText, Granularity};
pub use scores::{attention_norm_score, attn_score, normalize_rows, value_zeroing_score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    WithinEncoder,
    WithinDecoder,
    Cross,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::WithinEncoder, Scope::WithinDecoder, Scope::Cross];

    pub fn needs_decoder(self) -> bool {
        !matches!(self, Scope::WithinEncoder)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::WithinEncoder => "within-encoder",
            Scope::WithinDecoder => "within-decoder",
            Scope::Cross => "cross",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "within-encoder" | "encoder" | "enc" => Ok(Scope::WithinEncoder),
            "within-decoder" | "decoder" | "dec" => Ok(Scope::WithinDecoder),
            "cross" => Ok(Scope::Cross),
            other => Err(Error::Usage(format!("unknown scope '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "attn")]
    Attn,
    #[serde(rename = "an")]
    AttnNorm,
    #[serde(rename = "vz")]
    ValueZeroing,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Attn, Method::AttnNorm, Method::ValueZeroing];

    pub fn name(self) -> &'static str {
        match self {
            Method::Attn => "attn",
            Method::AttnNorm => "an",
            Method::ValueZeroing => "vz",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "attn" | "attention" => Ok(Method::Attn),
            "an" | "attn-norm" | "attention-norm" => Ok(Method::AttnNorm),
            "vz" | "value-zeroing" => Ok(Method::ValueZeroing),
            other => Err(Error::Usage(format!("unknown method '{other}'"))),
        }
    }
}

/// One row or column of a map: a word (or one of its tokens) and the
/// positions it occupies in the attended sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordUnit {
    pub word_idx: usize,
    pub label: String,
    pub span: FrameSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMap {
    pub layer: usize,
    pub method: Method,
    pub scope: Scope,
    /// Scores before clipping and normalization.
    pub raw: Tensor,
    /// Row-normalized scores.
    pub scores: Tensor,
    pub rows: Vec<WordUnit>,
    pub cols: Vec<WordUnit>,
    /// Rows whose raw scores were all zero after clipping.
    pub flagged: Vec<bool>,
    /// Mean cosine similarity behind each VZ entry.
    pub raw_cosine: Option<Tensor>,
}

impl MixingMap {
    pub(crate) fn build(
        layer: usize,
        method: Method,
        scope: Scope,
        raw: Tensor,
        rows: Vec<WordUnit>,
        cols: Vec<WordUnit>,
        raw_cosine: Option<Tensor>,
    ) -> Self {
        let (scores, flagged) = normalize_rows(&raw);
        Self {
            layer,
            method,
            scope,
            raw,
            scores,
            rows,
            cols,
            flagged,
            raw_cosine,
        }
    }

    /// Normalized row of the units belonging to `word`, averaged when the word has
    /// several row units.
    pub fn word_row(&self, word: usize) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.rows.len())
            .filter(|&r| self.rows[r].word_idx == word)
            .collect();
        if idx.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.cols.len()];
        for &r in &idx {
            for (o, &v) in out.iter_mut().zip(self.scores.row(r)) {
                *o += v as f64;
            }
        }
        let n = idx.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Some(out)
    }

    pub fn row_flagged(&self, word: usize) -> bool {
        (0..self.rows.len())
            .filter(|&r| self.rows[r].word_idx == word)
            .all(|r| self.flagged[r])
    }
}
