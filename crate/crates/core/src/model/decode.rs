use super::forward::ForwardCapture;
use super::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of the largest element; the first one wins ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-frame argmax, collapse adjacent repeats, drop blanks.
pub fn ctc_decode_greedy(logits: &Tensor, blank: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev: Option<u32> = None;
    for t in 0..logits.rows() {
        let id = argmax(logits.row(t)) as u32;
        if Some(id) != prev && id != blank {
            out.push(id);
        }
        prev = Some(id);
    }
    out
}

/// Result of greedy autoregressive decoding.
#[derive(Debug, Clone)]
pub struct Generation {
    /// Generated ids, without bos and eos.
    pub tokens: Vec<u32>,
    /// Decoder capture of every step; step `s` sees the bos plus `s` generated tokens.
    pub steps: Vec<ForwardCapture>,
    /// Next-token logits at every step.
    pub step_logits: Vec<Vec<f32>>,
    pub encoder: ForwardCapture,
    /// Set when `max_steps` ran out before eos.
    pub truncated: bool,
}

impl Generation {
    /// The decoder input that reproduces the generated sequence by teacher forcing.
    pub fn decoder_input(&self, bos: u32) -> Vec<u32> {
        std::iter::once(bos).chain(self.tokens.iter().copied()).collect()
    }
}

impl Model {
    /// Greedy CTC transcription of a frame sequence.
    pub fn transcribe_ctc(&self, frames: &Tensor) -> Result<Vec<u32>> {
        let blank = self
            .spec
            .blank_id
            .ok_or_else(|| Error::Usage("model has no blank id".into()))?;
        let cap = self.encoder_forward(frames)?;
        let logits = cap
            .logits
            .as_ref()
            .ok_or_else(|| Error::Usage("encoder pass produced no logits".into()))?;
        Ok(ctc_decode_greedy(logits, blank))
    }

    /// Starts from bos, appends the argmax token each step, stops at eos or `max_steps`.
    pub fn greedy_generate(&self, frames: &Tensor, max_steps: usize) -> Result<Generation> {
        if !self.spec.kind.has_decoder() {
            return Err(Error::Usage("generation needs an encoder-decoder model".into()));
        }
        let bos = self.spec.bos_id.expect("validated");
        let eos = self.spec.eos_id.expect("validated");
        let encoder = self.encoder_forward(frames)?;
        let limit = max_steps.min(self.spec.max_positions);
        let mut input = vec![bos];
        let mut steps = Vec::new();
        let mut step_logits = Vec::new();
        let mut truncated = true;
        while steps.len() < limit {
            let cap = self.decoder_forward(&encoder.final_hidden, &input, None)?;
            let logits = cap.logits.as_ref().expect("decoder logits");
            let last = logits.row(logits.rows() - 1).to_vec();
            let next = argmax(&last) as u32;
            steps.push(cap);
            step_logits.push(last);
            if next == eos {
                truncated = false;
                break;
            }
            input.push(next);
        }
        Ok(Generation {
            tokens: input[1..].to_vec(),
            steps,
            step_logits,
            encoder,
            truncated,
        })
    }
}
