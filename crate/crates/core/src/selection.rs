//! Picks the utterances an analysis runs on: those the model transcribes
//! correctly, and for decoder models the token sequence to teacher-force.

use serde::Serialize;

use crate::error::Result;
use crate::manifest::Sample;
use crate::mixing::{Analysis, DecoderText, Granularity};
use crate::model::{compact_text, Model};

/// An utterance left out of an analysis and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skip {
    pub id: String,
    pub reason: String,
}

/// An utterance kept for analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selected {
    /// Index into the sample list.
    pub index: usize,
    /// Decoder transcription without bos/eos, for encoder-decoder models.
    pub dec_tokens: Option<Vec<u32>>,
}

fn reference_text(sample: &Sample) -> String {
    compact_text(&sample.manifest.word_texts().concat())
}

/// Checks one utterance. `Ok(Err(skip))` means the model got it wrong.
pub fn check_sample(model: &Model, sample: &Sample, require_correct: bool) -> Result<Result<Selected, Skip>> {
    let skip = |reason: String| Skip {
        id: sample.id().to_string(),
        reason,
    };
    let m = &sample.manifest;
    if !model.spec.kind.has_decoder() {
        if require_correct {
            let ids = model.transcribe_ctc(&sample.frames)?;
            let got = model.vocab.compact(&ids);
            if got != reference_text(sample) {
                return Ok(Err(skip(format!("transcribed as '{got}'"))));
            }
        }
        return Ok(Ok(Selected {
            index: 0,
            dec_tokens: None,
        }));
    }
    let max_steps = model.spec.max_positions.saturating_sub(1);
    let tokens = match (&m.dec_tokens, require_correct) {
        (Some(t), false) => t.clone(),
        _ => {
            let generation = model.greedy_generate(&sample.frames, max_steps)?;
            if require_correct {
                if generation.truncated {
                    return Ok(Err(skip("generation did not reach eos".into())));
                }
                let ok = match &m.dec_tokens {
                    Some(reference) => &generation.tokens == reference,
                    None => model.vocab.compact(&generation.tokens) == reference_text(sample),
                };
                if !ok {
                    let got = model.vocab.spell(&generation.tokens);
                    return Ok(Err(skip(format!("generated '{got}'"))));
                }
            }
            generation.tokens
        }
    };
    if let Some(&[_, end]) = m.dec_spans.last() {
        if end > tokens.len() {
            return Ok(Err(skip("token spans run past the transcription".into())));
        }
    }
    Ok(Ok(Selected {
        index: 0,
        dec_tokens: Some(tokens),
    }))
}

/// Runs [`check_sample`] on every sample, preserving order.
pub fn select_samples(
    model: &Model,
    samples: &[Sample],
    require_correct: bool,
) -> Result<(Vec<Selected>, Vec<Skip>)> {
    let checks = crate::par_map(samples, |s| check_sample(model, s, require_correct));
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (i, c) in checks.into_iter().enumerate() {
        match c? {
            Ok(mut sel) => {
                sel.index = i;
                kept.push(sel);
            }
            Err(s) => skipped.push(s),
        }
    }
    Ok((kept, skipped))
}

/// Builds the analysis of a selected utterance.
pub fn analyze<'m>(
    model: &'m Model,
    sample: &Sample,
    dec_tokens: Option<&[u32]>,
    granularity: Granularity,
) -> Result<Analysis<'m>> {
    let spans: Vec<(usize, usize)> = sample.manifest.dec_spans.iter().map(|s| (s[0], s[1])).collect();
    let text = match dec_tokens {
        Some(tokens) if !spans.is_empty() => Some(DecoderText {
            tokens,
            spans: &spans,
            granularity,
        }),
        _ => None,
    };
    Analysis::new(
        model,
        &sample.frames,
        &sample.manifest.word_texts(),
        &sample.spans,
        text,
    )
}
