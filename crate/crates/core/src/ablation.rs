//! Input ablation: how far the model's probability for the target drops when
//! the cue (or another word) is removed from the input.
//!
//! Silence is applied to frame features, not raw audio: the frames of the
//! silenced word are replaced by zero vectors.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::alignment::FrameSpan;
use crate::error::{Error, Result};
use crate::manifest::Sample;
use crate::model::{argmax, Model};
use crate::selection::{check_sample, Skip};
use crate::tensor::{softmax_slice, Tensor};

pub const SILENCE_NOTE: &str = "silence = zero frame features (applied after the acoustic front-end)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Condition {
    /// Silence the cue frames.
    #[serde(rename = "SC")]
    SilenceCue,
    /// Replace the cue tokens in the decoder prefix with unk.
    #[serde(rename = "BC")]
    BlankCue,
    #[serde(rename = "SBC")]
    SilenceAndBlankCue,
    /// Silence the target frames.
    #[serde(rename = "ST")]
    SilenceTarget,
    /// Silence the first word that is neither cue nor target.
    #[serde(rename = "SD")]
    SilenceDistractor,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::SilenceCue,
        Condition::BlankCue,
        Condition::SilenceAndBlankCue,
        Condition::SilenceTarget,
        Condition::SilenceDistractor,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Condition::SilenceCue => "SC",
            Condition::BlankCue => "BC",
            Condition::SilenceAndBlankCue => "SBC",
            Condition::SilenceTarget => "ST",
            Condition::SilenceDistractor => "SD",
        }
    }

    pub fn needs_decoder(self) -> bool {
        matches!(self, Condition::BlankCue | Condition::SilenceAndBlankCue)
    }

    /// Conditions that apply to a model kind, in canonical order.
    pub fn defaults(has_decoder: bool) -> Vec<Condition> {
        Self::ALL
            .into_iter()
            .filter(|c| has_decoder || !c.needs_decoder())
            .collect()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SC" => Ok(Condition::SilenceCue),
            "BC" => Ok(Condition::BlankCue),
            "SBC" => Ok(Condition::SilenceAndBlankCue),
            "ST" => Ok(Condition::SilenceTarget),
            "SD" => Ok(Condition::SilenceDistractor),
            other => Err(Error::Usage(format!("unknown ablation condition '{other}'"))),
        }
    }
}

/// Replaces the rows of `span` with zeros. Rows past the end are ignored.
pub fn silence_frames(frames: &Tensor, span: FrameSpan) -> Tensor {
    let mut out = frames.clone();
    for r in span.start..span.end.min(frames.rows()) {
        out.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Sets `positions` of a transcription prefix to `unk`. Every position must
/// come before `target_step`.
pub fn blank_token(tokens: &[u32], positions: &[usize], target_step: usize, unk: u32) -> Result<Vec<u32>> {
    let mut out = tokens.to_vec();
    for &p in positions {
        if p >= target_step || p >= tokens.len() {
            return Err(Error::Usage(format!(
                "position {p} is not in the prefix before step {target_step}"
            )));
        }
        out[p] = unk;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceDrop {
    pub id: String,
    pub condition: Condition,
    pub baseline: f64,
    pub ablated: f64,
    pub drop: f64,
}

fn distractor(sample: &Sample) -> Option<usize> {
    let m = &sample.manifest;
    (0..m.words.len()).find(|&i| i != m.cue_idx && i != m.target_idx)
}

/// Probability drops of one utterance under each condition, or why it was skipped.
pub fn confidence_drops(
    model: &Model,
    sample: &Sample,
    conditions: &[Condition],
) -> Result<Result<Vec<ConfidenceDrop>, Skip>> {
    let has_decoder = model.spec.kind.has_decoder();
    if let Some(c) = conditions.iter().find(|c| c.needs_decoder() && !has_decoder) {
        return Err(Error::Usage(format!("condition {c} needs an encoder-decoder model")));
    }
    let sel = match check_sample(model, sample, true)? {
        Ok(s) => s,
        Err(skip) => return Ok(Err(skip)),
    };
    let m = &sample.manifest;
    let skip = |reason: &str| Skip {
        id: m.id.clone(),
        reason: reason.to_string(),
    };
    let cue_span = sample.spans[m.cue_idx];
    let target_span = sample.spans[m.target_idx];
    let distractor_span = distractor(sample).map(|i| sample.spans[i]);

    let frames_for = |c: Condition| -> Option<Tensor> {
        match c {
            Condition::SilenceCue | Condition::SilenceAndBlankCue => Some(silence_frames(&sample.frames, cue_span)),
            Condition::SilenceTarget => Some(silence_frames(&sample.frames, target_span)),
            Condition::SilenceDistractor => distractor_span.map(|s| silence_frames(&sample.frames, s)),
            Condition::BlankCue => Some(sample.frames.clone()),
        }
    };
    if conditions.contains(&Condition::SilenceDistractor) && distractor_span.is_none() {
        return Ok(Err(skip("no distractor word")));
    }

    let mut out = Vec::with_capacity(conditions.len());
    if !has_decoder {
        let blank = model.spec.blank_id.expect("validated") as usize;
        let base = model.encoder_forward(&sample.frames)?;
        let logits = base.logits.as_ref().expect("ctc logits");
        let path: Vec<(usize, usize)> = target_span
            .indices()
            .map(|t| (t, argmax(logits.row(t))))
            .filter(|&(_, id)| id != blank)
            .collect();
        if path.is_empty() {
            return Ok(Err(skip("target frames emit only blanks")));
        }
        // mean over target frames on the non-blank baseline path
        let prob = |logits: &Tensor| -> f64 {
            let s: f64 = path
                .iter()
                .map(|&(t, id)| softmax_slice(logits.row(t))[id] as f64)
                .sum();
            s / path.len() as f64
        };
        let baseline = prob(logits);
        for &c in conditions {
            let frames = frames_for(c).expect("checked");
            let ab = model.encoder_forward(&frames)?;
            let ablated = prob(ab.logits.as_ref().expect("ctc logits"));
            out.push(ConfidenceDrop {
                id: m.id.clone(),
                condition: c,
                baseline,
                ablated,
                drop: baseline - ablated,
            });
        }
        return Ok(Ok(out));
    }

    let tokens = sel.dec_tokens.expect("decoder selection");
    let (Some((t_start, _)), Some((c_start, c_end))) = (m.dec_span(m.target_idx), m.dec_span(m.cue_idx)) else {
        return Ok(Err(skip("no token spans")));
    };
    if c_start >= t_start && conditions.iter().any(|c| c.needs_decoder()) {
        return Ok(Err(skip("cue tokens do not precede the target")));
    }
    let bos = model.spec.bos_id.expect("validated");
    let unk = model.spec.unk_id.expect("validated");
    let target_token = tokens[t_start] as usize;
    // teacher-forced prefix: bos followed by the transcription up to the target
    let run = |frames: &Tensor, prefix: &[u32]| -> Result<f64> {
        let enc = model.encoder_forward(frames)?;
        let input: Vec<u32> = std::iter::once(bos).chain(prefix.iter().copied()).collect();
        let dec = model.decoder_forward(&enc.final_hidden, &input, None)?;
        let logits = dec.logits.as_ref().expect("decoder logits");
        Ok(softmax_slice(logits.row(t_start))[target_token] as f64)
    };
    let prefix = &tokens[..t_start];
    let baseline = run(&sample.frames, prefix)?;
    let cue_positions: Vec<usize> = (c_start..c_end).collect();
    for &c in conditions {
        let frames = frames_for(c).expect("checked");
        let p = match c {
            Condition::BlankCue | Condition::SilenceAndBlankCue => {
                blank_token(prefix, &cue_positions, t_start, unk)?
            }
            _ => prefix.to_vec(),
        };
        let ablated = run(&frames, &p)?;
        out.push(ConfidenceDrop {
            id: m.id.clone(),
            condition: c,
            baseline,
            ablated,
            drop: baseline - ablated,
        });
    }
    Ok(Ok(out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub mean_baseline: f64,
    pub mean_ablated: f64,
    pub mean_drop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub drops: Vec<ConfidenceDrop>,
    pub summary: Vec<ConditionSummary>,
    pub skipped: Vec<Skip>,
    pub note: &'static str,
}

impl AblationReport {
    pub fn mean_drop(&self, c: Condition) -> Option<f64> {
        self.summary.iter().find(|s| s.condition == c).map(|s| s.mean_drop)
    }
}

/// Runs every condition on every sample; skipped samples are reported, not fatal.
pub fn ablate_dataset(model: &Model, samples: &[Sample], conditions: &[Condition]) -> Result<AblationReport> {
    if conditions.is_empty() {
        return Err(Error::Usage("no ablation conditions".into()));
    }
    let results = crate::par_map(samples, |s| confidence_drops(model, s, conditions));
    let mut drops = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(d) => drops.extend(d),
            Err(s) => skipped.push(s),
        }
    }
    let summary = conditions
        .iter()
        .map(|&c| {
            let rows: Vec<&ConfidenceDrop> = drops.iter().filter(|d| d.condition == c).collect();
            let n = rows.len().max(1) as f64;
            ConditionSummary {
                condition: c,
                mean_baseline: rows.iter().map(|d| d.baseline).sum::<f64>() / n,
                mean_ablated: rows.iter().map(|d| d.ablated).sum::<f64>() / n,
                mean_drop: rows.iter().map(|d| d.drop).sum::<f64>() / n,
                count: rows.len(),
            }
        })
        .collect();
    Ok(AblationReport {
        drops,
        summary,
        skipped,
        note: SILENCE_NOTE,
    })
}
