//! Utterance manifests: one JSON record per line.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{FrameClock, FrameSpan, WordTiming};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Singular,
    Plural,
}

impl Label {
    pub fn as_bit(self) -> u8 {
        match self {
            Label::Singular => 0,
            Label::Plural => 1,
        }
    }
}

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    Det_Noun,
    Pronoun_Verb,
    Det_Noun_Verb,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pattern::Det_Noun => "Det_Noun",
            Pattern::Pronoun_Verb => "Pronoun_Verb",
            Pattern::Det_Noun_Verb => "Det_Noun_Verb",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceManifest {
    pub id: String,
    /// Path of the frame tensor, relative to the manifest file.
    pub frames_file: String,
    pub words: Vec<WordTiming>,
    pub cue_idx: usize,
    pub target_idx: usize,
    pub label: Label,
    pub pattern: Pattern,
    /// Per word, the half-open range of its tokens in the reference decoder
    /// transcription (bos excluded).
    #[serde(default)]
    pub dec_spans: Vec<[usize; 2]>,
    /// Audio duration in seconds. Not needed for fixed-duration models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Reference decoder token ids (bos and eos excluded).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dec_tokens: Option<Vec<u32>>,
}

impl UtteranceManifest {
    pub fn word_texts(&self) -> Vec<String> {
        self.words.iter().map(|w| w.text.clone()).collect()
    }

    pub fn frame_spans(&self, clock: &FrameClock) -> Result<Vec<FrameSpan>> {
        self.words.iter().map(|w| clock.word_to_frames(w)).collect()
    }

    pub fn dec_span(&self, word: usize) -> Option<(usize, usize)> {
        self.dec_spans.get(word).map(|s| (s[0], s[1]))
    }
}

pub fn parse_manifests(text: &str, origin: &Path) -> Result<Vec<UtteranceManifest>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: UtteranceManifest = serde_json::from_str(line)
            .map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1)))?;
        out.push(m);
    }
    Ok(out)
}

pub fn load_manifests(path: &Path) -> Result<Vec<UtteranceManifest>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifests(&text, path)
}

pub fn write_manifests(path: &Path, manifests: &[UtteranceManifest]) -> Result<()> {
    let mut buf = Vec::new();
    for m in manifests {
        serde_json::to_writer(&mut buf, m).map_err(|e| Error::format(path, e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Non-fatal findings from [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub id: String,
    pub message: String,
}

fn invalid(m: &UtteranceManifest, msg: impl fmt::Display) -> Error {
    Error::Validation(format!("{}: {msg}", m.id))
}

/// Checks a manifest against a model and the length of its frame tensor.
/// Hard violations are errors; softer findings come back as diagnostics.
pub fn validate_manifest(
    m: &UtteranceManifest,
    spec: &ModelSpec,
    frame_count: usize,
) -> Result<Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let n = m.words.len();
    if n == 0 {
        return Err(invalid(m, "no words"));
    }
    if m.cue_idx >= n || m.target_idx >= n {
        return Err(invalid(m, "cue or target index outside the word list"));
    }
    if m.cue_idx == m.target_idx {
        return Err(invalid(m, "cue and target are the same word"));
    }
    for w in &m.words {
        if !(w.t_s.is_finite() && w.t_e.is_finite()) || w.t_s < 0.0 || w.t_s > w.t_e {
            return Err(invalid(m, format!("bad timing for '{}'", w.text)));
        }
    }
    if frame_count == 0 {
        return Err(invalid(m, "empty frame tensor"));
    }
    if frame_count > spec.max_frames {
        return Err(invalid(
            m,
            format!("{frame_count} frames exceed the model maximum {}", spec.max_frames),
        ));
    }
    let clock = match spec.fixed_duration {
        Some(fd) => {
            if frame_count != fd.frames {
                return Err(invalid(
                    m,
                    format!("fixed-duration model expects {} frames, got {frame_count}", fd.frames),
                ));
            }
            FrameClock::for_utterance(spec, None, frame_count)?
        }
        None => match m.duration {
            Some(d) if d > 0.0 && d.is_finite() => FrameClock::new(d, frame_count),
            Some(d) => return Err(invalid(m, format!("bad duration {d}"))),
            None => return Err(invalid(m, "missing duration")),
        },
    };
    if let Some(w) = m.words.iter().find(|w| w.t_e > clock.seconds) {
        return Err(invalid(
            m,
            format!("'{}' ends at {} s, beyond the audio length {} s", w.text, w.t_e, clock.seconds),
        ));
    }
    let spans = m.frame_spans(&clock).map_err(|e| invalid(m, e))?;
    if spans[m.cue_idx].overlaps(&spans[m.target_idx]) {
        return Err(invalid(m, "cue and target frame spans overlap"));
    }
    for i in 1..n {
        if m.words[i].t_s < m.words[i - 1].t_e {
            diags.push(Diagnostic {
                id: m.id.clone(),
                message: format!("words {} and {} overlap in time", i - 1, i),
            });
        }
    }

    if spec.kind.has_decoder() {
        if m.dec_spans.is_empty() {
            diags.push(Diagnostic {
                id: m.id.clone(),
                message: "no dec_spans; decoder scopes and decoder ablations are unavailable".into(),
            });
        }
    } else if !m.dec_spans.is_empty() {
        diags.push(Diagnostic {
            id: m.id.clone(),
            message: "dec_spans ignored for an encoder-only model".into(),
        });
    }
    if !m.dec_spans.is_empty() {
        if m.dec_spans.len() != n {
            return Err(invalid(m, "dec_spans must have one entry per word"));
        }
        let mut prev_end = 0;
        for (i, s) in m.dec_spans.iter().enumerate() {
            if s[0] >= s[1] || s[0] < prev_end {
                return Err(invalid(m, format!("dec_spans[{i}] is empty or out of order")));
            }
            prev_end = s[1];
        }
        if let Some(tokens) = &m.dec_tokens {
            if prev_end > tokens.len() {
                return Err(invalid(m, "dec_spans run past dec_tokens"));
            }
            if tokens.iter().any(|&t| t as usize >= spec.vocab_size) {
                return Err(invalid(m, "dec_tokens outside the vocabulary"));
            }
        }
        if spec.kind.has_decoder() && prev_end + 2 > spec.max_positions {
            return Err(invalid(m, "transcription longer than the decoder position table"));
        }
    }
    Ok(diags)
}

/// A manifest with its frames loaded and word spans resolved.
#[derive(Debug, Clone)]
pub struct Sample {
    pub manifest: UtteranceManifest,
    pub frames: Tensor,
    pub spans: Vec<FrameSpan>,
}

impl Sample {
    pub fn new(manifest: UtteranceManifest, frames: Tensor, spec: &ModelSpec) -> Result<Self> {
        validate_manifest(&manifest, spec, frames.rows())?;
        let clock = FrameClock::for_utterance(spec, manifest.duration, frames.rows())?;
        let spans = manifest.frame_spans(&clock)?;
        Ok(Self {
            manifest,
            frames,
            spans,
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.id
    }
}

pub fn frames_path(manifest_path: &Path, m: &UtteranceManifest) -> PathBuf {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    base.join(&m.frames_file)
}

/// Loads a manifest file and every frame tensor it references, validating
/// each record against `spec`. Returns samples plus collected diagnostics.
pub fn load_dataset(path: &Path, spec: &ModelSpec) -> Result<(Vec<Sample>, Vec<Diagnostic>)> {
    let manifests = load_manifests(path)?;
    if manifests.is_empty() {
        return Err(Error::Validation(format!("{}: empty dataset", path.display())));
    }
    let mut samples = Vec::with_capacity(manifests.len());
    let mut diags = Vec::new();
    for m in manifests {
        let frames = Tensor::load(&frames_path(path, &m))?;
        diags.extend(validate_manifest(&m, spec, frames.rows())?);
        samples.push(Sample::new(m, frames, spec)?);
    }
    Ok((samples, diags))
}
