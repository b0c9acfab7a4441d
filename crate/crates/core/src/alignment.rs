//! Word timings to encoder frame spans.
//!
//! Frame indices are 0-based and spans are half-open `[start, end)`. A boundary
//! time `t` maps to `ceil(t / duration * frames)`; products that land within
//! 1e-9 of an integer are snapped to it first, so `15 s` of `30 s` over 1500
//! frames is exactly frame 750 rather than 751 after rounding noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTiming {
    pub text: String,
    pub t_s: f64,
    pub t_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start: usize,
    pub end: usize,
}

impl FrameSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::Range(format!("empty span [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }

    pub fn overlaps(&self, other: &FrameSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Errors unless the span lies inside `[0, len)`.
    pub fn check_within(&self, len: usize) -> Result<()> {
        if self.is_empty() || self.end > len {
            return Err(Error::Range(format!(
                "span [{}, {}) outside sequence of {len}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Boundary frame of time `t` for a clip of `duration` seconds and `frames` frames.
pub fn time_to_frame(t: f64, duration: f64, frames: usize) -> Result<usize> {
    if frames == 0 {
        return Err(Error::Input("utterance has no frames".into()));
    }
    if !duration.is_finite() || duration <= 0.0 {
        return Err(Error::Input(format!("invalid duration {duration}")));
    }
    if !t.is_finite() || t < 0.0 || t > duration {
        return Err(Error::Range(format!("time {t} outside [0, {duration}]")));
    }
    let x = t * frames as f64 / duration;
    let r = x.round();
    let f = if (x - r).abs() <= SNAP { r } else { x.ceil() };
    Ok((f.max(0.0) as usize).min(frames))
}

/// Frame span of one word; a zero-width result is widened to one frame.
pub fn word_to_frames(w: &WordTiming, duration: f64, frames: usize) -> Result<FrameSpan> {
    if w.t_s > w.t_e {
        return Err(Error::Input(format!(
            "word '{}' ends before it starts ({} > {})",
            w.text, w.t_s, w.t_e
        )));
    }
    let fs = time_to_frame(w.t_s, duration, frames)?;
    let fe = time_to_frame(w.t_e, duration, frames)?;
    if fs < fe {
        return Ok(FrameSpan { start: fs, end: fe });
    }
    let start = fs.min(frames - 1);
    Ok(FrameSpan {
        start,
        end: start + 1,
    })
}

/// Duration/frame-count pair used to map one utterance's timings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameClock {
    pub seconds: f64,
    pub frames: usize,
    /// Set for models that pad every input to a constant length.
    pub fixed: bool,
}

impl FrameClock {
    pub fn new(seconds: f64, frames: usize) -> Self {
        Self {
            seconds,
            frames,
            fixed: false,
        }
    }

    /// The model's fixed clock if it has one, otherwise the utterance's own
    /// duration over its frame count.
    pub fn for_utterance(spec: &ModelSpec, duration: Option<f64>, frames: usize) -> Result<Self> {
        if let Some(fd) = spec.fixed_duration {
            return Ok(Self {
                seconds: fd.seconds,
                frames: fd.frames,
                fixed: true,
            });
        }
        match duration {
            Some(d) => Ok(Self::new(d, frames)),
            None => Err(Error::Input(
                "utterance duration is required for models without a fixed duration".into(),
            )),
        }
    }

    pub fn time_to_frame(&self, t: f64) -> Result<usize> {
        if self.fixed && t > self.seconds {
            return Err(Error::Input(format!(
                "time {t} exceeds the fixed duration of {} s",
                self.seconds
            )));
        }
        time_to_frame(t, self.seconds, self.frames)
    }

    pub fn word_to_frames(&self, w: &WordTiming) -> Result<FrameSpan> {
        if self.fixed && w.t_e > self.seconds {
            return Err(Error::Input(format!(
                "word '{}' ends after the fixed duration of {} s",
                w.text, self.seconds
            )));
        }
        word_to_frames(w, self.seconds, self.frames)
    }
}
