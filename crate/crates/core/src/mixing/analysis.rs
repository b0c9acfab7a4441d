use super::scores::{attention_norm_score, attn_score, value_zeroing_score};
use super::{Method, MixingMap, Scope, WordUnit};
use crate::alignment::FrameSpan;
use crate::error::{Error, Result};
use crate::model::{decoder_layer_forward, encoder_layer_forward, AttentionCapture, ForwardCapture, Model};
use crate::tensor::Tensor;

/// Unit of decoder rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// One unit per word, covering all its tokens.
    #[default]
    Word,
    /// One unit per token.
    Token,
}

/// Decoder transcription of an utterance and the token range of every word.
#[derive(Debug, Clone, Copy)]
pub struct DecoderText<'a> {
    /// Token ids without bos or eos.
    pub tokens: &'a [u32],
    /// Half-open token range per word.
    pub spans: &'a [(usize, usize)],
    pub granularity: Granularity,
}

/// Forward captures of one utterance plus the word units every scope reads.
///
/// The decoder pass is teacher-forced on the transcription. Token `k` is
/// generated at decoder position `k` (the position holding token `k − 1`, or bos),
/// so decoder rows use generating positions and decoder columns use the
/// positions that hold a word's tokens. The bos position belongs to no word.
#[derive(Debug, Clone)]
pub struct Analysis<'m> {
    model: &'m Model,
    frame_units: Vec<WordUnit>,
    dec_rows: Vec<WordUnit>,
    dec_cols: Vec<WordUnit>,
    pub encoder: ForwardCapture,
    pub decoder: Option<ForwardCapture>,
    pub decoder_input: Option<Vec<u32>>,
}

impl<'m> Analysis<'m> {
    pub fn new(
        model: &'m Model,
        frames: &Tensor,
        words: &[String],
        spans: &[FrameSpan],
        text: Option<DecoderText<'_>>,
    ) -> Result<Self> {
        if words.len() != spans.len() || words.is_empty() {
            return Err(Error::Input("need one frame span per word".into()));
        }
        let encoder = model.encoder_forward(frames)?;
        for s in spans {
            s.check_within(frames.rows())?;
        }
        let frame_units = words
            .iter()
            .zip(spans)
            .enumerate()
            .map(|(i, (w, s))| WordUnit {
                word_idx: i,
                label: w.clone(),
                span: *s,
            })
            .collect();
        let (mut dec_rows, mut dec_cols, mut decoder, mut decoder_input) = (vec![], vec![], None, None);
        if let (true, Some(text)) = (model.spec.kind.has_decoder(), text) {
            if text.spans.len() != words.len() {
                return Err(Error::Input("need one token span per word".into()));
            }
            let bos = model.spec.bos_id.expect("validated");
            let input: Vec<u32> = std::iter::once(bos).chain(text.tokens.iter().copied()).collect();
            for (i, &(a, b)) in text.spans.iter().enumerate() {
                if a >= b || b > text.tokens.len() {
                    return Err(Error::Range(format!("token span {i} [{a}, {b}) outside transcription")));
                }
                let pieces: Vec<(usize, usize, String)> = match text.granularity {
                    Granularity::Word => vec![(a, b, words[i].clone())],
                    Granularity::Token => (a..b)
                        .map(|k| {
                            let label = model.vocab.token(text.tokens[k]).unwrap_or("?").to_string();
                            (k, k + 1, label)
                        })
                        .collect(),
                };
                for (s, e, label) in pieces {
                    dec_rows.push(WordUnit {
                        word_idx: i,
                        label: label.clone(),
                        span: FrameSpan { start: s, end: e },
                    });
                    dec_cols.push(WordUnit {
                        word_idx: i,
                        label,
                        span: FrameSpan {
                            start: s + 1,
                            end: e + 1,
                        },
                    });
                }
            }
            decoder = Some(model.decoder_forward(&encoder.final_hidden, &input, None)?);
            decoder_input = Some(input);
        }
        Ok(Self {
            model,
            frame_units,
            dec_rows,
            dec_cols,
            encoder,
            decoder,
            decoder_input,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn frame_units(&self) -> &[WordUnit] {
        &self.frame_units
    }

    /// Row and column units of a scope.
    pub fn units(&self, scope: Scope) -> (&[WordUnit], &[WordUnit]) {
        match scope {
            Scope::WithinEncoder => (&self.frame_units, &self.frame_units),
            Scope::WithinDecoder => (&self.dec_rows, &self.dec_cols),
            Scope::Cross => (&self.dec_rows, &self.frame_units),
        }
    }

    /// Errors unless the model and captures support `scope`.
    pub fn check_scope(&self, scope: Scope) -> Result<()> {
        if scope.needs_decoder() {
            if !self.model.spec.kind.has_decoder() {
                return Err(Error::Usage(format!(
                    "scope {scope} needs an encoder-decoder model"
                )));
            }
            if self.decoder.is_none() {
                return Err(Error::Usage(format!(
                    "scope {scope} needs a decoder transcription"
                )));
            }
        }
        Ok(())
    }

    pub fn layer_count(&self, scope: Scope) -> usize {
        self.model.spec.layers_for(scope.needs_decoder())
    }

    fn capture(&self, scope: Scope, layer: usize) -> Result<(&ForwardCapture, &AttentionCapture)> {
        self.check_scope(scope)?;
        let n = self.layer_count(scope);
        if layer == 0 || layer > n {
            return Err(Error::Range(format!("layer {layer} outside 1..={n} for {scope}")));
        }
        let cap = match scope {
            Scope::WithinEncoder => &self.encoder,
            _ => self.decoder.as_ref().expect("checked"),
        };
        let lc = cap.layer(layer).expect("layer in range");
        let att = match scope {
            Scope::Cross => lc.cross_attn.as_ref().expect("decoder capture"),
            _ => &lc.self_attn,
        };
        Ok((cap, att))
    }

    /// Recomputes layer `layer` of `scope` with value vectors zeroed at `mask`.
    pub fn rerun_layer(&self, scope: Scope, layer: usize, mask: &[bool]) -> Result<Tensor> {
        let (cap, _) = self.capture(scope, layer)?;
        let lc = cap.layer(layer).expect("layer in range");
        let heads = self.model.spec.heads;
        let w = &self.model.weights;
        let out = match scope {
            Scope::WithinEncoder => {
                encoder_layer_forward(&lc.input, &w.encoder[layer - 1], heads, layer, Some(mask))?.0
            }
            Scope::WithinDecoder => {
                decoder_layer_forward(
                    &lc.input,
                    &self.encoder.final_hidden,
                    &w.decoder[layer - 1],
                    heads,
                    layer,
                    Some(mask),
                    None,
                )?
                .0
            }
            Scope::Cross => {
                decoder_layer_forward(
                    &lc.input,
                    &self.encoder.final_hidden,
                    &w.decoder[layer - 1],
                    heads,
                    layer,
                    None,
                    Some(mask),
                )?
                .0
            }
        };
        Ok(out)
    }

    pub fn score(&self, layer: usize, method: Method, scope: Scope) -> Result<MixingMap> {
        let (cap, att) = self.capture(scope, layer)?;
        let (rows, cols) = self.units(scope);
        let rs: Vec<FrameSpan> = rows.iter().map(|u| u.span).collect();
        let cs: Vec<FrameSpan> = cols.iter().map(|u| u.span).collect();
        let mut cosine = None;
        let raw = match method {
            Method::Attn => attn_score(att, &rs, &cs)?,
            Method::AttnNorm => {
                let w = &self.model.weights;
                let w_o = match scope {
                    Scope::WithinEncoder => &w.encoder[layer - 1].attn.w_o,
                    Scope::WithinDecoder => &w.decoder[layer - 1].self_attn.w_o,
                    Scope::Cross => &w.decoder[layer - 1].cross_attn.w_o,
                };
                attention_norm_score(att, w_o, &rs, &cs)?
            }
            Method::ValueZeroing => {
                let original = &cap.layer(layer).expect("layer in range").output;
                let key_len = att.weights[0].cols();
                let (s, c) = value_zeroing_score(original, key_len, &rs, &cs, |mask| {
                    self.rerun_layer(scope, layer, mask)
                })?;
                cosine = Some(c);
                s
            }
        };
        Ok(MixingMap::build(
            layer,
            method,
            scope,
            raw,
            rows.to_vec(),
            cols.to_vec(),
            cosine,
        ))
    }
}

/// Every map for the requested methods and scopes, layer-major, then method,
/// then scope. `layers` restricts the layers scored (1-based); `None` means all.
/// A layer beyond a scope's stack depth is skipped for that scope.
pub fn score_all(
    analysis: &Analysis<'_>,
    methods: &[Method],
    scopes: &[Scope],
    layers: Option<&[usize]>,
) -> Result<Vec<MixingMap>> {
    for &s in scopes {
        analysis.check_scope(s)?;
    }
    let max = scopes.iter().map(|&s| analysis.layer_count(s)).max().unwrap_or(0);
    if let Some(ls) = layers {
        if let Some(&bad) = ls.iter().find(|&&l| l == 0 || l > max) {
            return Err(Error::Range(format!("layer {bad} outside 1..={max}")));
        }
    }
    let mut out = Vec::new();
    for layer in 1..=max {
        if layers.is_some_and(|ls| !ls.contains(&layer)) {
            continue;
        }
        for &m in methods {
            for &s in scopes {
                if layer <= analysis.layer_count(s) {
                    out.push(analysis.score(layer, m, s)?);
                }
            }
        }
    }
    Ok(out)
}
