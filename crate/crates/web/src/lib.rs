//! Browser demo: score maps and cue profiles of the synthetic toy models,
//! plus the word-to-frame mapping.

use ctxmix::alignment::{word_to_frames, WordTiming};
use ctxmix::cue::{profile_dataset, random_tag, trained_tag, ProfileConfig};
use ctxmix::manifest::Sample;
use ctxmix::mixing::{Granularity, Method, Scope};
use ctxmix::render::{heatmap_svg, line_plot_svg, Series};
use ctxmix::selection::{analyze, select_samples};
use ctxmix::synth::{build_task, SynthTaskSpec};
use ctxmix::{Error, Model, ModelKind, Result};
use wasm_bindgen::prelude::*;

/// Utterances generated for the demo; small enough to profile interactively.
const DEMO_UTTERANCES: usize = 24;

fn kind_of(name: &str) -> Result<ModelKind> {
    match name {
        "encoder-ctc" => Ok(ModelKind::EncoderCtc),
        "encoder-decoder" => Ok(ModelKind::EncoderDecoder),
        other => Err(Error::Usage(format!("unknown model kind '{other}'"))),
    }
}

fn toy(kind: &str, seed: u64) -> Result<(Model, Vec<Sample>)> {
    let spec = SynthTaskSpec {
        seed,
        utterances: DEMO_UTTERANCES,
        ..Default::default()
    };
    let (model, data) = build_task(&spec, kind_of(kind)?)?;
    let samples = data
        .into_iter()
        .map(|u| Sample::new(u.manifest, u.frames, &model.spec))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, samples))
}

/// Heatmap of one utterance's map at `layer`.
pub fn mixing_map(kind: &str, method: &str, scope: &str, layer: usize, seed: u64, utterance: usize) -> Result<String> {
    let (method, scope): (Method, Scope) = (method.parse()?, scope.parse()?);
    let (model, samples) = toy(kind, seed)?;
    let (selected, _) = select_samples(&model, &samples, true)?;
    let sel = selected
        .get(utterance % selected.len().max(1))
        .ok_or_else(|| Error::Data("no correctly transcribed utterance".into()))?;
    let sample = &samples[sel.index];
    let a = analyze(&model, sample, sel.dec_tokens.as_deref(), Granularity::Word)?;
    a.check_scope(scope)?;
    let max = a.layer_count(scope);
    if layer == 0 || layer > max {
        return Err(Error::Range(format!("layer {layer} outside 1..={max}")));
    }
    let map = a.score(layer, method, scope)?;
    let rows: Vec<String> = map.rows.iter().map(|u| u.label.clone()).collect();
    let cols: Vec<String> = map.cols.iter().map(|u| u.label.clone()).collect();
    let values: Vec<Vec<f64>> = (0..map.scores.rows())
        .map(|r| map.scores.row(r).iter().map(|&v| v as f64).collect())
        .collect();
    let m = &sample.manifest;
    let title = format!(
        "{} {method} {scope} layer {layer} (cue '{}', target '{}')",
        m.id, m.words[m.cue_idx].text, m.words[m.target_idx].text
    );
    heatmap_svg(&title, &rows, &cols, &values)
}

/// Trained cue-contribution profile against one random-init baseline.
pub fn cue_profile(kind: &str, method: &str, scope: &str, seed: u64) -> Result<String> {
    let (method, scope): (Method, Scope) = (method.parse()?, scope.parse()?);
    let (model, samples) = toy(kind, seed)?;
    let (selected, _) = select_samples(&model, &samples, true)?;
    let cfg = ProfileConfig::new(vec![method], vec![scope]);
    let trained = profile_dataset(&model, &samples, &selected, &cfg, &trained_tag())?;
    let random = profile_dataset(&model.random_like(seed), &samples, &selected, &cfg, &random_tag(seed))?;
    let series: Vec<Series> = [trained, random]
        .into_iter()
        .map(|p| Series {
            label: p.tag.clone(),
            points: p.rows.iter().map(|r| (r.layer, r.mean)).collect(),
        })
        .collect();
    line_plot_svg(&format!("cue contribution, {method} {scope}"), &series)
}

/// Frame span `[start, end)` of a word, as JSON.
pub fn frame_span(t_s: f64, t_e: f64, duration: f64, frames: usize) -> Result<String> {
    let w = WordTiming {
        text: String::new(),
        t_s,
        t_e,
    };
    let span = word_to_frames(&w, duration, frames)?;
    Ok(format!("{{\"start\":{},\"end\":{}}}", span.start, span.end))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = mixingMapSvg)]
pub fn mixing_map_svg(
    kind: &str,
    method: &str,
    scope: &str,
    layer: usize,
    seed: u64,
    utterance: usize,
) -> std::result::Result<String, JsError> {
    mixing_map(kind, method, scope, layer, seed, utterance).map_err(js)
}

#[wasm_bindgen(js_name = cueProfileSvg)]
pub fn cue_profile_svg(kind: &str, method: &str, scope: &str, seed: u64) -> std::result::Result<String, JsError> {
    cue_profile(kind, method, scope, seed).map_err(js)
}

#[wasm_bindgen(js_name = frameSpan)]
pub fn frame_span_js(t_s: f64, t_e: f64, duration: f64, frames: usize) -> std::result::Result<String, JsError> {
    frame_span(t_s, t_e, duration, frames).map_err(js)
}
