//! Acceptance suite: one PASS/FAIL line per criterion. Runs with its own
//! `main` so the lines are always printed; exits non-zero if any criterion fails.

mod support;

use std::path::Path;
use std::time::Instant;

use ctxmix::ablation::{ablate_dataset, Condition};
use ctxmix::alignment::{time_to_frame, FrameClock, FrameSpan, WordTiming};
use ctxmix::commands::{self, AblateArgs, CueArgs, ProbeArgs, RenderArgs, ScoreSelection, ScoresArgs, SynthArgs};
use ctxmix::cue::{profile_dataset, random_tag, trained_tag, ProfileConfig};
use ctxmix::manifest::Sample;
use ctxmix::mixing::{score_all, Analysis, Granularity, Method, Scope};
use ctxmix::model::{Intervention, Sublayer};
use ctxmix::probing::{build_probe_dataset, kfold_probe, Stack, DEFAULT_FOLDS, DEFAULT_LAMBDA, DEFAULT_SEED};
use ctxmix::report::parse_map_records;
use ctxmix::selection::{analyze, select_samples, Selected};
use ctxmix::synth::{build_task, SynthTaskSpec};
use ctxmix::tensor::cosine_similarity;
use ctxmix::{Model, ModelKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FORWARD_REL_TOL: f64 = 1e-5;
const ALPHA_SUM_TOL: f64 = 1e-5;
const VZ_ZERO_TOL: f64 = 1e-6;
const ROW_SUM_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

struct Task {
    model: Model,
    samples: Vec<Sample>,
    selected: Vec<Selected>,
}

fn task(kind: ModelKind) -> Result<Task, String> {
    let spec = SynthTaskSpec::default();
    let (model, data) = e(build_task(&spec, kind))?;
    let samples: Vec<Sample> = data
        .into_iter()
        .map(|u| Sample::new(u.manifest, u.frames, &model.spec))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (selected, skipped) = e(select_samples(&model, &samples, true))?;
    ensure(skipped.is_empty(), || format!("{} utterances mis-transcribed", skipped.len()))?;
    Ok(Task {
        model,
        samples,
        selected,
    })
}

fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Tensor {
    support::random_tensor(rng, vec![t, d], 2.0)
}

fn forward_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let model = support::random_model(1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.gen_range(1..=32);
        let frames = random_frames(&mut rng, t, model.spec.d_model);
        let cap = e(model.encoder_forward(&frames))?;
        let r = support::encoder(&model, &frames);
        for (l, want) in r.layers.iter().enumerate() {
            worst = worst.max(support::max_rel_err(&cap.layers[l].output, want));
        }
        if let Some(logits) = &r.logits {
            worst = worst.max(support::max_rel_err(cap.logits.as_ref().unwrap(), logits));
        }
        if model.spec.kind == ModelKind::EncoderDecoder {
            let s = rng.gen_range(2..=model.spec.max_positions);
            let tokens: Vec<u32> = (0..s).map(|_| rng.gen_range(0..model.spec.vocab_size as u32)).collect();
            let dec = e(model.decoder_forward(&cap.final_hidden, &tokens, None))?;
            let rd = support::decoder(&model, &support::to_mat(&cap.final_hidden), &tokens);
            for (l, want) in rd.layers.iter().enumerate() {
                worst = worst.max(support::max_rel_err(&dec.layers[l].output, want));
            }
            worst = worst.max(support::max_rel_err(dec.logits.as_ref().unwrap(), rd.logits.as_ref().unwrap()));
            // changing the last token leaves every earlier position bit-identical
            let mut other = tokens.clone();
            *other.last_mut().unwrap() = (other[s - 1] + 1) % model.spec.vocab_size as u32;
            let dec2 = e(model.decoder_forward(&cap.final_hidden, &other, None))?;
            for (a, b) in dec.layers.iter().zip(&dec2.layers) {
                ensure(a.output.row_slice(0, s - 1) == b.output.row_slice(0, s - 1), || {
                    format!("model {seed}: decoder output depends on a later token")
                })?;
            }
        }
    }
    ensure(worst <= FORWARD_REL_TOL, || format!("max relative error {worst:e}"))?;
    Ok(format!("50 models, max relative error {worst:.2e}, causality exact"))
}

fn alpha_conservation(enc: &Task, dec: &Task) -> Outcome {
    let mut rows = 0usize;
    let mut worst = 0.0f64;
    let mut check = |a: &Tensor| {
        for r in 0..a.rows() {
            let s: f64 = a.row(r).iter().map(|&v| v as f64).sum();
            worst = worst.max((s - 1.0).abs());
            rows += 1;
        }
    };
    for t in [enc, dec] {
        for sel in &t.selected {
            let a = e(analyze(&t.model, &t.samples[sel.index], sel.dec_tokens.as_deref(), Granularity::Word))?;
            for caps in std::iter::once(&a.encoder).chain(a.decoder.as_ref()) {
                for l in &caps.layers {
                    l.self_attn.weights.iter().for_each(&mut check);
                    if let Some(c) = &l.cross_attn {
                        c.weights.iter().for_each(&mut check);
                    }
                }
            }
        }
    }
    ensure(worst <= ALPHA_SUM_TOL, || format!("max |row sum - 1| = {worst:e}"))?;
    Ok(format!("{rows} attention rows, max deviation {worst:.2e}"))
}

/// Random encoder whose first layer gives the frames of `masked` zero attention
/// from every query: their keys carry a logit offset far below the f32 exp range.
fn masked_encoder(seed: u64) -> Model {
    let mut model = support::random_model(seed);
    model.spec.kind = ModelKind::EncoderCtc;
    model.spec.dec_layers = 0;
    let d = model.spec.d_model;
    let dh = d / model.spec.heads;
    let a = &mut model.weights.encoder[0].attn;
    a.norm.gain = Tensor::filled(vec![d], 1.0);
    a.norm.bias = Tensor::zeros(vec![d]);
    a.w_q = Tensor::zeros(vec![d, d]);
    a.b_q = Tensor::vector((0..d).map(|c| if c % dh == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    a.w_k = Tensor::zeros(vec![d, d]);
    a.b_k = Tensor::zeros(vec![d]);
    for h in 0..model.spec.heads {
        a.w_k.set(0, h * dh, -100.0);
        a.w_k.set(1, h * dh, 100.0);
    }
    model
}

fn vz_zero_path() -> Outcome {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for case in 0..10u64 {
        let model = masked_encoder(2000 + case);
        let d = model.spec.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let words = 4;
        let per = rng.gen_range(1..=4);
        let masked = rng.gen_range(0..words);
        // channels 0 and 1 agree except on the masked word, where they differ
        let mut frames = random_frames(&mut rng, words * per, d);
        for f in 0..words * per {
            let row = frames.row(f).to_vec();
            frames.set(f, 1, row[0]);
            if f / per == masked {
                frames.set(f, 0, row[0] + 3.0);
                frames.set(f, 1, row[0] - 3.0);
            }
        }
        let spans: Vec<FrameSpan> = (0..words).map(|w| FrameSpan { start: w * per, end: (w + 1) * per }).collect();
        let names: Vec<String> = (0..words).map(|w| format!("w{w}")).collect();
        let a = e(Analysis::new(&model, &frames, &names, &spans, None))?;
        let map = e(a.score(1, Method::ValueZeroing, Scope::WithinEncoder))?;
        let att = &a.encoder.layers[0].self_attn;
        for (i, ri) in spans.iter().enumerate() {
            for (j, cj) in spans.iter().enumerate() {
                let total: f64 = att
                    .weights
                    .iter()
                    .flat_map(|w| ri.indices().flat_map(move |n| cj.indices().map(move |m| w.get(n, m) as f64)))
                    .sum();
                if total == 0.0 {
                    let v = map.raw.get(i, j) as f64;
                    worst = worst.max(v.abs());
                    checked += 1;
                }
            }
        }
    }
    // decoder: causal masking zeroes every (earlier row, later column) pair
    for case in 0..10u64 {
        let mut seed = 3000 + case;
        let model = loop {
            let m = support::random_model(seed);
            if m.spec.kind == ModelKind::EncoderDecoder {
                break m;
            }
            seed += 100;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let frames = random_frames(&mut rng, 8, model.spec.d_model);
        let spans: Vec<FrameSpan> = (0..4).map(|w| FrameSpan { start: 2 * w, end: 2 * w + 2 }).collect();
        let names: Vec<String> = (0..4).map(|w| format!("w{w}")).collect();
        let tokens: Vec<u32> = (0..4).map(|_| rng.gen_range(3..model.spec.vocab_size as u32)).collect();
        let dspans: Vec<(usize, usize)> = (0..4).map(|w| (w, w + 1)).collect();
        let text = ctxmix::mixing::DecoderText {
            tokens: &tokens,
            spans: &dspans,
            granularity: Granularity::Word,
        };
        let a = e(Analysis::new(&model, &frames, &names, &spans, Some(text)))?;
        for layer in 1..=model.spec.dec_layers {
            let map = e(a.score(layer, Method::ValueZeroing, Scope::WithinDecoder))?;
            let att = &a.decoder.as_ref().unwrap().layers[layer - 1].self_attn;
            for (i, ri) in map.rows.iter().enumerate() {
                for (j, cj) in map.cols.iter().enumerate() {
                    let total: f64 = att
                        .weights
                        .iter()
                        .flat_map(|w| {
                            ri.span.indices().flat_map(move |n| cj.span.indices().map(move |m| w.get(n, m) as f64))
                        })
                        .sum();
                    if total == 0.0 {
                        worst = worst.max((map.raw.get(i, j) as f64).abs());
                        checked += 1;
                    }
                }
            }
        }
    }
    ensure(checked >= 20, || format!("only {checked} zero-attention pairs constructed"))?;
    ensure(worst <= VZ_ZERO_TOL, || format!("VZ {worst:e} on a zero-attention pair"))?;
    Ok(format!("{checked} zero-attention pairs, max |VZ| {worst:.2e}"))
}

fn vz_definition() -> Outcome {
    let mut compared = 0usize;
    for case in 0..20u64 {
        let model = support::random_model(4000 + case);
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let words = rng.gen_range(2..=5);
        let per = rng.gen_range(1..=3);
        let t = words * per;
        let frames = random_frames(&mut rng, t, model.spec.d_model);
        let spans: Vec<FrameSpan> = (0..words).map(|w| FrameSpan { start: w * per, end: (w + 1) * per }).collect();
        let names: Vec<String> = (0..words).map(|w| format!("w{w}")).collect();
        let tokens: Vec<u32> = (0..words).map(|_| rng.gen_range(3..model.spec.vocab_size as u32)).collect();
        let dspans: Vec<(usize, usize)> = (0..words).map(|w| (w, w + 1)).collect();
        let has_dec = model.spec.kind == ModelKind::EncoderDecoder && words < model.spec.max_positions;
        let text = has_dec.then_some(ctxmix::mixing::DecoderText {
            tokens: &tokens,
            spans: &dspans,
            granularity: Granularity::Word,
        });
        let a = e(Analysis::new(&model, &frames, &names, &spans, text))?;
        let layer = rng.gen_range(1..=model.spec.enc_layers);
        let mut scopes = vec![(Scope::WithinEncoder, layer)];
        if has_dec {
            let dl = rng.gen_range(1..=model.spec.dec_layers);
            scopes.push((Scope::WithinDecoder, dl));
            scopes.push((Scope::Cross, dl));
        }
        for (scope, layer) in scopes {
            let map = e(a.score(layer, Method::ValueZeroing, scope))?;
            let original = match scope {
                Scope::WithinEncoder => &a.encoder.layers[layer - 1].output,
                _ => &a.decoder.as_ref().unwrap().layers[layer - 1].output,
            };
            for (j, col) in map.cols.iter().enumerate() {
                let positions: Vec<usize> = col.span.indices().collect();
                let sublayer = match scope {
                    Scope::Cross => Sublayer::CrossAttention,
                    _ => Sublayer::SelfAttention,
                };
                let iv = Intervention {
                    layer,
                    sublayer,
                    positions,
                };
                // independent full forward pass with the values zeroed
                let zeroed = match scope {
                    Scope::WithinEncoder => e(model.encoder_forward_with(&frames, Some(&iv)))?,
                    _ => e(model.decoder_forward(&a.encoder.final_hidden, a.decoder_input.as_ref().unwrap(), Some(&iv)))?,
                };
                let zeroed = &zeroed.layers[layer - 1].output;
                for (i, row) in map.rows.iter().enumerate() {
                    let mut cos = 0.0f64;
                    for n in row.span.indices() {
                        cos += e(cosine_similarity(original.row(n), zeroed.row(n)))?.value;
                    }
                    let want = (1.0 - cos / row.span.len() as f64) as f32;
                    let got = map.raw.get(i, j);
                    ensure(got == want, || {
                        format!("case {case} {scope} layer {layer} ({i},{j}): {got} vs {want}")
                    })?;
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("20 models, {compared} entries identical to full re-forward"))
}

fn cue_detection(enc: &Task) -> Outcome {
    let spec = SynthTaskSpec::default();
    let l_star = spec.copy_layer;
    let methods = vec![Method::Attn, Method::AttnNorm, Method::ValueZeroing];
    let cfg = ProfileConfig::new(methods, vec![Scope::WithinEncoder]);
    let trained = e(profile_dataset(&enc.model, &enc.samples, &enc.selected, &cfg, &trained_tag()))?;
    let randoms: Vec<_> = (0..3u64)
        .map(|s| profile_dataset(&enc.model.random_like(s), &enc.samples, &enc.selected, &cfg, &random_tag(s)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for m in [Method::ValueZeroing, Method::AttnNorm] {
        let row = trained.row(l_star, m, Scope::WithinEncoder).ok_or("missing profile row")?;
        ensure(row.cue_max_rate >= 0.99, || format!("{m}: cue is row max for {:.3}", row.cue_max_rate))?;
        let peak = trained.peak_layer(m, Scope::WithinEncoder);
        ensure(peak == Some(l_star), || format!("{m}: profile peaks at {peak:?}, not {l_star}"))?;
        let mut min_gap = f64::INFINITY;
        for r in &randoms {
            let rr = r.row(l_star, m, Scope::WithinEncoder).ok_or("missing random row")?;
            min_gap = min_gap.min(row.mean - rr.mean);
        }
        ensure(min_gap >= 0.3, || format!("{m}: trained-minus-random gap {min_gap:.3}"))?;
        parts.push(format!("{m} max-rate {:.3} peak {l_star} gap {min_gap:.3}", row.cue_max_rate));
    }
    Ok(parts.join("; "))
}

fn probing_shape(enc: &Task) -> Outcome {
    let l_star = SynthTaskSpec::default().copy_layer;
    let ds = e(build_probe_dataset(&enc.model, &enc.samples, &enc.selected, Stack::Encoder))?;
    ensure(ds.labels.len() == 200, || format!("{} samples", ds.labels.len()))?;
    let r = e(kfold_probe(&ds, DEFAULT_FOLDS, DEFAULT_LAMBDA, DEFAULT_SEED))?;
    let acc: Vec<f64> = r.layers.iter().map(|l| l.mean_accuracy).collect();
    ensure(acc[0] <= 0.6, || format!("layer 0 accuracy {:.3}", acc[0]))?;
    for (l, &a) in acc.iter().enumerate().skip(l_star) {
        ensure(a >= 0.95, || format!("layer {l} accuracy {a:.3}"))?;
    }
    let shown: Vec<String> = acc.iter().map(|a| format!("{a:.3}")).collect();
    Ok(format!("accuracy by layer [{}]", shown.join(", ")))
}

fn ablation_signature(enc: &Task, dec: &Task) -> Outcome {
    let re = e(ablate_dataset(&enc.model, &enc.samples, &Condition::defaults(false)))?;
    let sc = re.mean_drop(Condition::SilenceCue).unwrap();
    let sd = re.mean_drop(Condition::SilenceDistractor).unwrap();
    ensure(re.skipped.is_empty(), || format!("{} encoder items skipped", re.skipped.len()))?;
    ensure(sc >= 0.3, || format!("encoder drop(SC) {sc:.3}"))?;
    ensure(sd <= 0.05, || format!("encoder drop(SD) {sd:.3}"))?;
    let rd = e(ablate_dataset(&dec.model, &dec.samples, &Condition::defaults(true)))?;
    ensure(rd.skipped.is_empty(), || format!("{} decoder items skipped", rd.skipped.len()))?;
    let m = |c| rd.mean_drop(c).unwrap();
    let (bc, dsc, sbc, st) = (
        m(Condition::BlankCue),
        m(Condition::SilenceCue),
        m(Condition::SilenceAndBlankCue),
        m(Condition::SilenceTarget),
    );
    ensure(bc >= 0.3, || format!("enc-dec drop(BC) {bc:.3}"))?;
    ensure(dsc <= 0.1, || format!("enc-dec drop(SC) {dsc:.3}"))?;
    ensure(sbc >= bc - 0.05, || format!("enc-dec drop(SBC) {sbc:.3} < drop(BC) {bc:.3} - 0.05"))?;
    ensure(st >= 0.3, || format!("enc-dec drop(ST) {st:.3}"))?;
    Ok(format!(
        "encoder SC {sc:.3} SD {sd:.3}; enc-dec BC {bc:.3} SC {dsc:.3} SBC {sbc:.3} ST {st:.3}"
    ))
}

fn alignment_conformance() -> Outcome {
    let fixed = FrameClock {
        seconds: 30.0,
        frames: 1500,
        fixed: true,
    };
    ensure(e(fixed.time_to_frame(15.0))? == 750, || "fixed clock: 15 s did not map to 750".into())?;
    ensure(e(time_to_frame(0.0, 2.0, 100))? == 0, || "t = 0 did not map to 0".into())?;
    ensure(e(time_to_frame(2.0, 2.0, 100))? == 100, || "t = duration did not map to T".into())?;
    let w = WordTiming {
        text: "x".into(),
        t_s: 0.0,
        t_e: 30.0,
    };
    ensure(e(fixed.word_to_frames(&w))? == FrameSpan { start: 0, end: 1500 }, || "whole clip span".into())?;
    ensure(fixed.time_to_frame(30.5).is_err(), || "overrun of the fixed duration accepted".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut times: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..=30.0)).collect();
    times.sort_by(f64::total_cmp);
    let frames: Vec<usize> = times.iter().map(|&t| fixed.time_to_frame(t)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(frames.windows(2).all(|p| p[0] <= p[1]), || "frame index not monotone in time".into())?;
    Ok("fixed-duration 15 s -> 750; 1000 random times monotone".into())
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs every command into `root`. Returns the score export paths.
fn run_all_commands(root: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    let data = root.join("data");
    e(commands::synth(&SynthArgs {
        out: data.clone(),
        seed: 7,
        utterances: 24,
    }))?;
    let mut exports = Vec::new();
    for kind in ["encoder-ctc", "encoder-decoder"] {
        let model = data.join(kind).join("model");
        let manifests = data.join(kind).join("manifests.jsonl");
        let out = root.join("out").join(kind);
        e(commands::scores(&ScoresArgs {
            model: model.clone(),
            manifests: manifests.clone(),
            out: out.clone(),
            select: ScoreSelection::default(),
            granularity: Granularity::Word,
        }))?;
        exports.push(out.join("scores.jsonl"));
        e(commands::cue_contribution(&CueArgs {
            model: model.clone(),
            manifests: manifests.clone(),
            out: out.clone(),
            select: ScoreSelection::default(),
            seed: 0,
        }))?;
        e(commands::probe(&ProbeArgs {
            model: model.clone(),
            manifests: manifests.clone(),
            out: out.clone(),
            lambda: DEFAULT_LAMBDA,
            k_folds: DEFAULT_FOLDS,
            seed: DEFAULT_SEED,
        }))?;
        e(commands::ablate(&AblateArgs {
            model,
            manifests,
            out: out.clone(),
            conditions: None,
        }))?;
        for (input, name) in [("scores.jsonl", "map.svg"), ("profile.csv", "profile.svg")] {
            e(commands::render(&RenderArgs {
                input: out.join(input),
                out: out.join(name),
                index: 0,
            }))?;
        }
    }
    Ok(exports)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all_commands(a.path())?;
    run_all_commands(b.path())?;
    let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
    ensure(fa.len() == fb.len(), || "runs wrote different file sets".into())?;
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        ensure(na == nb && ba == bb, || format!("{na} differs between runs"))?;
    }
    Ok(format!("synth/scores/cue-contribution/probe/ablate/render: {} files byte-identical", fa.len()))
}

fn normalization(enc: &Task, dec: &Task) -> Outcome {
    let mut rows = 0usize;
    let mut worst = 0.0f64;
    let mut check = |scores: &[Vec<f64>], flagged: &[bool]| {
        for (r, f) in scores.iter().zip(flagged) {
            if !f {
                worst = worst.max((r.iter().sum::<f64>() - 1.0).abs());
                rows += 1;
            }
        }
    };
    for t in [enc, dec] {
        let scopes: Vec<Scope> = Scope::ALL
            .into_iter()
            .filter(|s| t.model.spec.kind.has_decoder() || !s.needs_decoder())
            .collect();
        for sel in t.selected.iter().take(60) {
            let a = e(analyze(&t.model, &t.samples[sel.index], sel.dec_tokens.as_deref(), Granularity::Word))?;
            for map in e(score_all(&a, &Method::ALL, &scopes, None))? {
                let s = support::to_mat(&map.scores);
                check(&s, &map.flagged);
            }
        }
    }
    // and the rows actually written by the scores command
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for path in run_all_commands(dir.path())? {
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        for r in e(parse_map_records(&text, &path))? {
            check(&r.scores, &r.flagged);
        }
    }
    ensure(worst <= ROW_SUM_TOL, || format!("max |row sum - 1| = {worst:e}"))?;
    Ok(format!("{rows} non-flagged rows, max deviation {worst:.2e}"))
}

fn main() {
    let start = Instant::now();
    let tasks = task(ModelKind::EncoderCtc).and_then(|enc| Ok((enc, task(ModelKind::EncoderDecoder)?)));
    let (enc, dec) = match tasks {
        Ok(t) => t,
        Err(msg) => {
            println!("setup: FAIL ({msg})");
            std::process::exit(1);
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("forward oracle", Box::new(forward_oracle)),
        ("attention rows sum to one", Box::new(|| alpha_conservation(&enc, &dec))),
        ("VZ zero on zero-attention pairs", Box::new(vz_zero_path)),
        ("VZ equals full re-forward", Box::new(vz_definition)),
        ("cue detection on the encoder toy", Box::new(|| cue_detection(&enc))),
        ("probing shape", Box::new(|| probing_shape(&enc))),
        ("ablation signature", Box::new(|| ablation_signature(&enc, &dec))),
        ("alignment conformance", Box::new(alignment_conformance)),
        ("command determinism", Box::new(determinism)),
        ("score rows normalized", Box::new(|| normalization(&enc, &dec))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
