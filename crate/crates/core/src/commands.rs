//! File-to-file pipelines behind the command-line tool. Each returns a JSON
//! summary; every artifact is a deterministic function of the arguments.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::ablation::{ablate_dataset, Condition};
use crate::cue::{profile_dataset, random_tag, trained_tag, ProfileConfig};
use crate::error::{Error, Result};
use crate::manifest::{load_dataset, Diagnostic, Sample};
use crate::mixing::{score_all, Granularity, Method, Scope};
use crate::model::{Model, ModelKind};
use crate::probing::{build_probe_dataset, kfold_probe, Stack};
use crate::render::{heatmap_svg, line_plot_svg, Series};
use crate::report::{
    ablation_csv, ablation_summary_csv, parse_map_records, parse_profile_csv, probe_csv, profile_csv, scores_csv,
    to_jsonl, write_text, MapRecord,
};
use crate::selection::{analyze, select_samples, Selected, Skip};
use crate::synth::{build_task, write_bundle, SynthTaskSpec};

/// Number of random-init baselines next to a trained profile.
pub const RANDOM_SEEDS: u64 = 3;

/// Parses `"2"`, `"1-4"` or `"1,3,5-6"`.
pub fn parse_layers(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Usage(format!("bad layer list '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn diagnostics_json(d: &[Diagnostic]) -> Value {
    d.iter().map(|d| json!({"id": d.id, "message": d.message})).collect()
}

fn skips_json(s: &[Skip]) -> Value {
    s.iter().map(|s| json!({"id": s.id, "reason": s.reason})).collect()
}

/// A model and its dataset, with the utterances it gets right.
pub struct Workspace {
    pub model: Model,
    pub samples: Vec<Sample>,
    pub diagnostics: Vec<Diagnostic>,
    pub selected: Vec<Selected>,
    pub skipped: Vec<Skip>,
}

impl Workspace {
    pub fn load(model: &Path, manifests: &Path) -> Result<Self> {
        let model = Model::load(model)?;
        let (samples, diagnostics) = load_dataset(manifests, &model.spec)?;
        let (selected, skipped) = select_samples(&model, &samples, true)?;
        if selected.is_empty() {
            return Err(Error::Validation(format!(
                "none of the {} utterances is transcribed correctly",
                samples.len()
            )));
        }
        Ok(Self {
            model,
            samples,
            diagnostics,
            selected,
            skipped,
        })
    }

    fn summary(&self) -> Value {
        json!({
            "utterances": self.samples.len(),
            "selected": self.selected.len(),
            "skipped": skips_json(&self.skipped),
            "diagnostics": diagnostics_json(&self.diagnostics),
        })
    }

    /// Scopes to use: the requested ones (checked against the model kind) or
    /// every scope the model supports.
    pub fn scopes(&self, requested: Option<&[Scope]>) -> Result<Vec<Scope>> {
        let has_decoder = self.model.spec.kind.has_decoder();
        match requested {
            Some(s) => {
                if let Some(bad) = s.iter().find(|s| s.needs_decoder() && !has_decoder) {
                    return Err(Error::Usage(format!("scope {bad} needs an encoder-decoder model")));
                }
                Ok(s.to_vec())
            }
            None => Ok(Scope::ALL
                .into_iter()
                .filter(|s| has_decoder || !s.needs_decoder())
                .collect()),
        }
    }
}

/// Shared selection of what to score.
#[derive(Debug, Clone, Default)]
pub struct ScoreSelection {
    pub methods: Option<Vec<Method>>,
    pub scopes: Option<Vec<Scope>>,
    pub layers: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub seed: u64,
    pub utterances: usize,
}

/// Writes the encoder-only and encoder-decoder toy bundles under `out`.
pub fn synth(args: &SynthArgs) -> Result<Value> {
    let spec = SynthTaskSpec {
        seed: args.seed,
        utterances: args.utterances,
        ..Default::default()
    };
    let mut bundles = Vec::new();
    for (name, kind) in [("encoder-ctc", ModelKind::EncoderCtc), ("encoder-decoder", ModelKind::EncoderDecoder)] {
        let dir = args.out.join(name);
        let (model, data) = build_task(&spec, kind)?;
        write_bundle(&dir, &model, &data)?;
        bundles.push(json!({
            "kind": name,
            "model": dir.join("model"),
            "manifests": dir.join("manifests.jsonl"),
            "utterances": data.len(),
            "copy_layer": if kind.has_decoder() { spec.dec_copy_layer } else { spec.copy_layer },
        }));
    }
    Ok(json!({"command": "synth", "seed": args.seed, "bundles": bundles}))
}

#[derive(Debug, Clone)]
pub struct ScoresArgs {
    pub model: PathBuf,
    pub manifests: PathBuf,
    pub out: PathBuf,
    pub select: ScoreSelection,
    pub granularity: Granularity,
}

/// Score maps of every selected utterance: `scores.jsonl` and `scores.csv`.
pub fn scores(args: &ScoresArgs) -> Result<Value> {
    let ws = Workspace::load(&args.model, &args.manifests)?;
    let methods = args.select.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    let scopes = ws.scopes(args.select.scopes.as_deref())?;
    let per_utt = crate::par_map(&ws.selected, |sel| -> Result<Vec<MapRecord>> {
        let sample = &ws.samples[sel.index];
        let a = analyze(&ws.model, sample, sel.dec_tokens.as_deref(), args.granularity)?;
        let maps = score_all(&a, &methods, &scopes, args.select.layers.as_deref())?;
        Ok(maps.iter().map(|m| MapRecord::from_map(sample.id(), m)).collect())
    });
    let mut records = Vec::new();
    for r in per_utt {
        records.extend(r?);
    }
    write_text(&args.out.join("scores.jsonl"), &to_jsonl(&records))?;
    write_text(&args.out.join("scores.csv"), &scores_csv(&records))?;
    let flagged: usize = records.iter().map(|r| r.flagged.iter().filter(|&&f| f).count()).sum();
    Ok(json!({
        "command": "scores",
        "maps": records.len(),
        "flagged_rows": flagged,
        "methods": methods,
        "scopes": scopes,
        "dataset": ws.summary(),
    }))
}

#[derive(Debug, Clone)]
pub struct CueArgs {
    pub model: PathBuf,
    pub manifests: PathBuf,
    pub out: PathBuf,
    pub select: ScoreSelection,
    pub seed: u64,
}

/// Trained cue-contribution profile (`profile.csv`) and random-init baselines
/// for seeds `seed..seed+3` (`profile_random.csv`).
pub fn cue_contribution(args: &CueArgs) -> Result<Value> {
    let ws = Workspace::load(&args.model, &args.manifests)?;
    let cfg = ProfileConfig {
        methods: args.select.methods.clone().unwrap_or_else(|| Method::ALL.to_vec()),
        scopes: ws.scopes(args.select.scopes.as_deref())?,
        layers: args.select.layers.clone(),
        granularity: Granularity::Word,
    };
    let trained = profile_dataset(&ws.model, &ws.samples, &ws.selected, &cfg, &trained_tag())?;
    let random = (0..RANDOM_SEEDS)
        .map(|k| {
            let seed = args.seed + k;
            profile_dataset(&ws.model.random_like(seed), &ws.samples, &ws.selected, &cfg, &random_tag(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&args.out.join("profile.csv"), &profile_csv(&[&trained]))?;
    let refs: Vec<_> = random.iter().collect();
    write_text(&args.out.join("profile_random.csv"), &profile_csv(&refs))?;
    write_text(&args.out.join("cue_scores.jsonl"), &to_jsonl(&trained.scores))?;
    let peaks: Vec<Value> = cfg
        .scopes
        .iter()
        .flat_map(|&s| cfg.methods.iter().map(move |&m| (m, s)))
        .map(|(m, s)| json!({"method": m, "scope": s, "peak_layer": trained.peak_layer(m, s)}))
        .collect();
    Ok(json!({
        "command": "cue-contribution",
        "rows": trained.rows.len(),
        "random_seeds": (0..RANDOM_SEEDS).map(|k| args.seed + k).collect::<Vec<_>>(),
        "peaks": peaks,
        "dataset": ws.summary(),
    }))
}

#[derive(Debug, Clone)]
pub struct ProbeArgs {
    pub model: PathBuf,
    pub manifests: PathBuf,
    pub out: PathBuf,
    pub lambda: f64,
    pub k_folds: usize,
    pub seed: u64,
}

/// Per-layer probe accuracy for the encoder stack and, when present, the decoder stack.
pub fn probe(args: &ProbeArgs) -> Result<Value> {
    let ws = Workspace::load(&args.model, &args.manifests)?;
    let mut stacks = vec![Stack::Encoder];
    if ws.model.spec.kind.has_decoder() {
        stacks.push(Stack::Decoder);
    }
    let mut results = Vec::new();
    for &stack in &stacks {
        let ds = build_probe_dataset(&ws.model, &ws.samples, &ws.selected, stack)?;
        results.push((stack.name(), kfold_probe(&ds, args.k_folds, args.lambda, args.seed)?));
    }
    let refs: Vec<(&str, &_)> = results.iter().map(|(s, r)| (*s, r)).collect();
    write_text(&args.out.join("probe.csv"), &probe_csv(&refs))?;
    let accuracy: Value = results
        .iter()
        .map(|(s, r)| (s.to_string(), r.layers.iter().map(|l| l.mean_accuracy).collect::<Value>()))
        .collect::<serde_json::Map<_, _>>()
        .into();
    Ok(json!({
        "command": "probe",
        "lambda": args.lambda,
        "k_folds": args.k_folds,
        "seed": args.seed,
        "mean_accuracy": accuracy,
        "dataset": ws.summary(),
    }))
}

#[derive(Debug, Clone)]
pub struct AblateArgs {
    pub model: PathBuf,
    pub manifests: PathBuf,
    pub out: PathBuf,
    pub conditions: Option<Vec<Condition>>,
}

/// Confidence drops under each condition: `ablation.csv` and `ablation_summary.csv`.
pub fn ablate(args: &AblateArgs) -> Result<Value> {
    let model = Model::load(&args.model)?;
    let (samples, diagnostics) = load_dataset(&args.manifests, &model.spec)?;
    let conditions = args
        .conditions
        .clone()
        .unwrap_or_else(|| Condition::defaults(model.spec.kind.has_decoder()));
    let report = ablate_dataset(&model, &samples, &conditions)?;
    write_text(&args.out.join("ablation.csv"), &ablation_csv(&report))?;
    write_text(&args.out.join("ablation_summary.csv"), &ablation_summary_csv(&report))?;
    Ok(json!({
        "command": "ablate",
        "summary": report.summary,
        "skipped": skips_json(&report.skipped),
        "diagnostics": diagnostics_json(&diagnostics),
        "note": report.note,
    }))
}

#[derive(Debug, Clone)]
pub struct RenderArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Which map of a `scores.jsonl` file to draw.
    pub index: usize,
}

/// Heatmap for a score export (`.jsonl`), line plot for a profile (`.csv`).
/// Nothing is written on error.
pub fn render(args: &RenderArgs) -> Result<Value> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let is_profile = args.input.extension().is_some_and(|e| e == "csv");
    let (svg, kind) = if is_profile {
        let points = parse_profile_csv(&text, &args.input)?;
        let mut series: Vec<Series> = Vec::new();
        for p in points {
            let label = format!("{} {} {}", p.method, p.scope, p.tag);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((p.layer, p.mean)),
                None => series.push(Series {
                    label,
                    points: vec![(p.layer, p.mean)],
                }),
            }
        }
        (line_plot_svg("cue contribution by layer", &series)?, "profile")
    } else {
        let records = parse_map_records(&text, &args.input)?;
        let r = records.get(args.index).ok_or_else(|| {
            Error::Usage(format!("map {} requested, {} has {}", args.index, args.input.display(), records.len()))
        })?;
        let title = format!("{} layer {} {} {}", r.id, r.layer, r.method, r.scope);
        (heatmap_svg(&title, &r.rows, &r.cols, &r.scores)?, "heatmap")
    };
    write_text(&args.out, &svg)?;
    Ok(json!({"command": "render", "kind": kind, "out": args.out, "bytes": svg.len()}))
}
