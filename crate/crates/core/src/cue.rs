//! Cue contribution: how much of the target word's normalized score row falls
//! on the cue word, per layer, method and scope, averaged over a dataset.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::Sample;
use crate::mixing::{score_all, Granularity, Method, MixingMap, Scope, WordUnit};
use crate::model::Model;
use crate::selection::{analyze, Selected};

/// 1 at every unit belonging to the cue word, 0 elsewhere.
pub fn build_cue_vector(cue_idx: usize, units: &[WordUnit]) -> Result<Vec<f64>> {
    if units.is_empty() {
        return Err(Error::Data("no word units".into()));
    }
    let c: Vec<f64> = units
        .iter()
        .map(|u| if u.word_idx == cue_idx { 1.0 } else { 0.0 })
        .collect();
    if !c.contains(&1.0) {
        return Err(Error::Data(format!("cue word {cue_idx} not among the units")));
    }
    Ok(c)
}

pub fn cue_contribution(row: &[f64], cue: &[f64]) -> Result<f64> {
    if row.len() != cue.len() {
        return Err(Error::Dimension(format!(
            "score row of {} against cue vector of {}",
            row.len(),
            cue.len()
        )));
    }
    Ok(row.iter().zip(cue).map(|(s, c)| s * c).sum())
}

/// Cue contribution of one utterance in one map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CueScore {
    pub id: String,
    pub layer: usize,
    pub method: Method,
    pub scope: Scope,
    pub value: f64,
    /// The target row had no positive raw score.
    pub flagged: bool,
    /// The cue holds the strictly largest entry of the target row.
    pub cue_is_max: bool,
}

/// Target-row cue contribution of a map.
pub fn score_map(id: &str, map: &MixingMap, cue_idx: usize, target_idx: usize) -> Result<CueScore> {
    let row = map
        .word_row(target_idx)
        .ok_or_else(|| Error::Data(format!("{id}: target word {target_idx} has no row")))?;
    let c = build_cue_vector(cue_idx, &map.cols)?;
    let value = cue_contribution(&row, &c)?;
    let cue_max = row.iter().zip(&c).filter(|(_, &c)| c == 1.0).map(|(v, _)| *v).fold(f64::MIN, f64::max);
    let other_max = row.iter().zip(&c).filter(|(_, &c)| c == 0.0).map(|(v, _)| *v).fold(f64::MIN, f64::max);
    Ok(CueScore {
        id: id.to_string(),
        layer: map.layer,
        method: map.method,
        scope: map.scope,
        value,
        flagged: map.row_flagged(target_idx),
        cue_is_max: cue_max > other_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub layer: usize,
    pub method: Method,
    pub scope: Scope,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    /// Utterances whose target row was all zero; they count as 0.
    pub flagged: usize,
    /// Fraction of utterances where the cue is the strict row maximum.
    pub cue_max_rate: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub tag: String,
    pub rows: Vec<ProfileRow>,
    pub scores: Vec<CueScore>,
}

impl Profile {
    pub fn row(&self, layer: usize, method: Method, scope: Scope) -> Option<&ProfileRow> {
        self.rows
            .iter()
            .find(|r| r.layer == layer && r.method == method && r.scope == scope)
    }

    /// Layer with the largest mean for a method and scope; the first one wins ties.
    pub fn peak_layer(&self, method: Method, scope: Scope) -> Option<usize> {
        let mut best: Option<&ProfileRow> = None;
        for r in self.rows.iter().filter(|r| r.method == method && r.scope == scope) {
            if best.is_none_or(|b| r.mean > b.mean) {
                best = Some(r);
            }
        }
        best.map(|r| r.layer)
    }
}

#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub methods: Vec<Method>,
    pub scopes: Vec<Scope>,
    pub layers: Option<Vec<usize>>,
    pub granularity: Granularity,
}

impl ProfileConfig {
    pub fn new(methods: Vec<Method>, scopes: Vec<Scope>) -> Self {
        Self {
            methods,
            scopes,
            layers: None,
            granularity: Granularity::Word,
        }
    }
}

/// Cue contributions of every selected utterance, aggregated per
/// (layer, method, scope) in `score_all` order.
pub fn profile_dataset(
    model: &Model,
    samples: &[Sample],
    selected: &[Selected],
    cfg: &ProfileConfig,
    tag: &str,
) -> Result<Profile> {
    if selected.is_empty() {
        return Err(Error::Validation("no utterances to profile".into()));
    }
    let per_utt = crate::par_map(selected, |sel| -> Result<Vec<CueScore>> {
        let sample = &samples[sel.index];
        let a = analyze(model, sample, sel.dec_tokens.as_deref(), cfg.granularity)?;
        let maps = score_all(&a, &cfg.methods, &cfg.scopes, cfg.layers.as_deref())?;
        let m = &sample.manifest;
        maps.iter()
            .map(|map| score_map(sample.id(), map, m.cue_idx, m.target_idx))
            .collect()
    });
    let per_utt: Vec<Vec<CueScore>> = per_utt.into_iter().collect::<Result<_>>()?;
    let keys: Vec<(usize, Method, Scope)> = per_utt[0].iter().map(|s| (s.layer, s.method, s.scope)).collect();
    let mut rows = Vec::with_capacity(keys.len());
    for (k, &(layer, method, scope)) in keys.iter().enumerate() {
        let vals: Vec<&CueScore> = per_utt.iter().map(|u| &u[k]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().map(|s| s.value).sum::<f64>() / n;
        let var = vals.iter().map(|s| (s.value - mean).powi(2)).sum::<f64>() / n;
        rows.push(ProfileRow {
            layer,
            method,
            scope,
            mean,
            std: var.sqrt(),
            count: vals.len(),
            flagged: vals.iter().filter(|s| s.flagged).count(),
            cue_max_rate: vals.iter().filter(|s| s.cue_is_max).count() as f64 / n,
            tag: tag.to_string(),
        });
    }
    Ok(Profile {
        tag: tag.to_string(),
        rows,
        scores: per_utt.into_iter().flatten().collect(),
    })
}

pub fn trained_tag() -> String {
    "trained".into()
}

pub fn random_tag(seed: u64) -> String {
    format!("random-init({seed})")
}
