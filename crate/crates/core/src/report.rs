//! Tabular and line-delimited JSON exports. Floats use Rust's shortest
//! round-trip formatting, so equal values always print the same way.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ablation::AblationReport;
use crate::cue::Profile;
use crate::error::{Error, Result};
use crate::mixing::{Method, MixingMap, Scope};
use crate::probing::ProbeResult;
use crate::tensor::Tensor;

/// One score map of one utterance, as stored in `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    pub id: String,
    pub layer: usize,
    pub method: Method,
    pub scope: Scope,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub flagged: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_cosine: Option<Vec<Vec<f64>>>,
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|&v| v as f64).collect())
        .collect()
}

impl MapRecord {
    pub fn from_map(id: &str, map: &MixingMap) -> Self {
        Self {
            id: id.to_string(),
            layer: map.layer,
            method: map.method,
            scope: map.scope,
            rows: map.rows.iter().map(|u| u.label.clone()).collect(),
            cols: map.cols.iter().map(|u| u.label.clone()).collect(),
            scores: rows_of(&map.scores),
            raw: rows_of(&map.raw),
            flagged: map.flagged.clone(),
            raw_cosine: map.raw_cosine.as_ref().map(rows_of),
        }
    }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_map_records(text: &str, origin: &Path) -> Result<Vec<MapRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Quotes a CSV field when needed.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn scores_csv(records: &[MapRecord]) -> String {
    let mut out = String::from("id,layer,method,scope,row,row_label,col,col_label,score,raw,flagged\n");
    for r in records {
        for (i, row_label) in r.rows.iter().enumerate() {
            for (j, col_label) in r.cols.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{i},{},{j},{},{},{},{}",
                    field(&r.id),
                    r.layer,
                    r.method,
                    r.scope,
                    field(row_label),
                    field(col_label),
                    r.scores[i][j],
                    r.raw[i][j],
                    r.flagged[i]
                )
                .unwrap();
            }
        }
    }
    out
}

pub const PROFILE_HEADER: &str = "layer,method,scope,mean,std,count,flagged,cue_max_rate,tag";

pub fn profile_csv(profiles: &[&Profile]) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for p in profiles {
        for r in &p.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.layer,
                r.method,
                r.scope,
                r.mean,
                r.std,
                r.count,
                r.flagged,
                r.cue_max_rate,
                field(&r.tag)
            )
            .unwrap();
        }
    }
    out
}

/// A profile row read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub layer: usize,
    pub method: Method,
    pub scope: Scope,
    pub mean: f64,
    pub std: f64,
    pub tag: String,
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn parse_profile_csv(text: &str, origin: &Path) -> Result<Vec<ProfilePoint>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(origin, "empty file"))?;
    let cols = split_csv(header);
    let idx = |name: &str| {
        cols.iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::format(origin, format!("missing column '{name}'")))
    };
    let (il, im, is, imean, istd, itag) =
        (idx("layer")?, idx("method")?, idx("scope")?, idx("mean")?, idx("std")?, idx("tag")?);
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let f = split_csv(line);
        if f.len() != cols.len() {
            return Err(Error::format(origin, format!("row {}: expected {} fields", n + 1, cols.len())));
        }
        let bad = |what: &str| Error::format(origin, format!("row {}: bad {what}", n + 1));
        out.push(ProfilePoint {
            layer: f[il].parse().map_err(|_| bad("layer"))?,
            method: f[im].parse().map_err(|_| bad("method"))?,
            scope: f[is].parse().map_err(|_| bad("scope"))?,
            mean: f[imean].parse().map_err(|_| bad("mean"))?,
            std: f[istd].parse().map_err(|_| bad("std"))?,
            tag: f[itag].clone(),
        });
    }
    Ok(out)
}

pub fn probe_csv(results: &[(&str, &ProbeResult)]) -> String {
    let mut out = String::from("stack,layer,fold,accuracy,lambda,pooling\n");
    for (stack, r) in results {
        for l in &r.layers {
            for (f, acc) in l.fold_accuracy.iter().enumerate() {
                writeln!(out, "{stack},{},{f},{acc},{},{}", l.layer, r.lambda, r.pooling).unwrap();
            }
            writeln!(out, "{stack},{},mean,{},{},{}", l.layer, l.mean_accuracy, r.lambda, r.pooling).unwrap();
        }
    }
    out
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = String::from("id,condition,baseline,ablated,drop\n");
    for d in &report.drops {
        writeln!(out, "{},{},{},{},{}", field(&d.id), d.condition, d.baseline, d.ablated, d.drop).unwrap();
    }
    out
}

pub fn ablation_summary_csv(report: &AblationReport) -> String {
    let mut out = String::from("condition,mean_baseline,mean_ablated,mean_drop,count,note\n");
    for s in &report.summary {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.condition,
            s.mean_baseline,
            s.mean_ablated,
            s.mean_drop,
            s.count,
            field(report.note)
        )
        .unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
