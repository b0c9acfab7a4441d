#![allow(clippy::needless_range_loop)]
use crate::alignment::FrameSpan;
use crate::error::{Error, Result};
use crate::model::AttentionCapture;
use crate::tensor::{cosine_similarity, Tensor};

fn check_spans(spans: &[FrameSpan], len: usize, what: &str) -> Result<()> {
    if spans.is_empty() {
        return Err(Error::Range(format!("no {what} spans")));
    }
    for s in spans {
        s.check_within(len)
            .map_err(|_| Error::Range(format!("{what} span [{}, {}) outside [0, {len})", s.start, s.end)))?;
    }
    Ok(())
}

fn check_capture(att: &AttentionCapture, rows: &[FrameSpan], cols: &[FrameSpan]) -> Result<()> {
    let first = att
        .weights
        .first()
        .ok_or_else(|| Error::Input("attention capture has no heads".into()))?;
    check_spans(rows, first.rows(), "row")?;
    check_spans(cols, first.cols(), "column")
}

/// Mean attention weight from the frames of each row word to the frames of each
/// column word, over all heads.
pub fn attn_score(att: &AttentionCapture, rows: &[FrameSpan], cols: &[FrameSpan]) -> Result<Tensor> {
    check_capture(att, rows, cols)?;
    let mut out = Tensor::zeros(vec![rows.len(), cols.len()]);
    for (i, ri) in rows.iter().enumerate() {
        for (j, cj) in cols.iter().enumerate() {
            let mut acc = 0.0f64;
            for a in &att.weights {
                for n in ri.indices() {
                    for m in cj.indices() {
                        acc += a.get(n, m) as f64;
                    }
                }
            }
            let count = (ri.len() * cj.len() * att.weights.len()) as f64;
            out.set(i, j, (acc / count) as f32);
        }
    }
    Ok(out)
}

/// Mean of `‖α^h_{n,m} v^h_m W_O^h‖` over row frames `n`, column frames `m` and heads.
pub fn attention_norm_score(
    att: &AttentionCapture,
    w_o: &Tensor,
    rows: &[FrameSpan],
    cols: &[FrameSpan],
) -> Result<Tensor> {
    check_capture(att, rows, cols)?;
    let heads = att.heads();
    let dh = att.values[0].cols();
    if w_o.rows() != heads * dh {
        return Err(Error::Dimension(format!(
            "W_O has {} rows for {heads} heads of width {dh}",
            w_o.rows()
        )));
    }
    let tk = att.values[0].rows();
    // ‖v^h_m W_O^h‖ for every head and key position
    let mut norms = vec![vec![0.0f64; tk]; heads];
    for h in 0..heads {
        let v = &att.values[h];
        for (m, nm) in norms[h].iter_mut().enumerate() {
            let vm = v.row(m);
            let mut sq = 0.0f64;
            for c in 0..w_o.cols() {
                let mut s = 0.0f64;
                for (r, &x) in vm.iter().enumerate() {
                    s += x as f64 * w_o.get(h * dh + r, c) as f64;
                }
                sq += s * s;
            }
            *nm = sq.sqrt();
        }
    }
    let mut out = Tensor::zeros(vec![rows.len(), cols.len()]);
    for (i, ri) in rows.iter().enumerate() {
        for (j, cj) in cols.iter().enumerate() {
            let mut acc = 0.0f64;
            for h in 0..heads {
                let a = &att.weights[h];
                for n in ri.indices() {
                    for m in cj.indices() {
                        acc += a.get(n, m) as f64 * norms[h][m];
                    }
                }
            }
            let count = (ri.len() * cj.len() * heads) as f64;
            out.set(i, j, (acc / count) as f32);
        }
    }
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            context: "attention norm score".into(),
        });
    }
    Ok(out)
}

/// Value zeroing. `rerun` recomputes the layer output with the value vectors at
/// the masked key positions set to zero; `original` is the unmodified output.
/// Returns `1 − mean cos` per entry and the mean cosine itself.
pub fn value_zeroing_score<F>(
    original: &Tensor,
    key_len: usize,
    rows: &[FrameSpan],
    cols: &[FrameSpan],
    mut rerun: F,
) -> Result<(Tensor, Tensor)>
where
    F: FnMut(&[bool]) -> Result<Tensor>,
{
    check_spans(rows, original.rows(), "row")?;
    check_spans(cols, key_len, "column")?;
    let mut scores = Tensor::zeros(vec![rows.len(), cols.len()]);
    let mut cosines = Tensor::zeros(vec![rows.len(), cols.len()]);
    for (j, cj) in cols.iter().enumerate() {
        let mut mask = vec![false; key_len];
        cj.indices().for_each(|m| mask[m] = true);
        let zeroed = rerun(&mask)?;
        if zeroed.shape() != original.shape() {
            return Err(Error::Dimension("rerun changed the output shape".into()));
        }
        for (i, ri) in rows.iter().enumerate() {
            let mut cos_sum = 0.0f64;
            for n in ri.indices() {
                cos_sum += cosine_similarity(original.row(n), zeroed.row(n))?.value;
            }
            let mean_cos = cos_sum / ri.len() as f64;
            cosines.set(i, j, mean_cos as f32);
            scores.set(i, j, (1.0 - mean_cos) as f32);
        }
    }
    Ok((scores, cosines))
}

/// Clips negatives to zero and scales each row to sum to one. Rows that are
/// all zero stay zero and are flagged.
pub fn normalize_rows(raw: &Tensor) -> (Tensor, Vec<bool>) {
    let (r, c) = (raw.rows(), raw.cols());
    let mut out = Tensor::zeros(vec![r, c]);
    let mut flagged = vec![false; r];
    for i in 0..r {
        let clipped: Vec<f64> = raw.row(i).iter().map(|&v| (v as f64).max(0.0)).collect();
        let sum: f64 = clipped.iter().sum();
        if sum > 0.0 {
            for (o, v) in out.row_mut(i).iter_mut().zip(&clipped) {
                *o = (v / sum) as f32;
            }
        } else {
            flagged[i] = true;
        }
    }
    (out, flagged)
}
