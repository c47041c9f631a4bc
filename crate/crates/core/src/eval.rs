//! Box-level evaluation: one-to-one IoU matching, recall/precision and their
//! curves over a grid of IoU thresholds.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::grid::{iou, BBox};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predicted} predicted frames but {ground_truth} ground-truth frames")]
    FrameCountMismatch {
        predicted: usize,
        ground_truth: usize,
    },
    #[error("IoU thresholds must be strictly increasing inside (0, 1)")]
    InvalidThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    /// `tp / (tp + fn)`, 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }

    /// `tp / (tp + fp)`, 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Matching of one frame's predictions against its ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(pred index, gt index, iou)` in the order they were matched.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl FrameMatch {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.pairs.len(),
            fp: self.unmatched_preds.len(),
            fn_: self.unmatched_gts.len(),
        }
    }
}

/// Greedy one-to-one matching: repeatedly take the largest remaining IoU
/// that reaches `threshold` (ties to the lower prediction, then the lower
/// ground-truth index).
pub fn match_boxes(preds: &[BBox], gts: &[BBox], threshold: f64) -> FrameMatch {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pb) in preds.iter().enumerate() {
        for (g, gb) in gts.iter().enumerate() {
            let v = iou(pb, gb);
            if v >= threshold && v > 0.0 {
                cand.push((v, p, g));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (v, p, g) in cand {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push((p, g, v));
        }
    }
    FrameMatch {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&p| !pred_used[p]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&g| !gt_used[g]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub counts: Counts,
}

impl CurvePoint {
    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }

    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<(), EvalError> {
    let inside = thresholds.iter().all(|&t| t > 0.0 && t < 1.0);
    let increasing = thresholds.windows(2).all(|w| w[0] < w[1]);
    if thresholds.is_empty() || !inside || !increasing {
        return Err(EvalError::InvalidThresholds);
    }
    Ok(())
}

/// Pooled counts over all frames, per threshold.
pub fn pr_curve(
    preds: &[Vec<BBox>],
    gts: &[Vec<BBox>],
    thresholds: &[f64],
) -> Result<Vec<CurvePoint>, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::FrameCountMismatch {
            predicted: preds.len(),
            ground_truth: gts.len(),
        });
    }
    validate_thresholds(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut counts = Counts::default();
            for (p, g) in preds.iter().zip(gts) {
                counts += match_boxes(p, g, t).counts();
            }
            CurvePoint {
                threshold: t,
                counts,
            }
        })
        .collect())
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_thresholds() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

pub fn write_curve_csv<W: Write>(mut out: W, curve: &[CurvePoint]) -> io::Result<()> {
    writeln!(out, "iou_threshold,recall,precision,tp,fp,fn")?;
    for c in curve {
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{},{},{}",
            c.threshold,
            c.recall(),
            c.precision(),
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_
        )?;
    }
    Ok(())
}

/// Recall/precision of one sequence at a fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScore {
    pub name: String,
    pub recall: f64,
    pub precision: f64,
}

/// Table with one column per sequence plus an `Avg` column (the mean of the
/// per-sequence values) and `Re` / `Pr` rows.
pub fn format_table(scores: &[SequenceScore]) -> String {
    let avg = |f: fn(&SequenceScore) -> f64| {
        if scores.is_empty() {
            f64::NAN
        } else {
            scores.iter().map(f).sum::<f64>() / scores.len() as f64
        }
    };
    let width = scores
        .iter()
        .map(|s| s.name.len())
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<4}", "Name");
    for s in scores {
        let _ = write!(out, " {:>width$}", s.name);
    }
    let _ = writeln!(out, " {:>width$}", "Avg");
    for (label, f) in [
        ("Re", (|s: &SequenceScore| s.recall) as fn(&SequenceScore) -> f64),
        ("Pr", |s: &SequenceScore| s.precision),
    ] {
        let _ = write!(out, "{label:<4}");
        for s in scores {
            let _ = write!(out, " {:>width$.3}", f(s));
        }
        let _ = writeln!(out, " {:>width$.3}", avg(f));
    }
    out
}

/// Recall and precision against the IoU threshold as a standalone SVG.
pub fn render_curve_svg(curve: &[CurvePoint]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    let sx = |t: f64| M + t * (W - 2.0 * M);
    let sy = |v: f64| H - M - v * (H - 2.0 * M);
    let polyline = |f: fn(&CurvePoint) -> f64| {
        curve
            .iter()
            .map(|c| format!("{:.1},{:.1}", sx(c.threshold), sy(f(c))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#,
        x0 = sx(0.0),
        x1 = sx(1.0),
        y0 = sy(0.0),
        y1 = sy(1.0)
    );
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#,
            sx(t),
            sy(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#,
            sx(0.0) - 6.0,
            sy(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">IoU threshold</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" stroke="crimson" stroke-width="2" fill="none"/>"#,
        polyline(CurvePoint::recall)
    );
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
        polyline(CurvePoint::precision)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" fill="crimson">Recall</text>"#,
        sx(0.75),
        sy(1.0) - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" fill="steelblue">Precision</text>"#,
        sx(0.75),
        sy(1.0) - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}
