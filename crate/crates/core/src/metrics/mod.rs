//! Frame-wise accuracy, segmental edit score and segmental F1@k.

use std::fmt::Write as _;

use crate::segments::{frames_to_segments, Segment};
use crate::{Error, Result};

/// Thresholds reported by default: F1@10, F1@25, F1@50.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// How an IoU is compared against the F1 threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IouRule {
    /// A match needs IoU strictly greater than the threshold.
    #[default]
    Strict,
    /// IoU equal to the threshold also matches.
    Inclusive,
}

impl IouRule {
    fn passes(self, iou: f64, threshold: f64) -> bool {
        match self {
            IouRule::Strict => iou > threshold,
            IouRule::Inclusive => iou >= threshold,
        }
    }
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape("frame_accuracy", &[pred.len()], &[gt.len()]));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput {
            op: "frame_accuracy",
        });
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Levenshtein distance between two symbol strings (two-row DP).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − D / max(L_p, L_g)` over segment class strings.
pub fn edit_score_classes(pred: &[usize], gt: &[usize]) -> f64 {
    let longest = pred.len().max(gt.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(pred, gt) as f64 / longest as f64
}

/// Edit score of two frame-label sequences.
pub fn edit_score(pred: &[usize], gt: &[usize]) -> f64 {
    let classes = |l: &[usize]| {
        if l.is_empty() {
            Vec::new()
        } else {
            frames_to_segments(l)
                .map(|s| s.classes())
                .unwrap_or_default()
        }
    };
    edit_score_classes(&classes(pred), &classes(gt))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Score {
    fn from_counts(tp: usize, fp: usize, fneg: usize) -> Self {
        let ratio = |a: usize, b: usize| {
            if a + b == 0 {
                0.0
            } else {
                a as f64 / (a + b) as f64
            }
        };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fneg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1Score {
            precision,
            recall,
            f1,
        }
    }
}

/// Segmental precision / recall / F1 at one IoU threshold.
///
/// Predicted segments are visited in temporal order; each consumes the
/// still-unmatched ground-truth segment of its class with the highest IoU
/// (earliest on ties) when that IoU passes the threshold, otherwise it is a
/// false positive. Ground-truth segments left unmatched are false
/// negatives.
pub fn segmental_f1(pred: &[Segment], gt: &[Segment], threshold: f64, rule: IouRule) -> F1Score {
    let mut matched = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in gt.iter().enumerate() {
            if matched[k] || g.class != p.class {
                continue;
            }
            let iou = p.iou(g);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((k, iou));
            }
        }
        if let Some((k, iou)) = best {
            if rule.passes(iou, threshold) {
                matched[k] = true;
                tp += 1;
            }
        }
    }
    F1Score::from_counts(tp, pred.len() - tp, gt.len() - tp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub edit: f64,
    /// `(threshold, score)` in the order requested.
    pub f1: Vec<(f64, F1Score)>,
}

impl EvalReport {
    pub fn f1_at(&self, threshold: f64) -> Option<F1Score> {
        self.f1
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-12)
            .map(|(_, s)| *s)
    }

    /// Aligned human-readable table; `percent` multiplies by 100.
    pub fn to_text(&self, percent: bool) -> String {
        let k = if percent { 100.0 } else { 1.0 };
        let prec = if percent { 2 } else { 4 };
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}{:>10.prec$}", "accuracy", self.accuracy * k);
        let _ = writeln!(s, "{:<12}{:>10.prec$}", "edit", self.edit * k);
        for (t, f) in &self.f1 {
            let name = format!("F1@{}", (t * 100.0).round());
            let _ = writeln!(
                s,
                "{name:<12}{:>10.prec$}  (P {:.prec$}, R {:.prec$})",
                f.f1 * k,
                f.precision * k,
                f.recall * k
            );
        }
        s
    }

    /// One `metric=value` per line, values in `[0, 1]`.
    pub fn to_key_values(&self) -> String {
        let mut s = format!("accuracy={}\nedit={}\n", self.accuracy, self.edit);
        for (t, f) in &self.f1 {
            let tag = (t * 100.0).round();
            let _ = writeln!(s, "f1@{tag}={}", f.f1);
            let _ = writeln!(s, "precision@{tag}={}", f.precision);
            let _ = writeln!(s, "recall@{tag}={}", f.recall);
        }
        s
    }
}

pub fn evaluate_all(
    pred: &[usize],
    gt: &[usize],
    thresholds: &[f64],
    rule: IouRule,
) -> Result<EvalReport> {
    let accuracy = frame_accuracy(pred, gt)?;
    for &t in thresholds {
        if !(0.0..1.0).contains(&t) || t == 0.0 {
            return Err(Error::invalid(
                "evaluate_all",
                format!("threshold {t} outside (0, 1)"),
            ));
        }
    }
    let ps = frames_to_segments(pred)?;
    let gs = frames_to_segments(gt)?;
    Ok(EvalReport {
        accuracy,
        edit: edit_score_classes(&ps.classes(), &gs.classes()),
        f1: thresholds
            .iter()
            .map(|&t| (t, segmental_f1(ps.items(), gs.items(), t, rule)))
            .collect(),
    })
}
