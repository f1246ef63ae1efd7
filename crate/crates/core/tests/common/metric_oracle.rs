//! Brute-force metric references: naive recursive edit distance and
//! frame-set IoU matching.

use std::collections::HashMap;

/// `(start, end, class)` runs, found by comparing each frame with the next.
pub fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.2 == l => last.1 = i,
            _ => out.push((i, i, l)),
        }
    }
    out
}

fn lev(a: &[usize], b: &[usize], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let d = if a[0] == b[0] {
        lev(&a[1..], &b[1..], memo)
    } else {
        1 + lev(&a[1..], b, memo)
            .min(lev(a, &b[1..], memo))
            .min(lev(&a[1..], &b[1..], memo))
    };
    memo.insert((a.len(), b.len()), d);
    d
}

pub fn edit(pred: &[usize], gt: &[usize]) -> f64 {
    let p: Vec<usize> = runs(pred).iter().map(|r| r.2).collect();
    let g: Vec<usize> = runs(gt).iter().map(|r| r.2).collect();
    let n = p.len().max(g.len());
    if n == 0 {
        return 1.0;
    }
    1.0 - lev(&p, &g, &mut HashMap::new()) as f64 / n as f64
}

fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.min(b.0);
    let hi = a.1.max(b.1);
    let (mut inter, mut union) = (0usize, 0usize);
    for f in lo..=hi {
        let ina = (a.0..=a.1).contains(&f);
        let inb = (b.0..=b.1).contains(&f);
        inter += usize::from(ina && inb);
        union += usize::from(ina || inb);
    }
    inter as f64 / union as f64
}

/// `(precision, recall, f1)` with predictions matched in temporal order.
pub fn f1(
    pred: &[(usize, usize, usize)],
    gt: &[(usize, usize, usize)],
    threshold: f64,
    strict: bool,
) -> (f64, f64, f64) {
    let mut used = vec![false; gt.len()];
    let mut tp = 0usize;
    for p in pred {
        let mut best = None;
        let mut best_iou = -1.0;
        for (k, g) in gt.iter().enumerate() {
            if used[k] || g.2 != p.2 {
                continue;
            }
            let v = iou((p.0, p.1), (g.0, g.1));
            if v > best_iou {
                best_iou = v;
                best = Some(k);
            }
        }
        let pass = if strict {
            best_iou > threshold
        } else {
            best_iou >= threshold
        };
        if let (Some(k), true) = (best, pass) {
            used[k] = true;
            tp += 1;
        }
    }
    let fp = pred.len() - tp;
    let fneg = gt.len() - tp;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fneg == 0 {
        0.0
    } else {
        tp as f64 / (tp + fneg) as f64
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}
