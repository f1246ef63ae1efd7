use super::{gaussian, LabelSequence};
use crate::seqcore::SeqTensor;
use crate::{Error, Result};

/// Peak picking on a per-frame boundary track.
///
/// Candidates are strict local maxima above `theta` (frame 0 is never a
/// boundary). They are accepted greedily in descending score order while
/// keeping every pair at least `min_distance` frames apart. The result is
/// sorted ascending.
pub fn detect_boundaries(scores: &[f64], theta: f64, min_distance: usize) -> Vec<usize> {
    let n = scores.len();
    let mut candidates: Vec<usize> = (1..n)
        .filter(|&t| {
            let s = scores[t];
            s > theta && s > scores[t - 1] && (t + 1 == n || s > scores[t + 1])
        })
        .collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let min_distance = min_distance.max(1);
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_distance) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// Relabels each span between consecutive boundaries with the class that
/// wins a centre-weighted vote over `probs[T×C]`.
///
/// The vote for class `c` on span `[lo, hi]` is `Σ_t G(t)·p_t(c)` with a
/// Gaussian centred on the span (σ = length/6). Ties go to the lower class
/// id. Adjacent spans that win the same class simply merge.
pub fn refine_prediction(probs: &SeqTensor, boundaries: &[usize]) -> Result<LabelSequence> {
    let (t, c) = match probs.shape() {
        &[t, c] if t > 0 && c > 0 => (t, c),
        s => {
            return Err(Error::invalid(
                "refine_prediction",
                format!("probabilities must be a non-empty T×C matrix, got {s:?}"),
            ))
        }
    };
    for (i, &b) in boundaries.iter().enumerate() {
        if b == 0 || b >= t {
            return Err(Error::invalid(
                "refine_prediction",
                format!("boundary {b} outside (0, {t})"),
            ));
        }
        if i > 0 && boundaries[i - 1] >= b {
            return Err(Error::invalid(
                "refine_prediction",
                "boundaries must be strictly increasing",
            ));
        }
    }
    let mut labels = Vec::with_capacity(t);
    let starts = std::iter::once(0).chain(boundaries.iter().copied());
    let ends = boundaries.iter().copied().chain(std::iter::once(t));
    let mut votes = vec![0.0; c];
    for (lo, hi) in starts.zip(ends) {
        let len = hi - lo;
        let center = (lo + hi - 1) as f64 / 2.0;
        let sigma = len as f64 / 6.0;
        votes.iter_mut().for_each(|v| *v = 0.0);
        for f in lo..hi {
            let w = gaussian(f as f64, center, sigma);
            votes
                .iter_mut()
                .zip(probs.row(f))
                .for_each(|(v, &p)| *v += w * p);
        }
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        labels.extend(std::iter::repeat_n(best, len));
    }
    Ok(LabelSequence::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::frames_to_segments;

    fn one_hot(labels: &[usize], c: usize, conf: f64) -> SeqTensor {
        let rest = (1.0 - conf) / (c - 1) as f64;
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..c).map(|k| if k == l { conf } else { rest }).collect())
            .collect();
        SeqTensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn flat_scores_have_no_boundaries() {
        assert!(detect_boundaries(&[0.0; 20], 0.5, 8).is_empty());
    }

    #[test]
    fn single_spike() {
        let mut s = vec![0.0; 20];
        s[7] = 0.9;
        assert_eq!(detect_boundaries(&s, 0.5, 8), vec![7]);
    }

    #[test]
    fn weaker_nearby_spike_is_suppressed() {
        let mut s = vec![0.0; 30];
        s[10] = 0.9;
        s[12] = 0.8;
        assert_eq!(detect_boundaries(&s, 0.5, 5), vec![10]);
        assert_eq!(detect_boundaries(&s, 0.5, 2), vec![10, 12]);
    }

    #[test]
    fn blip_is_voted_away_without_boundaries() {
        let mut labels = vec![0; 10];
        labels.extend([1, 1]);
        labels.extend(vec![0; 10]);
        let probs = one_hot(&labels, 2, 0.9);
        let refined = refine_prediction(&probs, &[]).unwrap();
        assert!(refined.iter().all(|&l| l == 0));
    }

    #[test]
    fn consistent_boundaries_reproduce_ground_truth() {
        let mut gt = vec![2; 15];
        gt.extend(vec![0; 9]);
        gt.extend(vec![1; 20]);
        let probs = one_hot(&gt, 3, 0.8);
        let b = frames_to_segments(&gt).unwrap().internal_boundaries();
        assert_eq!(&*refine_prediction(&probs, &b).unwrap(), gt.as_slice());
    }

    #[test]
    fn uniform_probs_pick_class_zero() {
        let probs = SeqTensor::full(&[12, 4], 0.25);
        let refined = refine_prediction(&probs, &[3, 7]).unwrap();
        assert!(refined.iter().all(|&l| l == 0));
    }

    #[test]
    fn invalid_boundaries_are_rejected() {
        let probs = SeqTensor::full(&[5, 2], 0.5);
        assert!(refine_prediction(&probs, &[0]).is_err());
        assert!(refine_prediction(&probs, &[5]).is_err());
        assert!(refine_prediction(&probs, &[3, 2]).is_err());
    }
}
