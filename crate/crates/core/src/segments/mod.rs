//! Frame labels, segment lists, transition buffers, boundary targets and
//! boundary-driven refinement.

mod format;
mod refine;

pub use format::{parse_segments, write_segments};
pub use refine::{detect_boundaries, refine_prediction};

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inclusive frame range carrying one action class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize, class: usize) -> Self {
        Segment { start, end, class }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Temporal centre, possibly half-integral.
    pub fn center(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }

    /// Frame-level intersection over union.
    pub fn iou(&self, other: &Segment) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        let inter = if hi >= lo { hi + 1 - lo } else { 0 };
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

/// Per-frame class ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelSequence(labels)
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.0.iter().enumerate().find(|(_, &c)| c >= classes) {
            Some((frame, &label)) => Err(Error::LabelOutOfRange {
                frame,
                label,
                classes,
            }),
            None => Ok(()),
        }
    }
}

impl Deref for LabelSequence {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for LabelSequence {
    fn from(v: Vec<usize>) -> Self {
        LabelSequence(v)
    }
}

/// Ordered segments tiling `[0, T-1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SegmentList(Vec<Segment>);

impl SegmentList {
    /// Validates tiling from frame 0 with no gaps or overlaps. Adjacent
    /// segments with equal class are rejected.
    pub fn new(items: Vec<Segment>) -> Result<Self> {
        validate_tiling(&items)?;
        for w in items.windows(2) {
            if w[0].class == w[1].class {
                return Err(Error::InvalidSegments(format!(
                    "adjacent segments {:?} and {:?} share class {}",
                    (w[0].start, w[0].end),
                    (w[1].start, w[1].end),
                    w[0].class
                )));
            }
        }
        Ok(SegmentList(items))
    }

    pub fn items(&self) -> &[Segment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of frames covered.
    pub fn frames(&self) -> usize {
        self.0.last().map_or(0, |s| s.end + 1)
    }

    pub fn classes(&self) -> Vec<usize> {
        self.0.iter().map(|s| s.class).collect()
    }

    /// Start frames of every segment but the first.
    pub fn internal_boundaries(&self) -> Vec<usize> {
        self.0.iter().skip(1).map(|s| s.start).collect()
    }

    /// Index of the segment containing frame `t`.
    pub fn segment_at(&self, t: usize) -> Option<&Segment> {
        let i = self.0.partition_point(|s| s.end < t);
        self.0.get(i).filter(|s| s.start <= t)
    }
}

fn validate_tiling(items: &[Segment]) -> Result<()> {
    let mut expected = 0usize;
    let mut prev = None::<&Segment>;
    for s in items {
        if s.start > s.end {
            return Err(Error::InvalidSegments(format!(
                "segment start {} exceeds end {}",
                s.start, s.end
            )));
        }
        let span = |p: Option<&Segment>| p.map_or((0, 0), |p| (p.start, p.end));
        if s.start > expected {
            return Err(Error::SegmentGap {
                prev: span(prev),
                next: (s.start, s.end),
            });
        }
        if s.start < expected {
            return Err(Error::SegmentOverlap {
                prev: span(prev),
                next: (s.start, s.end),
            });
        }
        expected = s.end + 1;
        prev = Some(s);
    }
    Ok(())
}

/// Maximal constant runs of `labels`.
pub fn frames_to_segments(labels: &[usize]) -> Result<SegmentList> {
    if labels.is_empty() {
        return Err(Error::EmptyInput {
            op: "frames_to_segments",
        });
    }
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            out.push(Segment::new(start, t - 1, labels[start]));
            start = t;
        }
    }
    Ok(SegmentList(out))
}

/// Expands segments back to per-frame labels. Unlike [`SegmentList::new`]
/// this accepts adjacent segments of equal class.
pub fn segments_to_frames(segments: &[Segment], t: usize) -> Result<LabelSequence> {
    validate_tiling(segments)?;
    let covered = segments.last().map_or(0, |s| s.end + 1);
    if covered != t {
        return Err(Error::InvalidSegments(format!(
            "segments cover {covered} frames, expected {t}"
        )));
    }
    let mut labels = Vec::with_capacity(t);
    for s in segments {
        labels.extend(std::iter::repeat_n(s.class, s.len()));
    }
    Ok(LabelSequence(labels))
}

/// Labels plus a per-frame flag for the transition zone at both ends of
/// each segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BufferedLabels {
    pub labels: LabelSequence,
    pub buffer_mask: Vec<bool>,
}

/// Frames flagged at each end of a segment of length `len`: 5 % of the
/// length rounded half-up, capped at `floor(len/2)`.
pub fn buffer_width(len: usize) -> usize {
    ((len + 10) / 20).min(len / 2)
}

pub fn make_transition_buffers(segments: &SegmentList) -> BufferedLabels {
    let t = segments.frames();
    let mut mask = vec![false; t];
    let mut labels = Vec::with_capacity(t);
    for s in segments.items() {
        let w = buffer_width(s.len());
        mask[s.start..s.start + w]
            .iter_mut()
            .for_each(|m| *m = true);
        mask[s.end + 1 - w..=s.end]
            .iter_mut()
            .for_each(|m| *m = true);
        labels.extend(std::iter::repeat_n(s.class, s.len()));
    }
    BufferedLabels {
        labels: LabelSequence(labels),
        buffer_mask: mask,
    }
}

pub(crate) fn gaussian(t: f64, center: f64, sigma: f64) -> f64 {
    let z = (t - center) / sigma;
    (-0.5 * z * z).exp()
}

/// How wide the centre and boundary Gaussians are.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaPolicy {
    /// Centre Gaussian σ = segment length / divisor.
    pub center_divisor: f64,
    /// Boundary Gaussian σ = fraction × shorter adjacent segment length.
    pub boundary_fraction: f64,
    /// Lower bound for both.
    pub min_sigma: f64,
}

impl Default for SigmaPolicy {
    fn default() -> Self {
        SigmaPolicy {
            center_divisor: 6.0,
            boundary_fraction: 0.05,
            min_sigma: 1.0,
        }
    }
}

impl SigmaPolicy {
    pub fn center(&self, len: usize) -> f64 {
        (len as f64 / self.center_divisor).max(self.min_sigma)
    }

    pub fn boundary(&self, left_len: usize, right_len: usize) -> f64 {
        (self.boundary_fraction * left_len.min(right_len) as f64).max(self.min_sigma)
    }

    /// Soft boundary target: the maximum over internal boundaries `b` of
    /// `exp(-(t-b)²/2σ_b²)`. Sequence endpoints are not boundaries.
    pub fn boundary_target(&self, segments: &SegmentList, t: usize) -> Vec<f64> {
        let peaks: Vec<(f64, f64)> = segments
            .items()
            .windows(2)
            .map(|w| (w[1].start as f64, self.boundary(w[0].len(), w[1].len())))
            .collect();
        max_of_gaussians(t, &peaks)
    }

    /// Weight profile for the truncated boundary loss: peaks of height 1 at
    /// the last frame of each segment and the first frame of the next, for
    /// every internal transition.
    pub fn boundary_weights(&self, segments: &SegmentList, t: usize) -> Vec<f64> {
        let peaks: Vec<(f64, f64)> = segments
            .items()
            .windows(2)
            .flat_map(|w| {
                let sigma = self.boundary(w[0].len(), w[1].len());
                [(w[0].end as f64, sigma), (w[1].start as f64, sigma)]
            })
            .collect();
        max_of_gaussians(t, &peaks)
    }

    /// `G(t)` for the similarity loss: a Gaussian centred on the segment
    /// that contains frame `t`.
    pub fn center_profile(&self, segments: &SegmentList) -> Vec<f64> {
        let mut out = Vec::with_capacity(segments.frames());
        for s in segments.items() {
            let sigma = self.center(s.len());
            out.extend((s.start..=s.end).map(|t| gaussian(t as f64, s.center(), sigma)));
        }
        out
    }
}

/// Width of the boundary Gaussian between two segments.
pub fn boundary_sigma(left_len: usize, right_len: usize) -> f64 {
    SigmaPolicy::default().boundary(left_len, right_len)
}

pub fn make_boundary_target(segments: &SegmentList, t: usize) -> Vec<f64> {
    SigmaPolicy::default().boundary_target(segments, t)
}

pub fn boundary_weight_profile(segments: &SegmentList, t: usize) -> Vec<f64> {
    SigmaPolicy::default().boundary_weights(segments, t)
}

pub(crate) fn max_of_gaussians(t: usize, peaks: &[(f64, f64)]) -> Vec<f64> {
    (0..t)
        .map(|i| {
            peaks
                .iter()
                .map(|&(c, s)| gaussian(i as f64, c, s))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Width of the segment-centre Gaussian used by the similarity loss.
pub fn center_sigma(len: usize) -> f64 {
    SigmaPolicy::default().center(len)
}

pub fn segment_center_profile(segments: &SegmentList) -> Vec<f64> {
    SigmaPolicy::default().center_profile(segments)
}
