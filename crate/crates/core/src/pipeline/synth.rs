use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::segments::{frames_to_segments, LabelSequence, SegmentList};
use crate::seqcore::SeqTensor;
use crate::{Error, Result};

/// Mean and standard deviation of one class's segment duration, seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDuration {
    pub mean_s: f64,
    pub std_s: f64,
}

/// Recipe for prototype-plus-noise feature sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// One entry per class.
    pub durations: Vec<ClassDuration>,
    pub fps: f64,
    pub feature_dim: usize,
    /// Standard deviation of the class prototype entries.
    pub prototype_spread: f64,
    /// Fraction of each segment, at each end, blended with its neighbour.
    pub transition_fraction: f64,
    /// Standard deviation of the per-frame isotropic noise.
    pub noise: f64,
    pub seed: u64,
}

/// Segment durations of the suturing gesture classes, in seconds.
pub const SAR_RARP_DURATIONS: [(f64, f64); 8] = [
    (12.4, 17.2),
    (3.84, 2.66),
    (6.83, 5.65),
    (7.51, 3.79),
    (6.77, 3.73),
    (26.0, 7.65),
    (6.89, 5.31),
    (6.91, 5.41),
];

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            durations: SAR_RARP_DURATIONS
                .iter()
                .map(|&(mean_s, std_s)| ClassDuration { mean_s, std_s })
                .collect(),
            fps: 1.0,
            feature_dim: 64,
            prototype_spread: 1.0,
            transition_fraction: 0.05,
            noise: 0.5,
            seed: 0,
        }
    }
}

/// One generated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSequence {
    pub features: SeqTensor,
    pub labels: LabelSequence,
    pub segments: SegmentList,
}

impl SynthSpec {
    pub fn n_classes(&self) -> usize {
        self.durations.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() {
            return Err(Error::Config(
                "synthetic spec needs at least one class".into(),
            ));
        }
        if let Some(d) = self
            .durations
            .iter()
            .find(|d| !(d.mean_s > 0.0 && d.std_s >= 0.0))
        {
            return Err(Error::Config(format!(
                "class duration {d:?} needs mean > 0 and std ≥ 0"
            )));
        }
        if !(self.fps > 0.0) || self.feature_dim == 0 {
            return Err(Error::Config("fps and feature_dim must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.transition_fraction) {
            return Err(Error::Config(format!(
                "transition_fraction {} outside [0, 0.5)",
                self.transition_fraction
            )));
        }
        if !(self.noise >= 0.0 && self.prototype_spread >= 0.0) {
            return Err(Error::Config(
                "noise and prototype_spread must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Fixed per-class prototype vectors `[C × D]`.
    pub fn prototypes(&self) -> SeqTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX);
        let n = self.n_classes() * self.feature_dim;
        let data = match Normal::new(0.0, self.prototype_spread) {
            Ok(dist) => (0..n).map(|_| dist.sample(&mut rng)).collect(),
            Err(_) => vec![0.0; n],
        };
        SeqTensor::from_parts(vec![self.n_classes(), self.feature_dim], data)
    }

    /// One duration draw for `class`, in frames: a normal sample clamped to
    /// `mean ± 2·std` seconds, scaled by fps, rounded, at least one frame.
    pub fn sample_duration_frames(&self, class: usize, rng: &mut impl Rng) -> usize {
        let d = self.durations[class];
        let secs = match Normal::new(d.mean_s, d.std_s) {
            Ok(dist) if d.std_s > 0.0 => dist.sample(rng),
            _ => d.mean_s,
        };
        let lo = (d.mean_s - 2.0 * d.std_s).max(0.0);
        let secs = secs.clamp(lo, d.mean_s + 2.0 * d.std_s);
        ((secs * self.fps).round() as usize).max(1)
    }

    /// Shortest mean segment, in frames.
    pub fn min_mean_frames(&self) -> usize {
        self.durations
            .iter()
            .map(|d| ((d.mean_s * self.fps).round() as usize).max(1))
            .min()
            .unwrap_or(1)
    }
}

/// Class ids follow a ±1 random walk (reflecting at the ends); durations
/// are drawn per class and the last segment is cut to reach exactly
/// `t_target` frames.
fn sample_segments(spec: &SynthSpec, t_target: usize, rng: &mut impl Rng) -> Result<SegmentList> {
    let c = spec.n_classes();
    let mut class = rng.random_range(0..c);
    let mut labels = Vec::with_capacity(t_target);
    while labels.len() < t_target {
        let len = spec
            .sample_duration_frames(class, rng)
            .min(t_target - labels.len());
        labels.extend(std::iter::repeat_n(class, len));
        if c > 1 {
            class = match class {
                0 => 1,
                k if k == c - 1 => k - 1,
                k if rng.random_bool(0.5) => k + 1,
                k => k - 1,
            };
        }
    }
    frames_to_segments(&labels)
}

fn render(
    spec: &SynthSpec,
    protos: &SeqTensor,
    segs: &SegmentList,
    rng: &mut impl Rng,
) -> SeqTensor {
    let t = segs.frames();
    let d = spec.feature_dim;
    let mut data = Vec::with_capacity(t * d);
    for s in segs.items() {
        for _ in s.start..=s.end {
            data.extend_from_slice(protos.row(s.class));
        }
    }
    // Blend across each internal transition: the last `fraction·len` frames
    // of the left segment and the first of the right one ramp linearly
    // between the two prototypes.
    for w in segs.items().windows(2) {
        let (a, b) = (w[0], w[1]);
        let wa = (spec.transition_fraction * a.len() as f64).round() as usize;
        let wb = (spec.transition_fraction * b.len() as f64).round() as usize;
        let zone = wa + wb;
        if zone == 0 {
            continue;
        }
        let first = b.start - wa;
        for (k, f) in (first..b.start + wb).enumerate() {
            let lambda = (k as f64 + 0.5) / zone as f64;
            let (pa, pb) = (protos.row(a.class), protos.row(b.class));
            for j in 0..d {
                data[f * d + j] = (1.0 - lambda) * pa[j] + lambda * pb[j];
            }
        }
    }
    if spec.noise > 0.0 {
        let noise = Normal::new(0.0, spec.noise).expect("noise std is finite and positive");
        data.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    SeqTensor::from_parts(vec![t, d], data)
}

/// `n_sequences` sequences of exactly `t_target` frames each. Sequence `i`
/// draws from its own stream of the spec's seed, so any sequence can be
/// regenerated on its own.
pub fn synth_dataset(
    spec: &SynthSpec,
    n_sequences: usize,
    t_target: usize,
) -> Result<Vec<SynthSequence>> {
    spec.validate()?;
    if t_target < spec.min_mean_frames() {
        return Err(Error::invalid(
            "synth_dataset",
            format!(
                "{t_target} frames cannot hold one segment (shortest mean is {} frames)",
                spec.min_mean_frames()
            ),
        ));
    }
    let protos = spec.prototypes();
    (0..n_sequences)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let segments = sample_segments(spec, t_target, &mut rng)?;
            let features = render(spec, &protos, &segments, &mut rng);
            let labels = LabelSequence::new(
                segments
                    .items()
                    .iter()
                    .flat_map(|s| std::iter::repeat_n(s.class, s.len()))
                    .collect(),
            );
            Ok(SynthSequence {
                features,
                labels,
                segments,
            })
        })
        .collect()
}
