//! Training objective: focal classification, soft Dice, Gaussian-weighted
//! cosine similarity between neighbouring frames and a Gaussian-weighted
//! truncated squared error on boundary scores.
//!
//! Every component is a mean over frames (or frame pairs) so magnitudes do
//! not depend on sequence length.

use serde::{Deserialize, Serialize};

use crate::segments::{frames_to_segments, gaussian, SegmentList, SigmaPolicy};
use crate::seqcore::{Graph, SeqTensor, Var};
use crate::{Error, Result};

/// Multipliers of the four components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.2,
            gamma: 0.5,
            delta: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got {all:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    Uniform,
    /// Per sequence, class `c` gets `T / (n_present · count_c)`.
    InverseFrequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub focal_gamma: f64,
    pub dice_smooth: f64,
    pub tau: f64,
    pub sigma: SigmaPolicy,
    pub class_weighting: ClassWeighting,
    /// Average the loss over every stage rather than scoring the last one.
    pub deep_supervision: bool,
    /// Norm floor inside the cosine.
    pub cosine_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            focal_gamma: 2.0,
            dice_smooth: 1e-6,
            tau: 0.5,
            sigma: SigmaPolicy::default(),
            class_weighting: ClassWeighting::Uniform,
            deep_supervision: true,
            cosine_eps: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.focal_gamma >= 0.0 && self.dice_smooth >= 0.0 && self.tau > 0.0) {
            return Err(Error::Config(
                "focal_gamma and dice_smooth must be non-negative and tau positive".into(),
            ));
        }
        if !(self.sigma.center_divisor > 0.0
            && self.sigma.boundary_fraction > 0.0
            && self.sigma.min_sigma > 0.0)
        {
            return Err(Error::Config("sigma policy values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    SegmentCenter,
    BoundaryPeak,
}

/// One Gaussian bump, optionally confined to a frame range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub center: f64,
    pub sigma: f64,
    /// Inclusive frames the bump applies to; `None` means everywhere.
    pub span: Option<(usize, usize)>,
}

/// Per-frame Gaussian weights: the maximum over the peaks that apply.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianProfile {
    pub kind: ProfileKind,
    pub peaks: Vec<Peak>,
}

impl GaussianProfile {
    /// One bump per segment at its centre, applying only inside it.
    pub fn segment_centers(segments: &SegmentList, policy: &SigmaPolicy) -> Self {
        GaussianProfile {
            kind: ProfileKind::SegmentCenter,
            peaks: segments
                .items()
                .iter()
                .map(|s| Peak {
                    center: s.center(),
                    sigma: policy.center(s.len()),
                    span: Some((s.start, s.end)),
                })
                .collect(),
        }
    }

    /// Bumps at the last frame before and the first frame after every
    /// internal transition.
    pub fn boundary_peaks(segments: &SegmentList, policy: &SigmaPolicy) -> Self {
        GaussianProfile {
            kind: ProfileKind::BoundaryPeak,
            peaks: segments
                .items()
                .windows(2)
                .flat_map(|w| {
                    let sigma = policy.boundary(w[0].len(), w[1].len());
                    [w[0].end, w[1].start].map(|c| Peak {
                        center: c as f64,
                        sigma,
                        span: None,
                    })
                })
                .collect(),
        }
    }

    pub fn evaluate(&self, t: usize) -> Vec<f64> {
        (0..t)
            .map(|i| {
                self.peaks
                    .iter()
                    .filter(|p| p.span.is_none_or(|(a, b)| (a..=b).contains(&i)))
                    .map(|p| gaussian(i as f64, p.center, p.sigma))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

fn constant_vec(g: &mut Graph, v: Vec<f64>) -> Var {
    g.constant(SeqTensor::vector(v))
}

/// Weighted sum `Σ w_i x_i` of a vector node with constant weights.
fn weighted_sum(g: &mut Graph, x: Var, w: Vec<f64>) -> Result<Var> {
    let wv = constant_vec(g, w);
    let p = g.mul(x, wv)?;
    Ok(g.sum(p))
}

fn check_labels(op: &'static str, g: &Graph, x: Var, labels: &[usize]) -> Result<(usize, usize)> {
    let s = g.shape(x);
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape(op, s, &[labels.len(), 0]));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput { op });
    }
    if let Some((frame, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= s[1]) {
        return Err(Error::LabelOutOfRange {
            frame,
            label,
            classes: s[1],
        });
    }
    Ok((s[0], s[1]))
}

/// Per-class weights for `labels` under `scheme`, length `c`.
pub fn class_weights(labels: &[usize], c: usize, scheme: ClassWeighting) -> Vec<f64> {
    match scheme {
        ClassWeighting::Uniform => vec![1.0; c],
        ClassWeighting::InverseFrequency => {
            let mut counts = vec![0usize; c];
            labels.iter().for_each(|&l| counts[l] += 1);
            let present = counts.iter().filter(|&&n| n > 0).count().max(1);
            counts
                .iter()
                .map(|&n| {
                    if n == 0 {
                        0.0
                    } else {
                        labels.len() as f64 / (present * n) as f64
                    }
                })
                .collect()
        }
    }
}

/// Mean over frames of `-(1 - p_t)^γ · log p_t`, optionally class-weighted
/// (the weighted form divides by the summed frame weights).
pub fn focal_loss(
    g: &mut Graph,
    logits: Var,
    labels: &[usize],
    gamma_f: f64,
    weights: Option<&[f64]>,
) -> Result<Var> {
    let (t, c) = check_labels("focal_loss", g, logits, labels)?;
    if gamma_f < 0.0 {
        return Err(Error::invalid("focal_loss", "gamma must be non-negative"));
    }
    let logp = g.log_softmax_rows(logits)?;
    let lp = g.pick(logp, labels)?;
    let term = if gamma_f == 0.0 {
        lp
    } else {
        let p = g.exp(lp);
        let neg = g.scale(p, -1.0);
        let one_minus = g.offset(neg, 1.0);
        let base = g.relu(one_minus);
        let modulator = g.powf(base, gamma_f);
        g.mul(modulator, lp)?
    };
    let frame_w: Vec<f64> = match weights {
        Some(w) if w.len() == c => labels.iter().map(|&l| w[l]).collect(),
        Some(w) => return Err(Error::shape("focal_loss", &[w.len()], &[c])),
        None => vec![1.0; t],
    };
    let total: f64 = frame_w.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("focal_loss", "class weights sum to zero"));
    }
    let s = weighted_sum(g, term, frame_w)?;
    Ok(g.scale(s, -1.0 / total))
}

/// `1 -` mean soft Dice over the classes present in `labels`.
pub fn dice_loss(g: &mut Graph, probs: Var, labels: &[usize], smooth: f64) -> Result<Var> {
    let (t, c) = check_labels("dice_loss", g, probs, labels)?;
    let mut onehot = vec![0.0; t * c];
    let mut ysum = vec![0.0; c];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * c + l] = 1.0;
        ysum[l] += 1.0;
    }
    let present: Vec<f64> = ysum
        .iter()
        .map(|&n| if n > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let n_present: f64 = present.iter().sum();
    let y = g.constant(SeqTensor::from_parts(vec![t, c], onehot));
    let py = g.mul(probs, y)?;
    let inter = g.column_sums(py)?;
    let inter2 = g.scale(inter, 2.0);
    let num = g.offset(inter2, smooth);
    let psum = g.column_sums(probs)?;
    let yconst = constant_vec(g, ysum.iter().map(|v| v + smooth).collect());
    let den = g.add(psum, yconst)?;
    let dice = g.div(num, den)?;
    let mean = weighted_sum(g, dice, present)?;
    let neg = g.scale(mean, -1.0 / n_present);
    Ok(g.offset(neg, 1.0))
}

/// `Σ_t G(t)·(1 − cos(f_t, f_{t+1})) / (T − 1)` where `G` comes from the
/// segment containing the left frame of each pair.
pub fn gaussian_cosine_similarity_loss(
    g: &mut Graph,
    features: Var,
    profile: &GaussianProfile,
    eps: f64,
) -> Result<Var> {
    let s = g.shape(features);
    if s.len() != 2 || s[0] < 2 {
        return Err(Error::invalid(
            "gaussian_cosine_similarity_loss",
            format!("need at least two frames, got shape {s:?}"),
        ));
    }
    let t = s[0];
    let mut w = profile.evaluate(t);
    w.pop();
    let g_total: f64 = w.iter().sum();
    let a = g.slice_rows(features, 0, t - 1)?;
    let b = g.slice_rows(features, 1, t)?;
    let cos = g.cosine_rows(a, b, eps)?;
    let wc = weighted_sum(g, cos, w)?;
    let neg = g.scale(wc, -1.0 / (t - 1) as f64);
    Ok(g.offset(neg, g_total / (t - 1) as f64))
}

/// `Σ_t G_b(t)·min((b̂_t − b_t)², τ) / T`.
pub fn gaussian_truncated_boundary_loss(
    g: &mut Graph,
    scores: Var,
    target: &[f64],
    weights: &[f64],
    tau: f64,
) -> Result<Var> {
    let t = target.len();
    if g.shape(scores) != [t] || weights.len() != t {
        return Err(Error::shape(
            "gaussian_truncated_boundary_loss",
            g.shape(scores),
            &[t],
        ));
    }
    if t == 0 {
        return Err(Error::EmptyInput {
            op: "gaussian_truncated_boundary_loss",
        });
    }
    if tau <= 0.0 {
        return Err(Error::invalid(
            "gaussian_truncated_boundary_loss",
            "tau must be positive",
        ));
    }
    let b = constant_vec(g, target.to_vec());
    let diff = g.sub(scores, b)?;
    let sq = g.mul(diff, diff)?;
    let capped = g.clamp_max(sq, tau);
    let s = weighted_sum(g, capped, weights.to_vec())?;
    Ok(g.scale(s, 1.0 / t as f64))
}

/// Everything the loss needs about one labelled sequence, computed once.
#[derive(Clone, Debug)]
pub struct LossTarget {
    pub labels: Vec<usize>,
    pub segments: SegmentList,
    pub n_classes: usize,
    pub center_profile: GaussianProfile,
    pub boundary_profile: GaussianProfile,
    pub boundary_target: Vec<f64>,
    pub boundary_weights: Vec<f64>,
    pub class_weights: Option<Vec<f64>>,
}

impl LossTarget {
    pub fn new(labels: &[usize], n_classes: usize, cfg: &LossConfig) -> Result<Self> {
        if let Some((frame, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                frame,
                label,
                classes: n_classes,
            });
        }
        let segments = frames_to_segments(labels)?;
        let t = labels.len();
        let boundary_profile = GaussianProfile::boundary_peaks(&segments, &cfg.sigma);
        Ok(LossTarget {
            labels: labels.to_vec(),
            center_profile: GaussianProfile::segment_centers(&segments, &cfg.sigma),
            boundary_weights: boundary_profile.evaluate(t),
            boundary_target: cfg.sigma.boundary_target(&segments, t),
            boundary_profile,
            class_weights: match cfg.class_weighting {
                ClassWeighting::Uniform => None,
                scheme => Some(class_weights(labels, n_classes, scheme)),
            },
            segments,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Graph nodes of one prediction stage at original resolution.
#[derive(Clone, Copy, Debug)]
pub struct StageVars {
    /// `[T × C]` action logits.
    pub logits: Var,
    /// `[T]` boundary scores after the sigmoid.
    pub boundary: Var,
    /// `[T × D]` features feeding the heads.
    pub features: Var,
}

/// Component values, averaged over the scored stages.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub class: f64,
    pub dice: f64,
    pub similarity: f64,
    pub boundary: f64,
}

impl LossBreakdown {
    /// First non-finite component, by name.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        [
            ("class", self.class),
            ("dice", self.dice),
            ("similarity", self.similarity),
            ("boundary", self.boundary),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Weighted component sum, averaged over stages (or only the last stage
/// without deep supervision).
pub fn combined_temporal_loss(
    g: &mut Graph,
    stages: &[StageVars],
    target: &LossTarget,
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    let scored: &[StageVars] = match stages {
        [] => return Err(Error::invalid("combined_temporal_loss", "no stages")),
        s if cfg.deep_supervision => s,
        s => &s[s.len() - 1..],
    };
    let w = cfg.weights;
    let mut parts = LossBreakdown::default();
    let mut stage_totals = Vec::with_capacity(scored.len());
    for st in scored {
        let lc = focal_loss(
            g,
            st.logits,
            &target.labels,
            cfg.focal_gamma,
            target.class_weights.as_deref(),
        )?;
        let probs = g.softmax_rows(st.logits)?;
        let ld = dice_loss(g, probs, &target.labels, cfg.dice_smooth)?;
        let ls = gaussian_cosine_similarity_loss(
            g,
            st.features,
            &target.center_profile,
            cfg.cosine_eps,
        )?;
        let lb = gaussian_truncated_boundary_loss(
            g,
            st.boundary,
            &target.boundary_target,
            &target.boundary_weights,
            cfg.tau,
        )?;
        parts.class += g.value(lc).item();
        parts.dice += g.value(ld).item();
        parts.similarity += g.value(ls).item();
        parts.boundary += g.value(lb).item();
        let terms = [(lc, w.alpha), (ld, w.beta), (ls, w.gamma), (lb, w.delta)];
        let mut acc: Option<Var> = None;
        for (v, k) in terms {
            let scaled = g.scale(v, k);
            acc = Some(match acc {
                None => scaled,
                Some(a) => g.add(a, scaled)?,
            });
        }
        stage_totals.push(acc.expect("four terms"));
    }
    let n = scored.len() as f64;
    let mut total = stage_totals[0];
    for &s in &stage_totals[1..] {
        total = g.add(total, s)?;
    }
    let total = g.scale(total, 1.0 / n);
    parts.class /= n;
    parts.dice /= n;
    parts.similarity /= n;
    parts.boundary /= n;
    parts.total = g.value(total).item();
    Ok((total, parts))
}
