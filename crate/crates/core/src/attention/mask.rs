use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowRole {
    Expanding,
    Shrinking,
}

/// One local attention window.
///
/// `dilation_rate` counts skipped frames: rate 0 is contiguous, rate `r`
/// visits every `(r + 1)`-th frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub one_sided_width: usize,
    pub dilation_rate: usize,
    pub causal: bool,
    pub role: WindowRole,
}

impl WindowSpec {
    pub fn new(
        one_sided_width: usize,
        dilation_rate: usize,
        causal: bool,
        role: WindowRole,
    ) -> Result<Self> {
        if one_sided_width == 0 {
            return Err(Error::invalid(
                "WindowSpec",
                "one-sided width must be at least 1",
            ));
        }
        Ok(WindowSpec {
            one_sided_width,
            dilation_rate,
            causal,
            role,
        })
    }

    /// Frames covered from the first to the last reachable key.
    pub fn receptive_span(&self) -> usize {
        let reach = self.one_sided_width * (self.dilation_rate + 1);
        if self.causal {
            reach + 1
        } else {
            2 * reach + 1
        }
    }
}

/// Knobs of the per-layer window ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub w_min: usize,
    pub w_max: usize,
    /// Dilation stops growing at this rate.
    pub rate_max: usize,
    /// Apply the layer's dilation to the shrinking group too.
    pub dilate_shrinking: bool,
    pub causal: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            w_min: 16,
            w_max: 256,
            rate_max: 4,
            dilate_shrinking: true,
            causal: false,
        }
    }
}

/// `(expanding, shrinking)` windows for each of `n_layers` layers with the
/// default ladder settings.
pub fn build_window_schedule(
    n_layers: usize,
    w_min: usize,
    w_max: usize,
) -> Result<Vec<(WindowSpec, WindowSpec)>> {
    build_window_schedule_with(
        n_layers,
        &WindowConfig {
            w_min,
            w_max,
            ..WindowConfig::default()
        },
    )
}

/// Expanding width doubles from `w_min` and clamps at `w_max`; the
/// shrinking width mirrors it as `w_min·w_max / expanding`.
pub fn build_window_schedule_with(
    n_layers: usize,
    cfg: &WindowConfig,
) -> Result<Vec<(WindowSpec, WindowSpec)>> {
    if n_layers == 0 {
        return Err(Error::invalid(
            "build_window_schedule",
            "need at least one layer",
        ));
    }
    if cfg.w_min == 0 || cfg.w_min > cfg.w_max {
        return Err(Error::invalid(
            "build_window_schedule",
            format!("window bounds {}..{} are not ordered", cfg.w_min, cfg.w_max),
        ));
    }
    (0..n_layers)
        .map(|layer| {
            let grown = cfg.w_min.saturating_mul(
                1usize
                    .checked_shl(layer.min(63) as u32)
                    .unwrap_or(usize::MAX),
            );
            let expanding = grown.min(cfg.w_max);
            let shrinking = (cfg.w_min * cfg.w_max / expanding).max(cfg.w_min);
            let rate = layer.min(cfg.rate_max);
            let shrink_rate = if cfg.dilate_shrinking { rate } else { 0 };
            Ok((
                WindowSpec::new(expanding, rate, cfg.causal, WindowRole::Expanding)?,
                WindowSpec::new(shrinking, shrink_rate, cfg.causal, WindowRole::Shrinking)?,
            ))
        })
        .collect()
}

/// Sparse boolean attention pattern stored row-compressed: the allowed
/// keys of query `i` are `keys[offsets[i]..offsets[i + 1]]`, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    t: usize,
    offsets: Vec<usize>,
    keys: Vec<usize>,
}

impl AttentionMask {
    /// From per-query key lists. Lists are sorted and deduplicated; an
    /// empty row or out-of-range key is an error.
    pub fn from_rows(t: usize, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != t {
            return Err(Error::invalid(
                "AttentionMask",
                format!("{} rows for T = {t}", rows.len()),
            ));
        }
        let mut offsets = Vec::with_capacity(t + 1);
        let mut keys = Vec::new();
        offsets.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut r = row.clone();
            r.sort_unstable();
            r.dedup();
            if r.is_empty() {
                return Err(Error::FullyMaskedRow { row: i });
            }
            if let Some(&k) = r.last().filter(|&&k| k >= t) {
                return Err(Error::invalid(
                    "AttentionMask",
                    format!("key {k} out of range for T = {t}"),
                ));
            }
            keys.extend(r);
            offsets.push(keys.len());
        }
        Ok(AttentionMask { t, offsets, keys })
    }

    pub fn dense(t: usize) -> Self {
        AttentionMask {
            t,
            offsets: (0..=t).map(|i| i * t).collect(),
            keys: (0..t).flat_map(|_| 0..t).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.keys[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.t).map(|i| self.row(i))
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn to_rows(&self) -> Vec<Vec<usize>> {
        self.rows().map(<[usize]>::to_vec).collect()
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub(crate) fn keys(&self) -> &[usize] {
        &self.keys
    }
}

pub fn build_sparse_mask(t: usize, spec: &WindowSpec) -> AttentionMask {
    let step = spec.dilation_rate + 1;
    let w = spec.one_sided_width;
    let mut offsets = Vec::with_capacity(t + 1);
    let mut keys = Vec::with_capacity(t * (2 * w + 1).min(t.max(1)));
    offsets.push(0);
    for i in 0..t {
        let back = (i / step).min(w);
        let fwd = if spec.causal {
            0
        } else {
            ((t - 1 - i) / step).min(w)
        };
        keys.extend((0..back).rev().map(|m| i - (m + 1) * step));
        keys.push(i);
        keys.extend((1..=fwd).map(|m| i + m * step));
        offsets.push(keys.len());
    }
    AttentionMask { t, offsets, keys }
}

/// Number of `(query, key)` pairs the mask allows.
pub fn attended_pairs_count(mask: &AttentionMask) -> usize {
    mask.keys.len()
}

/// Hierarchical scales for one sequence length.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSet {
    t: usize,
    /// Pooled length per scale, `ceil(t / 2^s)`.
    lengths: Vec<usize>,
    weights: Vec<f64>,
}

impl ScaleSet {
    /// `max(1, floor(log2(t / s_avg)))` scales, capped at `max_scales`, with
    /// uniform weights.
    pub fn for_length(t: usize, s_avg: usize, max_scales: usize) -> Result<Self> {
        if t == 0 || s_avg == 0 || max_scales == 0 {
            return Err(Error::invalid(
                "ScaleSet",
                format!(
                    "T = {t}, S_avg = {s_avg} and max scales = {max_scales} must all be positive"
                ),
            ));
        }
        let n = scale_count(t, s_avg).min(max_scales);
        Self::with_weights(t, vec![1.0 / n as f64; n])
    }

    pub fn with_weights(t: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("ScaleSet", "need at least one scale"));
        }
        if weights.len() > MAX_SCALES {
            return Err(Error::invalid(
                "ScaleSet",
                format!("at most {MAX_SCALES} scales"),
            ));
        }
        let lengths: Vec<usize> = (0..weights.len()).map(|s| t.div_ceil(1 << s)).collect();
        if t == 0 {
            return Err(Error::EmptyInput { op: "ScaleSet" });
        }
        Ok(ScaleSet {
            t,
            lengths,
            weights,
        })
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn count(&self) -> usize {
        self.lengths.len()
    }

    pub fn pooled_len(&self, s: usize) -> usize {
        self.lengths[s]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Pooled index of frame `i` at scale `s`.
    pub fn pooled_index(i: usize, s: usize) -> usize {
        i >> s
    }
}

/// Upper bound on scales, set by the width of the membership bitmask.
pub const MAX_SCALES: usize = 16;

pub fn scale_count(t: usize, s_avg: usize) -> usize {
    let ratio = t / s_avg.max(1);
    if ratio < 2 {
        1
    } else {
        ratio.ilog2() as usize
    }
}

/// Union of per-scale neighbourhoods with a membership bitmask per pair.
///
/// Bit `s` of `member(e)` says whether entry `e` belongs to the scale-`s`
/// neighbourhood; scales that do not contain a pair add nothing to its
/// score.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    union: AttentionMask,
    member: Vec<u16>,
    n_scales: usize,
}

impl Neighborhood {
    /// Single scale covering exactly the mask.
    pub fn from_mask(mask: AttentionMask) -> Self {
        let member = vec![1; mask.keys.len()];
        Neighborhood {
            union: mask,
            member,
            n_scales: 1,
        }
    }

    /// Union of several same-length masks, scale `s` taken from `masks[s]`.
    pub fn from_scale_masks(masks: &[AttentionMask]) -> Result<Self> {
        let first = masks
            .first()
            .ok_or(Error::invalid("Neighborhood", "need at least one scale"))?;
        if masks.len() > MAX_SCALES {
            return Err(Error::invalid(
                "Neighborhood",
                format!("at most {MAX_SCALES} scales"),
            ));
        }
        let t = first.t;
        if let Some(m) = masks.iter().find(|m| m.t != t) {
            return Err(Error::invalid(
                "Neighborhood",
                format!("masks for T = {t} and T = {}", m.t),
            ));
        }
        let mut offsets = vec![0];
        let mut keys = Vec::new();
        let mut member = Vec::new();
        let mut merged: Vec<(usize, u16)> = Vec::new();
        for i in 0..t {
            merged.clear();
            for (s, m) in masks.iter().enumerate() {
                merged.extend(m.row(i).iter().map(|&j| (j, 1u16 << s)));
            }
            merged.sort_unstable_by_key(|&(j, _)| j);
            for &(j, bit) in &merged {
                if keys.len() > offsets[i] && keys.last() == Some(&j) {
                    *member.last_mut().expect("parallel to keys") |= bit;
                } else {
                    keys.push(j);
                    member.push(bit);
                }
            }
            offsets.push(keys.len());
        }
        Ok(Neighborhood {
            union: AttentionMask { t, offsets, keys },
            member,
            n_scales: masks.len(),
        })
    }

    /// Phase-aligned dilated neighbourhoods: at scale `s` frame `i` sees
    /// frames `i + m·2^s` for `|m| ≤ window`, whose pooled indices are
    /// exactly `(i >> s) + m`.
    pub fn hierarchical(t: usize, n_scales: usize, window: usize, causal: bool) -> Result<Self> {
        let masks: Vec<AttentionMask> = (0..n_scales)
            .map(|s| {
                let spec = WindowSpec {
                    one_sided_width: window.max(1),
                    dilation_rate: (1 << s) - 1,
                    causal,
                    role: WindowRole::Expanding,
                };
                build_sparse_mask(t, &spec)
            })
            .collect();
        Self::from_scale_masks(&masks)
    }

    pub fn len(&self) -> usize {
        self.union.t
    }

    pub fn is_empty(&self) -> bool {
        self.union.t == 0
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    pub fn union(&self) -> &AttentionMask {
        &self.union
    }

    pub fn member(&self) -> &[u16] {
        &self.member
    }

    /// Membership bits of the entries in row `i`.
    pub fn row_member(&self, i: usize) -> &[u16] {
        &self.member[self.union.offsets[i]..self.union.offsets[i + 1]]
    }

    /// Scale-`s` neighbourhood on its own.
    pub fn scale_mask(&self, s: usize) -> AttentionMask {
        let rows: Vec<Vec<usize>> = (0..self.union.t)
            .map(|i| {
                self.union
                    .row(i)
                    .iter()
                    .zip(self.row_member(i))
                    .filter(|(_, &m)| m & (1 << s) != 0)
                    .map(|(&j, _)| j)
                    .collect()
            })
            .collect();
        AttentionMask {
            t: self.union.t,
            offsets: std::iter::once(0)
                .chain(rows.iter().scan(0, |acc, r| {
                    *acc += r.len();
                    Some(*acc)
                }))
                .collect(),
            keys: rows.into_iter().flatten().collect(),
        }
    }
}
