use std::sync::Arc;

use rand::Rng;

use super::{Neighborhood, ScaleSet};
use crate::seqcore::{init, BoundParams, Graph, ParamStore, SeqTensor, Var};
use crate::{Error, Result};

/// Graph handles of one attention layer: `[D×D]` projections for queries,
/// keys, values and output (heads are column blocks), plus optional
/// learnable scale weights.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    /// Raw per-scale weights; the effective weight is `raw_s / n_scales`.
    pub scale_w: Option<Var>,
    pub heads: usize,
}

const PROJECTIONS: [&str; 4] = ["q", "k", "v", "o"];

impl AttentionParams {
    /// Registers a layer's tensors under `prefix`. `learnable_scales` adds a
    /// raw scale-weight vector of that length, initialised to ones.
    pub fn init(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        d: usize,
        learnable_scales: Option<usize>,
    ) {
        for p in PROJECTIONS {
            init::linear(store, rng, &format!("{prefix}.{p}"), d, d);
        }
        if let Some(n) = learnable_scales {
            store.insert(format!("{prefix}.scale_w"), SeqTensor::full(&[n], 1.0));
        }
    }

    /// Scalars `init` adds for model width `d`.
    pub fn param_count(d: usize, learnable_scales: Option<usize>) -> usize {
        4 * (d * d + d) + learnable_scales.unwrap_or(0)
    }

    pub fn bind(bound: &BoundParams, prefix: &str, heads: usize) -> Result<Self> {
        let v = |name: &str| bound.var(&format!("{prefix}.{name}"));
        Ok(AttentionParams {
            wq: v("q.w")?,
            bq: v("q.b")?,
            wk: v("k.w")?,
            bk: v("k.b")?,
            wv: v("v.w")?,
            bv: v("v.b")?,
            wo: v("o.w")?,
            bo: v("o.b")?,
            scale_w: bound.get(&format!("{prefix}.scale_w")),
            heads,
        })
    }

    fn project(&self, g: &mut Graph, x: Var) -> Result<(Var, Var, Var)> {
        let d = g.shape(x).get(1).copied().unwrap_or(0);
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::invalid(
                "attention",
                format!("width {d} does not split into {} heads", self.heads),
            ));
        }
        Ok((
            g.linear(x, self.wq, self.bq)?,
            g.linear(x, self.wk, self.bk)?,
            g.linear(x, self.wv, self.bv)?,
        ))
    }
}

/// Dual sliding-window attention: the first half of the heads attend
/// through `expanding`, the second half through `shrinking`.
pub fn dswa_forward(
    g: &mut Graph,
    x: Var,
    expanding: &Arc<Neighborhood>,
    shrinking: &Arc<Neighborhood>,
    p: &AttentionParams,
) -> Result<Var> {
    if !p.heads.is_multiple_of(2) {
        return Err(Error::invalid(
            "dswa_forward",
            format!("{} heads cannot split into two groups", p.heads),
        ));
    }
    let t = g.shape(x)[0];
    for nb in [expanding, shrinking] {
        if nb.len() != t || nb.n_scales() != 1 {
            return Err(Error::invalid(
                "dswa_forward",
                format!("mask for T = {} used on T = {t}", nb.len()),
            ));
        }
    }
    let (q, k, v) = p.project(g, x)?;
    let d = g.shape(q)[1];
    let half = d / 2;
    let one = g.constant(SeqTensor::vector(vec![1.0]));
    let mut groups = Vec::with_capacity(2);
    for (range, nb) in [(0..half, expanding), (half..d, shrinking)] {
        let qs = g.slice_cols(q, range.start, range.end)?;
        let ks = g.slice_cols(k, range.start, range.end)?;
        let vs = g.slice_cols(v, range.start, range.end)?;
        groups.push(g.sparse_attention(&[qs], &[ks], vs, one, Arc::clone(nb), p.heads / 2)?);
    }
    let joined = g.concat_cols(groups[0], groups[1])?;
    g.linear(joined, p.wo, p.bo)
}

/// Hierarchical temporal attention over `scales`, with `nb` holding one
/// neighbourhood per scale.
pub fn hta_forward(
    g: &mut Graph,
    x: Var,
    scales: &ScaleSet,
    nb: &Arc<Neighborhood>,
    p: &AttentionParams,
) -> Result<Var> {
    let t = g.shape(x)[0];
    let n = scales.count();
    if scales.frames() != t || nb.len() != t || nb.n_scales() != n {
        return Err(Error::invalid(
            "hta_forward",
            format!(
                "input T = {t}, scale set T = {} with {n} scales, neighbourhood T = {} with {} scales",
                scales.frames(),
                nb.len(),
                nb.n_scales()
            ),
        ));
    }
    let (q, k, v) = p.project(g, x)?;
    let mut qs = vec![q];
    let mut ks = vec![k];
    for s in 1..n {
        qs.push(g.mean_pool_rows(q, 1 << s)?);
        ks.push(g.mean_pool_rows(k, 1 << s)?);
    }
    let w = match p.scale_w {
        Some(raw) => {
            let m = g.shape(raw)[0];
            if m < n {
                return Err(Error::invalid(
                    "hta_forward",
                    format!("{m} scale weights for {n} scales"),
                ));
            }
            let col = g.reshape(raw, &[m, 1])?;
            let head = g.slice_rows(col, 0, n)?;
            let flat = g.reshape(head, &[n])?;
            g.scale(flat, 1.0 / n as f64)
        }
        None => g.constant(SeqTensor::vector(scales.weights().to_vec())),
    };
    let att = g.sparse_attention(&qs, &ks, v, w, Arc::clone(nb), p.heads)?;
    g.linear(att, p.wo, p.bo)
}
