use super::{param_count, MaskPlan, ModelConfig};
use crate::Result;

/// Parameter and multiply-accumulate totals for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub params: usize,
    pub macs: u64,
    /// MACs spent inside sparse attention (scores and value mixing).
    pub attention_macs: u64,
    /// `(query, key)` pairs summed over every attention call.
    pub attended_pairs: u64,
}

impl CostReport {
    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

/// Exact parameter count and MAC estimate for a sequence of `t` frames.
///
/// MACs cover convolutions, projections, the MLP, the heads and sparse
/// attention at its attended pairs; normalisation and activations are not
/// counted.
pub fn count_params_flops(cfg: &ModelConfig, t: usize) -> Result<CostReport> {
    cfg.validate()?;
    if t == 0 {
        return Err(crate::Error::EmptyInput {
            op: "count_params_flops",
        });
    }
    let params = param_count(cfg);
    let tr = cfg.reduced_len(t) as u64;
    let (d, k, c) = (
        cfg.d_model as u64,
        cfg.kernel_size as u64,
        cfg.n_classes as u64,
    );
    let hidden = d * cfg.mlp_ratio as u64;

    let tcn_block = if cfg.tcn_depthwise {
        tr * d * k + tr * d * d
    } else {
        tr * d * d * k + tr * d * d
    };
    let tcn_stack = cfg.n_blocks as u64 * tcn_block;
    let heads = tr * d * (c + 1);

    let plan = MaskPlan::new(cfg, tr as usize)?;
    let mut attention_macs = 0u64;
    let mut pairs = 0u64;
    for (e, s) in &plan.windows {
        for nb in [e, s] {
            let n = nb.union().rows().map(<[usize]>::len).sum::<usize>() as u64;
            pairs += n;
            // Half of the model width per group: one score and one value MAC
            // per channel.
            attention_macs += 2 * n * d / 2;
        }
    }
    let hier_scored: u64 = plan
        .hierarchy
        .member()
        .iter()
        .map(|m| u64::from(m.count_ones()))
        .sum();
    let hier_pairs = plan.hierarchy.member().len() as u64;
    pairs += cfg.n_blocks as u64 * hier_pairs;
    attention_macs += cfg.n_blocks as u64 * (hier_scored * d + hier_pairs * d);

    let projections = 2 * 4 * tr * d * d;
    let mlp = 2 * tr * d * hidden;
    let encoder = tr * d * cfg.d_in as u64 * k
        + tcn_stack
        + cfg.n_blocks as u64 * (projections + mlp)
        + heads;
    let decoder = tr * (c + d) * d + tcn_stack + heads;
    let macs = encoder + attention_macs + cfg.n_decoders as u64 * decoder;
    Ok(CostReport {
        params,
        macs,
        attention_macs,
        attended_pairs: pairs,
    })
}
