use std::sync::Arc;

use rand::Rng;

use super::params::{attention_block_prefix, decoder_prefix, encoder_prefix, init_params};
use super::ModelConfig;
use crate::attention::{
    build_sparse_mask, build_window_schedule_with, dswa_forward, hta_forward, AttentionParams,
    Neighborhood, ScaleSet,
};
use crate::losses::StageVars;
use crate::seqcore::{BoundParams, ConvMode, Graph, ParamStore, SeqTensor, Var};
use crate::{Error, Result};

/// Final predictions of one stage at original resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePrediction {
    /// `[T × C]`.
    pub action_logits: SeqTensor,
    /// `[T]`, each in `(0, 1)`.
    pub boundary_scores: SeqTensor,
}

impl StagePrediction {
    pub fn labels(&self) -> Vec<usize> {
        self.action_logits.argmax_rows()
    }

    /// Row-wise softmax of the logits.
    pub fn probabilities(&self) -> SeqTensor {
        let c = self.action_logits.cols();
        let mut p = self.action_logits.clone();
        for row in p.data_mut().chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        p
    }
}

/// Encoder stage first, then one entry per decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub stages: Vec<StagePrediction>,
}

impl ModelOutput {
    pub fn last(&self) -> &StagePrediction {
        self.stages.last().expect("at least the encoder stage")
    }
}

/// Masks and scales for one reduced length, shared by every block.
#[derive(Clone, Debug)]
pub struct MaskPlan {
    pub t_reduced: usize,
    /// `(expanding, shrinking)` per encoder block.
    pub windows: Vec<(Arc<Neighborhood>, Arc<Neighborhood>)>,
    pub scales: ScaleSet,
    pub hierarchy: Arc<Neighborhood>,
}

impl MaskPlan {
    pub fn new(cfg: &ModelConfig, t_reduced: usize) -> Result<Self> {
        let schedule = build_window_schedule_with(cfg.n_blocks, &cfg.window)?;
        let windows = schedule
            .iter()
            .map(|(e, s)| {
                (
                    Arc::new(Neighborhood::from_mask(build_sparse_mask(t_reduced, e))),
                    Arc::new(Neighborhood::from_mask(build_sparse_mask(t_reduced, s))),
                )
            })
            .collect();
        let scales = ScaleSet::for_length(t_reduced, cfg.s_avg, cfg.hta_max_scales)?;
        let hierarchy = Arc::new(Neighborhood::hierarchical(
            t_reduced,
            scales.count(),
            cfg.hta_window,
            cfg.window.causal,
        )?);
        Ok(MaskPlan {
            t_reduced,
            windows,
            scales,
            hierarchy,
        })
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub stages: Vec<StageVars>,
    /// `[T_reduced × d_model]` encoder output.
    pub encoder_features: Var,
    pub t_orig: usize,
    pub t_reduced: usize,
}

impl ForwardPass {
    pub fn output(&self, g: &Graph) -> ModelOutput {
        ModelOutput {
            stages: self
                .stages
                .iter()
                .map(|s| StagePrediction {
                    action_logits: g.value(s.logits).clone(),
                    boundary_scores: g.value(s.boundary).clone(),
                })
                .collect(),
        }
    }
}

/// One residual TCN block on `x[D × T]`: dilated convolution (dilation
/// `2^layer`), ReLU, 1×1 convolution, residual add.
pub fn tcn_block_forward(
    g: &mut Graph,
    x: Var,
    layer: usize,
    mode: ConvMode,
    prefix: &str,
    p: &BoundParams,
) -> Result<Var> {
    let dilation = 1usize << layer;
    let pfx = format!("{prefix}.tcn.{layer:02}");
    let h = match p.get(&format!("{pfx}.dw.w")) {
        Some(w) => {
            let b = p.var(&format!("{pfx}.dw.b"))?;
            g.depthwise_conv1d(x, w, Some(b), dilation, mode, 1)?
        }
        None => {
            let w = p.var(&format!("{pfx}.conv.w"))?;
            let b = p.var(&format!("{pfx}.conv.b"))?;
            g.conv1d(x, w, Some(b), dilation, mode, 1)?
        }
    };
    let h = g.relu(h);
    // 1×1 convolution: W^T · h with W stored as [D_in × D_out].
    let w = p.var(&format!("{pfx}.pw.w"))?;
    let wt = g.transpose(w)?;
    let h = g.matmul(wt, h)?;
    let h = g.add_col_bias(h, p.var(&format!("{pfx}.pw.b"))?)?;
    g.add(x, h)
}

fn tcn_stack(
    g: &mut Graph,
    mut x: Var,
    cfg: &ModelConfig,
    mode: ConvMode,
    prefix: &str,
    p: &BoundParams,
) -> Result<Var> {
    for l in 0..cfg.n_blocks {
        x = tcn_block_forward(g, x, l, mode, prefix, p)?;
    }
    Ok(x)
}

/// Linear interpolation from `ceil(t_orig / stride)` rows back to `t_orig`.
pub fn upsample_to_original(g: &mut Graph, x: Var, t_orig: usize, stride: usize) -> Result<Var> {
    g.upsample_linear_rows(x, t_orig, stride)
}

fn layer_norm(g: &mut Graph, x: Var, prefix: &str, p: &BoundParams, eps: f64) -> Result<Var> {
    let gain = p.var(&format!("{prefix}.gain"))?;
    let bias = p.var(&format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias, eps)
}

fn linear(g: &mut Graph, x: Var, prefix: &str, p: &BoundParams) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    g.linear(x, w, b)
}

/// Action and boundary heads on `[T_r × D]` features, lifted to `t_orig`.
fn heads(
    g: &mut Graph,
    features: Var,
    prefix: &str,
    cfg: &ModelConfig,
    t_orig: usize,
    p: &BoundParams,
) -> Result<StageVars> {
    let logits = linear(g, features, &format!("{prefix}.head.action"), p)?;
    let logits = upsample_to_original(g, logits, t_orig, cfg.stride)?;
    let raw = linear(g, features, &format!("{prefix}.head.boundary"), p)?;
    let raw = upsample_to_original(g, raw, t_orig, cfg.stride)?;
    let scores = g.sigmoid(raw);
    let boundary = g.reshape(scores, &[t_orig])?;
    let features = upsample_to_original(g, features, t_orig, cfg.stride)?;
    Ok(StageVars {
        logits,
        boundary,
        features,
    })
}

fn attention_block(
    g: &mut Graph,
    h: Var,
    l: usize,
    plan: &MaskPlan,
    cfg: &ModelConfig,
    p: &BoundParams,
) -> Result<Var> {
    let pfx = attention_block_prefix(l);
    let eps = cfg.layer_norm_eps;

    let n = layer_norm(g, h, &format!("{pfx}.ln1"), p, eps)?;
    let dswa = AttentionParams::bind(p, &format!("{pfx}.dswa"), cfg.heads)?;
    let (exp, shr) = &plan.windows[l];
    let a = dswa_forward(g, n, exp, shr, &dswa)?;
    let h = g.add(h, a)?;

    let n = layer_norm(g, h, &format!("{pfx}.ln2"), p, eps)?;
    let hta = AttentionParams::bind(p, &format!("{pfx}.hta"), cfg.heads)?;
    let a = hta_forward(g, n, &plan.scales, &plan.hierarchy, &hta)?;
    let h = g.add(h, a)?;

    let n = layer_norm(g, h, &format!("{pfx}.ln3"), p, eps)?;
    let m = linear(g, n, &format!("{pfx}.mlp.fc1"), p)?;
    let m = g.gelu(m);
    let m = linear(g, m, &format!("{pfx}.mlp.fc2"), p)?;
    g.add(h, m)
}

/// Whole-channel dropout with survivors scaled by `1 / (1 - rate)`.
fn temporal_dropout(g: &mut Graph, x: Var, rate: f64, rng: &mut impl Rng) -> Result<Var> {
    let (t, d) = (g.shape(x)[0], g.shape(x)[1]);
    let keep = 1.0 / (1.0 - rate);
    let col: Vec<f64> = (0..d)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let mask: Vec<f64> = (0..t).flat_map(|_| col.iter().copied()).collect();
    let m = g.constant(SeqTensor::from_parts(vec![t, d], mask));
    g.mul(x, m)
}

/// Encoder on `x[T × d_in]`: returns `[T_r × d_model]` features and the
/// first stage.
pub fn encoder_forward<R: Rng>(
    g: &mut Graph,
    x: Var,
    cfg: &ModelConfig,
    plan: &MaskPlan,
    p: &BoundParams,
    dropout: Option<&mut R>,
) -> Result<(Var, StageVars)> {
    let (t, d_in) = match g.shape(x) {
        &[t, d] => (t, d),
        s => {
            return Err(Error::invalid(
                "encoder_forward",
                format!("input shape {s:?}"),
            ))
        }
    };
    if d_in != cfg.d_in {
        return Err(Error::shape("encoder_forward", &[t, d_in], &[t, cfg.d_in]));
    }
    if t == 0 {
        return Err(Error::EmptyInput {
            op: "encoder_forward",
        });
    }
    if plan.t_reduced != cfg.reduced_len(t) {
        return Err(Error::invalid(
            "encoder_forward",
            format!(
                "mask plan for {} frames, input reduces to {}",
                plan.t_reduced,
                cfg.reduced_len(t)
            ),
        ));
    }
    let x = match dropout {
        Some(rng) if cfg.temporal_dropout > 0.0 => {
            temporal_dropout(g, x, cfg.temporal_dropout, rng)?
        }
        _ => x,
    };
    let xt = g.transpose(x)?;
    let h = g.conv1d(
        xt,
        p.var("enc.in.w")?,
        Some(p.var("enc.in.b")?),
        1,
        ConvMode::Acausal,
        cfg.stride,
    )?;
    let h = tcn_stack(g, h, cfg, ConvMode::Acausal, encoder_prefix(), p)?;
    let mut h = g.transpose(h)?;
    for l in 0..cfg.n_blocks {
        h = attention_block(g, h, l, plan, cfg, p)?;
    }
    let features = layer_norm(g, h, "enc.ln_out", p, cfg.layer_norm_eps)?;
    let stage = heads(g, features, encoder_prefix(), cfg, t, p)?;
    Ok((features, stage))
}

/// Refinement stage `index`: previous probabilities (pooled to `T_r`) next
/// to the encoder features, projected to `d_model` and passed through a
/// causal TCN stack.
pub fn decoder_forward(
    g: &mut Graph,
    prev: &StageVars,
    encoder_features: Var,
    index: usize,
    cfg: &ModelConfig,
    p: &BoundParams,
) -> Result<StageVars> {
    let t_orig = g.shape(prev.logits)[0];
    let t_r = g.shape(encoder_features)[0];
    if cfg.reduced_len(t_orig) != t_r || g.shape(prev.logits)[1] != cfg.n_classes {
        return Err(Error::invalid(
            "decoder_forward",
            format!(
                "stage {:?} does not match {t_r} encoder frames and {} classes",
                g.shape(prev.logits),
                cfg.n_classes
            ),
        ));
    }
    let probs = g.softmax_rows(prev.logits)?;
    let probs = if cfg.stride > 1 {
        g.mean_pool_rows(probs, cfg.stride)?
    } else {
        probs
    };
    let pfx = decoder_prefix(index);
    let joined = g.concat_cols(probs, encoder_features)?;
    let h = linear(g, joined, &format!("{pfx}.in"), p)?;
    let h = g.transpose(h)?;
    let h = tcn_stack(g, h, cfg, ConvMode::Causal, &pfx, p)?;
    let features = g.transpose(h)?;
    heads(g, features, &pfx, cfg, t_orig, p)
}

/// Parameters plus configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let want = super::param_specs(&config);
        for spec in &want {
            match params.get(&spec.name) {
                Some(t) if t.shape() == spec.shape.as_slice() => {}
                Some(t) => return Err(Error::shape("Model::from_parts", t.shape(), &spec.shape)),
                None => return Err(Error::Config(format!("missing parameter {}", spec.name))),
            }
        }
        if params.len() != want.len() {
            return Err(Error::Config(format!(
                "{} parameters stored, configuration expects {}",
                params.len(),
                want.len()
            )));
        }
        Ok(Model { config, params })
    }

    pub fn mask_plan(&self, t: usize) -> Result<MaskPlan> {
        MaskPlan::new(&self.config, self.config.reduced_len(t))
    }

    /// Encoder plus every decoder on `x`. Passing a generator enables
    /// temporal dropout.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        x: Var,
        plan: &MaskPlan,
        dropout: Option<&mut R>,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let t_orig = g.shape(x)[0];
        let (features, stage0) = encoder_forward(g, x, cfg, plan, p, dropout)?;
        let mut stages = vec![stage0];
        for i in 0..cfg.n_decoders {
            let prev = *stages.last().expect("encoder stage");
            stages.push(decoder_forward(g, &prev, features, i, cfg, p)?);
        }
        Ok(ForwardPass {
            stages,
            encoder_features: features,
            t_orig,
            t_reduced: plan.t_reduced,
        })
    }

    /// Inference pass without dropout or gradients.
    pub fn predict(&self, x: &SeqTensor) -> Result<ModelOutput> {
        let plan = self.mask_plan(x.rows())?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let pass = self.forward::<rand_chacha::ChaCha8Rng>(&mut g, &p, xv, &plan, None)?;
        Ok(pass.output(&g))
    }
}
