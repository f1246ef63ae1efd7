use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::seqcore::{init, ParamStore, SeqTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

struct Specs(Vec<ParamSpec>);

impl Specs {
    fn push(&mut self, name: String, shape: &[usize], init: Init) {
        self.0.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.push(
            format!("{prefix}.w"),
            &[d_in, d_out],
            Init::Glorot {
                fan_in: d_in,
                fan_out: d_out,
            },
        );
        self.push(format!("{prefix}.b"), &[d_out], Init::Zeros);
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.gain"), &[d], Init::Ones);
        self.push(format!("{prefix}.bias"), &[d], Init::Zeros);
    }

    fn tcn(&mut self, prefix: &str, cfg: &ModelConfig) {
        let (d, k) = (cfg.d_model, cfg.kernel_size);
        for l in 0..cfg.n_blocks {
            let p = format!("{prefix}.tcn.{l:02}");
            if cfg.tcn_depthwise {
                self.push(
                    format!("{p}.dw.w"),
                    &[d, k],
                    Init::Glorot {
                        fan_in: k,
                        fan_out: k,
                    },
                );
                self.push(format!("{p}.dw.b"), &[d], Init::Zeros);
            } else {
                self.push(
                    format!("{p}.conv.w"),
                    &[d, d, k],
                    Init::Glorot {
                        fan_in: d * k,
                        fan_out: d * k,
                    },
                );
                self.push(format!("{p}.conv.b"), &[d], Init::Zeros);
            }
            self.linear(&format!("{p}.pw"), d, d);
        }
    }

    fn heads(&mut self, prefix: &str, cfg: &ModelConfig) {
        self.linear(&format!("{prefix}.head.action"), cfg.d_model, cfg.n_classes);
        self.linear(&format!("{prefix}.head.boundary"), cfg.d_model, 1);
    }

    fn attention(&mut self, prefix: &str, cfg: &ModelConfig, scales: bool) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{p}"), cfg.d_model, cfg.d_model);
        }
        if scales && cfg.learnable_scale_weights {
            self.push(
                format!("{prefix}.scale_w"),
                &[cfg.hta_max_scales],
                Init::Ones,
            );
        }
    }
}

pub fn encoder_prefix() -> &'static str {
    "enc"
}

pub fn decoder_prefix(i: usize) -> String {
    format!("dec.{i}")
}

pub fn attention_block_prefix(l: usize) -> String {
    format!("enc.att.{l:02}")
}

/// Every trainable tensor of the model, in creation order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (d, k) = (cfg.d_model, cfg.kernel_size);
    let mut s = Specs(Vec::new());
    s.push(
        "enc.in.w".into(),
        &[d, cfg.d_in, k],
        Init::Glorot {
            fan_in: cfg.d_in * k,
            fan_out: d * k,
        },
    );
    s.push("enc.in.b".into(), &[d], Init::Zeros);
    s.tcn("enc", cfg);
    for l in 0..cfg.n_blocks {
        let p = attention_block_prefix(l);
        s.layer_norm(&format!("{p}.ln1"), d);
        s.attention(&format!("{p}.dswa"), cfg, false);
        s.layer_norm(&format!("{p}.ln2"), d);
        s.attention(&format!("{p}.hta"), cfg, true);
        s.layer_norm(&format!("{p}.ln3"), d);
        s.linear(&format!("{p}.mlp.fc1"), d, d * cfg.mlp_ratio);
        s.linear(&format!("{p}.mlp.fc2"), d * cfg.mlp_ratio, d);
    }
    s.layer_norm("enc.ln_out", d);
    s.heads("enc", cfg);
    for i in 0..cfg.n_decoders {
        let p = decoder_prefix(i);
        s.linear(&format!("{p}.in"), cfg.n_classes + d, d);
        s.tcn(&p, cfg);
        s.heads(&p, cfg);
    }
    s.0
}

pub fn param_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg).iter().map(ParamSpec::numel).sum()
}

/// Fresh parameters drawn from `cfg.seed`.
pub fn init_params(cfg: &ModelConfig) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    for spec in param_specs(cfg) {
        let value = match spec.init {
            Init::Glorot { fan_in, fan_out } => {
                init::glorot(&mut rng, &spec.shape, fan_in, fan_out)
            }
            Init::Zeros => SeqTensor::zeros(&spec.shape),
            Init::Ones => SeqTensor::full(&spec.shape, 1.0),
        };
        store.insert(spec.name, value);
    }
    store
}
