mod common;

use common::*;
use msbatn::losses::{combined_temporal_loss, LossTarget};
use msbatn::network::*;
use msbatn::seqcore::gradcheck::{check_gradients, GradCheckOptions};
use msbatn::seqcore::{BoundParams, ConvMode, Graph, ParamStore, SeqTensor};
use rand_chacha::ChaCha8Rng;

#[test]
fn default_param_count_is_near_reference() {
    let report = count_params_flops(&ModelConfig::default(), 2048).unwrap();
    let rel = report.params as f64 / 11.945e6 - 1.0;
    println!("default params {} ({:+.2}%)", report.params, rel * 100.0);
    assert!(rel.abs() < 0.2);
}

#[test]
fn single_linear_param_count() {
    let mut store = ParamStore::new();
    msbatn::seqcore::init::linear(&mut store, &mut rng(0), "l", 2048, 256);
    assert_eq!(store.scalar_count(), 2048 * 256 + 256);
}

#[test]
fn params_independent_of_length_and_window() {
    let cfg = ModelConfig::default();
    let a = count_params_flops(&cfg, 512).unwrap();
    let b = count_params_flops(&cfg, 4096).unwrap();
    assert_eq!(a.params, b.params);
    let mut wide = cfg.clone();
    wide.window.w_min *= 2;
    wide.window.w_max *= 2;
    let c = count_params_flops(&wide, 4096).unwrap();
    assert_eq!(c.params, b.params);
    assert!(c.attention_macs > b.attention_macs);
}

#[test]
fn receptive_field_arithmetic() {
    assert_eq!(receptive_field(10, 3, ConvMode::Causal), 2046);
    assert_eq!(receptive_field(10, 3, ConvMode::Acausal), 1023);
}

#[test]
fn shapes_and_determinism() {
    for stride in [1, 3] {
        let cfg = ModelConfig {
            stride,
            ..tiny_config()
        };
        let model = Model::new(cfg.clone()).unwrap();
        let x = random_matrix(&mut rng(1), 32, cfg.d_in, 1.0);
        let out = model.predict(&x).unwrap();
        assert_eq!(out.stages.len(), 2);
        for s in &out.stages {
            assert_eq!(s.action_logits.shape(), &[32, 3]);
            assert_eq!(s.boundary_scores.shape(), &[32]);
            assert!(s.boundary_scores.data().iter().all(|&b| b > 0.0 && b < 1.0));
        }
        assert_eq!(out, model.predict(&x).unwrap());
    }
    assert_eq!(
        ModelConfig {
            stride: 4,
            ..tiny_config()
        }
        .reduced_len(1000),
        250
    );
    let none = Model::new(ModelConfig {
        n_decoders: 0,
        ..tiny_config()
    })
    .unwrap();
    assert_eq!(
        none.predict(&SeqTensor::zeros(&[5, 6]))
            .unwrap()
            .stages
            .len(),
        1
    );
}

#[test]
fn zero_weight_tcn_block_is_identity() {
    let cfg = tiny_config();
    let mut model = Model::new(cfg).unwrap();
    for name in ["enc.tcn.00.dw.w", "enc.tcn.00.pw.w"] {
        model.params.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let x = random_matrix(&mut rng(2), 8, 12, 1.0);
    let xv = g.constant(x.clone());
    let y = tcn_block_forward(&mut g, xv, 0, ConvMode::Acausal, "enc", &p).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn decoder_features_are_causal() {
    let cfg = tiny_config();
    let model = Model::new(cfg.clone()).unwrap();
    let run = |enc: SeqTensor| {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let mut h = g.constant(enc);
        for l in 0..cfg.n_blocks {
            h = tcn_block_forward(&mut g, h, l, ConvMode::Causal, "dec.0", &p).unwrap();
        }
        g.value(h).clone()
    };
    let x = random_matrix(&mut rng(3), 8, 20, 1.0);
    let mut x2 = x.clone();
    for c in 0..8 {
        x2.data_mut()[c * 20 + 12] += 1.0;
    }
    let (a, b) = (run(x), run(x2));
    for c in 0..8 {
        assert_eq!(
            &a.data()[c * 20..c * 20 + 12],
            &b.data()[c * 20..c * 20 + 12]
        );
    }
}

#[test]
fn full_model_gradients() {
    // Every parameter tensor of the tiny model, checked through the
    // combined loss.
    let cfg = tiny_config();
    let model = Model::new(cfg.clone()).unwrap();
    let t = 32;
    let x = random_matrix(&mut rng(5), t, cfg.d_in, 1.0);
    let labels: Vec<usize> = (0..t).map(|i| (i / 11) % 3).collect();
    let target = LossTarget::new(&labels, cfg.n_classes, &cfg.loss).unwrap();
    let names: Vec<String> = model.params.names().map(str::to_owned).collect();
    let inputs: Vec<SeqTensor> = names
        .iter()
        .map(|n| model.params.get(n).unwrap().clone())
        .collect();
    let plan = model.mask_plan(t).unwrap();
    let report = check_gradients(
        &inputs,
        |g, vars| {
            let bound: BoundParams = names.iter().cloned().zip(vars.iter().copied()).collect();
            let xv = g.constant(x.clone());
            let pass = model.forward::<ChaCha8Rng>(g, &bound, xv, &plan, None)?;
            let (loss, _) = combined_temporal_loss(g, &pass.stages, &target, &cfg.loss)?;
            Ok(loss)
        },
        GradCheckOptions {
            step: 1e-6,
            max_entries: Some(6),
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    println!("max rel error {:.3e}", report.max_rel_error());
    assert!(report.max_rel_error() < 1e-3, "{:?}", report.rel_errors);
}
