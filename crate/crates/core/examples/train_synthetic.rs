//! Overfits a reduced model on a handful of synthetic sequences.
//!
//! cargo run --release --example train_synthetic [epochs]

use std::time::Instant;

use msbatn::pipeline::{
    synth_dataset, train_with, ClassDuration, RunConfig, SynthSpec, TrainSample, SAR_RARP_DURATIONS,
};

fn main() -> msbatn::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(120);
    let spec = SynthSpec {
        durations: SAR_RARP_DURATIONS[1..5]
            .iter()
            .map(|&(mean_s, std_s)| ClassDuration { mean_s, std_s })
            .collect(),
        fps: 8.0,
        feature_dim: 32,
        seed: 7,
        ..SynthSpec::default()
    };
    let data: Vec<TrainSample> = synth_dataset(&spec, 5, 512)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| TrainSample {
            name: format!("seq_{i}"),
            features: s.features,
            labels: s.labels.into_inner(),
        })
        .collect();

    let mut run = RunConfig {
        max_epochs: epochs,
        patience: 0,
        ..RunConfig::default()
    };
    run.model.d_in = 32;
    run.model.d_model = 64;
    run.model.n_blocks = 4;
    run.model.n_decoders = 2;
    run.model.n_classes = 4;
    run.target_accuracy = Some(0.95);

    let start = Instant::now();
    let out = train_with(&run, &data, None, |e| {
        println!("{:.1}s {}", start.elapsed().as_secs_f64(), e.to_line())
    })?;
    println!(
        "best epoch {} loss {}",
        out.state.best_epoch, out.state.best_loss
    );
    Ok(())
}
