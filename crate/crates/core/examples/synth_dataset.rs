//! Synthetic sequences with surgical-phase-like durations.

use msbatn::pipeline::{synth_dataset, SynthSpec};

fn main() -> msbatn::Result<()> {
    let spec = SynthSpec::default();
    for (i, s) in synth_dataset(&spec, 3, 300)?.iter().enumerate() {
        let segs: Vec<String> = s
            .segments
            .items()
            .iter()
            .map(|g| format!("{}x{}", g.class, g.len()))
            .collect();
        println!(
            "seq {i}: {} frames, {} segments: {}",
            s.labels.len(),
            s.segments.len(),
            segs.join(" ")
        );
    }
    Ok(())
}
