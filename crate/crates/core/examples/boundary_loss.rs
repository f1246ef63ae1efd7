//! Boundary targets, Gaussian weights and the truncated boundary loss on a
//! toy labelling.

use msbatn::losses::gaussian_truncated_boundary_loss;
use msbatn::segments::{boundary_weight_profile, frames_to_segments, make_boundary_target};
use msbatn::seqcore::{Graph, SeqTensor};

fn main() -> msbatn::Result<()> {
    let labels: Vec<usize> = [vec![0; 20], vec![1; 10], vec![2; 30]].concat();
    let segs = frames_to_segments(&labels)?;
    let t = labels.len();
    let target = make_boundary_target(&segs, t);
    let weights = boundary_weight_profile(&segs, t);
    for f in 15..35 {
        println!(
            "frame {f:>2} label {} target {:.3} weight {:.3}",
            labels[f], target[f], weights[f]
        );
    }
    for (name, scores) in [
        ("perfect", target.clone()),
        ("flat 0.5", vec![0.5; t]),
        ("all zero", vec![0.0; t]),
    ] {
        let mut g = Graph::new();
        let s = g.constant(SeqTensor::vector(scores));
        let loss = gaussian_truncated_boundary_loss(&mut g, s, &target, &weights, 0.5)?;
        println!("{name:<9} loss {:.6}", g.value(loss).item());
    }
    Ok(())
}
