//! Boundary detection and centre-weighted refinement cleaning up blips.

use msbatn::metrics::{edit_score, segmental_f1, IouRule};
use msbatn::segments::{detect_boundaries, frames_to_segments, refine_prediction};
use msbatn::seqcore::SeqTensor;

fn main() -> msbatn::Result<()> {
    let gt: Vec<usize> = [vec![0; 40], vec![1; 30], vec![2; 50]].concat();
    let t = gt.len();
    let c = 3;
    let mut probs = vec![0.0; t * c];
    for (f, &k) in gt.iter().enumerate() {
        // Short wrong-class blips every 17 frames.
        let k = if f % 17 < 2 && f > 5 { (k + 1) % c } else { k };
        for j in 0..c {
            probs[f * c + j] = if j == k { 0.8 } else { 0.1 };
        }
    }
    let probs = SeqTensor::matrix(t, c, probs)?;
    let raw = probs.argmax_rows();

    let mut scores = vec![0.05; t];
    for b in [40usize, 70] {
        scores[b - 1] = 0.6;
        scores[b] = 0.9;
        scores[b + 1] = 0.6;
    }
    let boundaries = detect_boundaries(&scores, 0.5, 8);
    let refined = refine_prediction(&probs, &boundaries)?;

    let gt_segs = frames_to_segments(&gt)?;
    for (name, pred) in [("raw", raw.as_slice()), ("refined", &refined[..])] {
        let segs = frames_to_segments(pred)?;
        let f1 = segmental_f1(segs.items(), gt_segs.items(), 0.5, IouRule::Strict);
        println!(
            "{name:<8} segments {:>2}  edit {:.3}  F1@50 {:.3}",
            segs.len(),
            edit_score(pred, &gt),
            f1.f1
        );
    }
    println!("boundaries {boundaries:?}");
    Ok(())
}
