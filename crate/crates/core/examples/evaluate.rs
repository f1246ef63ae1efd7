//! Frame accuracy, edit score and segmental F1 on a hand-made prediction.

use msbatn::metrics::{evaluate_all, IouRule, DEFAULT_THRESHOLDS};

fn main() -> msbatn::Result<()> {
    let gt: Vec<usize> = [vec![0; 10], vec![1; 10], vec![2; 10]].concat();
    let pred: Vec<usize> = [vec![0; 12], vec![1; 3], vec![2; 2], vec![1; 5], vec![2; 8]].concat();
    let report = evaluate_all(&pred, &gt, &DEFAULT_THRESHOLDS, IouRule::Strict)?;
    print!("{}", report.to_text(true));
    println!();
    print!("{}", report.to_key_values());
    Ok(())
}
