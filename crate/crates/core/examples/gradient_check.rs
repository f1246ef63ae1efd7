//! Finite-difference check of the focal and dice losses.

use msbatn::losses::{dice_loss, focal_loss};
use msbatn::seqcore::gradcheck::{check_gradients, GradCheckOptions};
use msbatn::seqcore::SeqTensor;

fn main() -> msbatn::Result<()> {
    let (t, c) = (12, 4);
    let logits: Vec<f64> = (0..t * c)
        .map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0)
        .collect();
    let logits = SeqTensor::matrix(t, c, logits)?;
    let labels: Vec<usize> = (0..t).map(|i| i * c / t).collect();

    let focal = check_gradients(
        std::slice::from_ref(&logits),
        |g, v| focal_loss(g, v[0], &labels, 2.0, None),
        GradCheckOptions::default(),
    )?;
    println!("focal  max rel error {:.2e}", focal.max_rel_error());

    let dice = check_gradients(
        std::slice::from_ref(&logits),
        |g, v| {
            let p = g.softmax_rows(v[0])?;
            dice_loss(g, p, &labels, 1e-6)
        },
        GradCheckOptions::default(),
    )?;
    println!("dice   max rel error {:.2e}", dice.max_rel_error());
    Ok(())
}
