//! Receptive field of the dilated temporal convolution stack.

use msbatn::network::receptive_field;
use msbatn::seqcore::ConvMode;

fn main() {
    println!("blocks  causal  acausal   (kernel 3)");
    for n in 1..=10 {
        println!(
            "{n:>6}  {:>6}  {:>7}",
            receptive_field(n, 3, ConvMode::Causal),
            receptive_field(n, 3, ConvMode::Acausal)
        );
    }
}
