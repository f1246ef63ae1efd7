use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::{ParamStore, SeqTensor};

/// Glorot-uniform weights with the given fan sizes.
pub fn glorot(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> SeqTensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    uniform(rng, shape, bound)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> SeqTensor {
    let n: usize = shape.iter().product();
    let data = if bound > 0.0 {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        (0..n).map(|_| dist.sample(rng)).collect()
    } else {
        vec![0.0; n]
    };
    SeqTensor::from_parts(shape.to_vec(), data)
}

/// Adds `{prefix}.w [d_in×d_out]` (Glorot) and `{prefix}.b [d_out]` (zero).
pub fn linear(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, d_in: usize, d_out: usize) {
    store.insert(
        format!("{prefix}.w"),
        glorot(rng, &[d_in, d_out], d_in, d_out),
    );
    store.insert(format!("{prefix}.b"), SeqTensor::zeros(&[d_out]));
}

/// Adds unit gain and zero bias for a layer norm over `d` features.
pub fn layer_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.insert(format!("{prefix}.gain"), SeqTensor::full(&[d], 1.0));
    store.insert(format!("{prefix}.bias"), SeqTensor::zeros(&[d]));
}
