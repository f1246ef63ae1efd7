//! Independent reference implementations shared by the integration tests.
//! Everything here is written with plain loops and dense matrices so it
//! shares no code path with the library kernels it checks.
#![allow(dead_code)]

pub mod cases;
pub mod metric_oracle;

use msbatn::network::ModelConfig;
use msbatn::seqcore::{ParamStore, SeqTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> SeqTensor {
    let data = (0..r * c)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    SeqTensor::matrix(r, c, data).unwrap()
}

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(t: &SeqTensor) -> Dense {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, &x)| x * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn linear(x: &Dense, store: &ParamStore, prefix: &str) -> Dense {
    let w = to_dense(store.get(&format!("{prefix}.w")).unwrap());
    let b = store.get(&format!("{prefix}.b")).unwrap().data().to_vec();
    matmul(x, &w)
        .into_iter()
        .map(|r| r.iter().zip(&b).map(|(v, bb)| v + bb).collect())
        .collect()
}

/// Brute-force window membership: key `j` is within `width` steps of
/// `(rate + 1)` frames from query `i`.
pub fn window_allows(i: usize, j: usize, width: usize, rate: usize, causal: bool) -> bool {
    if causal && j > i {
        return false;
    }
    let step = rate + 1;
    let diff = i.abs_diff(j);
    diff.is_multiple_of(step) && diff / step <= width
}

/// Mean over the rows `[p·f, min((p+1)·f, T))`.
pub fn pool(x: &Dense, f: usize) -> Dense {
    let t = x.len();
    (0..t.div_ceil(f))
        .map(|p| {
            let rows = &x[p * f..((p + 1) * f).min(t)];
            (0..x[0].len())
                .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect()
}

/// Dense multiscale attention for one head group.
///
/// `member(s, i, j)` decides whether pair `(i, j)` is scored at scale `s`;
/// masked entries get `-inf` before the softmax.
pub fn dense_attention(
    q: &[Dense],
    k: &[Dense],
    v: &Dense,
    w: &[f64],
    heads: usize,
    member: &dyn Fn(usize, usize, usize) -> bool,
) -> Dense {
    let t = v.len();
    let d = v[0].len();
    let dh = d / heads;
    let mut out = vec![vec![0.0; d]; t];
    for h in 0..heads {
        let c0 = h * dh;
        for i in 0..t {
            let mut scores = vec![f64::NEG_INFINITY; t];
            for (j, sc) in scores.iter_mut().enumerate() {
                let mut any = false;
                let mut e = 0.0;
                for s in 0..q.len() {
                    if member(s, i, j) {
                        any = true;
                        let qi = &q[s][i >> s][c0..c0 + dh];
                        let kj = &k[s][j >> s][c0..c0 + dh];
                        e += w[s] * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                if any {
                    *sc = e / (dh as f64).sqrt();
                }
            }
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for j in 0..t {
                let a = (scores[j] - m).exp() / z;
                for c in c0..c0 + dh {
                    out[i][c] += a * v[j][c];
                }
            }
        }
    }
    out
}

fn cols(x: &Dense, lo: usize, hi: usize) -> Dense {
    x.iter().map(|r| r[lo..hi].to_vec()).collect()
}

/// Dense DSWA: expanding window on the first half of the heads, shrinking
/// window on the second half.
pub fn dense_dswa(
    x: &Dense,
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    expanding: (usize, usize, bool),
    shrinking: (usize, usize, bool),
) -> Dense {
    let q = linear(x, store, &format!("{prefix}.q"));
    let k = linear(x, store, &format!("{prefix}.k"));
    let v = linear(x, store, &format!("{prefix}.v"));
    let d = v[0].len();
    let half = d / 2;
    let mut joined = vec![Vec::with_capacity(d); x.len()];
    for (lo, hi, (w, r, c)) in [(0, half, expanding), (half, d, shrinking)] {
        let part = dense_attention(
            &[cols(&q, lo, hi)],
            &[cols(&k, lo, hi)],
            &cols(&v, lo, hi),
            &[1.0],
            heads / 2,
            &|_, i, j| window_allows(i, j, w, r, c),
        );
        for (dst, src) in joined.iter_mut().zip(part) {
            dst.extend(src);
        }
    }
    linear(&joined, store, &format!("{prefix}.o"))
}

/// Dense HTA with phase-aligned dilated neighbourhoods of `window` pooled
/// steps per scale.
pub fn dense_hta(
    x: &Dense,
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    weights: &[f64],
    window: usize,
) -> Dense {
    let q = linear(x, store, &format!("{prefix}.q"));
    let k = linear(x, store, &format!("{prefix}.k"));
    let v = linear(x, store, &format!("{prefix}.v"));
    let qs: Vec<Dense> = (0..weights.len()).map(|s| pool(&q, 1 << s)).collect();
    let ks: Vec<Dense> = (0..weights.len()).map(|s| pool(&k, 1 << s)).collect();
    let att = dense_attention(&qs, &ks, &v, weights, heads, &|s, i, j| {
        window_allows(i, j, window, (1 << s) - 1, false)
    });
    linear(&att, store, &format!("{prefix}.o"))
}

pub fn max_abs_diff(a: &Dense, b: &SeqTensor) -> f64 {
    a.iter()
        .flatten()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Smallest model that still exercises every block type.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_in: 6,
        d_model: 8,
        n_blocks: 2,
        n_decoders: 1,
        heads: 2,
        n_classes: 3,
        temporal_dropout: 0.0,
        s_avg: 8,
        hta_window: 2,
        ..ModelConfig::default()
    }
}
