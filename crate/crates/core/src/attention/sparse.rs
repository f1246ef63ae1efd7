use std::sync::Arc;

use super::Neighborhood;
use crate::seqcore::{Graph, SeqTensor, Var};
use crate::{Error, Result};

/// Softmax over the union of per-scale neighbourhoods of the weighted sum
/// of per-scale scores.
///
/// `scores[s][i]` lists `(key, e_ij^s)` for the keys of query `i` at scale
/// `s`. A key missing from a scale contributes nothing at that scale.
/// Returns `(key, α_ij)` per query in ascending key order.
pub fn aggregate_scales(
    scores: &[Vec<Vec<(usize, f64)>>],
    weights: &[f64],
) -> Result<Vec<Vec<(usize, f64)>>> {
    if scores.len() != weights.len() || scores.is_empty() {
        return Err(Error::invalid(
            "aggregate_scales",
            format!("{} score maps for {} weights", scores.len(), weights.len()),
        ));
    }
    let t = scores[0].len();
    if let Some(s) = scores.iter().find(|s| s.len() != t) {
        return Err(Error::invalid(
            "aggregate_scales",
            format!("{} queries vs {t}", s.len()),
        ));
    }
    (0..t)
        .map(|i| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (map, &w) in scores.iter().zip(weights) {
                for &(j, e) in &map[i] {
                    match acc.binary_search_by_key(&j, |&(k, _)| k) {
                        Ok(p) => acc[p].1 += w * e,
                        Err(p) => acc.insert(p, (j, w * e)),
                    }
                }
            }
            if acc.is_empty() {
                return Err(Error::FullyMaskedRow { row: i });
            }
            let m = acc.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = acc.iter().map(|p| (p.1 - m).exp()).sum();
            Ok(acc
                .into_iter()
                .map(|(j, a)| (j, (a - m).exp() / z))
                .collect())
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

impl Graph {
    /// Multi-head attention restricted to `nb`, with per-scale pooled queries
    /// and keys.
    ///
    /// `q[s]`, `k[s]` are `[ceil(T/2^s) × d]`, `v` is `[T × d]`, `w` holds one
    /// weight per scale. Head `h` uses columns `h·d_h..(h+1)·d_h`. The score
    /// of pair `(i, j)` is `Σ_s w_s ⟨q_s[i>>s], k_s[j>>s]⟩ / √d_h` over the
    /// scales whose neighbourhood holds the pair.
    pub fn sparse_attention(
        &mut self,
        q: &[Var],
        k: &[Var],
        v: Var,
        w: Var,
        nb: Arc<Neighborhood>,
        heads: usize,
    ) -> Result<Var> {
        let n_s = nb.n_scales();
        let t = nb.len();
        if q.len() != n_s || k.len() != n_s {
            return Err(Error::invalid(
                "sparse_attention",
                format!(
                    "{} query and {} key scales for {n_s} neighbourhood scales",
                    q.len(),
                    k.len()
                ),
            ));
        }
        if self.shape(w) != [n_s] {
            return Err(Error::shape("sparse_attention", self.shape(w), &[n_s]));
        }
        let vs = self.shape(v);
        if vs.len() != 2 || vs[0] != t {
            return Err(Error::shape("sparse_attention", vs, &[t, 0]));
        }
        let d = vs[1];
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::invalid(
                "sparse_attention",
                format!("{d} columns do not split into {heads} heads"),
            ));
        }
        for s in 0..n_s {
            let want = [t.div_ceil(1 << s), d];
            for x in [q[s], k[s]] {
                if self.shape(x) != want {
                    return Err(Error::shape("sparse_attention", self.shape(x), &want));
                }
            }
        }
        let dh = d / heads;
        let inv = 1.0 / (dh as f64).sqrt();
        let needs_grad = q
            .iter()
            .chain(k)
            .chain([&v, &w])
            .any(|&x| self.requires_grad(x));

        let qv: Vec<&[f64]> = q.iter().map(|&x| self.value(x).data()).collect();
        let kv: Vec<&[f64]> = k.iter().map(|&x| self.value(x).data()).collect();
        let vv = self.value(v).data();
        let wv = self.value(w).data().to_vec();
        let mask = nb.union();
        let (offsets, keys) = (mask.offsets(), mask.keys());
        let member = nb.member();
        let nnz = keys.len();

        let mut out = vec![0.0; t * d];
        let mut alpha = if needs_grad {
            vec![0.0; heads * nnz]
        } else {
            Vec::new()
        };
        // Query-major so each key row is read once for all heads.
        let mut scores = Vec::new();
        for i in 0..t {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let n = hi - lo;
            scores.clear();
            scores.resize(heads * n, 0.0);
            for (c, e) in (lo..hi).enumerate() {
                let j = keys[e];
                let mut bits = member[e];
                while bits != 0 {
                    let s = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let qi = &qv[s][(i >> s) * d..(i >> s) * d + d];
                    let kj = &kv[s][(j >> s) * d..(j >> s) * d + d];
                    for h in 0..heads {
                        let cols = h * dh..(h + 1) * dh;
                        scores[h * n + c] += wv[s] * dot(&qi[cols.clone()], &kj[cols]);
                    }
                }
            }
            for h in 0..heads {
                let row = &mut scores[h * n..(h + 1) * n];
                let m = row.iter().fold(f64::NEG_INFINITY, |m, &a| m.max(a * inv));
                let mut z = 0.0;
                for a in row.iter_mut() {
                    *a = (*a * inv - m).exp();
                    z += *a;
                }
                row.iter_mut().for_each(|a| *a /= z);
                if needs_grad {
                    alpha[h * nnz + lo..h * nnz + hi].copy_from_slice(row);
                }
            }
            let o = &mut out[i * d..(i + 1) * d];
            for (c, e) in (lo..hi).enumerate() {
                let vj = &vv[keys[e] * d..(keys[e] + 1) * d];
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    axpy(&mut o[cols.clone()], scores[h * n + c], &vj[cols]);
                }
            }
        }

        let mut inputs: Vec<Var> = q.to_vec();
        inputs.extend_from_slice(k);
        inputs.push(v);
        inputs.push(w);
        Ok(self.push_op(
            &inputs,
            SeqTensor::from_parts(vec![t, d], out),
            Box::new(move |ctx| {
                let qv: Vec<&[f64]> = ctx.inputs[..n_s].iter().map(|x| x.data()).collect();
                let kv: Vec<&[f64]> = ctx.inputs[n_s..2 * n_s].iter().map(|x| x.data()).collect();
                let vv = ctx.inputs[2 * n_s].data();
                let wv = ctx.inputs[2 * n_s + 1].data();
                let mask = nb.union();
                let (offsets, keys) = (mask.offsets(), mask.keys());
                let member = nb.member();
                let g = ctx.grad;

                let mut dq: Vec<Vec<f64>> = qv.iter().map(|x| vec![0.0; x.len()]).collect();
                let mut dk: Vec<Vec<f64>> = kv.iter().map(|x| vec![0.0; x.len()]).collect();
                let mut dv = vec![0.0; vv.len()];
                let mut dw = vec![0.0; n_s];
                let mut da = Vec::new();
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    for i in 0..t {
                        let (lo, hi) = (offsets[i], offsets[i + 1]);
                        let gi = &g[i * d + cols.start..i * d + cols.end];
                        let al = &alpha[h * nnz + lo..h * nnz + hi];
                        da.clear();
                        let mut mean = 0.0;
                        for (e, &a) in (lo..hi).zip(al) {
                            let j = keys[e];
                            let vj = j * d + cols.start..j * d + cols.end;
                            let dot_gv = dot(gi, &vv[vj.clone()]);
                            da.push(dot_gv);
                            mean += a * dot_gv;
                            axpy(&mut dv[vj], a, gi);
                        }
                        for ((e, &a), &dav) in (lo..hi).zip(al).zip(&da) {
                            let de = a * (dav - mean) * inv;
                            if de == 0.0 {
                                continue;
                            }
                            let j = keys[e];
                            let mut bits = member[e];
                            while bits != 0 {
                                let s = bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                let pi = (i >> s) * d + cols.start;
                                let pj = (j >> s) * d + cols.start;
                                let qs = &qv[s][pi..pi + dh];
                                let ks = &kv[s][pj..pj + dh];
                                dw[s] += de * dot(qs, ks);
                                axpy(&mut dq[s][pi..pi + dh], de * wv[s], ks);
                                axpy(&mut dk[s][pj..pj + dh], de * wv[s], qs);
                            }
                        }
                    }
                }
                let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(2 * n_s + 2);
                grads.extend(dq.into_iter().map(Some));
                grads.extend(dk.into_iter().map(Some));
                grads.push(Some(dv));
                grads.push(Some(dw));
                grads
            }),
        ))
    }
}
