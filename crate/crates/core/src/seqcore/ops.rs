use super::tensor::transpose_raw;
use super::{BackwardCtx, Graph, SeqTensor, Var};
use crate::{Error, Result};

/// `c (+)= op(a) · op(b)` for row-major buffers, where `op` optionally
/// transposes. `a` is logically `m×k`, `b` is `k×n`, `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // elements of the slices whose lengths are asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn matrix_dims(op: &'static str, t: &SeqTensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::invalid(
            op,
            format!("expected a matrix, got shape {s:?}"),
        )),
    }
}

fn same_shape(op: &'static str, a: &SeqTensor, b: &SeqTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn gelu_tanh(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let inner = C * (x + 0.044_715 * x * x * x);
    let t = inner.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dinner = C * (1.0 + 3.0 * 0.044_715 * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
    (y, dy)
}

impl Graph {
    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let out = SeqTensor::from_parts(xv.shape().to_vec(), data);
        self.push_op(
            &[x],
            out,
            Box::new(move |ctx: &BackwardCtx<'_>| {
                let x = ctx.inputs[0].data();
                let y = ctx.output.data();
                let g = x
                    .iter()
                    .zip(y)
                    .zip(ctx.grad)
                    .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims("matmul", self.value(a))?;
        let (k2, n) = matrix_dims("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push_op(
            &[a, b],
            SeqTensor::from_parts(vec![m, n], out),
            Box::new(move |ctx| {
                let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let da = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, ctx.grad, false, bv, true, &mut d, false);
                    d
                });
                let db = ctx.needs[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, av, true, ctx.grad, false, &mut d, false);
                    d
                });
                vec![da, db]
            }),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = matrix_dims("transpose", self.value(a))?;
        let out = self.value(a).transpose()?;
        Ok(self.push_op(
            &[a],
            out,
            Box::new(move |ctx| vec![Some(transpose_raw(ctx.grad, c, r))]),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push_op(&[x], out, Box::new(|ctx| vec![Some(ctx.grad.to_vec())])))
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64, f64) -> f64 + 'static,
        db: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(op, av, bv)?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = SeqTensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push_op(
            &[a, b],
            out,
            Box::new(move |ctx| {
                let (x, y) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let grad_of = |rule: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
                    x.iter()
                        .zip(y)
                        .zip(ctx.grad)
                        .map(|((&xi, &yi), &gi)| rule(xi, yi, gi))
                        .collect()
                };
                vec![
                    ctx.needs[0].then(|| grad_of(&da)),
                    ctx.needs[1].then(|| grad_of(&db)),
                ]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |_, y, g| g * y, |x, _, g| g * x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(
            "div",
            a,
            b,
            |x, y| x / y,
            |_, y, g| g / y,
            |x, y, g| -g * x / (y * y),
        )
    }

    /// `x[T×D] + b[D]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (t, d) = matrix_dims("add_row_bias", self.value(x))?;
        if self.value(b).len() != d {
            return Err(Error::shape("add_row_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(d) {
            row.iter_mut().zip(&bias).for_each(|(o, b)| *o += b);
        }
        Ok(self.push_op(
            &[x, b],
            SeqTensor::from_parts(vec![t, d], out),
            Box::new(move |ctx| {
                let db = ctx.needs[1].then(|| {
                    let mut db = vec![0.0; d];
                    for row in ctx.grad.chunks(d) {
                        db.iter_mut().zip(row).for_each(|(a, g)| *a += g);
                    }
                    db
                });
                vec![Some(ctx.grad.to_vec()), db]
            }),
        ))
    }

    /// `x[C×T] + b[C]` broadcast over columns.
    pub fn add_col_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (c, t) = matrix_dims("add_col_bias", self.value(x))?;
        if self.value(b).len() != c {
            return Err(Error::shape("add_col_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for (row, bv) in out.chunks_mut(t).zip(&bias) {
            row.iter_mut().for_each(|o| *o += bv);
        }
        Ok(self.push_op(
            &[x, b],
            SeqTensor::from_parts(vec![c, t], out),
            Box::new(move |ctx| {
                let db = ctx.needs[1].then(|| ctx.grad.chunks(t).map(|r| r.iter().sum()).collect());
                vec![Some(ctx.grad.to_vec()), db]
            }),
        ))
    }

    /// `x·w + b` for `x[T×D_in]`, `w[D_in×D_out]`, `b[D_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row_bias(y, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v + c, |_, _| 1.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |xi, _| if xi > 0.0 { 1.0 } else { 0.0 })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, |v| gelu_tanh(v).0, |xi, _| gelu_tanh(xi).1)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, |_, y| y)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, |xi, _| 1.0 / xi)
    }

    /// `x^p` for non-negative `x`.
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(
            x,
            move |v| v.max(0.0).powf(p),
            move |xi, _| {
                let xi = xi.max(0.0);
                if p == 0.0 {
                    0.0
                } else if xi == 0.0 {
                    if p > 1.0 {
                        0.0
                    } else if p == 1.0 {
                        1.0
                    } else {
                        f64::MAX
                    }
                } else {
                    p * xi.powf(p - 1.0)
                }
            },
        )
    }

    /// `min(x, c)`; the gradient is zero where the cap is active.
    pub fn clamp_max(&mut self, x: Var, c: f64) -> Var {
        self.unary(
            x,
            move |v| v.min(c),
            move |xi, _| if xi < c { 1.0 } else { 0.0 },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.value(x).data().iter().sum();
        self.push_op(
            &[x],
            SeqTensor::scalar(s),
            Box::new(move |ctx| vec![Some(vec![ctx.grad[0]; n])]),
        )
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums a `T×D` matrix over its rows, giving `D` values.
    pub fn column_sums(&mut self, x: Var) -> Result<Var> {
        let (t, d) = matrix_dims("column_sums", self.value(x))?;
        let mut out = vec![0.0; d];
        for row in self.value(x).data().chunks(d) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        Ok(self.push_op(
            &[x],
            SeqTensor::vector(out),
            Box::new(move |ctx| {
                let mut g = Vec::with_capacity(t * d);
                for _ in 0..t {
                    g.extend_from_slice(ctx.grad);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Softmax over every entry of each row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = matrix_dims("softmax_rows", self.value(x))?;
        let all: Vec<usize> = (0..c).collect();
        let out = masked_softmax_forward(self.value(x).data(), r, c, |_| &all)?;
        Ok(self.push_op(
            &[x],
            out,
            Box::new(move |ctx| vec![Some(softmax_backward(ctx, c))]),
        ))
    }

    /// Softmax restricted to `allowed[row]`; every other entry is exactly 0.
    pub fn softmax_masked(&mut self, x: Var, allowed: &[Vec<usize>]) -> Result<Var> {
        let (r, c) = matrix_dims("softmax_masked", self.value(x))?;
        if allowed.len() != r {
            return Err(Error::invalid(
                "softmax_masked",
                format!("mask has {} rows, scores have {r}", allowed.len()),
            ));
        }
        if let Some(bad) = allowed.iter().flatten().find(|&&j| j >= c) {
            return Err(Error::invalid(
                "softmax_masked",
                format!("mask column {bad} out of range for {c} columns"),
            ));
        }
        let out = masked_softmax_forward(self.value(x).data(), r, c, |i| &allowed[i])?;
        Ok(self.push_op(
            &[x],
            out,
            Box::new(move |ctx| vec![Some(softmax_backward(ctx, c))]),
        ))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = matrix_dims("log_softmax_rows", self.value(x))?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Ok(self.push_op(
            &[x],
            SeqTensor::from_parts(vec![r, c], out),
            Box::new(move |ctx| {
                let y = ctx.output.data();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let g = &ctx.grad[i * c..(i + 1) * c];
                    let gs: f64 = g.iter().sum();
                    for j in 0..c {
                        dx[i * c + j] = g[j] - y[i * c + j].exp() * gs;
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Row-wise layer normalisation of `x[T×D]` with affine `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (t, d) = matrix_dims("layer_norm", self.value(x))?;
        if d == 0 {
            return Err(Error::EmptyInput { op: "layer_norm" });
        }
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let mut out = vec![0.0; t * d];
        for (row, o) in self.value(x).data().chunks(d).zip(out.chunks_mut(d)) {
            let (mean, rstd) = row_stats(row, eps);
            for j in 0..d {
                o[j] = (row[j] - mean) * rstd * gv[j] + bv[j];
            }
        }
        Ok(self.push_op(
            &[x, gain, bias],
            SeqTensor::from_parts(vec![t, d], out),
            Box::new(move |ctx| {
                let (x, gain) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let mut dx = vec![0.0; t * d];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for i in 0..t {
                    let row = &x[i * d..(i + 1) * d];
                    let g = &ctx.grad[i * d..(i + 1) * d];
                    let (mean, rstd) = row_stats(row, eps);
                    for j in 0..d {
                        xhat[j] = (row[j] - mean) * rstd;
                        dxhat[j] = g[j] * gain[j];
                        dg[j] += g[j] * xhat[j];
                        db[j] += g[j];
                    }
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dx[i * d + j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                vec![
                    ctx.needs[0].then_some(dx),
                    ctx.needs[1].then_some(dg),
                    ctx.needs[2].then_some(db),
                ]
            }),
        ))
    }

    /// Cosine similarity of matching rows of `a` and `b`; norms are clamped
    /// below at `eps`.
    pub fn cosine_rows(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        same_shape("cosine_rows", self.value(a), self.value(b))?;
        let (t, d) = matrix_dims("cosine_rows", self.value(a))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let out = (0..t)
            .map(|i| {
                let (x, y) = (&av[i * d..(i + 1) * d], &bv[i * d..(i + 1) * d]);
                dot(x, y) / (norm(x).max(eps) * norm(y).max(eps))
            })
            .collect();
        Ok(self.push_op(
            &[a, b],
            SeqTensor::vector(out),
            Box::new(move |ctx| {
                let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let cos = ctx.output.data();
                let mut da = vec![0.0; t * d];
                let mut db = vec![0.0; t * d];
                for i in 0..t {
                    let (x, y) = (&av[i * d..(i + 1) * d], &bv[i * d..(i + 1) * d]);
                    let (nx, ny) = (norm(x), norm(y));
                    let (cx, cy) = (nx.max(eps), ny.max(eps));
                    let g = ctx.grad[i];
                    for j in 0..d {
                        let mut ga = y[j] / (cx * cy);
                        if nx > eps {
                            ga -= cos[i] * x[j] / (cx * cx);
                        }
                        let mut gb = x[j] / (cx * cy);
                        if ny > eps {
                            gb -= cos[i] * y[j] / (cy * cy);
                        }
                        da[i * d + j] = g * ga;
                        db[i * d + j] = g * gb;
                    }
                }
                vec![ctx.needs[0].then_some(da), ctx.needs[1].then_some(db)]
            }),
        ))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (t, d) = matrix_dims("slice_rows", self.value(x))?;
        if start > end || end > t {
            return Err(Error::invalid(
                "slice_rows",
                format!("range {start}..{end} outside 0..{t}"),
            ));
        }
        let data = self.value(x).data()[start * d..end * d].to_vec();
        Ok(self.push_op(
            &[x],
            SeqTensor::from_parts(vec![end - start, d], data),
            Box::new(move |ctx| {
                let mut g = vec![0.0; t * d];
                g[start * d..end * d].copy_from_slice(ctx.grad);
                vec![Some(g)]
            }),
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (t, d) = matrix_dims("slice_cols", self.value(x))?;
        if start > end || end > d {
            return Err(Error::invalid(
                "slice_cols",
                format!("range {start}..{end} outside 0..{d}"),
            ));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(t * w);
        for row in self.value(x).data().chunks(d) {
            data.extend_from_slice(&row[start..end]);
        }
        Ok(self.push_op(
            &[x],
            SeqTensor::from_parts(vec![t, w], data),
            Box::new(move |ctx| {
                let mut g = vec![0.0; t * d];
                for (i, gr) in ctx.grad.chunks(w.max(1)).enumerate().take(t) {
                    g[i * d + start..i * d + end].copy_from_slice(&gr[..w]);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// `[a | b]` for matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, da) = matrix_dims("concat_cols", self.value(a))?;
        let (t2, db) = matrix_dims("concat_cols", self.value(b))?;
        if t != t2 {
            return Err(Error::shape("concat_cols", self.shape(a), self.shape(b)));
        }
        let w = da + db;
        let mut data = Vec::with_capacity(t * w);
        for i in 0..t {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        Ok(self.push_op(
            &[a, b],
            SeqTensor::from_parts(vec![t, w], data),
            Box::new(move |ctx| {
                let mut ga = Vec::with_capacity(t * da);
                let mut gb = Vec::with_capacity(t * db);
                for i in 0..t {
                    let row = &ctx.grad[i * w..(i + 1) * w];
                    ga.extend_from_slice(&row[..da]);
                    gb.extend_from_slice(&row[da..]);
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Gathers `x[t, index[t]]` from a `T×C` matrix.
    pub fn pick(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (t, c) = matrix_dims("pick", self.value(x))?;
        if index.len() != t {
            return Err(Error::invalid(
                "pick",
                format!("{} indices for {t} rows", index.len()),
            ));
        }
        if let Some((frame, &label)) = index.iter().enumerate().find(|(_, &k)| k >= c) {
            return Err(Error::LabelOutOfRange {
                frame,
                label,
                classes: c,
            });
        }
        let out = index
            .iter()
            .enumerate()
            .map(|(i, &k)| self.value(x).data()[i * c + k])
            .collect();
        let index = index.to_vec();
        Ok(self.push_op(
            &[x],
            SeqTensor::vector(out),
            Box::new(move |ctx| {
                let mut g = vec![0.0; t * c];
                for (i, &k) in index.iter().enumerate() {
                    g[i * c + k] = ctx.grad[i];
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Non-overlapping mean pooling over rows; the last window may be short.
    pub fn mean_pool_rows(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (t, d) = matrix_dims("mean_pool_rows", self.value(x))?;
        if factor == 0 {
            return Err(Error::invalid("mean_pool_rows", "factor must be positive"));
        }
        if t == 0 {
            return Err(Error::EmptyInput {
                op: "mean_pool_rows",
            });
        }
        let tp = t.div_ceil(factor);
        let xv = self.value(x).data();
        let mut out = vec![0.0; tp * d];
        for p in 0..tp {
            let (lo, hi) = (p * factor, ((p + 1) * factor).min(t));
            let inv = 1.0 / (hi - lo) as f64;
            let o = &mut out[p * d..(p + 1) * d];
            for i in lo..hi {
                o.iter_mut()
                    .zip(&xv[i * d..(i + 1) * d])
                    .for_each(|(a, v)| *a += v * inv);
            }
        }
        Ok(self.push_op(
            &[x],
            SeqTensor::from_parts(vec![tp, d], out),
            Box::new(move |ctx| {
                let mut g = vec![0.0; t * d];
                for p in 0..tp {
                    let (lo, hi) = (p * factor, ((p + 1) * factor).min(t));
                    let inv = 1.0 / (hi - lo) as f64;
                    let gp = &ctx.grad[p * d..(p + 1) * d];
                    for i in lo..hi {
                        g[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(gp)
                            .for_each(|(a, v)| *a = v * inv);
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Linear interpolation of `x[T_r×D]` back to `t_orig` rows, holding the
    /// last row past the end.
    pub fn upsample_linear_rows(&mut self, x: Var, t_orig: usize, stride: usize) -> Result<Var> {
        let (tr, d) = matrix_dims("upsample_linear_rows", self.value(x))?;
        if stride == 0 || tr != t_orig.div_ceil(stride) || tr == 0 {
            return Err(Error::invalid(
                "upsample_linear_rows",
                format!("{tr} rows cannot come from {t_orig} frames at stride {stride}"),
            ));
        }
        if stride == 1 {
            let out = self.value(x).clone();
            return Ok(self.push_op(&[x], out, Box::new(|ctx| vec![Some(ctx.grad.to_vec())])));
        }
        let taps: Vec<(usize, usize, f64)> = (0..t_orig)
            .map(|t| {
                let i0 = t / stride;
                let frac = (t % stride) as f64 / stride as f64;
                (i0, (i0 + 1).min(tr - 1), frac)
            })
            .collect();
        let xv = self.value(x).data();
        let mut out = vec![0.0; t_orig * d];
        for (t, &(i0, i1, frac)) in taps.iter().enumerate() {
            for j in 0..d {
                out[t * d + j] = (1.0 - frac) * xv[i0 * d + j] + frac * xv[i1 * d + j];
            }
        }
        Ok(self.push_op(
            &[x],
            SeqTensor::from_parts(vec![t_orig, d], out),
            Box::new(move |ctx| {
                let mut g = vec![0.0; tr * d];
                for (t, &(i0, i1, frac)) in taps.iter().enumerate() {
                    for j in 0..d {
                        let gv = ctx.grad[t * d + j];
                        g[i0 * d + j] += (1.0 - frac) * gv;
                        g[i1 * d + j] += frac * gv;
                    }
                }
                vec![Some(g)]
            }),
        ))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + eps).sqrt())
}

fn masked_softmax_forward<'a>(
    x: &[f64],
    r: usize,
    c: usize,
    allowed: impl Fn(usize) -> &'a [usize],
) -> Result<SeqTensor> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let keys = allowed(i);
        if keys.is_empty() {
            return Err(Error::FullyMaskedRow { row: i });
        }
        let row = &x[i * c..(i + 1) * c];
        let m = keys
            .iter()
            .map(|&j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &j in keys {
            let e = (row[j] - m).exp();
            out[i * c + j] = e;
            z += e;
        }
        for &j in keys {
            out[i * c + j] /= z;
        }
    }
    Ok(SeqTensor::from_parts(vec![r, c], out))
}

fn softmax_backward(ctx: &BackwardCtx<'_>, c: usize) -> Vec<f64> {
    let y = ctx.output.data();
    let mut dx = vec![0.0; y.len()];
    for ((yr, gr), dr) in y.chunks(c).zip(ctx.grad.chunks(c)).zip(dx.chunks_mut(c)) {
        let s = dot(yr, gr);
        for j in 0..c {
            dr[j] = yr[j] * (gr[j] - s);
        }
    }
    dx
}
