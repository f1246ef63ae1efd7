use serde::{Deserialize, Serialize};

use super::ops::gemm;
use super::{Graph, SeqTensor, Var};
use crate::{Error, Result};

/// Which side of the current frame a temporal kernel may read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// Kernel centred on the current frame.
    Acausal,
    /// Kernel reads the current frame and the past only.
    Causal,
}

/// Input offset of every tap, relative to the output's centre frame.
fn tap_offsets(k: usize, dilation: usize, mode: ConvMode) -> Vec<isize> {
    let d = dilation as isize;
    match mode {
        ConvMode::Acausal => {
            let half = (k as isize - 1) / 2;
            (0..k as isize).map(|j| (j - half) * d).collect()
        }
        ConvMode::Causal => (0..k as isize).map(|j| -j * d).collect(),
    }
}

fn check_geometry(
    op: &'static str,
    t: usize,
    c: usize,
    k: usize,
    dilation: usize,
    stride: usize,
    mode: ConvMode,
) -> Result<()> {
    if t == 0 || c == 0 {
        return Err(Error::EmptyInput { op });
    }
    if dilation == 0 || stride == 0 {
        return Err(Error::invalid(op, "dilation and stride must be positive"));
    }
    if k == 0 {
        return Err(Error::invalid(op, "kernel must have at least one tap"));
    }
    if mode == ConvMode::Acausal && k.is_multiple_of(2) {
        return Err(Error::invalid(
            op,
            format!("acausal kernel size {k} must be odd"),
        ));
    }
    Ok(())
}

/// For output frame `o`, the input frame read by offset `off`, if in range.
#[inline]
fn source(o: usize, stride: usize, off: isize, t: usize) -> Option<usize> {
    let s = (o * stride) as isize + off;
    (s >= 0 && (s as usize) < t).then_some(s as usize)
}

impl Graph {
    /// Dilated temporal convolution.
    ///
    /// `x` is `C_in×T`, `kernel` is `C_out×C_in×k`, `bias` (optional) is
    /// `C_out`. Output frame `o` is centred on input frame `o·stride`;
    /// out-of-range taps read zeros. Output length is `ceil(T/stride)`.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
        mode: ConvMode,
        stride: usize,
    ) -> Result<Var> {
        let (c_in, t) = match self.shape(x) {
            &[c, t] => (c, t),
            s => return Err(Error::invalid("conv1d", format!("input shape {s:?}"))),
        };
        let (c_out, k) = match self.shape(kernel) {
            &[co, ci, k] if ci == c_in => (co, k),
            _ => return Err(Error::shape("conv1d", self.shape(x), self.shape(kernel))),
        };
        if let Some(b) = bias {
            if self.value(b).len() != c_out {
                return Err(Error::shape("conv1d", self.shape(kernel), self.shape(b)));
            }
        }
        check_geometry("conv1d", t, c_in, k, dilation, stride, mode)?;
        let t_out = t.div_ceil(stride);
        let offsets = tap_offsets(k, dilation, mode);

        let xv = self.value(x).data();
        let wv = self.value(kernel).data();
        let mut out = vec![0.0; c_out * t_out];
        let mut gathered = vec![0.0; c_in * t_out];
        let mut w_tap = vec![0.0; c_out * c_in];
        for (j, &off) in offsets.iter().enumerate() {
            gather(xv, c_in, t, t_out, stride, off, &mut gathered);
            kernel_tap(wv, c_out, c_in, k, j, &mut w_tap);
            gemm(
                c_out, c_in, t_out, &w_tap, false, &gathered, false, &mut out, true,
            );
        }
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (row, bias) in out.chunks_mut(t_out).zip(bv) {
                row.iter_mut().for_each(|v| *v += bias);
            }
        }

        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        Ok(self.push_op(
            &inputs,
            SeqTensor::from_parts(vec![c_out, t_out], out),
            Box::new(move |ctx| {
                let (xv, wv, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
                let mut dx = ctx.needs[0].then(|| vec![0.0; c_in * t]);
                let mut dw = ctx.needs[1].then(|| vec![0.0; c_out * c_in * k]);
                let mut gathered = vec![0.0; c_in * t_out];
                let mut buf = vec![0.0; c_out * c_in];
                let mut dcol = vec![0.0; c_in * t_out];
                for (j, &off) in offsets.iter().enumerate() {
                    if let Some(dw) = dw.as_mut() {
                        gather(xv, c_in, t, t_out, stride, off, &mut gathered);
                        gemm(
                            c_out, t_out, c_in, g, false, &gathered, true, &mut buf, false,
                        );
                        for co in 0..c_out {
                            for ci in 0..c_in {
                                dw[(co * c_in + ci) * k + j] = buf[co * c_in + ci];
                            }
                        }
                    }
                    if let Some(dx) = dx.as_mut() {
                        kernel_tap(wv, c_out, c_in, k, j, &mut buf);
                        gemm(c_in, c_out, t_out, &buf, true, g, false, &mut dcol, false);
                        for ci in 0..c_in {
                            for o in 0..t_out {
                                if let Some(s) = source(o, stride, off, t) {
                                    dx[ci * t + s] += dcol[ci * t_out + o];
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if ctx.inputs.len() == 3 {
                    grads.push(
                        ctx.needs[2].then(|| g.chunks(t_out).map(|r| r.iter().sum()).collect()),
                    );
                }
                grads
            }),
        ))
    }

    /// Depthwise dilated temporal convolution: channel `c` of `x[C×T]` is
    /// filtered by row `c` of `kernel[C×k]`.
    pub fn depthwise_conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
        mode: ConvMode,
        stride: usize,
    ) -> Result<Var> {
        let (c, t) = match self.shape(x) {
            &[c, t] => (c, t),
            s => {
                return Err(Error::invalid(
                    "depthwise_conv1d",
                    format!("input shape {s:?}"),
                ))
            }
        };
        let k = match self.shape(kernel) {
            &[ck, k] if ck == c => k,
            _ => {
                return Err(Error::shape(
                    "depthwise_conv1d",
                    self.shape(x),
                    self.shape(kernel),
                ))
            }
        };
        if let Some(b) = bias {
            if self.value(b).len() != c {
                return Err(Error::shape(
                    "depthwise_conv1d",
                    self.shape(x),
                    self.shape(b),
                ));
            }
        }
        check_geometry("depthwise_conv1d", t, c, k, dilation, stride, mode)?;
        let t_out = t.div_ceil(stride);
        let offsets = tap_offsets(k, dilation, mode);
        let xv = self.value(x).data();
        let wv = self.value(kernel).data();
        let mut out = vec![0.0; c * t_out];
        for ch in 0..c {
            let xr = &xv[ch * t..(ch + 1) * t];
            let orow = &mut out[ch * t_out..(ch + 1) * t_out];
            for (j, &off) in offsets.iter().enumerate() {
                let w = wv[ch * k + j];
                for (o, ov) in orow.iter_mut().enumerate() {
                    if let Some(s) = source(o, stride, off, t) {
                        *ov += w * xr[s];
                    }
                }
            }
            if let Some(b) = bias {
                let bv = self.value(b).data()[ch];
                orow.iter_mut().for_each(|v| *v += bv);
            }
        }
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        Ok(self.push_op(
            &inputs,
            SeqTensor::from_parts(vec![c, t_out], out),
            Box::new(move |ctx| {
                let (xv, wv, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
                let mut dx = vec![0.0; c * t];
                let mut dw = vec![0.0; c * k];
                for ch in 0..c {
                    let gr = &g[ch * t_out..(ch + 1) * t_out];
                    for (j, &off) in offsets.iter().enumerate() {
                        let w = wv[ch * k + j];
                        let mut acc = 0.0;
                        for (o, &gv) in gr.iter().enumerate() {
                            if let Some(s) = source(o, stride, off, t) {
                                acc += gv * xv[ch * t + s];
                                dx[ch * t + s] += gv * w;
                            }
                        }
                        dw[ch * k + j] = acc;
                    }
                }
                let mut grads = vec![ctx.needs[0].then_some(dx), ctx.needs[1].then_some(dw)];
                if ctx.inputs.len() == 3 {
                    grads.push(
                        ctx.needs[2].then(|| g.chunks(t_out).map(|r| r.iter().sum()).collect()),
                    );
                }
                grads
            }),
        ))
    }
}

fn gather(
    x: &[f64],
    c_in: usize,
    t: usize,
    t_out: usize,
    stride: usize,
    off: isize,
    out: &mut [f64],
) {
    for ci in 0..c_in {
        let xr = &x[ci * t..(ci + 1) * t];
        let orow = &mut out[ci * t_out..(ci + 1) * t_out];
        for (o, v) in orow.iter_mut().enumerate() {
            *v = source(o, stride, off, t).map_or(0.0, |s| xr[s]);
        }
    }
}

fn kernel_tap(w: &[f64], c_out: usize, c_in: usize, k: usize, j: usize, out: &mut [f64]) {
    for co in 0..c_out {
        for ci in 0..c_in {
            out[co * c_in + ci] = w[(co * c_in + ci) * k + j];
        }
    }
}
