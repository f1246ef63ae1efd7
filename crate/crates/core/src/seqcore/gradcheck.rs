//! Central finite-difference checks for anything built on [`Graph`].
//!
//! The numeric side only ever evaluates forward values, so it shares no
//! code path with the backward rules it checks.

use super::{Graph, SeqTensor, Var};
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Base step; the step for entry `x` is `step · max(1, |x|)`.
    pub step: f64,
    /// Check at most this many evenly spaced entries per input.
    pub max_entries: Option<usize>,
    /// Gradient norms below this are compared in absolute terms, so
    /// structurally zero gradients are not judged on rounding noise.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_entries: None,
            abs_floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, abs_floor)` per input,
    /// over the checked entries.
    pub rel_errors: Vec<f64>,
    pub checked_entries: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn eval<F>(f: &F, inputs: &[SeqTensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against
/// central differences for every input tensor.
pub fn check_gradients<F>(
    inputs: &[SeqTensor],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    drop(g);

    let mut work = inputs.to_vec();
    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let stride = opts.max_entries.map_or(1, |m| n.div_ceil(m.max(1)).max(1));
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for e in (0..n).step_by(stride) {
            let x0 = input.data()[e];
            let h = opts.step * x0.abs().max(1.0);
            work[i].data_mut()[e] = x0 + h;
            let fp = eval(&f, &work)?;
            work[i].data_mut()[e] = x0 - h;
            let fm = eval(&f, &work)?;
            work[i].data_mut()[e] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i][e];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            checked += 1;
        }
        let scale = a2.sqrt().max(n2.sqrt()).max(opts.abs_floor);
        rel_errors.push(diff2.sqrt() / scale);
    }
    Ok(GradCheckReport {
        rel_errors,
        checked_entries: checked,
    })
}
