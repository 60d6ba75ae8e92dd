//! Central-difference gradient verification.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::exec;

/// Compare reverse-mode gradients of a scalar function against central
/// differences, coordinate by coordinate.
///
/// `build` constructs the scalar output from leaf vars bound to `params`
/// (in order). Returns the max over all coordinates of
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(build: &F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync,
{
    if eps <= 0.0 {
        return Err(Error::validation("eps must be positive"));
    }

    // Analytic gradients in a single backward pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(Error::shape("finite_diff_check needs a scalar function"));
    }
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    // Flattened coordinate list.
    let mut coords = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.numel() {
            coords.push((pi, ei));
        }
    }

    let eval = |shift: &dyn Fn(&mut [Tensor])| -> Result<f64> {
        let mut local: Vec<Tensor> = params.to_vec();
        shift(&mut local);
        let mut g = Graph::new();
        let vars: Vec<Var> = local.into_iter().map(|t| g.leaf(t, false)).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let errs = exec::map_indexed(coords.len(), |ci| -> Result<f64> {
        let (pi, ei) = coords[ci];
        let plus = eval(&|ts: &mut [Tensor]| ts[pi].data_mut()[ei] += eps)?;
        let minus = eval(&|ts: &mut [Tensor]| ts[pi].data_mut()[ei] -= eps)?;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[pi][ei];
        Ok((a - numeric).abs() / a.abs().max(1.0))
    });

    let mut max_err: f64 = 0.0;
    for e in errs {
        max_err = max_err.max(e?);
    }
    Ok(max_err)
}
