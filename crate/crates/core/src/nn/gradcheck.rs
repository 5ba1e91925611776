//! Central finite-difference gradient checks.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Gradients below this magnitude are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the analytic gradient of a scalar function of `inputs` with
/// central differences at `step`, returning the largest relative error over
/// every input entry. `build` receives one leaf per input and must return a
/// scalar node.
pub fn max_relative_error<F>(inputs: &[Tensor], step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        let zeros = vec![0.0; t.numel()];
        let analytic = grads.get(vars[i]).unwrap_or(&zeros);
        for j in 0..t.numel() {
            let orig = t.data[j];
            probe[i].data[j] = orig + step;
            let up = eval(&probe)?;
            probe[i].data[j] = orig - step;
            let down = eval(&probe)?;
            probe[i].data[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic[j], numeric));
        }
    }
    Ok(worst)
}
