use alloc::vec::Vec;

use super::{AutodiffError, Graph, Tensor, Var};

/// Largest disagreement between backpropagated gradients and central finite
/// differences with step `h`, over every entry of every parameter.
///
/// Each entry's error is relative to the larger of the two magnitudes, or
/// absolute when both are below `1e-6`. `f` builds a scalar loss from the
/// parameter handles and is re-run once per perturbation.
pub fn max_gradient_error<F>(params: &[Tensor<f64>], h: f64, f: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| graph.param(p.clone())).collect();
    let loss = f(&mut graph, &vars);
    graph.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| graph.grad_or_zeros(v)).collect();

    let eval = |ps: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vs: Vec<Var> = ps.iter().map(|p| g.input(p.clone())).collect();
        let l = f(&mut g, &vs);
        g.value(l).data()[0]
    };

    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for e in 0..p.len() {
            let x = p.data()[e];
            work[pi].data_mut()[e] = x + h;
            let up = eval(&work);
            work[pi].data_mut()[e] = x - h;
            let down = eval(&work);
            work[pi].data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[pi].data()[e];
            let err = if exact.abs() < 1e-6 && numeric.abs() < 1e-6 {
                (exact - numeric).abs()
            } else {
                (exact - numeric).abs() / exact.abs().max(numeric.abs())
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
