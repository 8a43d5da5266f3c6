use alloc::vec::Vec;

use super::graph::{Graph, Var};
use crate::{Result, Tensor};

/// Largest component-wise relative error between reverse-mode gradients of
/// `f` and central finite differences with the given `step`.
///
/// `f` builds a scalar from the supplied input leaves. The relative error
/// of a component is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |point: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = point.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut point: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for j in 0..input.len() {
            let orig = input.data()[j];
            point[k].data_mut()[j] = orig + step;
            let up = eval(&point)?;
            point[k].data_mut()[j] = orig - step;
            let down = eval(&point)?;
            point[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.map_or(0.0, |t| t.data()[j]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_point_three() {
        let err = check_gradients(
            |g, v| {
                let s = g.sigmoid(v[0]);
                Ok(g.sum(s))
            },
            &[Tensor::scalar(0.3)],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_map_is_exact() {
        let w = Tensor::from_rows(&[&[0.5, -1.0], &[2.0, 0.25]]).unwrap();
        let x = Tensor::from_rows(&[&[1.0, 3.0]]).unwrap();
        let err = check_gradients(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                Ok(g.sum(y))
            },
            &[x, w],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }
}
