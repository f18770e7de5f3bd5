/// Smallest denominator used when comparing gradients, so entries that are
/// numerically zero are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Compares `analytic` with central finite differences of `f` at `params`
/// and returns the largest relative error. `params` is restored on return.
pub fn grad_check<F>(params: &mut [f64], analytic: &[f64], f: F, eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + eps;
        let up = f(params);
        params[i] = orig - eps;
        let down = f(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Activation, DenseLayer};
    use crate::nn::loss::mse_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_model_is_exact() {
        let coef = [0.5, -2.0, 3.0];
        let f = |p: &[f64]| p.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
        let mut p = vec![1.0, 2.0, -1.0];
        assert!(grad_check(&mut p, &coef, f, 1e-5) < 1e-9);
        assert_eq!(p, vec![1.0, 2.0, -1.0]);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |p: &[f64]| p[0] * p[0];
        let mut p = vec![3.0];
        assert!(grad_check(&mut p, &[5.0], f, 1e-5) > 0.1);
    }

    #[test]
    fn two_layer_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l1 = DenseLayer::new(&mut rng, 6, 8, Activation::Tanh);
        let l2 = DenseLayer::new(&mut rng, 8, 3, Activation::Identity);
        let batch = 4;
        let x: Vec<f64> = (0..batch * 6)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let t: Vec<f64> = (0..batch * 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let loss = |w1: &[f64]| {
            let mut a = l1.clone();
            a.w.value.copy_from_slice(w1);
            let h = a.forward(&x, batch).unwrap();
            mse_loss(&l2.forward(&h, batch).unwrap(), &t).unwrap().0
        };
        let h = l1.forward(&x, batch).unwrap();
        let y = l2.forward(&h, batch).unwrap();
        let (_, dy) = mse_loss(&y, &t).unwrap();
        let dh = l2.gradients(&h, &y, &dy, batch).unwrap().dx;
        let g1 = l1.gradients(&x, &h, &dh, batch).unwrap();
        let mut w1 = l1.w.value.clone();
        assert!(grad_check(&mut w1, &g1.dw, loss, 1e-5) < 1e-6);
    }
}
