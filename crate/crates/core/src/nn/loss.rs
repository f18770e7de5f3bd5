use crate::error::{Error, Result};

/// Mean squared error over all entries and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;

    #[test]
    fn equal_inputs_have_zero_loss() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn single_value_by_hand() {
        let (l, g) = mse_loss(&[0.0], &[2.0]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, vec![-4.0]);
        assert!(mse_loss(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = [0.3, -1.2, 2.5, 0.0];
        let (_, g) = mse_loss(&[1.0, 0.5, -0.7, 2.0], &t).unwrap();
        let mut p = vec![1.0, 0.5, -0.7, 2.0];
        assert!(grad_check(&mut p, &g, |p| mse_loss(p, &t).unwrap().0, 1e-5) < 1e-8);
    }
}
