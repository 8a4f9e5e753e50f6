//! Layer and batch normalization. Both use population variance (divisor n).

use super::NnError;
use crate::tensor::Tensor;

/// Normalizes each slice along the last axis: `(x - mean) / sqrt(var + eps) * gamma + beta`.
pub fn layernorm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<Tensor, NnError> {
    let d = *x.shape().last().ok_or(NnError::EmptyAxis)?;
    if d == 0 {
        return Err(NnError::EmptyAxis);
    }
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(NnError::ShapeMismatch {
            context: "layernorm_forward gamma/beta",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let slice = &x.data()[r * d..(r + 1) * d];
        let mean = slice.iter().sum::<f64>() / d as f64;
        let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / libm::sqrt(var + eps);
        for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(slice) {
            *o = (v - mean) * inv_std;
        }
        for (j, o) in out[r * d..(r + 1) * d].iter_mut().enumerate() {
            *o = *o * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out))
}

/// Gradients of layer normalization: returns `(dx, dgamma, dbeta)`.
pub fn layernorm_backward(
    x: &Tensor,
    gamma: &Tensor,
    eps: f64,
    d_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = *x.shape().last().expect("layernorm_backward on empty shape");
    let rows = x.len() / d;
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    for r in 0..rows {
        let slice = &x.data()[r * d..(r + 1) * d];
        let grad = &d_out.data()[r * d..(r + 1) * d];
        let mean = slice.iter().sum::<f64>() / d as f64;
        let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / libm::sqrt(var + eps);
        let xhat: Vec<f64> = slice.iter().map(|v| (v - mean) * inv_std).collect();

        for j in 0..d {
            dgamma[j] += grad[j] * xhat[j];
            dbeta[j] += grad[j];
        }
        // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
        // where g is the upstream gradient scaled into the normalized frame.
        let g: Vec<f64> = (0..d).map(|j| grad[j] * gamma.data()[j]).collect();
        let g_mean = g.iter().sum::<f64>() / d as f64;
        let gx_mean = g.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[r * d + j] = inv_std * (g[j] - g_mean - xhat[j] * gx_mean);
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx),
        Tensor::new(vec![d], dgamma),
        Tensor::new(vec![d], dbeta),
    )
}

/// Running statistics owned by a batch-norm layer, updated in train mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNormStats {
    pub fn new(dim: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(vec![dim]),
            running_var: Tensor::ones(vec![dim]),
        }
    }
}

/// Batch normalization over `x: [batch, d]`.
///
/// Train mode normalizes with batch statistics and folds them into the running
/// stats as `running = (1 - momentum) * running + momentum * batch`. Eval mode
/// normalizes with the running stats and leaves them untouched.
pub fn batchnorm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut BatchNormStats,
    train: bool,
    momentum: f64,
    eps: f64,
) -> Result<Tensor, NnError> {
    let (batch, d) = check_batchnorm_shapes(x, gamma, beta)?;
    if train && batch < 2 {
        return Err(NnError::DegenerateBatch { batch });
    }

    let (mean, var) = if train {
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for j in 0..d {
            let col = (0..batch).map(|i| x.data()[i * d + j]);
            let m = col.clone().sum::<f64>() / batch as f64;
            let v = col.map(|u| (u - m) * (u - m)).sum::<f64>() / batch as f64;
            mean[j] = m;
            var[j] = v;
        }
        for j in 0..d {
            let rm = &mut stats.running_mean.data_mut()[j];
            *rm = (1.0 - momentum) * *rm + momentum * mean[j];
            let rv = &mut stats.running_var.data_mut()[j];
            *rv = (1.0 - momentum) * *rv + momentum * var[j];
        }
        (mean, var)
    } else {
        (
            stats.running_mean.data().to_vec(),
            stats.running_var.data().to_vec(),
        )
    };

    let mut out = vec![0.0; x.len()];
    for i in 0..batch {
        for j in 0..d {
            let xhat = (x.data()[i * d + j] - mean[j]) / libm::sqrt(var[j] + eps);
            out[i * d + j] = xhat * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok(Tensor::new(vec![batch, d], out))
}

/// Train-mode gradients of batch normalization: returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    x: &Tensor,
    gamma: &Tensor,
    eps: f64,
    d_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (batch, d) = x.dims2();
    let n = batch as f64;
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = (0..batch).map(|i| x.data()[i * d + j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / libm::sqrt(var + eps);
        let xhat: Vec<f64> = col.iter().map(|v| (v - mean) * inv_std).collect();
        let grad: Vec<f64> = (0..batch).map(|i| d_out.data()[i * d + j]).collect();

        let g_sum: f64 = grad.iter().sum();
        let gx_sum: f64 = grad.iter().zip(&xhat).map(|(a, b)| a * b).sum();
        dgamma[j] = gx_sum;
        dbeta[j] = g_sum;
        for i in 0..batch {
            dx[i * d + j] =
                gamma.data()[j] * inv_std * (grad[i] - g_sum / n - xhat[i] * gx_sum / n);
        }
    }
    (
        Tensor::new(vec![batch, d], dx),
        Tensor::new(vec![d], dgamma),
        Tensor::new(vec![d], dbeta),
    )
}

fn check_batchnorm_shapes(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(usize, usize), NnError> {
    if x.rank() != 2 {
        return Err(NnError::ShapeMismatch {
            context: "batchnorm_forward",
            lhs: x.shape().to_vec(),
            rhs: vec![0, gamma.len()],
        });
    }
    let (batch, d) = x.dims2();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(NnError::ShapeMismatch {
            context: "batchnorm_forward gamma/beta",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    Ok((batch, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layernorm_constant_slice_maps_to_zero() {
        let x = Tensor::from_slice(&[3.0, 3.0, 3.0]);
        let y = layernorm_forward(&x, &Tensor::ones(vec![3]), &Tensor::zeros(vec![3]), 1e-5)
            .unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn layernorm_hand_case() {
        // std of [1,2,3] with population variance is sqrt(2/3)
        let x = Tensor::from_slice(&[1.0, 2.0, 3.0]);
        let y =
            layernorm_forward(&x, &Tensor::ones(vec![3]), &Tensor::zeros(vec![3]), 0.0).unwrap();
        let expected = [-1.22474, 0.0, 1.22474];
        for (got, want) in y.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn layernorm_beta_shifts_constant_input() {
        let x = Tensor::from_slice(&[4.0, 4.0, 4.0]);
        let beta = Tensor::from_slice(&[7.0, 7.0, 7.0]);
        let y = layernorm_forward(&x, &Tensor::ones(vec![3]), &beta, 1e-5).unwrap();
        for v in y.data() {
            assert!((v - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_rejects_empty_axis() {
        let x = Tensor::zeros(vec![2, 0]);
        let err = layernorm_forward(&x, &Tensor::zeros(vec![0]), &Tensor::zeros(vec![0]), 1e-5)
            .unwrap_err();
        assert_eq!(err, NnError::EmptyAxis);
    }

    #[test]
    fn batchnorm_eval_identity_stats() {
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let mut stats = BatchNormStats::new(3);
        let y = batchnorm_forward(
            &x,
            &Tensor::ones(vec![3]),
            &Tensor::zeros(vec![3]),
            &mut stats,
            false,
            0.1,
            0.0,
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn batchnorm_train_hand_case() {
        // batch [[1], [3]]: mean 2, population var 1
        let x = Tensor::new(vec![2, 1], vec![1.0, 3.0]);
        let mut stats = BatchNormStats::new(1);
        let y = batchnorm_forward(
            &x,
            &Tensor::ones(vec![1]),
            &Tensor::zeros(vec![1]),
            &mut stats,
            true,
            0.1,
            1e-12,
        )
        .unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-6);
        assert!((y.data()[1] - 1.0).abs() < 1e-6);
        // Running stats moved toward the batch statistics.
        assert!((stats.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((stats.running_var.data()[0] - (0.9 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_train_batch_of_one_errors() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]);
        let mut stats = BatchNormStats::new(2);
        let err = batchnorm_forward(
            &x,
            &Tensor::ones(vec![2]),
            &Tensor::zeros(vec![2]),
            &mut stats,
            true,
            0.1,
            1e-5,
        )
        .unwrap_err();
        assert_eq!(err, NnError::DegenerateBatch { batch: 1 });
    }

    #[test]
    fn batchnorm_eval_does_not_touch_running_stats() {
        let x = Tensor::new(vec![2, 1], vec![5.0, 9.0]);
        let mut stats = BatchNormStats::new(1);
        let before = stats.clone();
        batchnorm_forward(
            &x,
            &Tensor::ones(vec![1]),
            &Tensor::zeros(vec![1]),
            &mut stats,
            false,
            0.1,
            1e-5,
        )
        .unwrap();
        assert_eq!(stats, before);
    }
}
