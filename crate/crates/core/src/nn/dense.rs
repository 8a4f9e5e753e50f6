//! Fully connected layer.

use super::NnError;
use crate::tensor::Tensor;

/// `y = x W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    check_shapes(x, w, b)?;
    let y = x.matmul(w);
    let (batch, out_dim) = y.dims2();
    let mut y = y.into_data();
    for i in 0..batch {
        for j in 0..out_dim {
            y[i * out_dim + j] += b.data()[j];
        }
    }
    Ok(Tensor::new(vec![batch, out_dim], y))
}

/// Gradients of a dense layer: returns `(dx, dw, db)` for upstream `d_out`.
pub fn dense_backward(x: &Tensor, w: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let dx = d_out.matmul(&w.transpose());
    let dw = x.transpose().matmul(d_out);
    let (batch, out_dim) = d_out.dims2();
    let mut db = vec![0.0; out_dim];
    for i in 0..batch {
        for j in 0..out_dim {
            db[j] += d_out.data()[i * out_dim + j];
        }
    }
    (dx, dw, Tensor::new(vec![out_dim], db))
}

fn check_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(), NnError> {
    if x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0] {
        return Err(NnError::ShapeMismatch {
            context: "dense_forward",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if b.shape() != [w.shape()[1]] {
        return Err(NnError::ShapeMismatch {
            context: "dense_forward bias",
            lhs: w.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::new(vec![1, 2], vec![5.0, -3.0]);
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(vec![2]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[5.0, -3.0]);
    }

    #[test]
    fn hand_multiplied_case() {
        // [1, 1] x [[1, 2], [3, 4]] = [4, 6]
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]);
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::zeros(vec![2]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0]);
    }

    #[test]
    fn mismatched_shapes_error_names_both() {
        let x = Tensor::zeros(vec![2, 3]);
        let w = Tensor::zeros(vec![4, 5]);
        let b = Tensor::zeros(vec![5]);
        let err = dense_forward(&x, &w, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn backward_shapes_match_inputs() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = Tensor::ones(vec![3, 4]);
        let d_out = Tensor::ones(vec![2, 4]);
        let (dx, dw, db) = dense_backward(&x, &w, &d_out);
        assert_eq!(dx.shape(), x.shape());
        assert_eq!(dw.shape(), w.shape());
        assert_eq!(db.shape(), &[4]);
        // db sums the upstream gradient over the batch.
        assert_eq!(db.data(), &[2.0, 2.0, 2.0, 2.0]);
    }
}
