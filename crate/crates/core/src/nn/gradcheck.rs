//! Finite-difference verification of every analytic backward pass.

use super::{
    batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, dropout_backward, gelu,
    gelu_backward, layernorm_backward, layernorm_forward, mha_backward, mha_forward,
    softmax_cross_entropy, softmax_cross_entropy_backward, BatchNormStats, DropoutMask,
    MhaWeights,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Outcome of checking one operation's backward pass.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub name: String,
    /// Worst relative error seen across all cases and all arguments.
    pub max_rel_err: f64,
    pub threshold: f64,
    pub cases: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

/// Compares an analytic gradient against central differences of `f` around
/// `x`, returning the worst relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F: Fn(&Tensor) -> f64>(f: F, x: &Tensor, analytic: &Tensor, h: f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape(), "analytic gradient shape mismatch");
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
        worst = worst.max(rel);
    }
    worst
}

fn random(rng: &mut RngState, shape: Vec<usize>, sigma: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    rng.fill_gaussian(t.data_mut());
    t.scale(sigma)
}

fn weighted_sum(y: &Tensor, c: &Tensor) -> f64 {
    y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn check_dense(rng: &mut RngState, h: f64) -> f64 {
    let x = random(rng, vec![3, 4], 1.0);
    let w = random(rng, vec![4, 2], 0.7);
    let b = random(rng, vec![2], 0.5);
    let c = random(rng, vec![3, 2], 1.0);
    let (dx, dw, db) = dense_backward(&x, &w, &c);
    let mut worst = grad_check(
        |xt| weighted_sum(&dense_forward(xt, &w, &b).unwrap(), &c),
        &x,
        &dx,
        h,
    );
    worst = worst.max(grad_check(
        |wt| weighted_sum(&dense_forward(&x, wt, &b).unwrap(), &c),
        &w,
        &dw,
        h,
    ));
    worst.max(grad_check(
        |bt| weighted_sum(&dense_forward(&x, &w, bt).unwrap(), &c),
        &b,
        &db,
        h,
    ))
}

fn check_layernorm(rng: &mut RngState, h: f64) -> f64 {
    let eps = 1e-5;
    let x = random(rng, vec![4, 6], 1.0);
    let gamma = random(rng, vec![6], 0.5).map(|v| v + 1.0);
    let beta = random(rng, vec![6], 0.5);
    let c = random(rng, vec![4, 6], 1.0);
    let (dx, dgamma, dbeta) = layernorm_backward(&x, &gamma, eps, &c);
    let mut worst = grad_check(
        |xt| weighted_sum(&layernorm_forward(xt, &gamma, &beta, eps).unwrap(), &c),
        &x,
        &dx,
        h,
    );
    worst = worst.max(grad_check(
        |gt| weighted_sum(&layernorm_forward(&x, gt, &beta, eps).unwrap(), &c),
        &gamma,
        &dgamma,
        h,
    ));
    worst.max(grad_check(
        |bt| weighted_sum(&layernorm_forward(&x, &gamma, bt, eps).unwrap(), &c),
        &beta,
        &dbeta,
        h,
    ))
}

fn check_batchnorm(rng: &mut RngState, h: f64) -> f64 {
    let eps = 1e-5;
    let x = random(rng, vec![6, 4], 1.0);
    let gamma = random(rng, vec![4], 0.5).map(|v| v + 1.0);
    let beta = random(rng, vec![4], 0.5);
    let c = random(rng, vec![6, 4], 1.0);
    // Training-mode output depends only on batch statistics, so fresh running
    // stats per evaluation leave the value unchanged.
    let fwd = |xt: &Tensor, gt: &Tensor, bt: &Tensor| {
        let mut stats = BatchNormStats::new(4);
        batchnorm_forward(xt, gt, bt, &mut stats, true, 0.1, eps).unwrap()
    };
    let (dx, dgamma, dbeta) = batchnorm_backward(&x, &gamma, eps, &c);
    let mut worst = grad_check(|xt| weighted_sum(&fwd(xt, &gamma, &beta), &c), &x, &dx, h);
    worst = worst.max(grad_check(
        |gt| weighted_sum(&fwd(&x, gt, &beta), &c),
        &gamma,
        &dgamma,
        h,
    ));
    worst.max(grad_check(
        |bt| weighted_sum(&fwd(&x, &gamma, bt), &c),
        &beta,
        &dbeta,
        h,
    ))
}

fn check_dropout(rng: &mut RngState, h: f64) -> f64 {
    let p = 0.4;
    let x = random(rng, vec![2, 8], 1.0);
    let c = random(rng, vec![2, 8], 1.0);
    let keep: Vec<bool> = (0..x.len()).map(|_| rng.next_f64() >= p).collect();
    let mask = DropoutMask { keep };
    // The mask is frozen, so the op under test is elementwise scaling.
    let fwd = |xt: &Tensor| {
        let scaled = Tensor::new(
            xt.shape().to_vec(),
            xt.data()
                .iter()
                .zip(&mask.keep)
                .map(|(&v, &k)| if k { v / (1.0 - p) } else { 0.0 })
                .collect(),
        );
        weighted_sum(&scaled, &c)
    };
    let dx = dropout_backward(&c, &mask, p);
    grad_check(fwd, &x, &dx, h)
}

fn check_gelu(rng: &mut RngState, h: f64) -> f64 {
    let x = random(rng, vec![3, 5], 1.5);
    let c = random(rng, vec![3, 5], 1.0);
    let dx = gelu_backward(&x, &c);
    grad_check(|xt| weighted_sum(&gelu(xt), &c), &x, &dx, h)
}

fn check_softmax_xent(rng: &mut RngState, h: f64) -> f64 {
    let logits = random(rng, vec![4, 5], 2.0);
    let labels: Vec<usize> = (0..4).map(|_| rng.next_below(5) as usize).collect();
    let (_, probs) = softmax_cross_entropy(&logits, &labels).unwrap();
    let grad = softmax_cross_entropy_backward(&probs, &labels);
    grad_check(
        |lt| softmax_cross_entropy(lt, &labels).unwrap().0,
        &logits,
        &grad,
        h,
    )
}

fn check_attention(rng: &mut RngState, h: f64) -> f64 {
    let (n, d_model, heads, d_key) = (3, 4, 2, 2);
    let x = random(rng, vec![n, d_model], 1.0);
    let w = MhaWeights {
        wq: (0..heads).map(|_| random(rng, vec![d_model, d_key], 0.6)).collect(),
        wk: (0..heads).map(|_| random(rng, vec![d_model, d_key], 0.6)).collect(),
        wv: (0..heads).map(|_| random(rng, vec![d_model, d_key], 0.6)).collect(),
        wo: random(rng, vec![heads * d_key, d_model], 0.6),
    };
    let c = random(rng, vec![n, d_model], 1.0);
    let (_, cache) = mha_forward(&x, &w).unwrap();
    let (dx, grads) = mha_backward(&x, &w, &cache, &c);

    let loss_with = |w: &MhaWeights, x: &Tensor| weighted_sum(&mha_forward(x, w).unwrap().0, &c);
    let mut worst = grad_check(|xt| loss_with(&w, xt), &x, &dx, h);
    worst = worst.max(grad_check(
        |wt| {
            let mut wc = w.clone();
            wc.wo = wt.clone();
            loss_with(&wc, &x)
        },
        &w.wo,
        &grads.wo,
        h,
    ));
    for hd in 0..heads {
        worst = worst.max(grad_check(
            |wt| {
                let mut wc = w.clone();
                wc.wq[hd] = wt.clone();
                loss_with(&wc, &x)
            },
            &w.wq[hd],
            &grads.wq[hd],
            h,
        ));
        worst = worst.max(grad_check(
            |wt| {
                let mut wc = w.clone();
                wc.wk[hd] = wt.clone();
                loss_with(&wc, &x)
            },
            &w.wk[hd],
            &grads.wk[hd],
            h,
        ));
        worst = worst.max(grad_check(
            |wt| {
                let mut wc = w.clone();
                wc.wv[hd] = wt.clone();
                loss_with(&wc, &x)
            },
            &w.wv[hd],
            &grads.wv[hd],
            h,
        ));
    }
    worst
}

/// Runs every backward pass against central differences on `cases` random
/// inputs per operation.
pub fn run_gradient_suite(cases: usize, h: f64, threshold: f64, seed: u64) -> Vec<GradCheckReport> {
    let checks: Vec<(&str, fn(&mut RngState, f64) -> f64)> = vec![
        ("dense", check_dense),
        ("layernorm", check_layernorm),
        ("batchnorm", check_batchnorm),
        ("dropout", check_dropout),
        ("gelu", check_gelu),
        ("softmax_cross_entropy", check_softmax_xent),
        ("attention", check_attention),
    ];
    checks
        .into_iter()
        .enumerate()
        .map(|(stream, (name, check))| {
            let mut rng = RngState::new(seed).derive(stream as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..cases {
                worst = worst.max(check(&mut rng, h));
            }
            GradCheckReport {
                name: name.to_string(),
                max_rel_err: worst,
                threshold,
                cases,
            }
        })
        .collect()
}
