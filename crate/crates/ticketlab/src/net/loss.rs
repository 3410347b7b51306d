//! Batch losses and softmax utilities.
//!
//! Each loss returns the scalar batch loss together with `dL/dy` at the
//! network output, ready for [`super::backward`]. Softmax lives here rather
//! than in the forward pass so logits stay numerically unconstrained.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Row-wise log-softmax.
pub fn log_softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| v - max);
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = log_softmax(logits);
    out.mapv_inplace(f64::exp);
    out
}

/// Softmax of a single logit vector.
pub fn softmax_1d(logits: ArrayView1<f64>) -> Array1<f64> {
    let v = logits.insert_axis(Axis(0));
    softmax(v).index_axis(Axis(0), 0).to_owned()
}

/// Mean squared error `(1/N) * sum 0.5 ||y - t||^2`.
pub fn mse(outputs: &Array2<f64>, targets: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = outputs.nrows() as f64;
    let diff = outputs - &targets;
    let loss = diff.iter().map(|v| 0.5 * v * v).sum::<f64>() / n;
    (loss, diff / n)
}

/// Per-element Huber value and derivative.
fn huber(e: f64, delta: f64) -> (f64, f64) {
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// Importance-weighted Huber loss on the Q-values of the taken actions.
///
/// `q` is the batched Q output `(batch, n_actions)`; the loss touches only
/// `q[i, actions[i]]`. Returns `(loss, dL/dq, td_errors)` with
/// `td_error[i] = q[i, a_i] - target[i]`.
pub fn huber_q(
    q: &Array2<f64>,
    actions: &[usize],
    targets: ArrayView1<f64>,
    is_weights: ArrayView1<f64>,
    delta: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = q.nrows();
    let mut grad = Array2::zeros(q.raw_dim());
    let mut td = Array1::zeros(n);
    let mut loss = 0.0;
    for i in 0..n {
        let e = q[[i, actions[i]]] - targets[i];
        td[i] = e;
        let (l, d) = huber(e, delta);
        loss += is_weights[i] * l;
        grad[[i, actions[i]]] = is_weights[i] * d / n as f64;
    }
    (loss / n as f64, grad, td)
}

/// Cross-entropy between a fixed target distribution and softmax(logits),
/// averaged over the batch: `H(p_target, softmax(logits))`.
pub fn cross_entropy_probs(
    logits: &Array2<f64>,
    target_probs: ArrayView2<f64>,
) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let logp = log_softmax(logits.view());
    let loss = -(&target_probs * &logp).sum() / n;
    // dL/dlogits = (softmax(logits) - p) / n for normalized target rows
    let mut grad = logp.mapv(f64::exp);
    grad -= &target_probs;
    grad /= n;
    (loss, grad)
}
