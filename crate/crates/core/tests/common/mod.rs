//! Reference implementations used as test oracles. Deliberately naive.

use nalgebra::DMatrix;

/// Plain Sinkhorn matrix scaling on `K = exp(S / lambda)`, iterated until the
/// row and column sums are within `tol` of the marginals or `max_iter` runs out.
///
/// Returns the plan and the final residual. Overflow shows up as non-finite
/// entries, not as an error.
pub fn naive_sinkhorn(
    s: &DMatrix<f64>,
    a: &[f64],
    b: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (DMatrix<f64>, f64) {
    let (m, n) = s.shape();
    let k = s.map(|x| (x / lambda).exp());
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let mut plan = DMatrix::zeros(m, n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for i in 0..m {
            let kv: f64 = (0..n).map(|j| k[(i, j)] * v[j]).sum();
            u[i] = a[i] / kv;
        }
        for j in 0..n {
            let ku: f64 = (0..m).map(|i| k[(i, j)] * u[i]).sum();
            v[j] = b[j] / ku;
        }
        plan = DMatrix::from_fn(m, n, |i, j| u[i] * k[(i, j)] * v[j]);
        residual = 0.0f64;
        for i in 0..m {
            let r: f64 = plan.row(i).sum();
            residual = residual.max((r - a[i]).abs());
        }
        for j in 0..n {
            let c: f64 = plan.column(j).sum();
            residual = residual.max((c - b[j]).abs());
        }
        if !residual.is_finite() || residual <= tol {
            break;
        }
    }
    (plan, residual)
}

/// Marginals of an augmented problem with `m` real rows and `n` real columns.
pub fn augmented_marginals(m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![1.0; m];
    a.push(n as f64);
    let mut b = vec![1.0; n];
    b.push(m as f64);
    (a, b)
}
