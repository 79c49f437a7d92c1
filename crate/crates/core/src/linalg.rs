//! Small dense factorizations for 3×3 matrices.
//!
//! One-sided Jacobi: plane rotations are applied to the columns of `A`
//! until they are mutually orthogonal. The sweep order is fixed, so the
//! result is bitwise reproducible for a given input.

use nalgebra::{Matrix3, Vector3};

const MAX_SWEEPS: usize = 64;

/// `A = U · diag(singular_values) · Vᵀ`, singular values sorted descending.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Matrix3<f64>,
    pub singular_values: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        self.u * Matrix3::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

pub fn svd3(a: &Matrix3<f64>) -> Svd3 {
    let mut w = *a;
    let mut v = Matrix3::<f64>::identity();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = w.column(p).norm_squared();
            let beta = w.column(q).norm_squared();
            let gamma = w.column(p).dot(&w.column(q));
            if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            rotate_columns(&mut w, p, q, c, s);
            rotate_columns(&mut v, p, q, c, s);
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = [w.column(0).norm(), w.column(1).norm(), w.column(2).norm()];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let mut u = Matrix3::zeros();
    let mut v_sorted = Matrix3::zeros();
    let mut sorted = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        sorted[dst] = sigma[src];
        v_sorted.set_column(dst, &v.column(src));
        if sigma[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma[src]));
        }
    }
    sigma = sorted;

    // Columns of U paired with (numerically) zero singular values are not
    // determined by A; complete them to an orthonormal basis.
    let scale = sigma[0].max(f64::MIN_POSITIVE);
    let negligible = |s: f64| s <= scale * 1e-14;
    if sigma[0] == 0.0 {
        u = Matrix3::identity();
    } else if negligible(sigma[1]) {
        let u0 = u.column(0).into_owned();
        let u1 = any_orthogonal(&u0);
        u.set_column(1, &u1);
        u.set_column(2, &u0.cross(&u1));
    } else if negligible(sigma[2]) {
        let u2 = u.column(0).cross(&u.column(1)).normalize();
        u.set_column(2, &u2);
    }

    Svd3 {
        u,
        singular_values: Vector3::from(sigma),
        v: v_sorted,
    }
}

fn rotate_columns(m: &mut Matrix3<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..3 {
        let mp = m[(r, p)];
        let mq = m[(r, q)];
        m[(r, p)] = c * mp - s * mq;
        m[(r, q)] = s * mp + c * mq;
    }
}

fn any_orthogonal(v: &Vector3<f64>) -> Vector3<f64> {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&axis).normalize()
}

/// Eigen-decomposition of a symmetric positive semi-definite 3×3 matrix.
///
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// columns. For PSD input the SVD and the eigen-decomposition coincide.
pub fn symmetric_eigen_psd(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let svd = svd3(m);
    (svd.singular_values, svd.v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(seed: u64) -> Matrix3<f64> {
        let mut rng = seeded_rng(seed);
        Matrix3::from_fn(|_, _| rng.random_range(-3.0..3.0))
    }

    fn check(a: &Matrix3<f64>) {
        let svd = svd3(a);
        let err = (svd.reconstruct() - a).amax();
        assert!(err <= 1e-10 * a.amax().max(1.0), "backward error {err}");
        assert!((svd.u.transpose() * svd.u - Matrix3::identity()).amax() < 1e-12);
        assert!((svd.v.transpose() * svd.v - Matrix3::identity()).amax() < 1e-12);
        let s = svd.singular_values;
        assert!(s[0] >= s[1] && s[1] >= s[2] && s[2] >= 0.0);
    }

    #[test]
    fn identity_and_zero() {
        check(&Matrix3::identity());
        check(&Matrix3::zeros());
        let svd = svd3(&Matrix3::zeros());
        assert_eq!(svd.singular_values, Vector3::zeros());
    }

    #[test]
    fn rank_deficient_inputs() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let b = Vector3::new(-1.0, 0.5, 2.0);
        check(&(a * b.transpose()));
        check(&(a * b.transpose() + b * a.transpose()));
        let svd = svd3(&(a * b.transpose()));
        assert!(svd.singular_values[1] < 1e-12);
    }

    #[test]
    fn known_singular_values() {
        let a = Matrix3::new(3.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 1.0);
        let svd = svd3(&a);
        assert_eq!(svd.singular_values, Vector3::new(5.0, 3.0, 1.0));
    }

    #[test]
    fn deterministic() {
        let a = random_matrix(3);
        let x = svd3(&a);
        let y = svd3(&a);
        assert_eq!(x.u, y.u);
        assert_eq!(x.v, y.v);
        assert_eq!(x.singular_values, y.singular_values);
    }

    #[test]
    fn eigen_of_covariance() {
        let m = Matrix3::new(4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.5);
        let (vals, vecs) = symmetric_eigen_psd(&m);
        for k in 0..3 {
            let v = vecs.column(k);
            assert!((m * v - v * vals[k]).amax() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn random_factorizations(seed in any::<u64>()) {
            check(&random_matrix(seed));
        }
    }
}
