//! Closed-form least-squares rigid alignment from point correspondences.
//!
//! Given pairs `(x_i, y_i)` and optional weights `w_i`, the rotation and
//! translation minimizing `Σ w_i ‖R x_i + t − y_i‖²` are recovered from the
//! SVD of the centered cross-covariance `H = Σ w_i (x_i − x̄)(y_i − ȳ)ᵀ`:
//!
//! ```text
//! H = U S Vᵀ,   R = V diag(1, 1, d) Uᵀ,   d = sign(det(U Vᵀ)),   t = ȳ − R x̄
//! ```
//!
//! The `d` term keeps `det(R) = +1` when the unconstrained optimum would be a
//! reflection.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::linalg::svd3;

/// Singular values of `H` at or below this are treated as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Index pairs `(source, target)` with optional nonnegative weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pairs: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self {
            pairs,
            weights: None,
        }
    }

    pub fn with_weights(pairs: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} pairs",
                weights.len(),
                pairs.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !pairs.is_empty() && weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("weights must have positive sum".into()));
        }
        Ok(Self {
            pairs,
            weights: Some(weights),
        })
    }

    /// Pairs `i ↔ i` for `i in 0..n`.
    pub fn identity(n: usize) -> Self {
        Self::new((0..n).map(|i| (i, i)).collect())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    fn check_bounds(&self, source: &PointCloud, target: &PointCloud) -> Result<()> {
        match self
            .pairs
            .iter()
            .find(|&&(i, j)| i >= source.len() || j >= target.len())
        {
            Some(&(source_index, target_index)) => Err(Error::IndexOutOfBounds {
                source_index,
                target_index,
            }),
            None => Ok(()),
        }
    }
}

struct Centered {
    source_mean: Vector3<f64>,
    target_mean: Vector3<f64>,
    h: Matrix3<f64>,
}

fn centered_cross_covariance(
    source: &PointCloud,
    target: &PointCloud,
    c: &CorrespondenceSet,
) -> Result<Centered> {
    if c.len() < 3 {
        return Err(Error::Underdetermined(c.len()));
    }
    c.check_bounds(source, target)?;
    let xs = source.points();
    let ys = target.points();

    let mut total = 0.0;
    let mut sx = Vector3::zeros();
    let mut sy = Vector3::zeros();
    for (k, &(i, j)) in c.pairs().iter().enumerate() {
        let w = c.weight(k);
        total += w;
        sx += xs[i] * w;
        sy += ys[j] * w;
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights must have positive sum".into()));
    }
    let source_mean = sx / total;
    let target_mean = sy / total;

    let mut h = Matrix3::zeros();
    for (k, &(i, j)) in c.pairs().iter().enumerate() {
        h += (xs[i] - source_mean) * (ys[j] - target_mean).transpose() * c.weight(k);
    }
    Ok(Centered {
        source_mean,
        target_mean,
        h,
    })
}

/// `H = Σ w_i (x_i − x̄)(y_i − ȳ)ᵀ` with weighted centroids (unit weights by default).
pub fn cross_covariance(
    source: &PointCloud,
    target: &PointCloud,
    c: &CorrespondenceSet,
) -> Result<Matrix3<f64>> {
    centered_cross_covariance(source, target, c).map(|centered| centered.h)
}

pub fn solve_procrustes(
    source: &PointCloud,
    target: &PointCloud,
    c: &CorrespondenceSet,
) -> Result<RigidTransform> {
    let Centered {
        source_mean,
        target_mean,
        h,
    } = centered_cross_covariance(source, target, c)?;

    let svd = svd3(&h);
    if svd.singular_values[1] <= DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateConfiguration);
    }
    let d = (svd.u * svd.v.transpose()).determinant().signum();
    let rotation = svd.v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * svd.u.transpose();
    let translation = target_mean - rotation * source_mean;
    Ok(RigidTransform::from_parts(rotation, translation))
}

/// Mean squared residual `Σ w_i ‖R x_i + t − y_i‖² / Σ w_i`.
pub fn mean_squared_residual(
    t: &RigidTransform,
    source: &PointCloud,
    target: &PointCloud,
    c: &CorrespondenceSet,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &(i, j)) in c.pairs().iter().enumerate() {
        let w = c.weight(k);
        num += w * (t.apply_point(&source.points()[i]) - target.points()[j]).norm_squared();
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_random_transform, EulerAngles};
    use crate::metrics::geodesic_rotation_error;
    use crate::random::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = seeded_rng(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_transform(seed: u64) -> RigidTransform {
        sample_random_transform(&mut seeded_rng(seed), [-180.0, 180.0], [-1.0, 1.0])
    }

    #[test]
    fn recovers_known_transform() {
        let x = random_cloud(10, 1);
        let t = random_transform(2);
        let y = t.apply(&x);
        let est = solve_procrustes(&x, &y, &CorrespondenceSet::identity(10)).unwrap();
        assert!(geodesic_rotation_error(est.rotation(), t.rotation()) < 1e-6);
        assert!((est.translation() - t.translation()).amax() < 1e-9);
    }

    #[test]
    fn identical_clouds_give_identity() {
        let x = random_cloud(12, 3);
        let est = solve_procrustes(&x, &x, &CorrespondenceSet::identity(12)).unwrap();
        assert!(est.max_abs_diff(&RigidTransform::identity()) < 1e-12);
    }

    #[test]
    fn reflection_prone_planar_input_stays_proper() {
        // Target is the mirror image of a planar source; the unconstrained
        // optimum is a reflection.
        let x = PointCloud::from_slices(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.5, 0.2, 0.0],
        ])
        .unwrap();
        let mirrored = PointCloud::new(
            x.points()
                .iter()
                .map(|p| Vector3::new(-p.x, p.y, p.z))
                .collect(),
        )
        .unwrap();
        let est = solve_procrustes(&x, &mirrored, &CorrespondenceSet::identity(5)).unwrap();
        assert!((est.rotation().determinant() - 1.0).abs() < 1e-9);
        let r = est.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn rejects_underdetermined_and_degenerate() {
        let x = random_cloud(5, 4);
        assert!(matches!(
            solve_procrustes(&x, &x, &CorrespondenceSet::identity(2)),
            Err(Error::Underdetermined(2))
        ));
        let line = PointCloud::new((0..6).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect())
            .unwrap();
        assert!(matches!(
            solve_procrustes(&line, &line, &CorrespondenceSet::identity(6)),
            Err(Error::DegenerateConfiguration)
        ));
        let same = PointCloud::from_slices(&[[1.0, 2.0, 3.0]; 4]).unwrap();
        assert!(matches!(
            solve_procrustes(&same, &same, &CorrespondenceSet::identity(4)),
            Err(Error::DegenerateConfiguration)
        ));
        assert!(matches!(
            solve_procrustes(&x, &x, &CorrespondenceSet::new(vec![(0, 0), (1, 1), (9, 2)])),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn covariance_of_centered_point_is_zero() {
        let origin = PointCloud::from_slices(&[[0.0, 0.0, 0.0]]).unwrap();
        let c = CorrespondenceSet::new(vec![(0, 0); 3]);
        assert_eq!(cross_covariance(&origin, &origin, &c).unwrap(), Matrix3::zeros());
    }

    #[test]
    fn covariance_of_symmetric_pairs() {
        // x = ±(1,0,0), y = ±(0,2,0) plus a centered third pair at the origin:
        // H = 2 · (1,0,0)(0,2,0)ᵀ.
        let x = PointCloud::from_slices(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_slices(&[[0.0, 2.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let h = cross_covariance(&x, &y, &CorrespondenceSet::identity(3)).unwrap();
        let mut expected = Matrix3::zeros();
        expected[(0, 1)] = 4.0;
        assert_eq!(h, expected);
    }

    #[test]
    fn covariance_matches_direct_summation() {
        let x = random_cloud(30, 5);
        let y = random_cloud(30, 6);
        let c = CorrespondenceSet::new((0..30).map(|i| (i, (i * 7) % 30)).collect());
        let h = cross_covariance(&x, &y, &c).unwrap();

        let n = c.len() as f64;
        let mut xm = [0.0; 3];
        let mut ym = [0.0; 3];
        for &(i, j) in c.pairs() {
            for a in 0..3 {
                xm[a] += x.points()[i][a] / n;
                ym[a] += y.points()[j][a] / n;
            }
        }
        for r in 0..3 {
            for col in 0..3 {
                let mut s = 0.0;
                for &(i, j) in c.pairs() {
                    s += (x.points()[i][r] - xm[r]) * (y.points()[j][col] - ym[col]);
                }
                assert!((h[(r, col)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let x = random_cloud(15, 7);
        let y = random_transform(8).apply(&random_cloud(15, 9));
        let plain = solve_procrustes(&x, &y, &CorrespondenceSet::identity(15)).unwrap();
        let weighted = CorrespondenceSet::with_weights((0..15).map(|i| (i, i)).collect(), vec![1.0; 15]).unwrap();
        let w = solve_procrustes(&x, &y, &weighted).unwrap();
        assert!(plain.max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn zero_weight_pairs_are_ignored() {
        let x = random_cloud(10, 10);
        let t = random_transform(11);
        let mut y_points = t.apply(&x).points().to_vec();
        y_points[9] += Vector3::new(5.0, -3.0, 2.0);
        let y = PointCloud::new(y_points).unwrap();
        let mut w = vec![1.0; 10];
        w[9] = 0.0;
        let c = CorrespondenceSet::with_weights((0..10).map(|i| (i, i)).collect(), w).unwrap();
        let est = solve_procrustes(&x, &y, &c).unwrap();
        assert!(est.max_abs_diff(&t) < 1e-9);
    }

    #[test]
    fn invalid_weights_rejected() {
        let pairs = vec![(0, 0), (1, 1), (2, 2)];
        assert!(CorrespondenceSet::with_weights(pairs.clone(), vec![1.0, -1.0, 1.0]).is_err());
        assert!(CorrespondenceSet::with_weights(pairs.clone(), vec![0.0; 3]).is_err());
        assert!(CorrespondenceSet::with_weights(pairs, vec![1.0; 2]).is_err());
    }

    proptest! {
        #[test]
        fn exact_recovery(seed in any::<u64>()) {
            let x = random_cloud(8, seed);
            let t = random_transform(seed ^ 0xABCD);
            let est = solve_procrustes(&x, &t.apply(&x), &CorrespondenceSet::identity(8)).unwrap();
            prop_assert!(est.max_abs_diff(&t) < 1e-6);
            let r = est.rotation();
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn residual_is_locally_optimal(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed);
            let x = random_cloud(12, seed);
            let noisy = PointCloud::new(
                random_transform(seed ^ 1)
                    .apply(&x)
                    .points()
                    .iter()
                    .map(|p| p + Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
                    .collect(),
            ).unwrap();
            let c = CorrespondenceSet::identity(12);
            let est = solve_procrustes(&x, &noisy, &c).unwrap();
            let best = mean_squared_residual(&est, &x, &noisy, &c);
            for _ in 0..10 {
                let delta = EulerAngles::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                ).to_rotation();
                let r = delta * est.rotation();
                let x_mean = x.centroid().unwrap();
                let y_mean = noisy.centroid().unwrap();
                let perturbed = RigidTransform::from_parts(r, y_mean - r * x_mean);
                prop_assert!(mean_squared_residual(&perturbed, &x, &noisy, &c) >= best - 1e-12);
            }
        }

        #[test]
        fn common_translation_leaves_rotation_unchanged(seed in any::<u64>()) {
            let x = random_cloud(10, seed);
            let y = random_transform(seed ^ 2).apply(&x);
            let shift = RigidTransform::from_translation(Vector3::new(3.0, -7.0, 11.0));
            let c = CorrespondenceSet::identity(10);
            let a = solve_procrustes(&x, &y, &c).unwrap();
            let b = solve_procrustes(&shift.apply(&x), &shift.apply(&y), &c).unwrap();
            prop_assert!((a.rotation() - b.rotation()).amax() < 1e-9);
        }
    }
}
