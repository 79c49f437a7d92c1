//! Rotation and translation error statistics over a batch of registrations.
//!
//! Rotation errors are per-axis differences of intrinsic Z-Y-X Euler angles
//! (degrees, wrapped to (−180°, 180°]); translation errors are per-axis
//! component differences. Both are pooled over all three axes of all
//! successful pairs:
//!
//! ```text
//! MSE = Σ e² / (3n)    RMSE = √MSE    MAE = Σ |e| / (3n)
//! ```
//!
//! The geodesic angle between predicted and true rotations is reported
//! alongside, since it does not depend on any Euler convention.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Pooled error statistics; rotation terms in degrees, translation in length units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub mse_r: f64,
    pub rmse_r: f64,
    pub mae_r: f64,
    pub mse_t: f64,
    pub rmse_t: f64,
    pub mae_t: f64,
    /// Mean geodesic rotation error in degrees.
    pub mean_geodesic_r: f64,
    /// Root mean square geodesic rotation error in degrees.
    pub rmse_geodesic_r: f64,
    /// Pairs contributing to the statistics.
    pub n_pairs: usize,
    pub n_failures: usize,
}

/// What to do with failed registrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePolicy {
    /// Exclude failures from the pooled statistics and only count them.
    #[default]
    Exclude,
    /// Score failures as identity predictions.
    ScoreAsIdentity,
}

/// Angle of `r_gtᵀ · r_pred` in degrees.
///
/// Evaluated as `atan2(‖axis·sin θ‖, cos θ)`, which equals
/// `arccos((tr − 1)/2)` but stays accurate for tiny angles.
pub fn geodesic_rotation_error(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let d = r_gt.transpose() * r_pred;
    let cos = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * ((d[(2, 1)] - d[(1, 2)]).powi(2) + (d[(0, 2)] - d[(2, 0)]).powi(2) + (d[(1, 0)] - d[(0, 1)]).powi(2))
            .sqrt();
    sin.atan2(cos).to_degrees()
}

fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Per-axis `[x, y, z]` rotation errors in degrees.
pub fn euler_errors(pred: &RigidTransform, gt: &RigidTransform) -> [f64; 3] {
    let p = pred.euler().as_xyz();
    let g = gt.euler().as_xyz();
    [0, 1, 2].map(|k| wrap_degrees(p[k] - g[k]))
}

pub fn translation_errors(pred: &RigidTransform, gt: &RigidTransform) -> [f64; 3] {
    let d = pred.translation() - gt.translation();
    [d.x, d.y, d.z]
}

pub fn evaluate(predictions: &[Option<RigidTransform>], ground_truths: &[RigidTransform]) -> Result<MetricReport> {
    evaluate_with(predictions, ground_truths, FailurePolicy::Exclude)
}

pub fn evaluate_with(
    predictions: &[Option<RigidTransform>],
    ground_truths: &[RigidTransform],
    policy: FailurePolicy,
) -> Result<MetricReport> {
    if predictions.len() != ground_truths.len() {
        return Err(Error::LengthMismatch(predictions.len(), ground_truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }

    let identity = RigidTransform::identity();
    let mut report = MetricReport::default();
    let (mut sq_r, mut abs_r, mut sq_t, mut abs_t) = (0.0, 0.0, 0.0, 0.0);
    let (mut geo, mut geo_sq) = (0.0, 0.0);
    for (pred, gt) in predictions.iter().zip(ground_truths) {
        let pred = match (pred, policy) {
            (Some(p), _) => p,
            (None, FailurePolicy::ScoreAsIdentity) => {
                report.n_failures += 1;
                &identity
            }
            (None, FailurePolicy::Exclude) => {
                report.n_failures += 1;
                continue;
            }
        };
        report.n_pairs += 1;
        for e in euler_errors(pred, gt) {
            sq_r += e * e;
            abs_r += e.abs();
        }
        for e in translation_errors(pred, gt) {
            sq_t += e * e;
            abs_t += e.abs();
        }
        let g = geodesic_rotation_error(pred.rotation(), gt.rotation());
        geo += g;
        geo_sq += g * g;
    }

    if report.n_pairs > 0 {
        let n = report.n_pairs as f64;
        let samples = 3.0 * n;
        report.mse_r = sq_r / samples;
        report.rmse_r = report.mse_r.sqrt();
        report.mae_r = abs_r / samples;
        report.mse_t = sq_t / samples;
        report.rmse_t = report.mse_t.sqrt();
        report.mae_t = abs_t / samples;
        report.mean_geodesic_r = geo / n;
        report.rmse_geodesic_r = (geo_sq / n).sqrt();
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "model,mse_r,rmse_r,mae_r,mse_t,rmse_t,mae_t,n,failures";

pub fn csv_row(model: &str, r: &MetricReport) -> String {
    format!(
        "{model},{},{},{},{},{},{},{},{}",
        r.mse_r, r.rmse_r, r.mae_r, r.mse_t, r.rmse_t, r.mae_t, r.n_pairs, r.n_failures
    )
}

/// CSV document with one row per `(model, report)`.
pub fn to_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (model, r) in rows {
        out.push_str(&csv_row(model, r));
        out.push('\n');
    }
    out
}

/// Aligned plain-text table. The header states the pooling convention.
pub fn to_table(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    out.push_str("# rotation: per-axis intrinsic Z-Y-X Euler differences in degrees, pooled over axes and pairs\n");
    out.push_str("# translation: per-axis component differences, pooled over axes and pairs\n");
    out.push_str("# geo(R): geodesic rotation angle in degrees (mean / rms); failures excluded from pools\n");
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(
        out,
        "{:<width$}  {:>12} {:>10} {:>10} {:>12} {:>10} {:>10} {:>10} {:>10} {:>6} {:>8}",
        "model", "MSE(R)", "RMSE(R)", "MAE(R)", "MSE(t)", "RMSE(t)", "MAE(t)", "geo(R)", "geoRMS(R)", "n", "failures"
    );
    for (model, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.6} {:>10.6} {:>10.6} {:>12.4e} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>6} {:>8}",
            model,
            r.mse_r,
            r.rmse_r,
            r.mae_r,
            r.mse_t,
            r.rmse_t,
            r.mae_t,
            r.mean_geodesic_r,
            r.rmse_geodesic_r,
            r.n_pairs,
            r.n_failures
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_random_transform, EulerAngles};
    use crate::random::seeded_rng;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn random_transforms(n: usize, seed: u64) -> Vec<RigidTransform> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| sample_random_transform(&mut rng, [0.0, 45.0], [-0.5, 0.5]))
            .collect()
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let gts = random_transforms(10, 1);
        let preds: Vec<_> = gts.iter().copied().map(Some).collect();
        let r = evaluate(&preds, &gts).unwrap();
        assert_eq!(r.n_pairs, 10);
        for v in [r.mse_r, r.rmse_r, r.mae_r, r.mse_t, r.rmse_t, r.mae_t] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn single_axis_one_degree_error() {
        let gt = RigidTransform::identity();
        let pred = RigidTransform::from_euler(EulerAngles::new(0.0, 0.0, 1.0), Vector3::zeros());
        let r = evaluate(&[Some(pred)], &[gt]).unwrap();
        assert!((r.mae_r - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.mse_r - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.rmse_r - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.mse_t, 0.0);
        assert!((r.mean_geodesic_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_double_loop_reference() {
        let gts = random_transforms(12, 2);
        let preds = random_transforms(12, 3);
        let r = evaluate(&preds.iter().copied().map(Some).collect::<Vec<_>>(), &gts).unwrap();

        let mut sq = [0.0; 2];
        let mut ab = [0.0; 2];
        for (p, g) in preds.iter().zip(&gts) {
            let pe = p.euler();
            let ge = g.euler();
            let rot = [pe.roll - ge.roll, pe.pitch - ge.pitch, pe.yaw - ge.yaw];
            for axis in 0..3 {
                let t = p.translation()[axis] - g.translation()[axis];
                sq[0] += rot[axis] * rot[axis];
                ab[0] += rot[axis].abs();
                sq[1] += t * t;
                ab[1] += t.abs();
            }
        }
        let n = 36.0;
        assert!((r.mse_r - sq[0] / n).abs() < 1e-9);
        assert!((r.mae_r - ab[0] / n).abs() < 1e-9);
        assert!((r.mse_t - sq[1] / n).abs() < 1e-12);
        assert!((r.mae_t - ab[1] / n).abs() < 1e-12);
        assert!(r.mae_r <= r.rmse_r && r.mae_t <= r.rmse_t);
        assert!((r.rmse_r * r.rmse_r - r.mse_r).abs() <= 1e-9 * r.mse_r);
    }

    #[test]
    fn failures_excluded_or_scored() {
        let gts = random_transforms(3, 4);
        let preds = vec![Some(gts[0]), None, Some(gts[2])];
        let r = evaluate(&preds, &gts).unwrap();
        assert_eq!((r.n_pairs, r.n_failures), (2, 1));
        assert_eq!(r.mse_r, 0.0);
        let strict = evaluate_with(&preds, &gts, FailurePolicy::ScoreAsIdentity).unwrap();
        assert_eq!((strict.n_pairs, strict.n_failures), (3, 1));
        assert!(strict.mse_r > 0.0);

        let all_failed = evaluate(&[None], &gts[..1]).unwrap();
        assert_eq!(all_failed.n_pairs, 0);
        assert!(all_failed.mse_r == 0.0 && !all_failed.rmse_r.is_nan());
    }

    #[test]
    fn length_mismatch_rejected() {
        let gts = random_transforms(2, 5);
        assert!(matches!(evaluate(&[None], &gts), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn geodesic_cases() {
        let i = Matrix3::identity();
        assert_eq!(geodesic_rotation_error(&i, &i), 0.0);
        for axis in [Vector3::x(), Vector3::y(), Vector3::new(1.0, 1.0, 1.0).normalize()] {
            let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), std::f64::consts::PI);
            assert!((geodesic_rotation_error(r.matrix(), &i) - 180.0).abs() < 1e-6);
        }
        let ts = random_transforms(20, 6);
        for w in ts.windows(2) {
            let a = geodesic_rotation_error(w[0].rotation(), w[1].rotation());
            let b = geodesic_rotation_error(w[1].rotation(), w[0].rotation());
            assert!((a - b).abs() < 1e-9);
            assert!((0.0..=180.0).contains(&a));
        }
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_degrees(359.0), -1.0);
        assert_eq!(wrap_degrees(-181.0), 179.0);
        assert_eq!(wrap_degrees(180.0), 180.0);
    }

    #[test]
    fn csv_shape() {
        let rows = vec![("ot".to_string(), MetricReport::default()), ("icp".to_string(), MetricReport::default())];
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 9);
        assert!(to_table(&rows).contains("RMSE(R)"));
    }

    proptest! {
        #[test]
        fn permutation_equivariant(seed in any::<u64>()) {
            let gts = random_transforms(8, seed);
            let preds: Vec<_> = random_transforms(8, seed ^ 9).into_iter().map(Some).collect();
            let mut idx: Vec<usize> = (0..8).collect();
            idx.shuffle(&mut seeded_rng(seed));
            let gp: Vec<_> = idx.iter().map(|&i| gts[i]).collect();
            let pp: Vec<_> = idx.iter().map(|&i| preds[i]).collect();
            let a = evaluate(&preds, &gts).unwrap();
            let b = evaluate(&pp, &gp).unwrap();
            prop_assert!((a.mse_r - b.mse_r).abs() < 1e-9 && (a.mae_t - b.mae_t).abs() < 1e-12);
        }

        #[test]
        fn geodesic_zero_iff_equal(seed in any::<u64>()) {
            let t = random_transforms(2, seed);
            prop_assert!(geodesic_rotation_error(t[0].rotation(), t[0].rotation()) < 1e-9);
            if t[0].max_abs_diff(&t[1]) > 1e-6 && (t[0].rotation() - t[1].rotation()).amax() > 1e-6 {
                prop_assert!(geodesic_rotation_error(t[0].rotation(), t[1].rotation()) > 0.0);
            }
        }
    }
}
