//! Per-point descriptors and the providers that produce them.
//!
//! The matching layer only needs one descriptor per point and a similarity
//! given by the inner product. Three providers are available:
//!
//! * [`OracleProvider`] builds descriptors from a known ground-truth motion,
//!   isolating the behavior of the transport layer from descriptor quality.
//! * [`LocalGeometryProvider`] uses rigid-invariant handcrafted neighborhood
//!   signatures and needs no training.
//! * [`AttachedDescriptors`] passes through descriptors already attached to
//!   the clouds, e.g. features computed elsewhere and loaded from disk.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::kdtree::KdTree;
use crate::linalg::symmetric_eigen_psd;
use crate::random::seeded_rng;

/// Row-major list of equally sized descriptor vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptors {
    dim: usize,
    data: Vec<f64>,
}

impl Descriptors {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            if !data.is_empty() {
                return Err(Error::InvalidArgument("zero-dimensional descriptors with data".into()));
            }
        } else if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite descriptor value".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InconsistentDescriptorDimension {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Descriptors {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Descriptors {
            dim: self.dim,
            data,
        }
    }

    /// Scales every row to unit length (zero rows stay zero), then by `magnitude`.
    pub fn normalized(mut self, magnitude: f64) -> Descriptors {
        let dim = self.dim.max(1);
        for row in self.data.chunks_exact_mut(dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v *= magnitude / norm);
            }
        }
        self
    }
}

/// Produces one descriptor per point for a source/target pair.
pub trait DescriptorProvider {
    /// Descriptor dimension `P`, fixed for the lifetime of the provider.
    fn dim(&self) -> usize;

    fn describe(&self, source: &PointCloud, target: &PointCloud) -> Result<(Descriptors, Descriptors)>;
}

/// Settings for synthetic descriptors derived from a known motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDescriptors {
    pub dim: usize,
    /// Standard deviation of the Gaussian added to each component of a
    /// copied (unit) descriptor before renormalization.
    pub noise_sigma: f64,
    /// Norm of every emitted descriptor. Scores scale with its square, so
    /// this acts as an inverse temperature for the transport layer.
    pub magnitude: f64,
    /// Distance under which a target point inherits a source descriptor.
    pub match_threshold: f64,
}

impl Default for OracleDescriptors {
    fn default() -> Self {
        Self {
            dim: 64,
            noise_sigma: 0.1,
            magnitude: 4.0,
            match_threshold: 0.05,
        }
    }
}

impl OracleDescriptors {
    /// Every source point gets an independent random unit vector. Each target
    /// point copies the descriptor of the nearest transformed source point
    /// when it lies within `match_threshold`, perturbed and renormalized;
    /// otherwise it gets a fresh random unit vector.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        source: &PointCloud,
        target: &PointCloud,
        gt: &RigidTransform,
        rng: &mut R,
    ) -> Result<(Descriptors, Descriptors)> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("descriptor dimension must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be nonnegative".into()));
        }
        let dim = self.dim;
        let mut src = Vec::with_capacity(source.len() * dim);
        for _ in 0..source.len() {
            src.extend(random_unit(rng, dim));
        }

        let moved: Vec<Vector3<f64>> = source.points().iter().map(|p| gt.apply_point(p)).collect();
        let tree = KdTree::new(&moved);
        let limit2 = self.match_threshold * self.match_threshold;
        let mut tgt = Vec::with_capacity(target.len() * dim);
        for q in target.points() {
            match tree.nearest(q) {
                Some(hit) if hit.dist2 <= limit2 => {
                    let base = &src[hit.index * dim..(hit.index + 1) * dim];
                    let mut d: Vec<f64> = base
                        .iter()
                        .map(|v| v + self.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    normalize(&mut d);
                    tgt.extend(d);
                }
                _ => tgt.extend(random_unit(rng, dim)),
            }
        }
        Ok((
            Descriptors::new(dim, src)?.normalized(self.magnitude),
            Descriptors::new(dim, tgt)?.normalized(self.magnitude),
        ))
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) {
            return v;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// [`OracleDescriptors`] bound to a ground-truth motion and a seed.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    pub settings: OracleDescriptors,
    pub transform: RigidTransform,
    pub seed: u64,
}

impl DescriptorProvider for OracleProvider {
    fn dim(&self) -> usize {
        self.settings.dim
    }

    fn describe(&self, source: &PointCloud, target: &PointCloud) -> Result<(Descriptors, Descriptors)> {
        let mut rng = seeded_rng(self.seed);
        self.settings.generate(source, target, &self.transform, &mut rng)
    }
}

/// Number of bins in the neighbor-angle histogram.
pub const ANGLE_BINS: usize = 8;
/// Length of a raw local-geometry signature.
pub const LOCAL_SIGNATURE_DIM: usize = 4 + ANGLE_BINS;

/// Handcrafted per-point signatures from each point's `k` nearest neighbors.
///
/// Layout, with covariance eigenvalues `l1 ≥ l2 ≥ l3`:
///
/// | index | component |
/// |-------|-----------|
/// | 0 | linearity `(l1 − l2) / l1` |
/// | 1 | planarity `(l2 − l3) / l1` |
/// | 2 | scattering `l3 / l1` |
/// | 3 | distance from the point to its neighborhood centroid, over the mean neighbor distance |
/// | 4.. | histogram of `|cos|` between neighbor offsets and the local normal, as fractions |
///
/// Every component depends only on distances and angles, so the signature
/// is unchanged by rigid motion. Fully coincident neighborhoods give a zero
/// signature.
pub fn local_geometry_descriptors(pc: &PointCloud, k_neighbors: usize) -> Result<Descriptors> {
    if k_neighbors < 4 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 4".into()));
    }
    if k_neighbors >= pc.len() {
        return Err(Error::InvalidArgument(format!(
            "k_neighbors ({k_neighbors}) must be smaller than the point count ({})",
            pc.len()
        )));
    }
    let tree = KdTree::new(pc.points());
    let mut data = Vec::with_capacity(pc.len() * LOCAL_SIGNATURE_DIM);
    for (i, p) in pc.points().iter().enumerate() {
        let neighbors: Vec<Vector3<f64>> = tree
            .knn(p, k_neighbors + 1)
            .into_iter()
            .filter(|n| n.index != i)
            .take(k_neighbors)
            .map(|n| pc.points()[n.index])
            .collect();
        data.extend(signature(p, &neighbors));
    }
    Descriptors::new(LOCAL_SIGNATURE_DIM, data)
}

fn signature(p: &Vector3<f64>, neighbors: &[Vector3<f64>]) -> [f64; LOCAL_SIGNATURE_DIM] {
    let mut out = [0.0; LOCAL_SIGNATURE_DIM];
    let n = neighbors.len() as f64;
    let mean = neighbors.iter().fold(Vector3::zeros(), |acc, q| acc + q) / n;
    let mut cov = Matrix3::zeros();
    for q in neighbors {
        let d = q - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let mean_dist = neighbors.iter().map(|q| (q - p).norm()).sum::<f64>() / n;
    let (vals, vecs) = symmetric_eigen_psd(&cov);
    if vals[0] <= f64::EPSILON * mean_dist * mean_dist || mean_dist == 0.0 {
        return out;
    }
    let (l1, l2, l3) = (vals[0], vals[1], vals[2]);
    out[0] = (l1 - l2) / l1;
    out[1] = (l2 - l3) / l1;
    out[2] = l3 / l1;
    out[3] = (p - mean).norm() / mean_dist;

    let normal = vecs.column(2);
    let mut counted = 0.0;
    for q in neighbors {
        let d = q - p;
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        let c = (d.dot(&normal) / len).abs().min(1.0);
        let bin = ((c * ANGLE_BINS as f64) as usize).min(ANGLE_BINS - 1);
        out[4 + bin] += 1.0;
        counted += 1.0;
    }
    if counted > 0.0 {
        for v in &mut out[4..] {
            *v /= counted;
        }
    }
    out
}

/// [`local_geometry_descriptors`] made comparable across a pair: each
/// component is standardized over both clouds together, then every row is
/// scaled to norm `magnitude`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGeometryProvider {
    pub k_neighbors: usize,
    /// Row norm. Local signatures of neighboring points are close, so a
    /// sharp (large) value is needed for the plan to prefer exact matches.
    pub magnitude: f64,
}

impl Default for LocalGeometryProvider {
    fn default() -> Self {
        Self {
            k_neighbors: 16,
            magnitude: 32.0,
        }
    }
}

impl DescriptorProvider for LocalGeometryProvider {
    fn dim(&self) -> usize {
        LOCAL_SIGNATURE_DIM
    }

    fn describe(&self, source: &PointCloud, target: &PointCloud) -> Result<(Descriptors, Descriptors)> {
        let mut src = local_geometry_descriptors(source, self.k_neighbors)?;
        let mut tgt = local_geometry_descriptors(target, self.k_neighbors)?;
        let dim = LOCAL_SIGNATURE_DIM;
        let total = (src.len() + tgt.len()) as f64;
        for c in 0..dim {
            let column = || src.rows().chain(tgt.rows()).map(|r| r[c]);
            let mean = column().sum::<f64>() / total;
            let var = column().map(|v| (v - mean) * (v - mean)).sum::<f64>() / total;
            let std = var.sqrt();
            for d in [&mut src, &mut tgt] {
                for row in d.data.chunks_exact_mut(dim) {
                    row[c] = if std > 1e-12 { (row[c] - mean) / std } else { 0.0 };
                }
            }
        }
        Ok((src.normalized(self.magnitude), tgt.normalized(self.magnitude)))
    }
}

/// Uses the descriptors already attached to each cloud.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttachedDescriptors;

impl DescriptorProvider for AttachedDescriptors {
    fn dim(&self) -> usize {
        0
    }

    fn describe(&self, source: &PointCloud, target: &PointCloud) -> Result<(Descriptors, Descriptors)> {
        let s = source.descriptors().ok_or(Error::MissingDescriptors("source"))?;
        let t = target.descriptors().ok_or(Error::MissingDescriptors("target"))?;
        if s.dim() != t.dim() {
            return Err(Error::DescriptorDimensionMismatch(s.dim(), t.dim()));
        }
        Ok((s.clone(), t.clone()))
    }
}

/// On-disk descriptor encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorFormat {
    /// One descriptor per line, whitespace-separated decimals.
    Text,
    /// 16-byte header (`"OTRD"`, u32 count, u32 dim, u32 reserved = 0), then
    /// little-endian f32 values row-major.
    Binary,
}

pub const BINARY_MAGIC: &[u8; 4] = b"OTRD";
const HEADER_LEN: usize = 16;

/// Loads either format; binary files are recognized by their magic bytes.
pub fn load_descriptors(path: impl AsRef<Path>) -> Result<Descriptors> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(path, &bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 0, "not UTF-8 text"))?;
        parse_text(path, &text)
    }
}

fn parse_text(path: &Path, text: &str) -> Result<Descriptors> {
    let mut dim = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, lineno + 1, format!("invalid number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::InconsistentDescriptorDimension {
                row: rows,
                expected,
                found: values.len(),
            });
        }
        data.extend(values);
        rows += 1;
    }
    Descriptors::new(dim.unwrap_or(0), data)
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<Descriptors> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(path, 0, "truncated descriptor header"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let (count, dim) = (word(1), word(2));
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse(path, 0, "descriptor header overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::parse(
            path,
            0,
            format!("expected {expected} payload bytes for {count}x{dim}, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Descriptors::new(if count == 0 { 0 } else { dim }, data)
}

pub fn save_descriptors(path: impl AsRef<Path>, d: &Descriptors, format: DescriptorFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        DescriptorFormat::Text => {
            let mut out = String::new();
            for row in d.rows().take(d.len()) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
        DescriptorFormat::Binary => {
            let mut out = Vec::with_capacity(HEADER_LEN + 4 * d.data.len());
            out.extend_from_slice(BINARY_MAGIC);
            out.extend_from_slice(&(d.len() as u32).to_le_bytes());
            out.extend_from_slice(&(d.dim() as u32).to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            for v in &d.data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            out
        }
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_random_transform;
    use crate::sinkhorn::score_map;
    use rand::seq::SliceRandom;

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

    fn cube_surface(n: usize, seed: u64) -> PointCloud {
        let mut rng = seeded_rng(seed);
        let pts = (0..n)
            .map(|_| {
                let face = rng.random_range(0..6);
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let s = if face % 2 == 0 { 1.0 } else { -1.0 };
                match face / 2 {
                    0 => Vector3::new(s, a, b),
                    1 => Vector3::new(a, s, b),
                    _ => Vector3::new(a, b, s),
                }
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn oracle_zero_noise_full_overlap_is_exact() {
        let src = random_cloud(200, 1);
        let t = sample_random_transform(&mut seeded_rng(2), [0.0, 45.0], [-0.5, 0.5]);
        let tgt = t.apply(&src);
        let settings = OracleDescriptors {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let (fx, fy) = settings.generate(&src, &tgt, &t, &mut seeded_rng(3)).unwrap();
        let s = score_map(&fx, &fy).unwrap();
        for i in 0..200 {
            let row = s.values().row(i);
            assert_eq!(row.transpose().argmax().0, i);
        }
    }

    #[test]
    fn oracle_disjoint_clouds_are_near_orthogonal() {
        let src = random_cloud(100, 4);
        let far = RigidTransform::from_translation(Vector3::new(50.0, 0.0, 0.0));
        let tgt = far.apply(&random_cloud(100, 5));
        let settings = OracleDescriptors {
            magnitude: 1.0,
            ..Default::default()
        };
        let mut rng = seeded_rng(6);
        let mut total = 0.0;
        let draws = 10;
        for _ in 0..draws {
            let (fx, fy) = settings.generate(&src, &tgt, &RigidTransform::identity(), &mut rng).unwrap();
            let s = score_map(&fx, &fy).unwrap();
            total += s.values().iter().map(|v| v.abs()).sum::<f64>() / s.values().len() as f64;
        }
        let mean_abs = total / draws as f64;
        assert!(mean_abs <= 3.0 / (64f64).sqrt(), "mean |score| = {mean_abs}");
    }

    #[test]
    fn oracle_descriptors_have_requested_norm() {
        let src = random_cloud(20, 7);
        let (fx, fy) = OracleDescriptors::default()
            .generate(&src, &src, &RigidTransform::identity(), &mut seeded_rng(8))
            .unwrap();
        for row in fx.rows().chain(fy.rows()) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 4.0).abs() < 1e-12);
        }
        assert_eq!(fx.len(), 20);
        assert_eq!(fy.dim(), 64);
    }

    #[test]
    fn local_signature_is_rigid_invariant() {
        let pc = random_cloud(300, 9);
        let t = sample_random_transform(&mut seeded_rng(10), [-180.0, 180.0], [-3.0, 3.0]);
        let a = local_geometry_descriptors(&pc, 12).unwrap();
        let b = local_geometry_descriptors(&t.apply(&pc), 12).unwrap();
        let drift = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-6, "drift {drift}");
    }

    #[test]
    fn local_signature_ignores_point_order() {
        let pc = random_cloud(200, 11);
        let mut perm: Vec<usize> = (0..200).collect();
        perm.shuffle(&mut seeded_rng(12));
        let shuffled = pc.select(&perm);
        let a = local_geometry_descriptors(&pc, 10).unwrap();
        let b = local_geometry_descriptors(&shuffled, 10).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (x, y) in a.row(old_i).iter().zip(b.row(new_i)) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn cube_corner_differs_from_face_interior() {
        let mut pts = cube_surface(6000, 13).points().to_vec();
        pts.push(Vector3::new(1.0, 1.0, 1.0));
        pts.push(Vector3::new(1.0, 0.1, -0.2));
        let pc = PointCloud::new(pts).unwrap();
        let d = local_geometry_descriptors(&pc, 16).unwrap();
        let corner = d.row(6000);
        let face = d.row(6001);
        let max_gap = (0..3).map(|c| (corner[c] - face[c]).abs()).fold(0.0, f64::max);
        assert!(max_gap >= 0.1, "corner {corner:?} face {face:?}");
    }

    #[test]
    fn plane_has_unit_planarity() {
        let mut pts = Vec::new();
        for i in 0..21 {
            for j in 0..21 {
                pts.push(Vector3::new(i as f64 * 0.05, j as f64 * 0.05, 0.0));
            }
        }
        let pc = PointCloud::new(pts).unwrap();
        let d = local_geometry_descriptors(&pc, 8).unwrap();
        let centre = 10 * 21 + 10;
        assert!((d.row(centre)[1] - 1.0).abs() <= 0.05, "{:?}", d.row(centre));
    }

    #[test]
    fn coincident_neighborhood_gives_zero_signature() {
        let pc = PointCloud::from_slices(&[[0.5, 0.5, 0.5]; 10]).unwrap();
        let d = local_geometry_descriptors(&pc, 5).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn local_geometry_argument_checks() {
        let pc = random_cloud(10, 14);
        assert!(local_geometry_descriptors(&pc, 3).is_err());
        assert!(local_geometry_descriptors(&pc, 10).is_err());
    }

    #[test]
    fn provider_output_is_rigid_invariant() {
        let src = random_cloud(150, 15);
        let tgt = random_cloud(120, 16);
        let g = sample_random_transform(&mut seeded_rng(17), [-180.0, 180.0], [-2.0, 2.0]);
        let p = LocalGeometryProvider::default();
        let (a1, b1) = p.describe(&src, &tgt).unwrap();
        let (a2, b2) = p.describe(&g.apply(&src), &g.apply(&tgt)).unwrap();
        for (x, y) in a1.as_slice().iter().chain(b1.as_slice()).zip(a2.as_slice().iter().chain(b2.as_slice())) {
            assert!((x - y).abs() <= 1e-6);
        }
        assert_eq!(a1.len(), 150);
        assert_eq!(b1.len(), 120);
    }

    #[test]
    fn attached_descriptors_pass_through() {
        let d = Descriptors::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let pc = random_cloud(2, 18).with_descriptors(d.clone()).unwrap();
        let (a, b) = AttachedDescriptors.describe(&pc, &pc).unwrap();
        assert_eq!(a, d);
        assert_eq!(b, d);
        assert!(matches!(
            AttachedDescriptors.describe(&random_cloud(2, 19), &pc),
            Err(Error::MissingDescriptors("source"))
        ));
    }

    #[test]
    fn text_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        fs::write(&path, "1 2 3 4\n0.5 -1 2e-3 7\n\n9 9 9 9\n").unwrap();
        let d = load_descriptors(&path).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.row(1), &[0.5, -1.0, 2e-3, 7.0]);

        save_descriptors(&path, &d, DescriptorFormat::Text).unwrap();
        assert_eq!(load_descriptors(&path).unwrap(), d);
    }

    #[test]
    fn empty_and_ragged_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "").unwrap();
        assert!(load_descriptors(&empty).unwrap().is_empty());

        let ragged = dir.path().join("ragged.txt");
        fs::write(&ragged, "1 2 3\n1 2\n").unwrap();
        assert!(matches!(
            load_descriptors(&ragged),
            Err(Error::InconsistentDescriptorDimension { row: 1, expected: 3, found: 2 })
        ));
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let mut rng = seeded_rng(20);
        let values: Vec<f64> = (0..5 * 7).map(|_| rng.random::<f32>() as f64 - 0.5).collect();
        let d = Descriptors::new(7, values).unwrap();
        save_descriptors(&path, &d, DescriptorFormat::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], BINARY_MAGIC);
        assert_eq!(bytes.len(), 16 + 4 * 35);
        let back = load_descriptors(&path).unwrap();
        assert_eq!(back.dim(), 7);
        for (a, b) in back.as_slice().iter().zip(d.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = BINARY_MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_descriptors(&path), Err(Error::Parse { .. })));
    }
}
