//! Synthetic registration pairs.
//!
//! Two protocols are supported:
//!
//! * **Partial crops.** Subsample the source, move a copy by a random rigid
//!   transform to form the target, then crop each side independently to the
//!   `kept_count` nearest neighbors of a random anchor point.
//! * **Self-occlusion.** The target is what a pinhole camera placed on a
//!   sphere around the object actually sees: points hidden behind the
//!   object's own surface are removed with a point-splatting z-buffer.
//!
//! Either protocol can add per-coordinate Gaussian noise clipped to a band.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_random_transform, PointCloud, RigidTransform};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source_count: usize,
    pub kept_count: usize,
    /// Target size for self-occluded pairs.
    pub target_count: usize,
    pub rot_range_deg: [f64; 2],
    pub trans_range: [f64; 2],
    /// Standard deviation of the per-coordinate noise (0 disables noise).
    pub noise_sigma: f64,
    pub noise_clip: f64,
    pub gt_threshold: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            source_count: 1024,
            kept_count: 768,
            target_count: 512,
            rot_range_deg: [0.0, 45.0],
            trans_range: [-0.5, 0.5],
            noise_sigma: 0.0,
            noise_clip: 0.05,
            gt_threshold: 0.05,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.kept_count > self.source_count {
            return bad("kept_count must not exceed source_count");
        }
        if self.kept_count == 0 || self.source_count == 0 || self.target_count == 0 {
            return bad("point counts must be positive");
        }
        if self.rot_range_deg[0] > self.rot_range_deg[1] || self.trans_range[0] > self.trans_range[1] {
            return bad("ranges must be ordered");
        }
        if !(self.noise_sigma >= 0.0) || !(self.noise_clip >= 0.0) {
            return bad("noise_sigma and noise_clip must be nonnegative");
        }
        if !(self.gt_threshold > 0.0) {
            return bad("gt_threshold must be positive");
        }
        Ok(())
    }
}

/// Pinhole camera placed on a sphere around the object, looking at its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub distance: f64,
    pub elevation_range_deg: [f64; 2],
    pub azimuth_range_deg: [f64; 2],
    /// Square image side in pixels.
    pub image_size: usize,
    /// Focal length in normalized image units (image half-width = 1).
    pub focal: f64,
    /// Splat radius in pixels.
    pub splat_radius: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            distance: 3.0,
            elevation_range_deg: [22.5, 67.5],
            azimuth_range_deg: [22.5, 67.5],
            image_size: 128,
            // An object of half-extent 1 at distance 3 spans 80% of the frame.
            focal: 2.4,
            splat_radius: 1,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |r: [f64; 2]| 0.0 <= r[0] && r[0] <= r[1] && r[1] <= 90.0;
        if !(self.distance > 0.0) {
            return Err(Error::InvalidArgument("camera distance must be positive".into()));
        }
        if !in_range(self.elevation_range_deg) || !in_range(self.azimuth_range_deg) {
            return Err(Error::InvalidArgument("camera angle ranges must lie within [0, 90] degrees".into()));
        }
        if self.image_size == 0 || !(self.focal > 0.0) {
            return Err(Error::InvalidArgument("image size and focal length must be positive".into()));
        }
        Ok(())
    }
}

/// A generated pair. Index lists map each output point back to the
/// subsampled source, so exact correspondences are recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub source: PointCloud,
    pub target: PointCloud,
    pub transform: RigidTransform,
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
}

/// Uniform subsample without replacement, in draw order.
pub fn subsample<R: Rng + ?Sized>(pc: &PointCloud, count: usize, rng: &mut R) -> Result<(PointCloud, Vec<usize>)> {
    if count > pc.len() {
        return Err(Error::InsufficientPoints {
            needed: count,
            available: pc.len(),
        });
    }
    let idx = sample_indices(rng, pc.len(), count).into_vec();
    Ok((pc.select(&idx), idx))
}

/// Indices of the `count` points nearest to `pc[anchor]`, nearest first.
pub fn crop_nearest(pc: &PointCloud, anchor: usize, count: usize) -> Vec<usize> {
    let tree = KdTree::new(pc.points());
    tree.knn(&pc.points()[anchor], count)
        .into_iter()
        .map(|n| n.index)
        .collect()
}

pub fn add_clipped_gaussian_noise<R: Rng + ?Sized>(pc: &PointCloud, sigma: f64, clip: f64, rng: &mut R) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !(clip >= 0.0) {
        return Err(Error::InvalidArgument("sigma and clip must be nonnegative".into()));
    }
    if sigma == 0.0 {
        return Ok(pc.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let points = pc
        .points()
        .iter()
        .map(|p| p.map(|c| c + normal.sample(rng).clamp(-clip, clip)))
        .collect();
    Ok(PointCloud::from_parts(points, pc.descriptors().cloned()))
}

/// Partial-to-partial pair: subsample, transform, then crop both sides independently.
pub fn make_partial_pair<R: Rng + ?Sized>(full: &PointCloud, cfg: &ScenarioConfig, rng: &mut R) -> Result<PairSample> {
    cfg.validate()?;
    let (source_full, _) = subsample(full, cfg.source_count, rng)?;
    let transform = sample_random_transform(rng, cfg.rot_range_deg, cfg.trans_range);
    let target_full = transform.apply(&source_full);

    let source_anchor = rng.random_range(0..source_full.len());
    let target_anchor = rng.random_range(0..target_full.len());
    let source_indices = crop_nearest(&source_full, source_anchor, cfg.kept_count);
    let target_indices = crop_nearest(&target_full, target_anchor, cfg.kept_count);

    let source = add_clipped_gaussian_noise(&source_full.select(&source_indices), cfg.noise_sigma, cfg.noise_clip, rng)?;
    let target = add_clipped_gaussian_noise(&target_full.select(&target_indices), cfg.noise_sigma, cfg.noise_clip, rng)?;
    Ok(PairSample {
        source,
        target,
        transform,
        source_indices,
        target_indices,
    })
}

/// Self-occluded pair: the full subsampled source against a transformed,
/// rendered view of it.
pub fn make_self_occluded_pair<R: Rng + ?Sized>(
    full: &PointCloud,
    cfg: &ScenarioConfig,
    cam: &CameraConfig,
    rng: &mut R,
) -> Result<PairSample> {
    cfg.validate()?;
    let (source_full, _) = subsample(full, cfg.source_count, rng)?;
    let transform = sample_random_transform(rng, cfg.rot_range_deg, cfg.trans_range);
    let (_, target_indices) = render_self_occluded_indices(&source_full, cam, cfg.target_count, rng)?;
    let target = transform.apply(&source_full.select(&target_indices));

    let source = add_clipped_gaussian_noise(&source_full, cfg.noise_sigma, cfg.noise_clip, rng)?;
    let target = add_clipped_gaussian_noise(&target, cfg.noise_sigma, cfg.noise_clip, rng)?;
    Ok(PairSample {
        source,
        target,
        transform,
        source_indices: (0..cfg.source_count).collect(),
        target_indices,
    })
}

/// World-to-camera frame for a camera at `eye` looking at `center` (y up).
#[derive(Debug, Clone, Copy)]
pub struct LookAt {
    pub eye: Vector3<f64>,
    /// Rows are the camera right, up and forward axes in world coordinates.
    pub basis: Matrix3<f64>,
}

impl LookAt {
    pub fn new(eye: Vector3<f64>, center: Vector3<f64>) -> Self {
        let forward = (center - eye).normalize();
        let mut up = Vector3::y();
        if forward.cross(&up).norm() < 1e-9 {
            up = Vector3::z();
        }
        let right = forward.cross(&up).normalize();
        let true_up = right.cross(&forward);
        Self {
            eye,
            basis: Matrix3::from_rows(&[right.transpose(), true_up.transpose(), forward.transpose()]),
        }
    }

    /// Camera at spherical coordinates around `center`. Elevation is measured
    /// from the horizontal x-z plane, azimuth around the y axis.
    pub fn orbit(center: Vector3<f64>, distance: f64, elevation_deg: f64, azimuth_deg: f64) -> Self {
        let (se, ce) = elevation_deg.to_radians().sin_cos();
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let eye = center + distance * Vector3::new(ce * sa, se, ce * ca);
        Self::new(eye, center)
    }

    /// Camera-frame coordinates; `z` is depth along the viewing direction.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.basis * (p - self.eye)
    }
}

/// Indices of points that own at least one pixel of the z-buffer, sorted.
///
/// Each point in front of the camera is splatted onto the disk of pixels
/// within `splat_radius` of its projection; every pixel keeps the nearest
/// point (lowest index on exact depth ties).
pub fn visible_indices(pc: &PointCloud, cam: &CameraConfig, view: &LookAt) -> Vec<usize> {
    let size = cam.image_size as i64;
    let half = cam.image_size as f64 / 2.0;
    let radius = cam.splat_radius as i64;
    let mut depth = vec![f64::INFINITY; (size * size) as usize];
    let mut owner = vec![usize::MAX; (size * size) as usize];

    for (i, p) in pc.points().iter().enumerate() {
        let c = view.to_camera(p);
        if c.z <= 1e-9 {
            continue;
        }
        // Image x grows to the right, image y grows downward.
        let u = half + cam.focal * c.x / c.z * half;
        let v = half - cam.focal * c.y / c.z * half;
        let (px, py) = (u.floor() as i64, v.floor() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (x, y) = (px + dx, py + dy);
                if x < 0 || y < 0 || x >= size || y >= size {
                    continue;
                }
                let k = (y * size + x) as usize;
                if c.z < depth[k] {
                    depth[k] = c.z;
                    owner[k] = i;
                }
            }
        }
    }

    let mut survivors: Vec<usize> = owner.into_iter().filter(|&o| o != usize::MAX).collect();
    survivors.sort_unstable();
    survivors.dedup();
    survivors
}

/// Renders `full` from a random viewpoint and returns exactly `target_count`
/// indices of visible points: a uniform subsample when enough survive,
/// otherwise every survivor padded by resampling survivors.
///
/// Also returns the number of distinct survivors.
pub fn render_self_occluded_indices<R: Rng + ?Sized>(
    full: &PointCloud,
    cam: &CameraConfig,
    target_count: usize,
    rng: &mut R,
) -> Result<(usize, Vec<usize>)> {
    cam.validate()?;
    let centroid = full.centroid()?;
    let elevation = rng.random_range(cam.elevation_range_deg[0]..=cam.elevation_range_deg[1]);
    let azimuth = rng.random_range(cam.azimuth_range_deg[0]..=cam.azimuth_range_deg[1]);
    let view = LookAt::orbit(centroid, cam.distance, elevation, azimuth);
    let survivors = visible_indices(full, cam, &view);

    let min_survivors = MIN_SURVIVORS.min(full.len());
    if survivors.len() < min_survivors {
        return Err(Error::DegenerateViewpoint(survivors.len()));
    }
    let chosen = if survivors.len() >= target_count {
        sample_indices(rng, survivors.len(), target_count)
            .into_iter()
            .map(|k| survivors[k])
            .collect()
    } else {
        let mut out = survivors.clone();
        while out.len() < target_count {
            out.push(survivors[rng.random_range(0..survivors.len())]);
        }
        out
    };
    Ok((survivors.len(), chosen))
}

/// Fewer distinct survivors than this (or than the input size, if smaller)
/// is a degenerate viewpoint.
pub const MIN_SURVIVORS: usize = 10;

pub fn render_self_occluded<R: Rng + ?Sized>(
    full: &PointCloud,
    cam: &CameraConfig,
    target_count: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    let (_, idx) = render_self_occluded_indices(full, cam, target_count, rng)?;
    Ok(full.select(&idx))
}

/// Synthetic surfaces standing in for CAD models, all inside [-1, 1]³.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Box,
    Torus,
    /// Plate, post and ball glued together; has no rotational symmetry.
    Composite,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Box, Shape::Torus, Shape::Composite];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Box => "box",
            Shape::Torus => "torus",
            Shape::Composite => "composite",
        }
    }

    pub fn from_name(name: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointCloud {
        let points = (0..n)
            .map(|_| match self {
                Shape::Sphere => sphere_point(rng, Vector3::zeros(), 1.0),
                Shape::Box => box_point(rng, Vector3::zeros(), Vector3::new(1.0, 0.6, 0.4)),
                Shape::Torus => torus_point(rng, 0.7, 0.25),
                Shape::Composite => composite_point(rng),
            })
            .collect();
        PointCloud::from_parts(points, None)
    }
}

pub fn sphere_point<R: Rng + ?Sized>(rng: &mut R, center: Vector3<f64>, radius: f64) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    center + radius * Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

fn box_point<R: Rng + ?Sized>(rng: &mut R, center: Vector3<f64>, half: Vector3<f64>) -> Vector3<f64> {
    let areas = [half.y * half.z, half.x * half.z, half.x * half.y];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 2;
    for (k, a) in areas.iter().enumerate() {
        if pick < *a {
            axis = k;
            break;
        }
        pick -= a;
    }
    let mut p = Vector3::new(
        rng.random_range(-half.x..=half.x),
        rng.random_range(-half.y..=half.y),
        rng.random_range(-half.z..=half.z),
    );
    p[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
    center + p
}

fn torus_point<R: Rng + ?Sized>(rng: &mut R, major: f64, minor: f64) -> Vector3<f64> {
    // Rejection on the tube angle gives an area-uniform sampling.
    loop {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let w = (major + minor * theta.cos()) / (major + minor);
        if rng.random_range(0.0..1.0) <= w {
            let ring = major + minor * theta.cos();
            return Vector3::new(ring * phi.cos(), minor * theta.sin(), ring * phi.sin());
        }
    }
}

fn cylinder_point<R: Rng + ?Sized>(rng: &mut R, base: Vector3<f64>, radius: f64, height: f64) -> Vector3<f64> {
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let y = rng.random_range(0.0..=height);
    base + Vector3::new(radius * phi.cos(), y, radius * phi.sin())
}

fn composite_point<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    match rng.random_range(0..10) {
        0..=4 => box_point(rng, Vector3::new(0.0, -0.7, 0.0), Vector3::new(0.9, 0.1, 0.6)),
        5..=7 => cylinder_point(rng, Vector3::new(0.6, -0.6, 0.3), 0.12, 1.5),
        _ => sphere_point(rng, Vector3::new(-0.5, -0.3, -0.3), 0.3),
    }
}
