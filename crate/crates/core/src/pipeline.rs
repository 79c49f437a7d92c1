//! End-to-end registration.
//!
//! [`register_ot`] is one-shot: descriptors → score map → outlier-bin
//! augmentation → Sinkhorn → row-argmax correspondences → Procrustes.
//! [`register_icp`] is the classic closest-point baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::DescriptorProvider;
use crate::error::Error;
use crate::geometry::{PointCloud, RigidTransform};
use crate::kdtree::KdTree;
use crate::procrustes::{mean_squared_residual, solve_procrustes, CorrespondenceSet};
use crate::sinkhorn::{augment, extract_correspondences, score_map, sinkhorn, SinkhornConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Sinkhorn iterations run (0 for ICP).
    pub sinkhorn_iterations: usize,
    /// Largest marginal violation of the transport plan (0 for ICP).
    pub marginal_residual: f64,
    /// ICP rounds run, including any refinement pass.
    pub icp_iterations: usize,
    pub converged: bool,
    /// ICP stopped early because a round had a degenerate pairing.
    pub degenerate: bool,
    /// Mean squared residual of the final correspondences under the returned transform.
    pub mean_squared_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub correspondences: CorrespondenceSet,
    /// Source points that were not paired (outlier bin for OT, distance-rejected for ICP).
    pub num_source_outliers: usize,
    /// Target points that no pair uses.
    pub num_target_unused: usize,
    pub diagnostics: Diagnostics,
}

/// An explicit failed registration. No transform is fabricated.
#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("{found} correspondences after outlier filtering, at least 3 required")]
    TooFewCorrespondences { found: usize, source_outliers: usize },

    #[error("degenerate correspondence configuration ({correspondences} pairs)")]
    Degenerate { correspondences: usize },

    #[error(transparent)]
    Input(#[from] Error),
}

/// How correspondences are weighted in the Procrustes solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairWeighting {
    /// Every extracted pair counts once.
    #[default]
    Uniform,
    /// Each pair is weighted by its transport plan mass.
    PlanMass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtConfig {
    /// Score of the outlier row and column.
    pub alpha: f64,
    pub sinkhorn: SinkhornConfig,
    pub weighting: PairWeighting,
    /// Run ICP from the one-shot estimate. Off in every benchmark preset.
    pub refine: Option<IcpConfig>,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            sinkhorn: SinkhornConfig::default(),
            weighting: PairWeighting::Uniform,
            refine: None,
        }
    }
}

pub fn register_ot(
    source: &PointCloud,
    target: &PointCloud,
    provider: &dyn DescriptorProvider,
    cfg: &OtConfig,
) -> Result<RegistrationResult, RegistrationError> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyPointSet.into());
    }
    let (fx, fy) = provider.describe(source, target)?;
    for (d, pc) in [(&fx, source), (&fy, target)] {
        if d.len() != pc.len() {
            return Err(Error::DescriptorCountMismatch {
                descriptors: d.len(),
                points: pc.len(),
            }
            .into());
        }
    }

    let scores = score_map(&fx, &fy)?;
    let augmented = augment(&scores, cfg.alpha)?;
    let marginals = augmented.marginals();
    let plan = sinkhorn(&augmented, &marginals, &cfg.sinkhorn)?;
    let extraction = extract_correspondences(&plan);

    let found = extraction.correspondences.len();
    if found < 3 {
        return Err(RegistrationError::TooFewCorrespondences {
            found,
            source_outliers: extraction.source_outliers.len(),
        });
    }

    let correspondences = match cfg.weighting {
        PairWeighting::Uniform => extraction.correspondences,
        PairWeighting::PlanMass => {
            let pairs = extraction.correspondences.pairs().to_vec();
            let weights = pairs.iter().map(|&(i, j)| plan.values()[(i, j)]).collect();
            CorrespondenceSet::with_weights(pairs, weights)?
        }
    };

    let transform = match solve_procrustes(source, target, &correspondences) {
        Ok(t) => t,
        Err(Error::DegenerateConfiguration) => {
            return Err(RegistrationError::Degenerate {
                correspondences: found,
            })
        }
        Err(e) => return Err(e.into()),
    };

    let diagnostics = Diagnostics {
        sinkhorn_iterations: plan.iterations(),
        marginal_residual: plan.marginal_violation(&marginals),
        converged: true,
        mean_squared_residual: mean_squared_residual(&transform, source, target, &correspondences),
        ..Default::default()
    };
    let result = RegistrationResult {
        transform,
        correspondences,
        num_source_outliers: extraction.source_outliers.len(),
        num_target_unused: extraction.unused_targets.len(),
        diagnostics,
    };

    match &cfg.refine {
        None => Ok(result),
        Some(icp) => {
            let refined = register_icp(source, target, &result.transform, icp)?;
            Ok(RegistrationResult {
                diagnostics: Diagnostics {
                    icp_iterations: refined.diagnostics.icp_iterations,
                    converged: refined.diagnostics.converged,
                    degenerate: refined.diagnostics.degenerate,
                    mean_squared_residual: refined.diagnostics.mean_squared_residual,
                    ..result.diagnostics
                },
                ..refined
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the largest entry change of the transform falls below this.
    pub convergence_eps: f64,
    /// Pairs farther apart than this are dropped each round.
    pub max_pair_distance: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-9,
            max_pair_distance: None,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::InvalidArgument("convergence_eps must be positive".into()));
        }
        if let Some(d) = self.max_pair_distance {
            if !(d > 0.0) {
                return Err(Error::InvalidArgument("max_pair_distance must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Alternates exact closest-point pairing with a Procrustes solve.
///
/// A round whose pairing is degenerate (fewer than 3 pairs, or collinear)
/// ends the loop; the last valid transform is returned with
/// `diagnostics.degenerate` set.
pub fn register_icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<RegistrationResult, RegistrationError> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyPointSet.into());
    }
    let tree = KdTree::new(target.points());
    let max_d2 = cfg.max_pair_distance.map(|d| d * d);

    let mut current = *init;
    let mut correspondences = CorrespondenceSet::default();
    let mut diagnostics = Diagnostics::default();
    for _ in 0..cfg.max_iterations {
        let pairs: Vec<(usize, usize)> = source
            .points()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let hit = tree.nearest(&current.apply_point(p))?;
                match max_d2 {
                    Some(limit) if hit.dist2 > limit => None,
                    _ => Some((i, hit.index)),
                }
            })
            .collect();
        let candidate = CorrespondenceSet::new(pairs);
        let next = match solve_procrustes(source, target, &candidate) {
            Ok(t) => t,
            Err(Error::Underdetermined(_)) | Err(Error::DegenerateConfiguration) => {
                diagnostics.degenerate = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        diagnostics.icp_iterations += 1;
        correspondences = candidate;
        let delta = next.max_abs_diff(&current);
        current = next;
        if delta < cfg.convergence_eps {
            diagnostics.converged = true;
            break;
        }
    }

    diagnostics.mean_squared_residual = mean_squared_residual(&current, source, target, &correspondences);
    let mut used = vec![false; target.len()];
    for &(_, j) in correspondences.pairs() {
        used[j] = true;
    }
    Ok(RegistrationResult {
        transform: current,
        num_source_outliers: source.len() - correspondences.len(),
        num_target_unused: used.iter().filter(|u| !**u).count(),
        correspondences,
        diagnostics,
    })
}
