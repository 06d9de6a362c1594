//! Train on a demonstration, then adapt the learned chain to new descriptors.

use std::time::{Duration, Instant};

use crate::chain::{build_chain, transform_chain, EigenScaling, ElasticChain};
use crate::error::Result;
use crate::geometry::{bounding_diameter, GeometricDescriptor};
use crate::gmm::{fit_gmm, order_components, GmmFitConfig};
use crate::lpvds::{estimate, EstimateOptions, LpvDsPolicy};
use crate::profile::{regenerate_profile, ProfileConfig};
use crate::trajectory::{compute_velocities, Trajectory};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub gmm: GmmFitConfig,
    pub estimate: EstimateOptions,
    pub scaling: EigenScaling,
    /// Interpolation pins per link of regenerated profiles; `None` pins
    /// every sample between joints.
    pub pins_per_link: Option<usize>,
}

/// A chain and policy fitted to one demonstration.
#[derive(Debug, Clone)]
pub struct Learned {
    pub chain: ElasticChain,
    pub policy: LpvDsPolicy,
    /// Sampling used when regenerating profiles for this chain.
    pub profile: ProfileConfig,
}

/// Fits the mixture, builds its chain and estimates a policy on the
/// demonstration itself.
pub fn train(demo: &Trajectory, cfg: &PipelineConfig) -> Result<Learned> {
    let demo = match demo.velocities() {
        Some(_) => demo.clone(),
        None => compute_velocities(demo)?,
    };
    let components = fit_gmm(demo.points(), &cfg.gmm)?;
    let ordered = order_components(&components, &demo)?;
    let chain = build_chain(ordered, &demo)?.with_scaling(cfg.scaling);
    let policy = estimate(
        chain.components(),
        demo.points(),
        demo.velocities().expect("velocities computed above"),
        demo.end(),
        &cfg.estimate,
    )?;
    let mut profile = ProfileConfig::like(&demo);
    profile.pins_per_link = cfg.pins_per_link;
    Ok(Learned {
        chain,
        policy,
        profile,
    })
}

/// A chain moved to new descriptors with its re-estimated policy.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub chain: ElasticChain,
    pub profile: Trajectory,
    pub policy: LpvDsPolicy,
    pub transform_time: Duration,
    pub estimate_time: Duration,
}

impl Adapted {
    /// Bounding-box diagonal of the regenerated profile.
    pub fn workspace_diameter(&self) -> f64 {
        bounding_diameter(self.profile.points())
    }
}

/// Transforms the learned chain, regenerates a profile through its new
/// joints and re-estimates the policy on it. The mixture is not refitted.
pub fn adapt(
    learned: &Learned,
    descriptor: &GeometricDescriptor,
    cfg: &PipelineConfig,
) -> Result<Adapted> {
    let t0 = Instant::now();
    let (chain, components) = transform_chain(&learned.chain, descriptor)?;
    let transform_time = t0.elapsed();
    let t1 = Instant::now();
    let profile = regenerate_profile(chain.joints(), &learned.profile)?;
    let policy = estimate(
        &components,
        profile.points(),
        profile.velocities().expect("profiles carry velocities"),
        chain.end(),
        &cfg.estimate,
    )?;
    let estimate_time = t1.elapsed();
    Ok(Adapted {
        chain,
        profile,
        policy,
        transform_time,
        estimate_time,
    })
}
