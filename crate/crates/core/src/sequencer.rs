//! Multi-segment tasks: splitting at via-points, stitching chains and
//! executing one policy at a time.

use crate::chain::ElasticChain;
use crate::config::TOLERANCES;
use crate::error::{Error, Result};
use crate::eval::VectorField;
use crate::geometry::{bounding_diameter, frame_from_two_points, GeometricDescriptor, Point, Pose, Vector};
use crate::gmm::OrderedGmm;
use crate::lpvds::{estimate, lyapunov_value, LpvDsPolicy};
use crate::pipeline::{adapt, train, Learned, PipelineConfig};
use crate::profile::{regenerate_profile, ProfileConfig};
use crate::trajectory::Trajectory;

/// Splits `traj` at the sample closest to each via-point. Consecutive
/// segments share their boundary sample.
pub fn split_demo(traj: &Trajectory, via_points: &[Point], radius: f64) -> Result<Vec<Trajectory>> {
    if via_points.is_empty() {
        return Err(Error::InvalidConfig("no via-points given".into()));
    }
    let mut cuts = Vec::with_capacity(via_points.len());
    for (q, via) in via_points.iter().enumerate() {
        if via.len() != traj.dim() {
            return Err(Error::DimensionMismatch {
                expected: traj.dim(),
                found: via.len(),
            });
        }
        let (idx, dist) = traj
            .points()
            .iter()
            .map(|p| (p - via).norm())
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best });
        if !(dist <= radius) {
            return Err(Error::ViaPointNotOnDemo {
                index: q,
                distance: dist,
                radius,
            });
        }
        cuts.push(idx);
    }
    let last = traj.len() - 1;
    for (q, &c) in cuts.iter().enumerate() {
        let prev = if q == 0 { 0 } else { cuts[q - 1] };
        if c <= prev || c >= last {
            return Err(Error::NonMonotoneViaPoints { index: q });
        }
    }
    let mut bounds = vec![0];
    bounds.extend(&cuts);
    bounds.push(last);
    bounds.windows(2).map(|w| traj.slice(w[0], w[1])).collect()
}

/// Concatenates chains that meet end to start into one chain.
///
/// Shared boundary joints are kept once and priors are renormalized to sum
/// to one.
pub fn stitch_chains(chains: &[ElasticChain]) -> Result<ElasticChain> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidConfig("no chains to stitch".into()))?;
    let mut joints: Vec<Point> = first.joints().to_vec();
    for (i, w) in chains.windows(2).enumerate() {
        if w[1].dim() != w[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: w[0].dim(),
                found: w[1].dim(),
            });
        }
        let gap = (w[1].start() - w[0].end()).norm();
        if gap > TOLERANCES.chain_gap {
            return Err(Error::ChainGapTooLarge {
                index: i,
                gap,
                tolerance: TOLERANCES.chain_gap,
            });
        }
        joints.extend(w[1].joints()[1..].iter().cloned());
    }
    let total: f64 = chains
        .iter()
        .flat_map(|c| c.components())
        .map(|c| c.prior())
        .sum();
    let n = chains.len() as f64;
    let mut components = Vec::new();
    let mut scores = Vec::new();
    for (i, chain) in chains.iter().enumerate() {
        for (c, s) in chain.components().iter().zip(chain.gmm().order_scores()) {
            components.push(c.with_prior(c.prior() / total)?);
            scores.push((i as f64 + s) / n);
        }
    }
    let scaling = first.scaling();
    Ok(ElasticChain::from_parts(OrderedGmm::new(components, scores)?, joints)?.with_scaling(scaling))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// One policy per segment, switched when its attractor is reached.
    Sequential,
    /// A single policy over the stitched chain.
    Combined,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub chain: ElasticChain,
    pub descriptor: GeometricDescriptor,
    pub policy: LpvDsPolicy,
    /// Free-form annotation such as a gripper command.
    pub action: Option<String>,
}

impl Segment {
    fn start_position(&self) -> &Point {
        match self.descriptor.enter() {
            Some(p) => p.position(),
            None => self.chain.start(),
        }
    }
}

/// Segments executed in order with one-hot activation.
#[derive(Debug, Clone)]
pub struct TaskPlan {
    segments: Vec<Segment>,
    mode: PlanMode,
    switch_radius: f64,
    cursor: usize,
}

impl TaskPlan {
    /// Each segment's attractor must coincide with the next segment's start.
    pub fn sequential(segments: Vec<Segment>, switch_radius: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidConfig("a plan needs at least one segment".into()));
        }
        if !(switch_radius > 0.0 && switch_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "switch radius must be positive, got {switch_radius}"
            )));
        }
        for (i, w) in segments.windows(2).enumerate() {
            let gap = (w[0].policy.attractor() - w[1].start_position()).norm();
            if gap > TOLERANCES.segment_junction {
                return Err(Error::ChainGapTooLarge {
                    index: i,
                    gap,
                    tolerance: TOLERANCES.segment_junction,
                });
            }
        }
        Ok(Self {
            segments,
            mode: PlanMode::Sequential,
            switch_radius,
            cursor: 0,
        })
    }

    pub fn combined(segment: Segment) -> Self {
        Self {
            segments: vec![segment],
            mode: PlanMode::Combined,
            switch_radius: f64::INFINITY,
            cursor: 0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn mode(&self) -> PlanMode {
        self.mode
    }

    pub fn switch_radius(&self) -> f64 {
        self.switch_radius
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn segment_actions(&self) -> impl Iterator<Item = Option<&str>> {
        self.segments.iter().map(|s| s.action.as_deref())
    }

    /// Rewinds execution to the first segment.
    pub fn reset(&mut self) {
        self.cursor = 0;
    }

    /// Advances the cursor past every segment whose attractor `x` is
    /// already within the switch radius of. Never moves backwards.
    pub fn update_cursor(&mut self, x: &Point) {
        if self.mode == PlanMode::Combined {
            return;
        }
        let last = self.segments.len() - 1;
        if let Some(j) = (self.cursor..=last)
            .rev()
            .find(|&j| (x - self.segments[j].policy.attractor()).norm() < self.switch_radius)
        {
            self.cursor = (j + 1).min(last);
        }
    }

    /// Velocity of the active policy and its index, after updating the cursor.
    pub fn step(&mut self, x: &Point) -> (Vector, usize) {
        self.update_cursor(x);
        (self.segments[self.cursor].policy.evaluate(x), self.cursor)
    }
}

impl VectorField for TaskPlan {
    fn dim(&self) -> usize {
        self.segments[0].policy.dim()
    }

    fn begin_step(&mut self, x: &Point) {
        self.update_cursor(x);
    }

    fn velocity(&self, x: &Point) -> Vector {
        self.segments[self.cursor].policy.evaluate(x)
    }

    fn goal(&self) -> &Point {
        self.segments[self.segments.len() - 1].policy.attractor()
    }

    fn lyapunov(&self, x: &Point) -> f64 {
        lyapunov_value(&self.segments[self.cursor].policy, x)
    }

    fn active_segment(&self) -> usize {
        self.cursor
    }

    fn on_final_segment(&self) -> bool {
        self.cursor + 1 == self.segments.len()
    }
}

/// Pose at sample `index` of `traj` with its x-axis along the local
/// central difference.
pub fn tangent_pose(traj: &Trajectory, index: usize) -> Result<Pose> {
    let p = traj.points();
    let lo = index.saturating_sub(1);
    let hi = (index + 1).min(p.len() - 1);
    let frame = frame_from_two_points(&p[lo], &p[hi])?;
    Pose::new(p[index].clone(), frame.rotation().clone())
}

/// Trains one chain per segment of a demonstration split at `via_points`.
pub fn train_segments(
    demo: &Trajectory,
    via_points: &[Point],
    radius: f64,
    cfg: &PipelineConfig,
) -> Result<Vec<Learned>> {
    split_demo(demo, via_points, radius)?
        .iter()
        .map(|seg| train(seg, cfg))
        .collect()
}

/// Descriptors for a chain of segments whose interior boundaries are the
/// given poses; the outer ends keep their learned frames.
pub fn segment_descriptors(learned: &[Learned], via_poses: &[Pose]) -> Result<Vec<GeometricDescriptor>> {
    if via_poses.len() + 1 != learned.len() {
        return Err(Error::InvalidConfig(format!(
            "{} segments need {} via poses, got {}",
            learned.len(),
            learned.len().saturating_sub(1),
            via_poses.len()
        )));
    }
    (0..learned.len())
        .map(|i| {
            let enter = match i {
                0 => learned[0].chain.entry_frame()?,
                _ => via_poses[i - 1].clone(),
            };
            let exit = match via_poses.get(i) {
                Some(p) => p.clone(),
                None => learned[i].chain.exit_frame()?,
            };
            GeometricDescriptor::both(enter, exit)
        })
        .collect()
}

/// Adapts every segment to its descriptor and runs them one after another.
/// The switch radius defaults to 1% of the adapted workspace diameter.
pub fn plan_sequential(
    learned: &[Learned],
    descriptors: &[GeometricDescriptor],
    switch_radius: Option<f64>,
    cfg: &PipelineConfig,
) -> Result<TaskPlan> {
    if learned.len() != descriptors.len() {
        return Err(Error::InvalidConfig("one descriptor per segment".into()));
    }
    let mut segments = Vec::with_capacity(learned.len());
    let mut profile_points = Vec::new();
    for (l, d) in learned.iter().zip(descriptors) {
        let adapted = adapt(l, d, cfg)?;
        profile_points.extend(adapted.profile.points().iter().cloned());
        segments.push(Segment {
            chain: adapted.chain,
            descriptor: d.clone(),
            policy: adapted.policy,
            action: None,
        });
    }
    let radius = switch_radius.unwrap_or_else(|| 0.01 * bounding_diameter(&profile_points));
    TaskPlan::sequential(segments, radius)
}

/// Adapts every segment, stitches the chains and estimates a single policy
/// over a profile regenerated through all joints.
pub fn plan_combined(
    learned: &[Learned],
    descriptors: &[GeometricDescriptor],
    cfg: &PipelineConfig,
) -> Result<TaskPlan> {
    if learned.len() != descriptors.len() || learned.is_empty() {
        return Err(Error::InvalidConfig("one descriptor per segment".into()));
    }
    let mut chains = Vec::with_capacity(learned.len());
    for (l, d) in learned.iter().zip(descriptors) {
        chains.push(crate::chain::transform_chain(&l.chain, d)?.0);
    }
    let stitched = stitch_chains(&chains)?;
    let profile_cfg = ProfileConfig {
        points: learned.iter().map(|l| l.profile.points).sum::<usize>() - (learned.len() - 1),
        dt: learned[0].profile.dt,
        interpolate_between_joints: learned[0].profile.interpolate_between_joints,
        pins_per_link: cfg.pins_per_link,
    };
    let profile = regenerate_profile(stitched.joints(), &profile_cfg)?;
    let policy = estimate(
        stitched.components(),
        profile.points(),
        profile.velocities().expect("profiles carry velocities"),
        stitched.end(),
        &cfg.estimate,
    )?;
    let enter = descriptors[0]
        .enter()
        .cloned()
        .map_or_else(|| stitched.entry_frame(), Ok)?;
    let exit = descriptors[descriptors.len() - 1]
        .exit()
        .cloned()
        .map_or_else(|| stitched.exit_frame(), Ok)?;
    Ok(TaskPlan::combined(Segment {
        chain: stitched,
        descriptor: GeometricDescriptor::both(enter, exit)?,
        policy,
        action: None,
    }))
}
