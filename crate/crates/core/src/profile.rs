//! Regeneration of a timed reference trajectory through the chain joints.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::laplacian::build_laplacian;
use crate::trajectory::{compute_velocities, Trajectory};

/// Sampling of a regenerated profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    /// Number of samples.
    pub points: usize,
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Pin linear interpolants between consecutive joint indices.
    pub interpolate_between_joints: bool,
    /// Interpolation pins per link, evenly spread between its joint indices.
    /// `None` pins every sample, which makes each link a straight segment.
    pub pins_per_link: Option<usize>,
}

impl ProfileConfig {
    /// Matches the density and sampling interval of a demonstration.
    pub fn like(demo: &Trajectory) -> Self {
        Self {
            points: demo.len(),
            dt: demo.median_dt(),
            interpolate_between_joints: true,
            pins_per_link: None,
        }
    }

    pub fn validate(&self, joints: usize) -> Result<()> {
        if self.points < joints.max(2) {
            return Err(Error::InvalidConfig(format!(
                "{} profile points cannot hold {joints} joints",
                self.points
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "profile dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Normalized cumulative distance `λ_q` of each joint along the joint polyline.
pub fn joint_progress(joints: &[Point]) -> Result<Vec<f64>> {
    if joints.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "need at least 2 joints, got {}",
            joints.len()
        )));
    }
    let mut acc = 0.0;
    let mut lambda = Vec::with_capacity(joints.len());
    lambda.push(0.0);
    for (i, w) in joints.windows(2).enumerate() {
        let step = (&w[1] - &w[0]).norm();
        if !(step > 0.0) {
            return Err(Error::ZeroLengthChain { index: i });
        }
        acc += step;
        lambda.push(acc);
    }
    for l in lambda.iter_mut() {
        *l /= acc;
    }
    *lambda.last_mut().expect("at least two joints") = 1.0;
    Ok(lambda)
}

/// Sample index `⌊λ_q (p − 1)⌋` of every joint.
pub fn map_joint_indices(lambda: &[f64], p: usize) -> Result<Vec<usize>> {
    if p < 2 {
        return Err(Error::InvalidConfig(format!(
            "a profile needs at least 2 points, got {p}"
        )));
    }
    let scale = (p - 1) as f64;
    let idx: Vec<usize> = lambda
        .iter()
        .map(|l| ((l * scale).floor().max(0.0) as usize).min(p - 1))
        .collect();
    for (q, w) in idx.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::IndexCollision {
                first: q,
                second: q + 1,
                index: w[1],
            });
        }
    }
    Ok(idx)
}

/// Deforms the straight line `β₀ → β_N` into a `p`-sample path that passes
/// through every joint at its mapped index, then times it uniformly.
pub fn regenerate_profile(joints: &[Point], cfg: &ProfileConfig) -> Result<Trajectory> {
    cfg.validate(joints.len())?;
    let lambda = joint_progress(joints)?;
    let idx = map_joint_indices(&lambda, cfg.points)?;
    let p = cfg.points;
    let first = &joints[0];
    let last = &joints[joints.len() - 1];
    let line: Vec<Point> = (0..p)
        .map(|i| {
            let t = i as f64 / (p - 1) as f64;
            first * (1.0 - t) + last * t
        })
        .collect();
    let mut sys = build_laplacian(p)?.with_path(&line)?;
    for (q, &j) in idx.iter().enumerate() {
        sys.pin(j, joints[q].clone(), 0.0)?;
    }
    if cfg.interpolate_between_joints {
        for (q, w) in idx.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let span = b - a;
            let interior: Vec<usize> = match cfg.pins_per_link {
                None => (a + 1..b).collect(),
                Some(c) => (1..=c)
                    .map(|s| a + (s * span) / (c + 1))
                    .filter(|&i| i > a && i < b)
                    .collect(),
            };
            for i in interior {
                let t = (i - a) as f64 / span as f64;
                let target = &joints[q] * (1.0 - t) + &joints[q + 1] * t;
                // Distinct links never share an interior index.
                sys.pin(i, target, f64::INFINITY)?;
            }
        }
    }
    let points = sys.solve()?;
    compute_velocities(&Trajectory::uniform(points, cfg.dt)?)
}
