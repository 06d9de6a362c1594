//! Rollouts, adaptation metrics, field sampling and timing.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{GeometricDescriptor, Point, Pose, Vector};
use crate::lpvds::{lyapunov_value, LpvDsPolicy};
use crate::pipeline::{adapt, train, PipelineConfig};
use crate::trajectory::Trajectory;

/// A velocity field that may carry discrete state (such as the active
/// segment of a plan).
pub trait VectorField {
    fn dim(&self) -> usize;

    /// Updates discrete state once per integration step. Stage evaluations
    /// inside the step see the state chosen here.
    fn begin_step(&mut self, _x: &Point) {}

    fn velocity(&self, x: &Point) -> Vector;

    /// The point the field finally converges to.
    fn goal(&self) -> &Point;

    /// Lyapunov value of the currently active policy.
    fn lyapunov(&self, x: &Point) -> f64;

    fn active_segment(&self) -> usize {
        0
    }

    /// Whether reaching [`VectorField::goal`] ends the motion.
    fn on_final_segment(&self) -> bool {
        true
    }
}

impl VectorField for LpvDsPolicy {
    fn dim(&self) -> usize {
        LpvDsPolicy::dim(self)
    }

    fn velocity(&self, x: &Point) -> Vector {
        self.evaluate(x)
    }

    fn goal(&self) -> &Point {
        self.attractor()
    }

    fn lyapunov(&self, x: &Point) -> f64 {
        lyapunov_value(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub convergence_radius: f64,
    pub integrator: Integrator,
}

impl RolloutConfig {
    /// Step of 1% of the policy's time scale; convergence at 0.1% of the
    /// workspace diameter.
    pub fn for_policy(policy: &LpvDsPolicy, workspace_diameter: f64) -> Self {
        Self::for_scales(policy.time_scale(), workspace_diameter)
    }

    pub fn for_scales(time_scale: f64, workspace_diameter: f64) -> Self {
        Self {
            dt: 0.01 * time_scale,
            max_steps: 100_000,
            convergence_radius: 1e-3 * workspace_diameter,
            integrator: Integrator::Rk4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.convergence_radius > 0.0 && self.convergence_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "convergence radius must be positive, got {}",
                self.convergence_radius
            )));
        }
        Ok(())
    }
}

/// An integrated path with per-sample field velocity, Lyapunov value and
/// active segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub lyapunov: Vec<f64>,
    pub active: Vec<usize>,
    pub converged: bool,
}

pub fn rollout(policy: &LpvDsPolicy, x0: &Point, cfg: &RolloutConfig) -> Result<Rollout> {
    let mut field = policy.clone();
    rollout_field(&mut field, x0, cfg)
}

/// Integrates `ẋ = f(x)` from `x0` until the goal is within the
/// convergence radius on the final segment, or `max_steps` steps were taken.
/// At least one step is always taken.
pub fn rollout_field<F: VectorField>(
    field: &mut F,
    x0: &Point,
    cfg: &RolloutConfig,
) -> Result<Rollout> {
    cfg.validate()?;
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let h = cfg.dt;
    let mut x = x0.clone();
    let mut points = Vec::new();
    let mut velocities = Vec::new();
    let mut lyapunov = Vec::new();
    let mut active = Vec::new();
    let mut converged = false;
    for step in 0..=cfg.max_steps {
        field.begin_step(&x);
        let k1 = field.velocity(&x);
        points.push(x.clone());
        velocities.push(k1.clone());
        lyapunov.push(field.lyapunov(&x));
        active.push(field.active_segment());
        if step > 0
            && field.on_final_segment()
            && (&x - field.goal()).norm() < cfg.convergence_radius
        {
            converged = true;
            break;
        }
        if step == cfg.max_steps {
            break;
        }
        let next = match cfg.integrator {
            Integrator::Euler => &x + &k1 * h,
            Integrator::Rk4 => {
                let k2 = field.velocity(&(&x + &k1 * (0.5 * h)));
                let k3 = field.velocity(&(&x + &k2 * (0.5 * h)));
                let k4 = field.velocity(&(&x + &k3 * h));
                &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        x = next;
    }
    let timestamps = (0..points.len()).map(|i| i as f64 * h).collect();
    Ok(Rollout {
        trajectory: Trajectory::with_velocities(points, timestamps, velocities)?,
        lyapunov,
        active,
        converged,
    })
}

fn direction_cosine(from: &Point, to: &Point, axis: &Vector) -> Result<f64> {
    let v = to - from;
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok((v.dot(axis) / (n * axis.norm())).clamp(-1.0, 1.0))
}

/// Cosine between the first displacement of `traj` and the entry x-axis.
pub fn start_cosine(traj: &Trajectory, descriptor: &GeometricDescriptor) -> Result<f64> {
    let pose = descriptor.enter().ok_or(Error::MissingPose("enter"))?;
    let p = traj.points();
    direction_cosine(&p[0], &p[1], &pose.x_axis())
}

/// Cosine between the last displacement of `traj` and the exit x-axis.
pub fn goal_cosine(traj: &Trajectory, descriptor: &GeometricDescriptor) -> Result<f64> {
    let pose = descriptor.exit().ok_or(Error::MissingPose("exit"))?;
    let p = traj.points();
    let n = p.len();
    direction_cosine(&p[n - 2], &p[n - 1], &pose.x_axis())
}

/// Distance of the first sample to the entry origin plus distance of the
/// last sample to the exit origin.
pub fn endpoints_distance(traj: &Trajectory, o_start: &Pose, o_end: &Pose) -> f64 {
    (traj.start() - o_start.position()).norm() + (traj.end() - o_end.position()).norm()
}

/// Regular grid over the first two coordinates.
///
/// For `d = 3` the grid is the slice at `lo[2]`; `hi[2]` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub lo: Point,
    pub hi: Point,
    pub nx: usize,
    pub ny: usize,
}

/// Velocities on `grid`, row-major with `y` as the outer index.
pub fn sample_field(policy: &LpvDsPolicy, grid: &FieldGrid) -> Result<Vec<(Point, Vector)>> {
    if grid.nx < 2 || grid.ny < 2 {
        return Err(Error::InvalidConfig(format!(
            "field resolution must be at least 2×2, got {}×{}",
            grid.nx, grid.ny
        )));
    }
    let d = policy.dim();
    if grid.lo.len() != d || grid.hi.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: grid.lo.len(),
        });
    }
    let mut out = Vec::with_capacity(grid.nx * grid.ny);
    let mut gamma = vec![0.0; policy.len()];
    for iy in 0..grid.ny {
        let ty = iy as f64 / (grid.ny - 1) as f64;
        for ix in 0..grid.nx {
            let tx = ix as f64 / (grid.nx - 1) as f64;
            let mut x = grid.lo.clone();
            x[0] = grid.lo[0] + tx * (grid.hi[0] - grid.lo[0]);
            x[1] = grid.lo[1] + ty * (grid.hi[1] - grid.lo[1]);
            let mut v = Vector::zeros(d);
            policy.evaluate_into(x.as_slice(), &mut gamma, v.as_mut_slice());
            out.push((x, v));
        }
    }
    Ok(out)
}

/// Metrics and median wall times of adapting a demonstration to a
/// descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationReport {
    pub components: usize,
    pub start_cos: f64,
    pub goal_cos: f64,
    pub endpoints_distance: f64,
    pub converged: bool,
    /// Seconds spent in the chain transform.
    pub transform_time: f64,
    /// Seconds spent regenerating the profile and re-estimating the policy.
    pub estimate_time: f64,
    pub total_time: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains on `demo`, then adapts to `descriptor` `repeats` times and rolls
/// the adapted policy out from the new start.
///
/// Missing descriptor poses are taken from the adapted chain's own end
/// frames when scoring.
pub fn bench_adaptation(
    demo: &Trajectory,
    descriptor: &GeometricDescriptor,
    repeats: usize,
    cfg: &PipelineConfig,
) -> Result<AdaptationReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let learned = train(demo, cfg)?;
    let mut transform = Vec::with_capacity(repeats);
    let mut estimate = Vec::with_capacity(repeats);
    let mut total = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let t0 = Instant::now();
        let adapted = adapt(&learned, descriptor, cfg)?;
        total.push(t0.elapsed().as_secs_f64());
        transform.push(adapted.transform_time.as_secs_f64());
        estimate.push(adapted.estimate_time.as_secs_f64());
        last = Some(adapted);
    }
    let adapted = last.expect("repeats ≥ 1");
    let enter = match descriptor.enter() {
        Some(p) => p.clone(),
        None => adapted.chain.entry_frame()?,
    };
    let exit = match descriptor.exit() {
        Some(p) => p.clone(),
        None => adapted.chain.exit_frame()?,
    };
    let scored = GeometricDescriptor::both(enter.clone(), exit.clone())?;
    let diameter = adapted.workspace_diameter();
    let run = rollout(
        &adapted.policy,
        enter.position(),
        &RolloutConfig::for_policy(&adapted.policy, diameter),
    )?;
    Ok(AdaptationReport {
        components: adapted.policy.len(),
        start_cos: start_cosine(&run.trajectory, &scored)?,
        goal_cos: goal_cosine(&run.trajectory, &scored)?,
        endpoints_distance: endpoints_distance(&run.trajectory, &enter, &exit),
        converged: run.converged,
        transform_time: median(transform),
        estimate_time: median(estimate),
        total_time: median(total),
    })
}

/// Runs [`bench_adaptation`] for every demonstration length in `sizes`.
/// `scenario` builds the demonstration and descriptor for a length.
pub fn bench_sweep<F>(
    sizes: &[usize],
    repeats: usize,
    cfg: &PipelineConfig,
    mut scenario: F,
) -> Result<Vec<(usize, AdaptationReport)>>
where
    F: FnMut(usize) -> Result<(Trajectory, GeometricDescriptor)>,
{
    sizes
        .iter()
        .map(|&n| {
            let (demo, descriptor) = scenario(n)?;
            Ok((n, bench_adaptation(&demo, &descriptor, repeats, cfg)?))
        })
        .collect()
}

/// Plain-text table of a sweep, one row per demonstration length, times in
/// milliseconds.
pub fn format_bench_table(rows: &[(usize, AdaptationReport)]) -> String {
    let mut out = String::from(
        "   T_n   K  transform_ms  estimate_ms  total_ms  start_cos  goal_cos  endpoints\n",
    );
    for (n, r) in rows {
        out.push_str(&format!(
            "{:>6} {:>3} {:>13.2} {:>12.2} {:>9.2} {:>10.4} {:>9.4} {:>10.5}\n",
            n,
            r.components,
            r.transform_time * 1e3,
            r.estimate_time * 1e3,
            r.total_time * 1e3,
            r.start_cos,
            r.goal_cos,
            r.endpoints_distance,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianComponent;
    use nalgebra::{dvector, DMatrix};

    fn linear_policy(attractor: Point) -> LpvDsPolicy {
        LpvDsPolicy::new(
            vec![GaussianComponent::new(1.0, attractor.clone(), DMatrix::identity(2, 2)).unwrap()],
            vec![-DMatrix::identity(2, 2)],
            DMatrix::identity(2, 2),
            attractor,
            0.5,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn linear_flow_decays_exponentially() {
        let p = linear_policy(dvector![0.0, 0.0]);
        let cfg = RolloutConfig {
            dt: 0.01,
            max_steps: 100_000,
            convergence_radius: 1e-3,
            integrator: Integrator::Rk4,
        };
        let run = rollout(&p, &dvector![1.0, 0.0], &cfg).unwrap();
        assert!(run.converged);
        for (x, t) in run
            .trajectory
            .points()
            .iter()
            .zip(run.trajectory.timestamps())
        {
            let exact = (-t).exp();
            assert!((x.norm() - exact).abs() <= 0.01 * exact);
        }
    }

    #[test]
    fn single_step_budget() {
        let p = linear_policy(dvector![0.0, 0.0]);
        let cfg = RolloutConfig {
            dt: 0.01,
            max_steps: 1,
            convergence_radius: 1e-3,
            integrator: Integrator::Euler,
        };
        let run = rollout(&p, &dvector![100.0, 0.0], &cfg).unwrap();
        assert!(!run.converged);
        assert_eq!(run.trajectory.len(), 2);
    }

    #[test]
    fn metric_cosines() {
        let traj = Trajectory::uniform(
            vec![dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![2.0, 1.0]],
            1.0,
        )
        .unwrap();
        let d = GeometricDescriptor::both(
            Pose::identity(2),
            Pose::from_translation(dvector![2.0, 1.0]),
        )
        .unwrap();
        assert!((start_cosine(&traj, &d).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(goal_cosine(&traj, &d).unwrap(), 1.0);
        let back = GeometricDescriptor::new(Some(Pose::planar(dvector![0.0, 0.0], std::f64::consts::PI)), None).unwrap();
        let straight = Trajectory::uniform(vec![dvector![0.0, 0.0], dvector![1.0, 0.0]], 1.0).unwrap();
        assert!((start_cosine(&straight, &back).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(goal_cosine(&straight, &back).unwrap_err(), Error::MissingPose("exit"));
    }

    #[test]
    fn degenerate_direction() {
        let traj = Trajectory::uniform(vec![dvector![1.0, 1.0], dvector![1.0, 1.0]], 1.0).unwrap();
        let d = GeometricDescriptor::new(Some(Pose::identity(2)), None).unwrap();
        assert_eq!(start_cosine(&traj, &d).unwrap_err(), Error::DegenerateDirection);
    }

    #[test]
    fn endpoint_offsets_add() {
        let traj = Trajectory::uniform(vec![dvector![0.3, 0.0], dvector![5.0, 0.4]], 1.0).unwrap();
        let dist = endpoints_distance(
            &traj,
            &Pose::identity(2),
            &Pose::from_translation(dvector![5.0, 0.0]),
        );
        assert!((dist - 0.7).abs() < 1e-15);
    }

    #[test]
    fn field_points_to_attractor() {
        let p = linear_policy(dvector![0.0, 0.0]);
        let grid = FieldGrid {
            lo: dvector![-1.0, -1.0],
            hi: dvector![1.0, 1.0],
            nx: 3,
            ny: 3,
        };
        let samples = sample_field(&p, &grid).unwrap();
        assert_eq!(samples.len(), 9);
        assert_eq!(samples[4].1, dvector![0.0, 0.0]);
        assert_eq!(samples[1].0, dvector![0.0, -1.0]);
        for (x, v) in &samples {
            assert_eq!(v, &(-x));
        }
    }
}
