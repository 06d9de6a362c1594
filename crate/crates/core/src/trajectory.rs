//! Timestamped position sequences.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{check_dimension, Point, Vector};

/// An ordered, timestamped sequence of positions with optional velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Point>,
    timestamps: Vec<f64>,
    velocities: Option<Vec<Vector>>,
}

impl Trajectory {
    pub fn new(points: Vec<Point>, timestamps: Vec<f64>) -> Result<Self> {
        Self::build(points, timestamps, None)
    }

    pub fn with_velocities(
        points: Vec<Point>,
        timestamps: Vec<f64>,
        velocities: Vec<Vector>,
    ) -> Result<Self> {
        Self::build(points, timestamps, Some(velocities))
    }

    /// Samples `points` at a fixed interval `dt` starting from zero.
    pub fn uniform(points: Vec<Point>, dt: f64) -> Result<Self> {
        let timestamps = (0..points.len()).map(|i| i as f64 * dt).collect();
        Self::new(points, timestamps)
    }

    fn build(
        points: Vec<Point>,
        timestamps: Vec<f64>,
        velocities: Option<Vec<Vector>>,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if timestamps.len() != points.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} timestamps for {} points",
                timestamps.len(),
                points.len()
            )));
        }
        let d = points[0].len();
        check_dimension(d)?;
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrajectory("non-finite coordinate".into()));
            }
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite timestamp".into()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTimestamps { index: i + 1 });
        }
        if let Some(v) = &velocities {
            if v.len() != points.len() {
                return Err(Error::InvalidTrajectory(format!(
                    "{} velocities for {} points",
                    v.len(),
                    points.len()
                )));
            }
            if let Some(bad) = v.iter().find(|v| v.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        Ok(Self {
            points,
            timestamps,
            velocities,
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn velocities(&self) -> Option<&[Vector]> {
        self.velocities.as_deref()
    }

    pub fn start(&self) -> &Point {
        &self.points[0]
    }

    pub fn end(&self) -> &Point {
        &self.points[self.points.len() - 1]
    }

    /// Total polyline length.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
    }

    /// Cumulative arc length of every sample, normalized to `[0, 1]`.
    ///
    /// A trajectory that never moves gets a uniform parameterization.
    pub fn normalized_arc_length(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in self.points.windows(2) {
            acc += (&w[1] - &w[0]).norm();
            s.push(acc);
        }
        if acc > 0.0 {
            s.iter_mut().for_each(|v| *v /= acc);
        } else {
            let n = (self.len() - 1) as f64;
            s.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 / n);
        }
        s
    }

    /// Median sampling interval.
    pub fn median_dt(&self) -> f64 {
        let mut dts: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        dts.sort_by(f64::total_cmp);
        let n = dts.len();
        if n % 2 == 1 {
            dts[n / 2]
        } else {
            0.5 * (dts[n / 2 - 1] + dts[n / 2])
        }
    }

    /// Reverses the direction of travel, keeping the original time spacing.
    pub fn reversed(&self) -> Trajectory {
        let t_end = self.timestamps[self.len() - 1];
        let mut points = self.points.clone();
        points.reverse();
        let mut timestamps: Vec<f64> = self.timestamps.iter().map(|t| t_end - t).collect();
        timestamps.reverse();
        Trajectory {
            points,
            timestamps,
            velocities: None,
        }
    }

    /// Sub-trajectory over the inclusive index range `[from, to]`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Trajectory> {
        if to >= self.len() || from >= to {
            return Err(Error::InvalidTrajectory(format!(
                "invalid slice [{from}, {to}] of a {}-point trajectory",
                self.len()
            )));
        }
        Ok(Trajectory {
            points: self.points[from..=to].to_vec(),
            timestamps: self.timestamps[from..=to].to_vec(),
            velocities: self.velocities.as_ref().map(|v| v[from..=to].to_vec()),
        })
    }

    /// Returns the same trajectory with velocities from [`compute_velocities`].
    pub fn with_finite_difference_velocities(&self) -> Trajectory {
        let velocities = finite_differences(&self.points, &self.timestamps);
        Trajectory {
            points: self.points.clone(),
            timestamps: self.timestamps.clone(),
            velocities: Some(velocities),
        }
    }
}

/// Forward-difference velocities with a zero terminal velocity.
///
/// The last sample is the attractor of the demonstrated motion, so its
/// velocity is zero rather than a backward difference.
pub fn compute_velocities(traj: &Trajectory) -> Result<Trajectory> {
    // Constructed trajectories already satisfy the timestamp invariant; the
    // check is repeated so callers holding stale data still get a typed error.
    if let Some(i) = traj.timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneTimestamps { index: i + 1 });
    }
    Ok(traj.with_finite_difference_velocities())
}

fn finite_differences(points: &[Point], timestamps: &[f64]) -> Vec<Vector> {
    let d = points[0].len();
    let mut v: Vec<Vector> = points
        .windows(2)
        .zip(timestamps.windows(2))
        .map(|(p, t)| (&p[1] - &p[0]) / (t[1] - t[0]))
        .collect();
    v.push(DVector::zeros(d));
    v
}
