//! Scripted demonstrations and descriptor edits for tests and benchmarks.

use std::f64::consts::PI;

use nalgebra::{dvector, DMatrix};

use crate::error::Result;
use crate::geometry::{frame_from_two_points, GeometricDescriptor, Point, Pose, Vector};
use crate::trajectory::Trajectory;

/// Closed-form demonstration shapes at unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// One period of a sine wave: the curve bends one way, then the other.
    SCurve,
    /// Half circle of diameter one.
    Arc,
    /// Three half-periods of a shallow sine.
    Wave,
    /// Inward spiral over three quarter turns.
    Spiral,
    /// Symmetric bump.
    Hump,
    /// One helix turn rising along z.
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 6] = [
        Shape::SCurve,
        Shape::Arc,
        Shape::Wave,
        Shape::Spiral,
        Shape::Hump,
        Shape::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::SCurve => "s-curve",
            Shape::Arc => "arc",
            Shape::Wave => "wave",
            Shape::Spiral => "spiral",
            Shape::Hump => "hump",
            Shape::Helix => "helix",
        }
    }

    pub fn from_name(name: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn dim(self) -> usize {
        match self {
            Shape::Helix => 3,
            _ => 2,
        }
    }

    /// Point at path parameter `s ∈ [0, 1]`.
    pub fn point(self, s: f64) -> Point {
        match self {
            Shape::SCurve => dvector![s, 0.25 * (2.0 * PI * s).sin()],
            Shape::Arc => dvector![0.5 - 0.5 * (PI * s).cos(), 0.5 * (PI * s).sin()],
            Shape::Wave => dvector![s, 0.15 * (3.0 * PI * s).sin()],
            Shape::Spiral => {
                let r = 0.5 * (1.0 - 0.6 * s);
                let t = 1.5 * PI * s;
                dvector![r * t.cos(), r * t.sin()]
            }
            Shape::Hump => dvector![s, 1.2 * s * (1.0 - s)],
            Shape::Helix => {
                let t = 2.0 * PI * s;
                dvector![0.3 * t.cos(), 0.3 * t.sin(), s]
            }
        }
    }

    /// `n` samples over `duration` seconds with minimum-jerk timing.
    pub fn demo(self, n: usize, duration: f64) -> Result<Trajectory> {
        let dt = duration / (n.max(2) - 1) as f64;
        let points = (0..n)
            .map(|i| self.point(min_jerk(i as f64 / (n.max(2) - 1) as f64)))
            .collect();
        Trajectory::uniform(points, dt)
    }
}

/// Minimum-jerk time scaling `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
}

/// The scripted two-second demonstration used throughout the test suite.
pub fn s_curve_demo(n: usize) -> Result<Trajectory> {
    Shape::SCurve.demo(n, 2.0)
}

/// Rotation by `angle` about the world z-axis (the plane rotation in 2D).
pub fn rotation_about_z(d: usize, angle: f64) -> DMatrix<f64> {
    let mut r = DMatrix::identity(d, d);
    let (s, c) = angle.sin_cos();
    r[(0, 0)] = c;
    r[(0, 1)] = -s;
    r[(1, 0)] = s;
    r[(1, 1)] = c;
    r
}

/// `pose` moved by `offset` and turned by `angle` about its own origin.
pub fn shifted(pose: &Pose, offset: &Vector, angle: f64) -> Result<Pose> {
    let r = rotation_about_z(pose.dim(), angle);
    Pose::new(pose.position() + offset, r * pose.rotation())
}

/// Entry and exit frames of `demo` taken along the chord over its first and
/// last 5% of samples, each moved by `(offset, angle)` as in [`shifted`].
pub fn both_ends_shifted(
    demo: &Trajectory,
    enter: (&Vector, f64),
    exit: (&Vector, f64),
) -> Result<GeometricDescriptor> {
    let p = demo.points();
    let n = p.len();
    let span = (n / 20).max(1);
    let head = frame_from_two_points(&p[0], &p[span])?;
    let tail = frame_from_two_points(&p[n - 1 - span], &p[n - 1])?;
    let tail = Pose::new(p[n - 1].clone(), tail.rotation().clone())?;
    GeometricDescriptor::both(shifted(&head, enter.0, enter.1)?, shifted(&tail, exit.0, exit.1)?)
}
