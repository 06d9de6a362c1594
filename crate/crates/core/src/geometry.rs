//! Points, poses and task-frame descriptors for 2D and 3D workspaces.

use nalgebra::{DMatrix, DVector};

use crate::config::TOLERANCES;
use crate::error::{Error, Result};

/// A position in the workspace.
pub type Point = DVector<f64>;
/// A velocity or displacement in the workspace.
pub type Vector = DVector<f64>;

/// Checks that `d` is a supported workspace dimension.
pub fn check_dimension(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "workspace dimension must be 2 or 3, got {d}"
        )))
    }
}

/// A rigid frame: a position and an orthonormal, right-handed orientation.
///
/// The columns of `rotation` are the frame axes expressed in world
/// coordinates, so `rotation.column(0)` is the frame x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    position: Point,
    rotation: DMatrix<f64>,
}

impl Pose {
    /// Builds a pose, validating the rotation with the in-memory tolerance.
    pub fn new(position: Point, rotation: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(position, rotation, TOLERANCES.rotation)
    }

    /// Builds a pose, validating orthonormality and determinant within `tol`.
    pub fn with_tolerance(position: Point, rotation: DMatrix<f64>, tol: f64) -> Result<Self> {
        let d = position.len();
        check_dimension(d)?;
        if rotation.nrows() != d || rotation.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rotation.nrows(),
            });
        }
        if position.iter().chain(rotation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let gram_err = (rotation.transpose() * &rotation - DMatrix::identity(d, d)).amax();
        if gram_err > tol {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { position, rotation })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            position: DVector::zeros(d),
            rotation: DMatrix::identity(d, d),
        }
    }

    /// A pure translation.
    pub fn from_translation(position: Point) -> Self {
        let d = position.len();
        Self {
            position,
            rotation: DMatrix::identity(d, d),
        }
    }

    /// Planar rotation by `angle` radians about `position`'s origin.
    pub fn planar(position: Point, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            position,
            rotation: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
        }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn position(&self) -> &Point {
        &self.position
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn x_axis(&self) -> Vector {
        self.rotation.column(0).into_owned()
    }

    /// `self ∘ other`: maps points expressed in `other`'s frame through both.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: &self.rotation * &other.position + &self.position,
            rotation: &self.rotation * &other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            position: -(&rt * &self.position),
            rotation: rt,
        }
    }

    /// Maps a point from frame-local to world coordinates.
    pub fn transform_point(&self, local: &Point) -> Point {
        &self.rotation * local + &self.position
    }

    /// Maps a point from world to frame-local coordinates.
    pub fn inverse_transform_point(&self, world: &Point) -> Point {
        self.rotation.tr_mul(&(world - &self.position))
    }

    pub fn transform_vector(&self, local: &Vector) -> Vector {
        &self.rotation * local
    }

    pub fn inverse_transform_vector(&self, world: &Vector) -> Vector {
        self.rotation.tr_mul(world)
    }
}

/// Builds the frame at `origin` whose x-axis points toward `toward`.
///
/// The remaining axes are completed deterministically: in 2D the y-axis is the
/// x-axis rotated 90° counter-clockwise; in 3D the y-axis is `x̂ × ẑ` (or
/// `x̂ × ŷ` when the x-axis is within ~8° of world z) and `ẑ' = x̂ × ŷ'`.
pub fn frame_from_two_points(origin: &Point, toward: &Point) -> Result<Pose> {
    let d = origin.len();
    check_dimension(d)?;
    if toward.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: toward.len(),
        });
    }
    let diff = toward - origin;
    let separation = diff.norm();
    if separation <= TOLERANCES.degenerate_frame || !separation.is_finite() {
        return Err(Error::DegenerateFrame { separation });
    }
    let x = diff / separation;
    Ok(Pose {
        position: origin.clone(),
        rotation: complete_frame(&x),
    })
}

/// Completes a unit x-axis into a right-handed rotation matrix.
pub(crate) fn complete_frame(x: &Vector) -> DMatrix<f64> {
    match x.len() {
        2 => DMatrix::from_column_slice(2, 2, &[x[0], x[1], -x[1], x[0]]),
        3 => {
            let x3 = nalgebra::Vector3::new(x[0], x[1], x[2]);
            let aux = if x3.z.abs() > 0.99 {
                nalgebra::Vector3::y()
            } else {
                nalgebra::Vector3::z()
            };
            let y = x3.cross(&aux).normalize();
            let z = x3.cross(&y);
            DMatrix::from_column_slice(3, 3, &[x3.x, x3.y, x3.z, y.x, y.y, y.z, z.x, z.y, z.z])
        }
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Entry and exit poses that anchor one trajectory segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricDescriptor {
    enter: Option<Pose>,
    exit: Option<Pose>,
}

impl GeometricDescriptor {
    pub fn new(enter: Option<Pose>, exit: Option<Pose>) -> Result<Self> {
        match (&enter, &exit) {
            (None, None) => Err(Error::InvalidPose(
                "a descriptor needs an enter or an exit pose".into(),
            )),
            (Some(a), Some(b)) if a.dim() != b.dim() => Err(Error::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            }),
            _ => Ok(Self { enter, exit }),
        }
    }

    pub fn both(enter: Pose, exit: Pose) -> Result<Self> {
        Self::new(Some(enter), Some(exit))
    }

    pub fn enter(&self) -> Option<&Pose> {
        self.enter.as_ref()
    }

    pub fn exit(&self) -> Option<&Pose> {
        self.exit.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.enter
            .as_ref()
            .or(self.exit.as_ref())
            .map(Pose::dim)
            .unwrap_or(0)
    }

    /// Applies a rigid motion to both poses.
    pub fn transformed(&self, motion: &Pose) -> Self {
        Self {
            enter: self.enter.as_ref().map(|p| motion.compose(p)),
            exit: self.exit.as_ref().map(|p| motion.compose(p)),
        }
    }
}

/// Diagonal of the axis-aligned bounding box of `points`.
pub fn bounding_diameter<'a>(points: impl IntoIterator<Item = &'a Point>) -> f64 {
    let mut iter = points.into_iter();
    let Some(first) = iter.next() else {
        return 0.0;
    };
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in iter {
        for i in 0..p.len() {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (hi - lo).norm()
}
