//! The elastic Gaussian chain.
//!
//! Neighboring mixture components are linked by joints at the mean of their
//! product. Every component is stored in the frame of its preceding joint
//! (x-axis toward the next joint), so moving the joints carries the
//! components along: re-targeting a chain means solving a Laplacian edit for
//! new joints and re-expressing each component in its new link frame,
//! stretched by the change of link length.

use nalgebra::{DMatrix, DVector};

use crate::config::TOLERANCES;
use crate::error::{Error, Result};
use crate::gaussian::{sorted_symmetric_eigen, GaussianComponent};
use crate::geometry::{frame_from_two_points, GeometricDescriptor, Point, Pose, Vector};
use crate::gmm::OrderedGmm;
use crate::laplacian::{build_laplacian, LaplacianSystem};
use crate::trajectory::Trajectory;

/// Mean of the product of two Gaussians: `Σₜ(Σ₁⁻¹μ₁ + Σ₂⁻¹μ₂)` with
/// `Σₜ = (Σ₁⁻¹ + Σ₂⁻¹)⁻¹`.
pub fn gaussian_joint(g1: &GaussianComponent, g2: &GaussianComponent) -> Result<Point> {
    let inv = |c: &GaussianComponent| {
        c.covariance()
            .clone()
            .cholesky()
            .map(|ch| ch.inverse())
            .ok_or(Error::SingularCovariance)
    };
    let p1 = inv(g1)?;
    let p2 = inv(g2)?;
    let info = &p1 * g1.mean() + &p2 * g2.mean();
    let joint = (p1 + p2)
        .cholesky()
        .ok_or(Error::SingularCovariance)?
        .solve(&info);
    Ok(joint)
}

/// How the eigenvalue along a link responds to a change of link length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenScaling {
    /// Variance scales with the squared length ratio (shape preserving).
    #[default]
    Squared,
    /// Variance scales linearly with the length ratio.
    Linear,
}

/// A component expressed in the frame of its link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFrame {
    /// Mean in link coordinates.
    pub mean: Vector,
    /// Covariance eigenvectors (columns) in link coordinates, sign-canonical.
    pub axes: DMatrix<f64>,
    /// Covariance eigenvalues, ascending.
    pub variances: DVector<f64>,
}

impl LinkFrame {
    fn capture(frame: &Pose, component: &GaussianComponent) -> Self {
        let (variances, world_axes) = sorted_symmetric_eigen(component.covariance());
        let mut axes = frame.rotation().tr_mul(&world_axes);
        canonicalize_signs(&mut axes);
        Self {
            mean: frame.inverse_transform_point(component.mean()),
            axes,
            variances,
        }
    }

    /// Index of the eigenvector most aligned with the link direction.
    pub fn along_link_axis(&self) -> usize {
        (0..self.axes.ncols())
            .map(|j| (j, self.axes[(0, j)].abs()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }
}

/// Flips each eigenvector so that its first non-negligible coordinate along
/// (x, y, z) of the link frame is nonnegative.
fn canonicalize_signs(axes: &mut DMatrix<f64>) {
    for j in 0..axes.ncols() {
        let lead = (0..axes.nrows())
            .map(|r| axes[(r, j)])
            .find(|v| v.abs() > 1e-12)
            .unwrap_or(1.0);
        if lead < 0.0 {
            axes.column_mut(j).neg_mut();
        }
    }
}

/// Ordered components with their joints and link frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticChain {
    gmm: OrderedGmm,
    joints: Vec<Point>,
    link_frames: Vec<LinkFrame>,
    link_lengths: Vec<f64>,
    scaling: EigenScaling,
}

/// Builds the chain of an ordered mixture fitted to `demo`.
///
/// The first and last joints are the demonstration endpoints; interior joints
/// are Gaussian products of consecutive components.
pub fn build_chain(gmm: OrderedGmm, demo: &Trajectory) -> Result<ElasticChain> {
    if gmm.dim() != demo.dim() {
        return Err(Error::DimensionMismatch {
            expected: demo.dim(),
            found: gmm.dim(),
        });
    }
    let comps = gmm.components();
    let mut joints = Vec::with_capacity(comps.len() + 1);
    joints.push(demo.start().clone());
    for pair in comps.windows(2) {
        joints.push(gaussian_joint(&pair[0], &pair[1])?);
    }
    joints.push(demo.end().clone());
    ElasticChain::from_parts(gmm, joints)
}

impl ElasticChain {
    /// Captures each component in the frame of its joint, pointing to the next.
    pub fn from_parts(gmm: OrderedGmm, joints: Vec<Point>) -> Result<Self> {
        if joints.len() != gmm.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} components need {} joints, got {}",
                gmm.len(),
                gmm.len() + 1,
                joints.len()
            )));
        }
        let mut link_frames = Vec::with_capacity(gmm.len());
        let mut link_lengths = Vec::with_capacity(gmm.len());
        for (k, comp) in gmm.components().iter().enumerate() {
            let frame = frame_from_two_points(&joints[k], &joints[k + 1])?;
            link_lengths.push((&joints[k + 1] - &joints[k]).norm());
            link_frames.push(LinkFrame::capture(&frame, comp));
        }
        Ok(Self {
            gmm,
            joints,
            link_frames,
            link_lengths,
            scaling: EigenScaling::default(),
        })
    }

    /// Reassembles a chain from stored link frames, checking that they
    /// reproduce the stored components.
    pub fn from_stored(
        gmm: OrderedGmm,
        joints: Vec<Point>,
        link_frames: Vec<LinkFrame>,
        scaling: EigenScaling,
    ) -> Result<Self> {
        let mut chain = Self::from_parts(gmm, joints)?;
        if link_frames.len() != chain.link_frames.len() {
            return Err(Error::InvalidConfig("one link frame per component".into()));
        }
        chain.link_frames = link_frames;
        chain.scaling = scaling;
        let recovered = recover_gmm(&chain, &chain.joints)?;
        for (a, b) in recovered.iter().zip(chain.gmm.components()) {
            let scale = 1.0 + b.covariance().amax() + b.mean().amax();
            if (a.mean() - b.mean()).amax() > 1e-9 * scale
                || (a.covariance() - b.covariance()).amax() > 1e-9 * scale
            {
                return Err(Error::InvalidConfig(
                    "link frames do not reproduce the stored components".into(),
                ));
            }
        }
        Ok(chain)
    }

    pub fn with_scaling(mut self, scaling: EigenScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn scaling(&self) -> EigenScaling {
        self.scaling
    }

    pub fn gmm(&self) -> &OrderedGmm {
        &self.gmm
    }

    pub fn components(&self) -> &[GaussianComponent] {
        self.gmm.components()
    }

    pub fn joints(&self) -> &[Point] {
        &self.joints
    }

    pub fn link_frames(&self) -> &[LinkFrame] {
        &self.link_frames
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn dim(&self) -> usize {
        self.joints[0].len()
    }

    pub fn start(&self) -> &Point {
        &self.joints[0]
    }

    pub fn end(&self) -> &Point {
        &self.joints[self.joints.len() - 1]
    }

    /// Frame at the first joint, x-axis along the first link.
    pub fn entry_frame(&self) -> Result<Pose> {
        frame_from_two_points(&self.joints[0], &self.joints[1])
    }

    /// Frame at the last joint, x-axis along the direction of arrival.
    pub fn exit_frame(&self) -> Result<Pose> {
        let n = self.joints.len();
        let frame = frame_from_two_points(&self.joints[n - 2], &self.joints[n - 1])?;
        Pose::new(self.joints[n - 1].clone(), frame.rotation().clone())
    }

    /// The descriptor that leaves the chain unchanged.
    pub fn endpoint_descriptor(&self) -> Result<GeometricDescriptor> {
        GeometricDescriptor::both(self.entry_frame()?, self.exit_frame()?)
    }

    /// The same chain traversed in the opposite direction.
    pub fn reversed(&self) -> Result<Self> {
        let mut comps = self.gmm.components().to_vec();
        comps.reverse();
        let scores = self
            .gmm
            .order_scores()
            .iter()
            .rev()
            .map(|s| 1.0 - s)
            .collect();
        let mut joints = self.joints.clone();
        joints.reverse();
        Ok(Self::from_parts(OrderedGmm::new(comps, scores)?, joints)?.with_scaling(self.scaling))
    }
}

/// Solves the joint edit: keep the chain's Laplacian coordinates as well as
/// possible while pinning the first/last link to the descriptor frames.
///
/// With an entry pose, `β₀` sits at its origin and `β₁` one original link
/// length along its x-axis; an exit pose pins `β_N` and `β_{N-1}` the same
/// way, measured backwards.
pub fn solve_constrained_edit(
    sys: &LaplacianSystem,
    joints0: &[Point],
    o_start: Option<&Pose>,
    o_end: Option<&Pose>,
) -> Result<Vec<Point>> {
    if o_start.is_none() && o_end.is_none() {
        return Err(Error::InvalidPose(
            "an edit needs an entry or an exit pose".into(),
        ));
    }
    let m = joints0.len();
    if m != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: m,
        });
    }
    let d = joints0[0].len();
    for pose in o_start.iter().chain(o_end.iter()) {
        if pose.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: pose.dim(),
            });
        }
    }
    let scale = joints0.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let tol = TOLERANCES.constraint * scale;
    let mut sys = sys.clone();
    let first_len = (&joints0[1] - &joints0[0]).norm();
    let last_len = (&joints0[m - 1] - &joints0[m - 2]).norm();
    if let Some(pose) = o_start {
        sys.pin(0, pose.position().clone(), tol)?;
    }
    if let Some(pose) = o_end {
        sys.pin(m - 1, pose.position().clone(), tol)?;
    }
    if let Some(pose) = o_start {
        sys.pin(1, pose.position() + pose.x_axis() * first_len, tol)?;
    }
    if let Some(pose) = o_end {
        sys.pin(m - 2, pose.position() - pose.x_axis() * last_len, tol)?;
    }
    sys.solve()
}

/// Re-expresses every component relative to `new_joints`.
///
/// Link `k` runs from joint `k` to joint `k+1`. With length ratio `r`, the
/// mean's along-link coordinate scales by `r` and the eigenvalue of the
/// eigenvector closest to the link axis by `r²` (or `r` under
/// [`EigenScaling::Linear`]). Priors are unchanged.
pub fn recover_gmm(chain: &ElasticChain, new_joints: &[Point]) -> Result<Vec<GaussianComponent>> {
    if new_joints.len() != chain.joints.len() {
        return Err(Error::DimensionMismatch {
            expected: chain.joints.len(),
            found: new_joints.len(),
        });
    }
    let mut out = Vec::with_capacity(chain.link_frames.len());
    for (k, (link, comp)) in chain
        .link_frames
        .iter()
        .zip(chain.gmm.components())
        .enumerate()
    {
        let frame = frame_from_two_points(&new_joints[k], &new_joints[k + 1])?;
        let ratio = (&new_joints[k + 1] - &new_joints[k]).norm() / chain.link_lengths[k];
        let mut mean = link.mean.clone();
        mean[0] *= ratio;
        let mut variances = link.variances.clone();
        let along = link.along_link_axis();
        variances[along] *= match chain.scaling {
            EigenScaling::Squared => ratio * ratio,
            EigenScaling::Linear => ratio,
        };
        let axes = frame.rotation() * &link.axes;
        let covariance = &axes * DMatrix::from_diagonal(&variances) * axes.transpose();
        out.push(GaussianComponent::new(
            comp.prior(),
            frame.transform_point(&mean),
            (&covariance + covariance.transpose()) * 0.5,
        )?);
    }
    Ok(out)
}

/// Moves the chain so that its end links match `descriptor`.
///
/// Returns the re-targeted chain together with its components.
pub fn transform_chain(
    chain: &ElasticChain,
    descriptor: &GeometricDescriptor,
) -> Result<(ElasticChain, Vec<GaussianComponent>)> {
    if descriptor.dim() != chain.dim() {
        return Err(Error::DimensionMismatch {
            expected: chain.dim(),
            found: descriptor.dim(),
        });
    }
    let sys = build_laplacian(chain.joints.len())?.with_path(&chain.joints)?;
    let joints = solve_constrained_edit(&sys, &chain.joints, descriptor.enter(), descriptor.exit())?;
    let components = recover_gmm(chain, &joints)?;
    let gmm = OrderedGmm::new(components.clone(), chain.gmm.order_scores().to_vec())?;
    let moved = ElasticChain::from_parts(gmm, joints)?.with_scaling(chain.scaling);
    Ok((moved, components))
}
