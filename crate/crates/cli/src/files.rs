//! JSON file formats. Every file carries `version` and `dim`; matrices are
//! arrays of rows. Floats are written in shortest round-trip form, so
//! `write` followed by `read` reproduces every value bit for bit.

use std::path::Path;

use elastic_ds::{
    EigenScaling, ElasticChain, GaussianComponent, GeometricDescriptor, Learned, LinkFrame,
    LpvDsPolicy, OrderedGmm, Point, Pose, ProfileConfig, Trajectory,
};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Orthonormality tolerance for rotations read from files.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<(T, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| invalid(format!("{}: malformed JSON: {e}", path.display())))?;
    Ok((value, bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_version(version: u32, what: &str) -> CliResult<()> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what}: unsupported version {version}, expected {FORMAT_VERSION}"
        )))
    }
}

fn check_dim(d: usize) -> CliResult<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(invalid(format!("dimension must be 2 or 3, got {d}")))
    }
}

fn vector(v: &[f64], d: usize, what: &str) -> CliResult<DVector<f64>> {
    if v.len() != d {
        return Err(invalid(format!("{what}: expected {d} entries, found {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: non-finite entry")));
    }
    Ok(DVector::from_column_slice(v))
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!("{what}: expected a {nrows}×{ncols} array of rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub position: Vec<f64>,
    /// Row-major `d×d` rotation whose columns are the frame axes.
    pub rotation: Vec<Vec<f64>>,
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> Self {
        Self {
            position: list(p.position()),
            rotation: rows(p.rotation()),
        }
    }

    pub fn to_pose(&self, d: usize, what: &str) -> CliResult<Pose> {
        let position = vector(&self.position, d, &format!("{what} position"))?;
        let rotation = matrix(&self.rotation, d, d, &format!("{what} rotation"))?;
        Pose::with_tolerance(position, rotation, ROTATION_TOLERANCE)
            .map_err(|e| invalid(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorJson {
    #[serde(default)]
    pub enter: Option<PoseJson>,
    #[serde(default)]
    pub exit: Option<PoseJson>,
}

impl DescriptorJson {
    pub fn from_descriptor(d: &GeometricDescriptor) -> Self {
        Self {
            enter: d.enter().map(PoseJson::from_pose),
            exit: d.exit().map(PoseJson::from_pose),
        }
    }

    pub fn to_descriptor(&self, d: usize) -> CliResult<GeometricDescriptor> {
        let enter = self.enter.as_ref().map(|p| p.to_pose(d, "enter")).transpose()?;
        let exit = self.exit.as_ref().map(|p| p.to_pose(d, "exit")).transpose()?;
        Ok(GeometricDescriptor::new(enter, exit)?)
    }
}

/// A standalone descriptor: entry and/or exit pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFile {
    pub version: u32,
    pub dim: usize,
    #[serde(default)]
    pub enter: Option<PoseJson>,
    #[serde(default)]
    pub exit: Option<PoseJson>,
}

impl DescriptorFile {
    pub fn from_descriptor(d: &GeometricDescriptor) -> Self {
        let json = DescriptorJson::from_descriptor(d);
        Self {
            version: FORMAT_VERSION,
            dim: d.dim(),
            enter: json.enter,
            exit: json.exit,
        }
    }

    pub fn to_descriptor(&self) -> CliResult<GeometricDescriptor> {
        check_version(self.version, "descriptor")?;
        check_dim(self.dim)?;
        DescriptorJson {
            enter: self.enter.clone(),
            exit: self.exit.clone(),
        }
        .to_descriptor(self.dim)
    }

    pub fn load(path: &Path) -> CliResult<GeometricDescriptor> {
        let (file, _): (Self, _) = read_json(path)?;
        file.to_descriptor().map_err(|e| e.context(path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryJson {
    pub timestamps: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

/// One or more demonstrations of the same task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFile {
    pub version: u32,
    pub dim: usize,
    pub trajectories: Vec<TrajectoryJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<DescriptorJson>,
}

impl DemoFile {
    pub fn from_trajectories(trajs: &[Trajectory]) -> CliResult<Self> {
        let dim = trajs
            .first()
            .ok_or_else(|| invalid("a demo file needs at least one trajectory"))?
            .dim();
        Ok(Self {
            version: FORMAT_VERSION,
            dim,
            trajectories: trajs
                .iter()
                .map(|t| TrajectoryJson {
                    timestamps: t.timestamps().to_vec(),
                    points: t.points().iter().map(list).collect(),
                })
                .collect(),
            via_points: None,
            descriptor: None,
        })
    }

    /// Validated trajectories; every one must have dimension `dim`.
    pub fn trajectories(&self) -> CliResult<Vec<Trajectory>> {
        check_version(self.version, "demo")?;
        check_dim(self.dim)?;
        if self.trajectories.is_empty() {
            return Err(invalid("demo file has no trajectories"));
        }
        self.trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let points = t
                    .points
                    .iter()
                    .enumerate()
                    .map(|(j, p)| vector(p, self.dim, &format!("trajectory {i} point {j}")))
                    .collect::<CliResult<Vec<_>>>()?;
                Trajectory::new(points, t.timestamps.clone())
                    .map_err(|e| CliError::from(e).context(format!("trajectory {i}")))
            })
            .collect()
    }

    pub fn via_points(&self) -> CliResult<Vec<Point>> {
        self.via_points
            .iter()
            .flatten()
            .enumerate()
            .map(|(i, v)| vector(v, self.dim, &format!("via point {i}")))
            .collect()
    }

    pub fn descriptor(&self) -> CliResult<Option<GeometricDescriptor>> {
        self.descriptor.as_ref().map(|d| d.to_descriptor(self.dim)).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentJson {
    pub prior: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// System matrix of the component's linear system.
    pub a: Vec<Vec<f64>>,
    /// Offset `b = −A ξ*`.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFrameJson {
    pub mean: Vec<f64>,
    /// Eigenvectors as columns, row-major.
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingJson {
    Squared,
    Linear,
}

impl From<EigenScaling> for ScalingJson {
    fn from(s: EigenScaling) -> Self {
        match s {
            EigenScaling::Squared => ScalingJson::Squared,
            EigenScaling::Linear => ScalingJson::Linear,
        }
    }
}

impl From<ScalingJson> for EigenScaling {
    fn from(s: ScalingJson) -> Self {
        match s {
            ScalingJson::Squared => EigenScaling::Squared,
            ScalingJson::Linear => EigenScaling::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainJson {
    pub joints: Vec<Vec<f64>>,
    pub order_scores: Vec<f64>,
    pub scaling: ScalingJson,
    pub link_frames: Vec<LinkFrameJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileJson {
    pub points: usize,
    pub dt: f64,
    pub interpolate_between_joints: bool,
    #[serde(default)]
    pub pins_per_link: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// SHA-256 of the demonstration file the chain was fitted to.
    pub demo_sha256: String,
    /// First and last timestamp of the demonstration.
    pub demo_time_span: [f64; 2],
    /// Descriptor the chain was last adapted to; absent for fitted policies.
    #[serde(default)]
    pub descriptor: Option<DescriptorJson>,
    pub generator: String,
}

impl Provenance {
    pub fn new(demo_sha256: String, demo: &Trajectory) -> Self {
        let t = demo.timestamps();
        Self {
            demo_sha256,
            demo_time_span: [t[0], t[t.len() - 1]],
            descriptor: None,
            generator: concat!("elastic-ds ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

/// A policy together with the chain it was estimated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub version: u32,
    pub dim: usize,
    pub attractor: Vec<f64>,
    /// Stability margin: every `AᵀP + PA` has eigenvalues at most `−margin`.
    pub margin: f64,
    pub time_scale: f64,
    /// Lyapunov matrix `P`.
    pub lyapunov: Vec<Vec<f64>>,
    pub components: Vec<ComponentJson>,
    pub chain: ChainJson,
    pub profile: ProfileJson,
    pub provenance: Provenance,
}

impl PolicyFile {
    pub fn new(learned: &Learned, provenance: Provenance) -> CliResult<Self> {
        let policy = &learned.policy;
        let chain = &learned.chain;
        if policy.components() != chain.components() {
            return Err(CliError::Numerical(
                "policy mixing components differ from the chain components".into(),
            ));
        }
        Ok(Self {
            version: FORMAT_VERSION,
            dim: policy.dim(),
            attractor: list(policy.attractor()),
            margin: policy.margin(),
            time_scale: policy.time_scale(),
            lyapunov: rows(policy.lyapunov_matrix()),
            components: policy
                .components()
                .iter()
                .zip(policy.a().iter().zip(policy.b()))
                .map(|(c, (a, b))| ComponentJson {
                    prior: c.prior(),
                    mean: list(c.mean()),
                    covariance: rows(c.covariance()),
                    a: rows(a),
                    b: list(b),
                })
                .collect(),
            chain: ChainJson {
                joints: chain.joints().iter().map(list).collect(),
                order_scores: chain.gmm().order_scores().to_vec(),
                scaling: chain.scaling().into(),
                link_frames: chain
                    .link_frames()
                    .iter()
                    .map(|f| LinkFrameJson {
                        mean: list(&f.mean),
                        axes: rows(&f.axes),
                        variances: list(&f.variances),
                    })
                    .collect(),
            },
            profile: ProfileJson {
                points: learned.profile.points,
                dt: learned.profile.dt,
                interpolate_between_joints: learned.profile.interpolate_between_joints,
                pins_per_link: learned.profile.pins_per_link,
            },
            provenance,
        })
    }

    /// Rebuilds chain and policy, re-running every construction check.
    pub fn to_learned(&self) -> CliResult<Learned> {
        check_version(self.version, "policy")?;
        let d = self.dim;
        check_dim(d)?;
        let k = self.components.len();
        if k == 0 {
            return Err(invalid("policy has no components"));
        }
        let mut comps = Vec::with_capacity(k);
        let mut a = Vec::with_capacity(k);
        for (i, c) in self.components.iter().enumerate() {
            let what = format!("component {i}");
            comps.push(
                GaussianComponent::new(
                    c.prior,
                    vector(&c.mean, d, &format!("{what} mean"))?,
                    matrix(&c.covariance, d, d, &format!("{what} covariance"))?,
                )
                .map_err(|e| CliError::from(e).context(&what))?,
            );
            a.push(matrix(&c.a, d, d, &format!("{what} A"))?);
        }
        let joints = self
            .chain
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| vector(j, d, &format!("joint {i}")))
            .collect::<CliResult<Vec<_>>>()?;
        let frames = self
            .chain
            .link_frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(LinkFrame {
                    mean: vector(&f.mean, d, &format!("link frame {i} mean"))?,
                    axes: matrix(&f.axes, d, d, &format!("link frame {i} axes"))?,
                    variances: vector(&f.variances, d, &format!("link frame {i} variances"))?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let gmm = OrderedGmm::new(comps.clone(), self.chain.order_scores.clone())?;
        let chain = ElasticChain::from_stored(gmm, joints, frames, self.chain.scaling.into())?;
        let policy = LpvDsPolicy::new(
            comps,
            a,
            matrix(&self.lyapunov, d, d, "lyapunov")?,
            vector(&self.attractor, d, "attractor")?,
            self.margin,
            self.time_scale,
        )?;
        for (i, (c, b)) in self.components.iter().zip(policy.b()).enumerate() {
            let stored = vector(&c.b, d, &format!("component {i} b"))?;
            let scale = 1.0 + b.amax();
            if (&stored - b).amax() > 1e-12 * scale {
                return Err(invalid(format!(
                    "component {i}: b does not equal −A·attractor"
                )));
            }
        }
        let profile = ProfileConfig {
            points: self.profile.points,
            dt: self.profile.dt,
            interpolate_between_joints: self.profile.interpolate_between_joints,
            pins_per_link: self.profile.pins_per_link,
        };
        profile.validate(chain.joints().len())?;
        Ok(Learned {
            chain,
            policy,
            profile,
        })
    }

    pub fn load(path: &Path) -> CliResult<(Self, Learned)> {
        let (file, _): (Self, _) = read_json(path)?;
        let learned = file.to_learned().map_err(|e| e.context(path.display()))?;
        Ok((file, learned))
    }
}
