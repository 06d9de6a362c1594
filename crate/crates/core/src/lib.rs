//! Stable dynamical-system motion policies that can be re-targeted to new
//! start and goal poses without new demonstrations.
//!
//! A demonstration is summarized by an ordered Gaussian mixture. Neighboring
//! components are linked through joints, forming an elastic chain that can
//! be bent so its ends match new entry/exit poses. A mixture of linear
//! systems, contracting a quadratic Lyapunov function by construction, is
//! then estimated on a trajectory regenerated through the moved joints.
//!
//! ```no_run
//! use elastic_ds::{adapt, s_curve_demo, train, GeometricDescriptor, PipelineConfig};
//!
//! let demo = s_curve_demo(200)?;
//! let cfg = PipelineConfig::default();
//! let learned = train(&demo, &cfg)?;
//! let descriptor = learned.chain.endpoint_descriptor()?;
//! let adapted = adapt(&learned, &descriptor, &cfg)?;
//! let v = adapted.policy.evaluate(demo.start());
//! # let _ = (v, GeometricDescriptor::new);
//! # Ok::<(), elastic_ds::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod config;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod geometry;
pub mod gmm;
pub mod laplacian;
pub mod lbfgs;
pub mod lpvds;
pub mod pipeline;
pub mod profile;
pub mod sequencer;
pub mod synthetic;
pub mod trajectory;

pub use chain::{
    build_chain, gaussian_joint, recover_gmm, solve_constrained_edit, transform_chain,
    EigenScaling, ElasticChain, LinkFrame,
};
pub use config::TOLERANCES;
pub use error::{Error, Result};
pub use eval::{
    bench_adaptation, bench_sweep, endpoints_distance, format_bench_table, goal_cosine, rollout, rollout_field, sample_field,
    start_cosine, AdaptationReport, FieldGrid, Integrator, Rollout, RolloutConfig, VectorField,
};
pub use gaussian::{responsibilities, GaussianComponent, MixtureEvaluator};
pub use geometry::{frame_from_two_points, GeometricDescriptor, Point, Pose, Vector};
pub use gmm::{fit_gmm, fit_gmm_detailed, order_components, GmmFit, GmmFitConfig, OrderedGmm};
pub use laplacian::{build_laplacian, LaplacianSystem};
pub use lpvds::{
    estimate, lyapunov_rate, lyapunov_value, mean_squared_error, EstimateOptions, LpvDsPolicy,
    LpvObjective,
};
pub use pipeline::{adapt, train, Adapted, Learned, PipelineConfig};
pub use profile::{joint_progress, map_joint_indices, regenerate_profile, ProfileConfig};
pub use sequencer::{split_demo, stitch_chains, PlanMode, Segment, TaskPlan};
pub use synthetic::{s_curve_demo, Shape};
pub use trajectory::{compute_velocities, Trajectory};
