//! Globally stable mixtures of linear dynamical systems.
//!
//! `f(x) = Σ_k γ_k(x) (A_k x + b_k)` with `b_k = −A_k ξ*` and every `A_k`
//! contracting the quadratic Lyapunov function `V = (x−ξ*)ᵀP(x−ξ*)`.
//! Estimation parameterizes each `A_k` so that the contraction holds by
//! construction and fits it by unconstrained least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{sorted_symmetric_eigen, GaussianComponent, MixtureEvaluator};
use crate::geometry::{Point, Vector};
use crate::lbfgs::{minimize, LbfgsOptions};

/// Slack allowed when checking `AᵀP + PA ≼ −margin·I` numerically.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// Default weight of the isotropy penalty.
pub const REGULARIZATION: f64 = 1e-3;

/// A stable mixture-of-linear-systems velocity field.
#[derive(Debug, Clone)]
pub struct LpvDsPolicy {
    components: Vec<GaussianComponent>,
    mixer: MixtureEvaluator,
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    /// Row-major copies of `A_k` and `b_k` for allocation-free evaluation.
    a_flat: Vec<f64>,
    b_flat: Vec<f64>,
    p: DMatrix<f64>,
    attractor: Point,
    margin: f64,
    time_scale: f64,
}

fn matvec_into(a: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate().take(d) {
        let mut s = 0.0;
        for j in 0..d {
            s += a[i * d + j] * x[j];
        }
        *o = s;
    }
}

impl LpvDsPolicy {
    /// Assembles a policy, deriving `b_k = −A_k ξ*` and checking that every
    /// system satisfies `λ_max(A_kᵀP + PA_k) ≤ −margin`.
    pub fn new(
        components: Vec<GaussianComponent>,
        a: Vec<DMatrix<f64>>,
        p: DMatrix<f64>,
        attractor: Point,
        margin: f64,
        time_scale: f64,
    ) -> Result<Self> {
        if components.is_empty() || components.len() != a.len() {
            return Err(Error::InvalidConfig(format!(
                "{} components for {} linear systems",
                components.len(),
                a.len()
            )));
        }
        if attractor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleAttractor);
        }
        let d = attractor.len();
        for c in &components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.dim(),
                });
            }
        }
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.nrows(),
            });
        }
        if (&p - p.transpose()).amax() > 1e-12 * p.amax().max(1.0) || p.clone().cholesky().is_none()
        {
            return Err(Error::InvalidConfig(
                "Lyapunov matrix must be symmetric positive definite".into(),
            ));
        }
        if !(margin > 0.0 && margin.is_finite() && time_scale > 0.0 && time_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "margin {margin} and time scale {time_scale} must be positive"
            )));
        }
        let mut a_flat = Vec::with_capacity(a.len() * d * d);
        let mut b_flat = Vec::with_capacity(a.len() * d);
        let mut b = Vec::with_capacity(a.len());
        for (k, ak) in a.iter().enumerate() {
            if ak.nrows() != d || ak.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: ak.nrows(),
                });
            }
            if ak.iter().any(|v| !v.is_finite()) {
                return Err(Error::OptimizationDiverged(format!(
                    "system {k} has non-finite entries"
                )));
            }
            let q = ak.transpose() * &p + &p * ak;
            let (eig, _) = sorted_symmetric_eigen(&q);
            let top = eig[d - 1];
            if top > -margin + FEASIBILITY_SLACK * (1.0 + q.amax()) {
                return Err(Error::InvalidConfig(format!(
                    "system {k} violates the stability margin: λmax = {top:e}, margin = {margin:e}"
                )));
            }
            let start = a_flat.len();
            for r in 0..d {
                for c in 0..d {
                    a_flat.push(ak[(r, c)]);
                }
            }
            let mut bk = vec![0.0; d];
            matvec_into(&a_flat[start..], attractor.as_slice(), &mut bk);
            bk.iter_mut().for_each(|v| *v = -*v);
            b_flat.extend_from_slice(&bk);
            b.push(DVector::from_vec(bk));
        }
        Ok(Self {
            mixer: MixtureEvaluator::new(&components),
            components,
            a,
            b,
            a_flat,
            b_flat,
            p,
            attractor,
            margin,
            time_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.attractor.len()
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[DVector<f64>] {
        &self.b
    }

    pub fn lyapunov_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn attractor(&self) -> &Point {
        &self.attractor
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Characteristic time of the training data, in seconds.
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Writes `f(x)` into `out` using `gamma` (one slot per component) as
    /// scratch space. Performs no allocation.
    pub fn evaluate_into(&self, x: &[f64], gamma: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        self.mixer.responsibilities_into(x, gamma);
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut ax = [0.0; 3];
        for (k, &g) in gamma.iter().enumerate().take(self.len()) {
            matvec_into(&self.a_flat[k * d * d..(k + 1) * d * d], x, &mut ax[..d]);
            for i in 0..d {
                out[i] += g * (ax[i] + self.b_flat[k * d + i]);
            }
        }
    }

    pub fn evaluate(&self, x: &Point) -> Vector {
        let mut gamma = vec![0.0; self.len()];
        let mut out = DVector::zeros(self.dim());
        self.evaluate_into(x.as_slice(), &mut gamma, out.as_mut_slice());
        out
    }

    /// Mixing weights `γ_k(x)`.
    pub fn responsibilities(&self, x: &Point) -> Vec<f64> {
        self.mixer.responsibilities(x)
    }
}

/// `V(x) = (x−ξ*)ᵀP(x−ξ*)`.
pub fn lyapunov_value(policy: &LpvDsPolicy, x: &Point) -> f64 {
    let e = x - &policy.attractor;
    e.dot(&(&policy.p * &e))
}

/// `dV/dt = 2(x−ξ*)ᵀP f(x)`.
pub fn lyapunov_rate(policy: &LpvDsPolicy, x: &Point) -> f64 {
    let e = x - &policy.attractor;
    2.0 * e.dot(&(&policy.p * policy.evaluate(x)))
}

/// Mean squared velocity error `Σ‖v_t − f(x_t)‖² / n`.
pub fn mean_squared_error(policy: &LpvDsPolicy, data: &[Point], velocities: &[Vector]) -> f64 {
    let n = data.len().max(1) as f64;
    data.iter()
        .zip(velocities)
        .map(|(x, v)| (v - policy.evaluate(x)).norm_squared())
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// Stability margin in normalized units.
    pub margin: f64,
    /// Lyapunov matrix; identity when absent.
    pub lyapunov: Option<DMatrix<f64>>,
    /// Weight of the penalty `Σ_k ‖A_k − a_k I‖²` (normalized units) that
    /// pulls each system toward isotropic contraction at its observed rate
    /// `a_k`. Keeps directions the data do not excite well conditioned.
    pub regularization: f64,
    pub lbfgs: LbfgsOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            margin: 1e-2,
            lyapunov: None,
            regularization: REGULARIZATION,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

/// Centering and scaling applied before optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub attractor: Point,
    /// Largest distance of the data from the attractor.
    pub length_scale: f64,
    /// `length_scale / mean speed`.
    pub time_scale: f64,
}

/// Least-squares objective over the stable parameterization
/// `Ã_k = S_k − (C_kC_kᵀ + εI)`, `A_k = L⁻ᵀÃ_kLᵀ` with `P = LLᵀ`.
///
/// Parameters per component: the strictly lower entries of the skew `S_k`
/// (row-major), then the lower triangle of `C_k` (row-major). The data enter
/// only through sufficient statistics, so evaluation cost does not depend on
/// the number of samples.
#[derive(Debug, Clone)]
pub struct LpvObjective {
    d: usize,
    k: usize,
    n: f64,
    eps: f64,
    reg: f64,
    /// Isotropic rate `a_k` each system is pulled toward.
    rates: Vec<f64>,
    c0: f64,
    /// `B_k = Σ_t γ_k ṽ x̃ᵀ`.
    b: Vec<DMatrix<f64>>,
    /// `M_kl = Σ_t γ_k γ_l x̃ x̃ᵀ`, indexed `k * K + l`.
    m: Vec<DMatrix<f64>>,
    /// `Σ_t γ_k x̃ x̃ᵀ`, for initialization.
    m_single: Vec<DMatrix<f64>>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
    norm: Normalization,
}

impl LpvObjective {
    pub fn new(
        components: &[GaussianComponent],
        data: &[Point],
        velocities: &[Vector],
        attractor: &Point,
        opts: &EstimateOptions,
    ) -> Result<Self> {
        if attractor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleAttractor);
        }
        let k = components.len();
        let need = 10 * k.max(1);
        if data.len() != velocities.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} points but {} velocities",
                data.len(),
                velocities.len()
            )));
        }
        if data.len() < need {
            return Err(Error::InsufficientData {
                have: data.len(),
                need,
            });
        }
        let d = attractor.len();
        for x in data.iter().chain(velocities) {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
        }
        if !(opts.margin > 0.0 && opts.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "margin must be positive, got {}",
                opts.margin
            )));
        }
        let p = opts
            .lyapunov
            .clone()
            .unwrap_or_else(|| DMatrix::identity(d, d));
        let l = p
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidConfig("Lyapunov matrix must be positive definite".into())
            })?
            .l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::SingularCovariance)?;

        let length_scale = data
            .iter()
            .map(|x| (x - attractor).norm())
            .fold(0.0, f64::max);
        if !(length_scale > 0.0) {
            return Err(Error::InvalidTrajectory(
                "all data coincide with the attractor".into(),
            ));
        }
        let mean_speed = velocities.iter().map(|v| v.norm()).sum::<f64>() / data.len() as f64;
        let time_scale = if mean_speed > 0.0 {
            length_scale / mean_speed
        } else {
            1.0
        };
        let vel_scale = time_scale / length_scale;

        let mixer = MixtureEvaluator::new(components);
        let mut gamma = vec![0.0; k];
        let mut b = vec![DMatrix::zeros(d, d); k];
        let mut m = vec![DMatrix::zeros(d, d); k * k];
        let mut m_single = vec![DMatrix::zeros(d, d); k];
        let mut c0 = 0.0;
        for (x, v) in data.iter().zip(velocities) {
            mixer.responsibilities_into(x.as_slice(), &mut gamma);
            let xt = (x - attractor) / length_scale;
            let vt = v * vel_scale;
            c0 += vt.norm_squared();
            let xx = &xt * xt.transpose();
            let vx = &vt * xt.transpose();
            for i in 0..k {
                b[i] += &vx * gamma[i];
                m_single[i] += &xx * gamma[i];
                for j in 0..k {
                    m[i * k + j] += &xx * (gamma[i] * gamma[j]);
                }
            }
        }
        let rates = m_single
            .iter()
            .zip(&b)
            .map(|(mk, bk)| {
                let tr = mk.trace();
                if tr > 0.0 {
                    (bk.trace() / tr).min(-opts.margin)
                } else {
                    -opts.margin
                }
            })
            .collect();
        Ok(Self {
            d,
            k,
            n: data.len() as f64,
            eps: opts.margin,
            reg: opts.regularization,
            rates,
            c0,
            b,
            m,
            m_single,
            l,
            l_inv,
            norm: Normalization {
                attractor: attractor.clone(),
                length_scale,
                time_scale,
            },
        })
    }

    pub fn num_params(&self) -> usize {
        self.k * self.d * self.d
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    fn skew_len(&self) -> usize {
        self.d * (self.d - 1) / 2
    }

    fn unpack(&self, theta: &[f64]) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.d;
        let per = d * d;
        (0..self.k)
            .map(|k| {
                let t = &theta[k * per..(k + 1) * per];
                let mut s = DMatrix::zeros(d, d);
                let mut c = DMatrix::zeros(d, d);
                let mut idx = 0;
                for i in 0..d {
                    for j in 0..i {
                        s[(i, j)] = t[idx];
                        s[(j, i)] = -t[idx];
                        idx += 1;
                    }
                }
                for i in 0..d {
                    for j in 0..=i {
                        c[(i, j)] = t[idx];
                        idx += 1;
                    }
                }
                (s, c)
            })
            .collect()
    }

    /// Normalized-coordinate system matrices for a parameter vector.
    pub fn matrices(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.d;
        self.unpack(theta)
            .into_iter()
            .map(|(s, c)| {
                let at = s - &c * c.transpose() - DMatrix::identity(d, d) * self.eps;
                self.l_inv.transpose() * at * self.l.transpose()
            })
            .collect()
    }

    /// Mean squared error in normalized units plus the isotropy penalty,
    /// with its gradient.
    pub fn objective_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (d, kk) = (self.d, self.k);
        let parts = self.unpack(theta);
        let a: Vec<DMatrix<f64>> = parts
            .iter()
            .map(|(s, c)| {
                let at = s - c * c.transpose() - DMatrix::identity(d, d) * self.eps;
                self.l_inv.transpose() * at * self.l.transpose()
            })
            .collect();
        let mut value = self.c0;
        let mut penalty = 0.0;
        let mut g_mats = Vec::with_capacity(kk);
        for k in 0..kk {
            value -= 2.0 * a[k].dot(&self.b[k]);
            let mut am = DMatrix::zeros(d, d);
            for l in 0..kk {
                am += &a[l] * &self.m[l * kk + k];
            }
            value += a[k].dot(&am);
            let dev = &a[k] - DMatrix::identity(d, d) * self.rates[k];
            penalty += dev.norm_squared();
            g_mats.push((am * 2.0 - &self.b[k] * 2.0) / self.n + dev * (2.0 * self.reg));
        }
        let per = d * d;
        let skew = self.skew_len();
        for k in 0..kk {
            let h = &self.l_inv * &g_mats[k] * &self.l;
            let dc = -(&h + h.transpose()) * &parts[k].1;
            let out = &mut grad[k * per..(k + 1) * per];
            let mut idx = 0;
            for i in 0..d {
                for j in 0..i {
                    out[idx] = h[(i, j)] - h[(j, i)];
                    idx += 1;
                }
            }
            debug_assert_eq!(idx, skew);
            for i in 0..d {
                for j in 0..=i {
                    out[idx] = dc[(i, j)];
                    idx += 1;
                }
            }
        }
        value / self.n + self.reg * penalty
    }

    /// Feasible warm start from per-component ridge regressions shrunk
    /// toward a scalar rate, projected into the stable cone.
    pub fn initial_params(&self) -> Vec<f64> {
        let d = self.d;
        let mut theta = Vec::with_capacity(self.num_params());
        for k in 0..self.k {
            let mk = &self.m_single[k];
            let bk = &self.b[k];
            let tr = mk.trace();
            let a0 = if tr > 0.0 { bk.trace() / tr } else { 0.0 };
            let delta = 1e-4 * tr / d as f64 + 1e-12;
            let lhs = mk + DMatrix::identity(d, d) * delta;
            let rhs = bk + DMatrix::identity(d, d) * (delta * a0);
            let a_ls = lhs
                .cholesky()
                .map(|ch| ch.solve(&rhs.transpose()).transpose())
                .unwrap_or_else(|| DMatrix::identity(d, d) * a0.min(-self.eps));
            let at = self.l.transpose() * a_ls * self.l_inv.transpose();
            let sym = (&at + at.transpose()) * 0.5;
            let skew = (&at - at.transpose()) * 0.5;
            let (vals, vecs) = sorted_symmetric_eigen(&sym);
            let floor = 0.1 * self.eps;
            let cc_diag = vals.map(|lambda| (-lambda - self.eps).max(floor));
            let cc = &vecs * DMatrix::from_diagonal(&cc_diag) * vecs.transpose();
            let c = (cc.clone() + DMatrix::identity(d, d) * (1e-12 * floor))
                .cholesky()
                .map(|ch| ch.l())
                .unwrap_or_else(|| DMatrix::identity(d, d) * floor.sqrt());
            for i in 0..d {
                for j in 0..i {
                    theta.push(skew[(i, j)]);
                }
            }
            for i in 0..d {
                for j in 0..=i {
                    theta.push(c[(i, j)]);
                }
            }
        }
        theta
    }
}

/// Fits a stable policy to `(data, velocities)` with mixing given by
/// `components` and equilibrium `attractor`.
pub fn estimate(
    components: &[GaussianComponent],
    data: &[Point],
    velocities: &[Vector],
    attractor: &Point,
    opts: &EstimateOptions,
) -> Result<LpvDsPolicy> {
    let obj = LpvObjective::new(components, data, velocities, attractor, opts)?;
    let theta0 = obj.initial_params();
    let mut scratch = vec![0.0; theta0.len()];
    let initial = obj.objective_and_gradient(&theta0, &mut scratch);
    if !initial.is_finite() {
        return Err(Error::OptimizationDiverged(format!(
            "initial objective is {initial}"
        )));
    }
    let res = minimize(
        |t, g| obj.objective_and_gradient(t, g),
        theta0,
        &opts.lbfgs,
    );
    if !res.value.is_finite() || res.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimizationDiverged(format!(
            "objective reached {} after {} iterations",
            res.value, res.iterations
        )));
    }
    let norm = obj.normalization();
    let a: Vec<DMatrix<f64>> = obj
        .matrices(&res.x)
        .into_iter()
        .map(|m| m / norm.time_scale)
        .collect();
    let p = opts
        .lyapunov
        .clone()
        .unwrap_or_else(|| DMatrix::identity(attractor.len(), attractor.len()));
    let (p_eig, _) = sorted_symmetric_eigen(&p);
    let margin = opts.margin * p_eig[0] / norm.time_scale;
    LpvDsPolicy::new(
        components.to_vec(),
        a,
        p,
        attractor.clone(),
        margin,
        norm.time_scale,
    )
}
