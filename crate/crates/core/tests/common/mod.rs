#![allow(dead_code)]

use elastic_ds::{
    ElasticChain, GaussianComponent, LaplacianSystem, OrderedGmm, Point, Pose, Result,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric positive-definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let diag = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    let s = &q * DMatrix::from_diagonal(&diag) * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// A wiggly path of `m` joints with links of length at least 0.2.
pub fn random_joints(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<Point> {
    let mut p = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let mut out = vec![p.clone()];
    for _ in 1..m {
        let mut step = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        step[0] += 1.5;
        let n = step.norm();
        step *= rng.random_range(0.2..0.6) / n;
        p += step;
        out.push(p.clone());
    }
    out
}

/// A chain with one component per link, centered near the link midpoint.
pub fn random_chain(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Result<ElasticChain> {
    let joints = random_joints(rng, d, m);
    let k = m - 1;
    let mut comps = Vec::with_capacity(k);
    for i in 0..k {
        let mid = (&joints[i] + &joints[i + 1]) * 0.5
            + DVector::from_fn(d, |_, _| rng.random_range(-0.02..0.02));
        comps.push(GaussianComponent::new(
            1.0 / k as f64,
            mid,
            random_spd(rng, d, 1e-3, 2e-2),
        )?);
    }
    let scores = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    ElasticChain::from_parts(OrderedGmm::new(comps, scores)?, joints)
}

pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    loop {
        let m: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let mut q = m.qr().q();
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        if (q.determinant() - 1.0).abs() < 1e-12 {
            return q;
        }
    }
}

pub fn random_pose(rng: &mut ChaCha8Rng, d: usize) -> Pose {
    let pos = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    Pose::new(pos, random_rotation(rng, d)).expect("orthonormal by construction")
}

/// Pin targets of an endpoint edit, computed independently of the library.
pub fn edit_pins(
    joints0: &[Point],
    o_start: Option<&Pose>,
    o_end: Option<&Pose>,
) -> Vec<(usize, Point)> {
    let m = joints0.len();
    let mut pins = Vec::new();
    if let Some(p) = o_start {
        let l0 = (&joints0[1] - &joints0[0]).norm();
        let x = p.rotation().column(0).into_owned();
        pins.push((0, p.position().clone()));
        pins.push((1, p.position() + x * l0));
    }
    if let Some(p) = o_end {
        let ln = (&joints0[m - 1] - &joints0[m - 2]).norm();
        let x = p.rotation().column(0).into_owned();
        pins.push((m - 1, p.position().clone()));
        pins.push((m - 2, p.position() - x * ln));
    }
    pins
}

/// Dense path Laplacian built from its definition.
pub fn dense_laplacian(m: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        let nbrs: Vec<usize> = [i.checked_sub(1), (i + 1 < m).then_some(i + 1)]
            .into_iter()
            .flatten()
            .collect();
        l[(i, i)] = 1.0;
        for &j in &nbrs {
            l[(i, j)] = -1.0 / nbrs.len() as f64;
        }
    }
    l
}

/// Equality-constrained least squares `min ‖Lβ − LΒ₀‖²  s.t. β_i = t_i` solved
/// through the dense KKT system, one coordinate at a time.
pub fn kkt_oracle(joints0: &[Point], pins: &[(usize, Point)]) -> Option<Vec<Point>> {
    let m = joints0.len();
    let d = joints0[0].len();
    let l = dense_laplacian(m);
    let mut unique: Vec<(usize, Point)> = Vec::new();
    for (i, t) in pins {
        if !unique.iter().any(|(j, _)| j == i) {
            unique.push((*i, t.clone()));
        }
    }
    let c = unique.len();
    let ltl = l.transpose() * &l;
    let mut kkt = DMatrix::zeros(m + c, m + c);
    kkt.view_mut((0, 0), (m, m)).copy_from(&(&ltl * 2.0));
    for (r, (i, _)) in unique.iter().enumerate() {
        kkt[(m + r, *i)] = 1.0;
        kkt[(*i, m + r)] = 1.0;
    }
    let lu = kkt.lu();
    let mut out = vec![DVector::zeros(d); m];
    for coord in 0..d {
        let b0 = DVector::from_iterator(m, joints0.iter().map(|p| p[coord]));
        let delta = &l * b0;
        let mut rhs = DVector::zeros(m + c);
        rhs.rows_mut(0, m).copy_from(&(l.transpose() * delta * 2.0));
        for (r, (_, t)) in unique.iter().enumerate() {
            rhs[m + r] = t[coord];
        }
        let sol = lu.solve(&rhs)?;
        for (i, p) in out.iter_mut().enumerate() {
            p[coord] = sol[i];
        }
    }
    Some(out)
}

pub fn max_point_gap(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

pub fn max_component_gap(a: &[GaussianComponent], b: &[GaussianComponent]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            (x.mean() - y.mean())
                .amax()
                .max((x.covariance() - y.covariance()).amax())
                .max((x.prior() - y.prior()).abs())
        })
        .fold(0.0, f64::max)
}

pub fn laplacian_for(joints: &[Point]) -> LaplacianSystem {
    elastic_ds::build_laplacian(joints.len())
        .and_then(|s| s.with_path(joints))
        .expect("valid path")
}

/// Applies a rigid motion to every component and joint of `chain`.
pub fn moved_chain(chain: &ElasticChain, motion: &Pose) -> ElasticChain {
    let r = motion.rotation();
    let comps = chain
        .components()
        .iter()
        .map(|c| {
            let cov = r * c.covariance() * r.transpose();
            GaussianComponent::new(
                c.prior(),
                motion.transform_point(c.mean()),
                (&cov + cov.transpose()) * 0.5,
            )
            .expect("rigid motion keeps covariances SPD")
        })
        .collect();
    let gmm = OrderedGmm::new(comps, chain.gmm().order_scores().to_vec()).expect("same scores");
    let joints = chain.joints().iter().map(|j| motion.transform_point(j)).collect();
    ElasticChain::from_parts(gmm, joints)
        .expect("moved chain is valid")
        .with_scaling(chain.scaling())
}

/// Posterior responsibilities from explicit inverses and determinants.
pub fn brute_responsibilities(components: &[GaussianComponent], x: &Point) -> Vec<f64> {
    let d = x.len() as f64;
    let logs: Vec<f64> = components
        .iter()
        .map(|c| {
            let cov = c.covariance();
            let inv = cov.clone().try_inverse().expect("invertible covariance");
            let diff = x - c.mean();
            let maha = (diff.transpose() * inv * &diff)[(0, 0)];
            c.prior().ln()
                - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + maha)
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// `Σ_k γ_k(x) A_k (x − ξ*)`.
pub fn brute_policy(
    components: &[GaussianComponent],
    a: &[DMatrix<f64>],
    attractor: &Point,
    x: &Point,
) -> DVector<f64> {
    let g = brute_responsibilities(components, x);
    let mut out = DVector::zeros(x.len());
    for (gk, ak) in g.iter().zip(a) {
        out += ak * (x - attractor) * *gk;
    }
    out
}

/// Random components spread over `[-1, 1]^d`.
pub fn random_components(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<GaussianComponent> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|w| {
            GaussianComponent::new(
                w / total,
                DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                random_spd(rng, d, 0.05, 0.5),
            )
            .expect("valid component")
        })
        .collect()
}
