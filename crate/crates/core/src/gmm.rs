//! Gaussian mixture fitting and ordering of components into a chain.
//!
//! Mixtures are fitted with k-means++-seeded EM for every candidate size in
//! `[k_min, k_max]`, keeping the best of several restarts per size and then
//! the size with the lowest BIC. Covariances carry an additive floor that is
//! derived from a fixed inverse-Wishart-style penalty, so the penalized
//! log-likelihood is a true EM objective and increases monotonically.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::TOLERANCES;
use crate::error::{Error, Result};
use crate::gaussian::{log_sum_exp, GaussianComponent, MixtureEvaluator};
use crate::geometry::Point;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFitConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Smallest covariance eigenvalue. `None` derives it from the data as
    /// `1e-6 · trace(cov(data)) / d`.
    pub covariance_floor: Option<f64>,
    pub max_em_iters: usize,
    /// Relative change of the EM objective that counts as converged.
    pub loglik_tol: f64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 8,
            restarts: 5,
            seed: 0,
            covariance_floor: None,
            max_em_iters: 500,
            loglik_tol: 1e-9,
        }
    }
}

impl GmmFitConfig {
    fn validate(&self) -> Result<()> {
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= k_min <= k_max, got {}..{}",
                self.k_min, self.k_max
            )));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if let Some(f) = self.covariance_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "covariance floor must be positive, got {f}"
                )));
            }
        }
        if self.max_em_iters < 1 {
            return Err(Error::InvalidConfig("max_em_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a single EM run.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub components: Vec<GaussianComponent>,
    /// Data log-likelihood of the final parameters.
    pub log_likelihood: f64,
    /// Penalized objective after every E-step, starting at the initialization.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Model-selection summary of [`fit_gmm_detailed`].
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub components: Vec<GaussianComponent>,
    pub bic: Vec<(usize, f64)>,
    pub log_likelihood: f64,
    pub covariance_floor: f64,
}

impl GmmFit {
    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// Fits a mixture, choosing the component count by BIC.
pub fn fit_gmm(data: &[Point], cfg: &GmmFitConfig) -> Result<Vec<GaussianComponent>> {
    fit_gmm_detailed(data, cfg).map(|f| f.components)
}

pub fn fit_gmm_detailed(data: &[Point], cfg: &GmmFitConfig) -> Result<GmmFit> {
    cfg.validate()?;
    let d = data.first().map(|p| p.len()).unwrap_or(0);
    let need = 2 * d.max(1) * cfg.k_max;
    if data.len() < need || data.is_empty() {
        return Err(Error::InsufficientData {
            have: data.len(),
            need,
        });
    }
    if let Some(bad) = data.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let floor = cfg
        .covariance_floor
        .unwrap_or_else(|| default_covariance_floor(data));

    let jobs: Vec<(usize, usize)> = (cfg.k_min..=cfg.k_max)
        .flat_map(|k| (0..cfg.restarts).map(move |r| (k, r)))
        .collect();
    let runs: Vec<Result<EmRun>> = jobs
        .par_iter()
        .map(|&(k, r)| run_em(data, k, restart_seed(cfg.seed, k, r), floor, cfg))
        .collect();

    let n = data.len() as f64;
    let mut bic = Vec::new();
    let mut best: Option<(f64, EmRun)> = None;
    let mut runs = runs.into_iter();
    for k in cfg.k_min..=cfg.k_max {
        let mut best_k: Option<EmRun> = None;
        for _ in 0..cfg.restarts {
            let run = runs.next().expect("one run per job")?;
            if best_k
                .as_ref()
                .is_none_or(|b| run.log_likelihood > b.log_likelihood)
            {
                best_k = Some(run);
            }
        }
        let run = best_k.expect("restarts >= 1");
        let score = -2.0 * run.log_likelihood + free_parameters(k, d) as f64 * n.ln();
        bic.push((k, score));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, run));
        }
    }
    let (_, run) = best.expect("k range is nonempty");
    Ok(GmmFit {
        components: run.components,
        bic,
        log_likelihood: run.log_likelihood,
        covariance_floor: floor,
    })
}

/// Number of free parameters of a full-covariance mixture.
pub fn free_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

fn restart_seed(seed: u64, k: usize, restart: usize) -> u64 {
    // SplitMix64 finalizer over (seed, k, restart)
    let mut z = seed
        ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (restart as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn default_covariance_floor(data: &[Point]) -> f64 {
    let d = data[0].len();
    let n = data.len() as f64;
    let mean = data.iter().fold(DVector::zeros(d), |a, p| a + p) / n;
    let trace: f64 = data.iter().map(|p| (p - &mean).norm_squared()).sum::<f64>() / n;
    let floor = 1e-6 * trace / d as f64;
    if floor > 0.0 {
        floor
    } else {
        let scale = data.iter().map(|p| p.norm_squared()).fold(1.0, f64::max);
        1e-12 * scale
    }
}

/// k-means++ seeding: first center uniform, then proportional to squared distance.
fn kmeans_pp(data: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    let mut centers = vec![rng.random_range(0..n)];
    let mut dist2: Vec<f64> = data
        .iter()
        .map(|p| (p - &data[centers[0]]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in dist2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, p) in data.iter().enumerate() {
            dist2[i] = dist2[i].min((p - &data[next]).norm_squared());
        }
    }
    centers
}

/// One EM run from a k-means++ seeding.
pub fn run_em(
    data: &[Point],
    k: usize,
    seed: u64,
    floor: f64,
    cfg: &GmmFitConfig,
) -> Result<EmRun> {
    let n = data.len();
    let d = data[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(data, k, &mut rng);

    // Hard assignment to the nearest seed gives the initial parameters.
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, p) in data.iter().enumerate() {
        let nearest = centers
            .iter()
            .enumerate()
            .map(|(j, &c)| (j, (p - &data[c]).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        resp[(i, nearest)] = 1.0;
    }
    let global = global_covariance(data) + DMatrix::identity(d, d) * floor;
    let mut params = m_step(data, &resp, floor, Some((&centers, &global)))?;

    let penalty_scale = floor * n as f64;
    let mut trace = Vec::new();
    let mut log_likelihood;
    let mut iterations = 0;
    let mut log_joint = vec![0.0; k];
    loop {
        let eval = MixtureEvaluator::new(&params);
        log_likelihood = 0.0;
        for (i, p) in data.iter().enumerate() {
            eval.log_joint_into(p.as_slice(), &mut log_joint);
            let total = log_sum_exp(&log_joint);
            log_likelihood += total;
            for j in 0..k {
                resp[(i, j)] = (log_joint[j] - total).exp();
            }
        }
        let objective = log_likelihood - 0.5 * penalty_scale * precision_traces(&params);
        if !objective.is_finite() {
            return Err(Error::OptimizationDiverged(
                "EM objective became non-finite".into(),
            ));
        }
        if let Some(&previous) = trace.last() {
            let slack = TOLERANCES.em_monotonicity * f64::max(1.0, f64::abs(previous));
            if objective < previous - slack {
                return Err(Error::EmDidNotImprove {
                    iteration: iterations,
                    previous,
                    current: objective,
                });
            }
            trace.push(objective);
            if (objective - previous).abs() <= cfg.loglik_tol * f64::max(1.0, objective.abs()) {
                break;
            }
        } else {
            trace.push(objective);
        }
        if iterations >= cfg.max_em_iters {
            break;
        }
        params = m_step(data, &resp, floor, None)?;
        iterations += 1;
    }
    Ok(EmRun {
        components: params,
        log_likelihood,
        objective_trace: trace,
        iterations,
    })
}

fn precision_traces(params: &[GaussianComponent]) -> f64 {
    params
        .iter()
        .map(|c| {
            c.covariance()
                .clone()
                .try_inverse()
                .map(|inv| inv.trace())
                .unwrap_or(f64::INFINITY)
        })
        .sum()
}

fn global_covariance(data: &[Point]) -> DMatrix<f64> {
    let d = data[0].len();
    let n = data.len() as f64;
    let mean = data.iter().fold(DVector::zeros(d), |a, p| a + p) / n;
    data.iter().fold(DMatrix::zeros(d, d), |acc, p| {
        let c = p - &mean;
        acc + &c * c.transpose()
    }) / n
}

/// Penalized M-step: `Σ_k = (Σ_i r_ik (x_i-μ_k)(x_i-μ_k)ᵀ + floor·n·I) / N_k`.
///
/// During initialization (`init` set) clusters use their own scatter plus the
/// floor, and empty clusters fall back to the seed point and global spread.
fn m_step(
    data: &[Point],
    resp: &DMatrix<f64>,
    floor: f64,
    init: Option<(&[usize], &DMatrix<f64>)>,
) -> Result<Vec<GaussianComponent>> {
    let n = data.len();
    let d = data[0].len();
    let k = resp.ncols();
    let mut out = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for j in 0..k {
        counts.push(resp.column(j).sum());
    }
    let total: f64 = counts.iter().sum();
    for j in 0..k {
        let nk = counts[j];
        let (mean, cov) = match init {
            Some((centers, global)) if nk < 2.0 => (data[centers[j]].clone(), global.clone()),
            _ => {
                let nk_safe = nk.max(1e-300);
                let mean = data
                    .iter()
                    .enumerate()
                    .fold(DVector::zeros(d), |a, (i, p)| a + p * resp[(i, j)])
                    / nk_safe;
                let scatter = data.iter().enumerate().fold(DMatrix::zeros(d, d), |acc, (i, p)| {
                    let c = p - &mean;
                    acc + (&c * c.transpose()) * resp[(i, j)]
                });
                let cov = if init.is_some() {
                    scatter / nk_safe + DMatrix::identity(d, d) * floor
                } else {
                    (scatter + DMatrix::identity(d, d) * (floor * n as f64)) / nk_safe
                };
                (mean, cov)
            }
        };
        let prior = (nk / total).max(f64::MIN_POSITIVE);
        let cov = crate::gaussian::symmetrize(&cov);
        out.push(
            GaussianComponent::new(prior, mean, cov).map_err(|_| Error::SingularCovariance)?,
        );
    }
    Ok(out)
}

/// Mixture components arranged along the demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedGmm {
    components: Vec<GaussianComponent>,
    order_scores: Vec<f64>,
}

impl OrderedGmm {
    /// Wraps components that are already in chain order.
    pub fn new(components: Vec<GaussianComponent>, order_scores: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != order_scores.len() {
            return Err(Error::InvalidConfig(
                "ordered mixture needs one score per component".into(),
            ));
        }
        let prior_sum: f64 = components.iter().map(|c| c.prior()).sum();
        if (prior_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidComponent(format!(
                "priors sum to {prior_sum}, expected 1"
            )));
        }
        if order_scores.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("order scores must be nondecreasing".into()));
        }
        Ok(Self {
            components,
            order_scores,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn order_scores(&self) -> &[f64] {
        &self.order_scores
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn into_components(self) -> Vec<GaussianComponent> {
        self.components
    }
}

/// Sorts components by the responsibility-weighted mean arc-length position
/// of the demonstration samples they explain.
pub fn order_components(
    components: &[GaussianComponent],
    demo: &Trajectory,
) -> Result<OrderedGmm> {
    if components.is_empty() {
        return Err(Error::InvalidConfig("no components to order".into()));
    }
    if components[0].dim() != demo.dim() {
        return Err(Error::DimensionMismatch {
            expected: demo.dim(),
            found: components[0].dim(),
        });
    }
    let s = demo.normalized_arc_length();
    let eval = MixtureEvaluator::new(components);
    let k = components.len();
    let mut weighted = vec![0.0; k];
    let mut mass = vec![0.0; k];
    let mut gamma = vec![0.0; k];
    for (p, &si) in demo.points().iter().zip(&s) {
        eval.responsibilities_into(p.as_slice(), &mut gamma);
        for j in 0..k {
            weighted[j] += gamma[j] * si;
            mass[j] += gamma[j];
        }
    }
    let start = demo.start();
    let mut keyed: Vec<(f64, f64, usize)> = (0..k)
        .map(|j| {
            let score = if mass[j] > 0.0 {
                weighted[j] / mass[j]
            } else {
                // Explains no sample: place by the nearest demo point instead.
                let nearest = demo
                    .points()
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1 - components[j].mean())
                            .norm()
                            .total_cmp(&(b.1 - components[j].mean()).norm())
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                s[nearest]
            };
            (score, (components[j].mean() - start).norm(), j)
        })
        .collect();
    keyed.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-12 {
            a.1.total_cmp(&b.1)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    let mut scores: Vec<f64> = keyed.iter().map(|e| e.0).collect();
    // Ties resolved by distance may leave a sub-1e-12 inversion.
    for i in 1..scores.len() {
        scores[i] = scores[i].max(scores[i - 1]);
    }
    let ordered = keyed.iter().map(|e| components[e.2].clone()).collect();
    OrderedGmm::new(ordered, scores)
}
