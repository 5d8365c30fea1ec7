//! Score-function gradient of the decision loss with respect to the Weibull
//! parameters.
//!
//! The decision pipeline `theta -> discretize -> policy -> cost` is piecewise
//! constant in `theta`, so its gradient is zero almost everywhere. We instead
//! differentiate the Gaussian-smoothed loss
//! `L~(theta) = E[L(theta + Sigma eta)]`, `eta ~ N(0, I)`, whose gradient is
//! estimated by
//!
//! ```text
//! (Sigma^-1 / M) sum_j (L(theta + Sigma eta_j) - b) eta_j
//! ```
//!
//! with baseline `b = L(theta)` (or 0). Normals come from the ziggurat sampler
//! of `rand_distr::StandardNormal` on a seeded ChaCha8 stream.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maintenance::{
    cost, cso_decide_probs, quantile_decide_probs, CostParams, FeasibleSet, QuantileParams,
};
use crate::rng::{derived_rng, tag};
use crate::rul_dist::{DensityAnchor, RulSupport, WeibullDiscretizer, WeibullParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpgConfig {
    sigma: [[f64; 2]; 2],
    sigma_inv: [[f64; 2]; 2],
    samples: usize,
    use_baseline: bool,
    clamp_floor: f64,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], 1000, true, 1e-3)
            .expect("identity is positive definite")
    }
}

impl SpgConfig {
    pub fn new(
        sigma: [[f64; 2]; 2],
        samples: usize,
        use_baseline: bool,
        clamp_floor: f64,
    ) -> Result<Self> {
        let [[a, b], [c, d]] = sigma;
        if sigma.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be finite".into()));
        }
        if b != c {
            return Err(Error::InvalidParameter("sigma must be symmetric".into()));
        }
        let det = a * d - b * c;
        if !(a > 0.0 && det > 0.0) {
            return Err(Error::InvalidParameter(
                "sigma must be positive definite".into(),
            ));
        }
        if samples == 0 {
            return Err(Error::InvalidParameter(
                "at least one perturbation sample is required".into(),
            ));
        }
        if !(clamp_floor > 0.0 && clamp_floor.is_finite()) {
            return Err(Error::InvalidParameter(
                "clamp floor must be finite and > 0".into(),
            ));
        }
        let sigma_inv = [[d / det, -b / det], [-c / det, a / det]];
        Ok(Self {
            sigma,
            sigma_inv,
            samples,
            use_baseline,
            clamp_floor,
        })
    }

    /// Isotropic `Sigma = scale * I`.
    pub fn isotropic(scale: f64, samples: usize, use_baseline: bool) -> Result<Self> {
        Self::new([[scale, 0.0], [0.0, scale]], samples, use_baseline, 1e-3)
    }

    pub fn sigma(&self) -> [[f64; 2]; 2] {
        self.sigma
    }

    pub fn sigma_inv(&self) -> [[f64; 2]; 2] {
        self.sigma_inv
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn use_baseline(&self) -> bool {
        self.use_baseline
    }

    pub fn clamp_floor(&self) -> f64 {
        self.clamp_floor
    }

    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidParameter(
                "at least one perturbation sample is required".into(),
            ));
        }
        self.samples = samples;
        Ok(self)
    }

    pub fn with_baseline(mut self, on: bool) -> Self {
        self.use_baseline = on;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    Cso(CostParams),
    Quantile(QuantileParams),
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Cso(_) => "C",
            PolicyKind::Quantile(_) => "Q",
        }
    }
}

/// Everything needed to turn a parameter vector into a realized cost.
#[derive(Clone, Debug)]
pub struct DecisionProblem {
    pub policy: PolicyKind,
    /// Cost used to score the decision, whichever policy made it.
    pub cost: CostParams,
    pub windows: FeasibleSet,
    discretizer: WeibullDiscretizer,
}

/// Reusable buffers for repeated decisions.
#[derive(Default)]
pub struct DecisionScratch {
    probs: Vec<f64>,
    costs: Vec<f64>,
}

impl DecisionProblem {
    pub fn new(
        policy: PolicyKind,
        cost: CostParams,
        windows: FeasibleSet,
        support: RulSupport,
    ) -> Self {
        Self {
            policy,
            cost,
            windows,
            discretizer: WeibullDiscretizer::new(support, DensityAnchor::LeftEndpoint),
        }
    }

    pub fn support(&self) -> RulSupport {
        self.discretizer.support()
    }

    pub fn discretizer(&self) -> &WeibullDiscretizer {
        &self.discretizer
    }

    /// Policy decision for a probability vector over the support.
    pub fn decide_probs(&self, probs: &[f64], costs: &mut Vec<f64>) -> Result<u32> {
        if probs.len() != self.support().horizon() {
            return Err(Error::SupportMismatch(
                probs.len(),
                self.support().horizon(),
            ));
        }
        match self.policy {
            PolicyKind::Cso(params) => Ok(cso_decide_probs(
                probs,
                &params,
                self.windows.windows(),
                costs,
            )),
            PolicyKind::Quantile(q) => quantile_decide_probs(probs, q, self.windows.windows()),
        }
    }

    pub fn decision_with(
        &self,
        theta: WeibullParams,
        scratch: &mut DecisionScratch,
    ) -> Result<u32> {
        scratch.probs.resize(self.support().horizon(), 0.0);
        self.discretizer.fill(theta, &mut scratch.probs)?;
        self.decide_probs(&scratch.probs, &mut scratch.costs)
    }

    pub fn decision(&self, theta: WeibullParams) -> Result<u32> {
        self.decision_with(theta, &mut DecisionScratch::default())
    }

    /// Realized cost of the decision made from `theta` when the RUL is `y`.
    pub fn decision_loss(&self, theta: WeibullParams, y: u32) -> Result<f64> {
        self.support().index_of(y)?;
        Ok(cost(self.decision(theta)?, y, &self.cost))
    }

    fn loss_at(
        &self,
        raw: [f64; 2],
        floor: f64,
        y: u32,
        scratch: &mut DecisionScratch,
    ) -> Result<f64> {
        let theta = WeibullParams::new(raw[0].max(floor), raw[1].max(floor))?;
        Ok(cost(self.decision_with(theta, scratch)?, y, &self.cost))
    }
}

/// Generic score-function estimator for any loss of a 2-vector.
pub fn score_function_grad<R, F>(
    theta: [f64; 2],
    config: &SpgConfig,
    rng: &mut R,
    mut loss: F,
) -> Result<[f64; 2]>
where
    R: Rng + ?Sized,
    F: FnMut([f64; 2]) -> Result<f64>,
{
    let baseline = if config.use_baseline {
        loss(theta)?
    } else {
        0.0
    };
    let s = config.sigma;
    let mut acc = [0.0f64; 2];
    for _ in 0..config.samples {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let perturbed = [
            theta[0] + s[0][0] * e0 + s[0][1] * e1,
            theta[1] + s[1][0] * e0 + s[1][1] * e1,
        ];
        let w = loss(perturbed)? - baseline;
        if w != 0.0 {
            acc[0] += w * e0;
            acc[1] += w * e1;
        }
    }
    let m = config.samples as f64;
    let si = config.sigma_inv;
    Ok([
        (si[0][0] * acc[0] + si[0][1] * acc[1]) / m,
        (si[1][0] * acc[0] + si[1][1] * acc[1]) / m,
    ])
}

/// Smoothed-loss gradient for one sample. Perturbed parameters below the
/// clamp floor are raised to it before evaluation.
pub fn smoothed_decision_grad<R: Rng + ?Sized>(
    theta: WeibullParams,
    y: u32,
    problem: &DecisionProblem,
    config: &SpgConfig,
    rng: &mut R,
) -> Result<[f64; 2]> {
    problem.support().index_of(y)?;
    let mut scratch = DecisionScratch::default();
    let floor = config.clamp_floor;
    score_function_grad(theta.as_array(), config, rng, |raw| {
        problem.loss_at(raw, floor, y, &mut scratch)
    })
}

/// Seed of the perturbation stream of one batch element.
pub fn element_seed(master_seed: u64, key: u64) -> u64 {
    crate::rng::derive_seed(master_seed, &[tag::PERTURB, key])
}

/// [`smoothed_decision_grad`] over a batch. Element `i` draws from a stream
/// derived from `(master_seed, keys[i])`, so results are independent of
/// evaluation order and a permuted batch yields permuted outputs.
pub fn batch_smoothed_grad(
    thetas: &[WeibullParams],
    ys: &[u32],
    keys: &[u64],
    problem: &DecisionProblem,
    config: &SpgConfig,
    master_seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if thetas.len() != ys.len() || thetas.len() != keys.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch lengths differ: {} thetas, {} labels, {} keys",
            thetas.len(),
            ys.len(),
            keys.len()
        )));
    }
    thetas
        .par_iter()
        .zip(ys.par_iter())
        .zip(keys.par_iter())
        .map(|((theta, y), key)| {
            let mut rng = derived_rng(master_seed, &[tag::PERTURB, *key]);
            smoothed_decision_grad(*theta, *y, problem, config, &mut rng)
        })
        .collect()
}
