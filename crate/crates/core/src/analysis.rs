//! Relative estimation error versus relative optimality gap on a small
//! Poisson example, and generalization-bound calculators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maintenance::{cso_decide, expected_cost, quantile_decide, CostParams, FeasibleSet};
use crate::perturbation::PolicyKind;
use crate::rul_dist::{truncated_poisson, DiscreteRulDist, RulSupport};

/// `(CE(p, q) / H(p) - 1) * 100`.
pub fn relative_estimation_error(p_true: &DiscreteRulDist, p_hat: &DiscreteRulDist) -> Result<f64> {
    let h = p_true.entropy();
    if h <= 0.0 {
        return Err(Error::InvalidParameter(
            "relative estimation error is undefined for a zero-entropy truth".into(),
        ));
    }
    Ok((p_true.cross_entropy(p_hat)? / h - 1.0) * 100.0)
}

pub fn policy_decision(
    dist: &DiscreteRulDist,
    policy: &PolicyKind,
    windows: &FeasibleSet,
) -> Result<u32> {
    match policy {
        PolicyKind::Cso(c) => Ok(cso_decide(dist, c, windows)),
        PolicyKind::Quantile(q) => quantile_decide(dist, *q, windows),
    }
}

/// `(E_p[c(pi(q))] / E_p[c(pi(p))] - 1) * 100`, with costs `cost`.
pub fn relative_optimality_gap(
    p_true: &DiscreteRulDist,
    p_hat: &DiscreteRulDist,
    policy: &PolicyKind,
    cost: &CostParams,
    windows: &FeasibleSet,
) -> Result<f64> {
    if p_true.support() != p_hat.support() {
        return Err(Error::SupportMismatch(
            p_true.support().horizon(),
            p_hat.support().horizon(),
        ));
    }
    let best = expected_cost(policy_decision(p_true, policy, windows)?, p_true, cost);
    let got = expected_cost(policy_decision(p_hat, policy, windows)?, p_true, cost);
    Ok((got / best - 1.0) * 100.0)
}

/// A ray in the two-parameter family `q_t ∝ Poisson(rate + t * rate_step)^(1 + t * temper_step)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSpec {
    pub rate_step: f64,
    pub temper_step: f64,
}

impl DirectionSpec {
    pub const RATE_UP: Self = Self {
        rate_step: 1.0,
        temper_step: 0.0,
    };
    pub const RATE_DOWN: Self = Self {
        rate_step: -1.0,
        temper_step: 0.0,
    };
}

/// Member `t` of the family through the truncated Poisson(`rate`).
pub fn family_member(
    rate: f64,
    support: RulSupport,
    dir: DirectionSpec,
    t: f64,
) -> Result<DiscreteRulDist> {
    let r = rate + t * dir.rate_step;
    let power = 1.0 + t * dir.temper_step;
    if !(r > 0.0 && power > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "family parameters out of range: rate {r}, power {power}"
        )));
    }
    let base = truncated_poisson(r, support)?;
    let log_w: Vec<f64> = base.probs().iter().map(|p| power * p.ln()).collect();
    DiscreteRulDist::from_log_weights(support, &log_w)
}

/// Find `t > 0` on the ray with `relative_estimation_error = target` (percent)
/// by bracketing and bisection. Returns the estimate and `t`.
pub fn construct_estimate_at_error(
    rate: f64,
    support: RulSupport,
    target: f64,
    dir: DirectionSpec,
    tol: f64,
) -> Result<(DiscreteRulDist, f64)> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(
            "target error must be positive".into(),
        ));
    }
    let p_true = truncated_poisson(rate, support)?;
    let err_at = |t: f64| -> Result<f64> {
        relative_estimation_error(&p_true, &family_member(rate, support, dir, t)?)
    };
    let unreachable =
        || Error::InvalidParameter(format!("target {target}% is unreachable along {dir:?}"));
    let mut hi = 1e-3;
    loop {
        match err_at(hi) {
            Ok(e) if e >= target => break,
            Ok(_) if hi < 1e6 => hi *= 2.0,
            _ => return Err(unreachable()),
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = err_at(mid)?;
        if (e - target).abs() <= tol {
            return Ok((family_member(rate, support, dir, mid)?, mid));
        }
        if e < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    if (err_at(t)? - target).abs() <= tol {
        Ok((family_member(rate, support, dir, t)?, t))
    } else {
        Err(unreachable())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Target relative estimation error in percent.
    pub delta_e: f64,
    /// Rays producing the two estimates.
    pub directions: [DirectionSpec; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleConfig {
    pub rate: f64,
    pub horizon: usize,
    pub cost: CostParams,
    pub targets: Vec<TargetSpec>,
    pub tol: f64,
}

impl Default for ExampleConfig {
    /// Rays were chosen so both estimates at 2% land in cheaper decision
    /// cells than one of the 1% estimates.
    fn default() -> Self {
        Self {
            rate: 20.0,
            horizon: 30,
            cost: CostParams::motivating_example(),
            targets: vec![
                TargetSpec {
                    delta_e: 1.0,
                    directions: [DirectionSpec::RATE_UP, DirectionSpec::RATE_DOWN],
                },
                TargetSpec {
                    delta_e: 2.0,
                    directions: [
                        DirectionSpec {
                            rate_step: -2.4,
                            temper_step: 0.6,
                        },
                        DirectionSpec {
                            rate_step: -1.0,
                            temper_step: 1.0,
                        },
                    ],
                },
            ],
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleEstimate {
    pub name: String,
    pub target_delta_e: f64,
    pub direction: DirectionSpec,
    pub t: f64,
    pub delta_e: f64,
    pub delta_o: f64,
    pub decision: u32,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub config: ExampleConfig,
    pub p_true: Vec<f64>,
    pub true_decision: u32,
    pub true_expected_cost: f64,
    pub entropy: f64,
    pub estimates: Vec<ExampleEstimate>,
}

impl ExampleReport {
    pub fn at_target(&self, delta_e: f64) -> Vec<&ExampleEstimate> {
        self.estimates
            .iter()
            .filter(|e| e.target_delta_e == delta_e)
            .collect()
    }

    /// Tidy CSV: `target_delta_e,h,p_true,p_hat1,p_hat2`.
    pub fn probabilities_csv(&self) -> String {
        let mut out = String::from("target_delta_e,h,p_true,p_hat1,p_hat2\n");
        for spec in &self.config.targets {
            let est = self.at_target(spec.delta_e);
            for (i, p) in self.p_true.iter().enumerate() {
                out.push_str(&format!("{},{},{}", spec.delta_e, i + 1, p));
                for e in &est {
                    out.push_str(&format!(",{}", e.probs[i]));
                }
                out.push('\n');
            }
        }
        out
    }

    /// `target_delta_e,estimate,delta_e,delta_o,decision`.
    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("target_delta_e,estimate,delta_e,delta_o,decision\n");
        for e in &self.estimates {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.target_delta_e, e.name, e.delta_e, e.delta_o, e.decision
            ));
        }
        out
    }
}

/// Construct both estimates at every target error and score them under the
/// cost-optimal policy with `Z` equal to the support.
pub fn run_motivating_example(config: &ExampleConfig) -> Result<ExampleReport> {
    let support = RulSupport::new(config.horizon)?;
    let windows = FeasibleSet::from_support(support);
    let policy = PolicyKind::Cso(config.cost);
    let p_true = truncated_poisson(config.rate, support)?;
    let true_decision = policy_decision(&p_true, &policy, &windows)?;
    let mut estimates = Vec::new();
    for spec in &config.targets {
        for (i, dir) in spec.directions.iter().enumerate() {
            let (p_hat, t) =
                construct_estimate_at_error(config.rate, support, spec.delta_e, *dir, config.tol)?;
            estimates.push(ExampleEstimate {
                name: format!("P{}", i + 1),
                target_delta_e: spec.delta_e,
                direction: *dir,
                t,
                delta_e: relative_estimation_error(&p_true, &p_hat)?,
                delta_o: relative_optimality_gap(&p_true, &p_hat, &policy, &config.cost, &windows)?,
                decision: policy_decision(&p_hat, &policy, &windows)?,
                probs: p_hat.probs().to_vec(),
            });
        }
    }
    Ok(ExampleReport {
        config: config.clone(),
        true_decision,
        true_expected_cost: expected_cost(true_decision, &p_true, &config.cost),
        entropy: p_true.entropy(),
        p_true: p_true.probs().to_vec(),
        estimates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: u64,
    /// Natarajan dimension of the policy class.
    pub d: u64,
    /// Number of feasible decisions.
    pub k: u64,
    /// Upper bound on the cost.
    pub c1: f64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.n < self.d {
            return Err(Error::InvalidParameter(format!(
                "need n >= d >= 1, got n={}, d={}",
                self.n, self.d
            )));
        }
        if self.k < 2 {
            return Err(Error::InvalidParameter(
                "need at least two decisions".into(),
            ));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::InvalidParameter(
                "cost bound must be positive".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(
                "confidence delta must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// `2 C1 sqrt((2d ln(en/d) + 4d ln K) / n)`.
    fn complexity_term(&self) -> f64 {
        let (n, d, k) = (self.n as f64, self.d as f64, self.k as f64);
        2.0 * self.c1
            * ((2.0 * d * (std::f64::consts::E * n / d).ln() + 4.0 * d * k.ln()) / n).sqrt()
    }
}

/// Upper bound on the expected decision risk holding with probability `1 - delta`.
pub fn theorem1_bound(inputs: &BoundInputs, empirical_risk: f64) -> Result<f64> {
    inputs.validate()?;
    if !empirical_risk.is_finite() {
        return Err(Error::InvalidParameter(
            "empirical risk must be finite".into(),
        ));
    }
    let n = inputs.n as f64;
    Ok(empirical_risk
        + inputs.c1 * ((1.0 / inputs.delta).ln() / (2.0 * n)).sqrt()
        + inputs.complexity_term())
}

/// Excess-risk radius of the empirical minimizer over the best in class.
pub fn corollary1_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.n as f64;
    Ok(2.0 * inputs.c1 * ((2.0 / inputs.delta).ln() / (2.0 * n)).sqrt() + inputs.complexity_term())
}
