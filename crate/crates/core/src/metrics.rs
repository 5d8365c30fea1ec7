//! Evaluation metrics over a labelled set and their aggregation across trials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maintenance::{cost, oracle_cost};
use crate::model::{predict, MlpParams, ModelConfig};
use crate::perturbation::DecisionProblem;
use crate::rul_dist::{argmax_first, capped_neg_log, WeibullParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub decision: u32,
    pub label: u32,
    pub regret: f64,
    pub cost: f64,
    pub nll: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_regret: f64,
    pub failure_frequency: f64,
    pub mean_nll: f64,
    pub mean_mae: f64,
    pub mean_cost: f64,
    pub mean_oracle_cost: f64,
    pub max_sample_regret: f64,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_sample: Option<Vec<SampleRecord>>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "mean_regret,failure_frequency,mean_nll,mean_mae,mean_cost,mean_oracle_cost,max_sample_regret,n_samples";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.mean_regret,
            self.failure_frequency,
            self.mean_nll,
            self.mean_mae,
            self.mean_cost,
            self.mean_oracle_cost,
            self.max_sample_regret,
            self.n_samples
        )
    }
}

/// Score one predicted distribution against its label.
pub fn score_sample(
    probs: &[f64],
    label: u32,
    problem: &DecisionProblem,
    scratch: &mut Vec<f64>,
) -> Result<SampleRecord> {
    let yi = problem.support().index_of(label)?;
    let z = problem.decide_probs(probs, scratch)?;
    let c = cost(z, label, &problem.cost);
    let mode = argmax_first(probs) as u32 + 1;
    Ok(SampleRecord {
        decision: z,
        label,
        regret: c - oracle_cost(label, &problem.cost, &problem.windows),
        cost: c,
        nll: capped_neg_log(probs[yi]),
        abs_error: (mode as f64 - label as f64).abs(),
    })
}

/// Summarize per-sample records in order.
pub fn summarize(records: Vec<SampleRecord>, keep_samples: bool) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    let n = records.len() as f64;
    let mut r = EvalReport {
        mean_regret: 0.0,
        failure_frequency: 0.0,
        mean_nll: 0.0,
        mean_mae: 0.0,
        mean_cost: 0.0,
        mean_oracle_cost: 0.0,
        max_sample_regret: f64::NEG_INFINITY,
        n_samples: records.len(),
        per_sample: None,
    };
    for s in &records {
        r.mean_regret += s.regret;
        r.failure_frequency += if s.decision > s.label { 1.0 } else { 0.0 };
        r.mean_nll += s.nll;
        r.mean_mae += s.abs_error;
        r.mean_cost += s.cost;
        r.mean_oracle_cost += s.cost - s.regret;
        r.max_sample_regret = r.max_sample_regret.max(s.regret);
    }
    r.mean_regret /= n;
    r.failure_frequency /= n;
    r.mean_nll /= n;
    r.mean_mae /= n;
    r.mean_cost /= n;
    r.mean_oracle_cost /= n;
    if keep_samples {
        r.per_sample = Some(records);
    }
    Ok(r)
}

/// Metrics for explicit probability vectors.
pub fn evaluate_distributions(
    probs: &[Vec<f64>],
    labels: &[u32],
    problem: &DecisionProblem,
    keep_samples: bool,
) -> Result<EvalReport> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch(
            "distribution and label counts differ".into(),
        ));
    }
    let mut scratch = Vec::new();
    let records = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| score_sample(p, *y, problem, &mut scratch))
        .collect::<Result<Vec<_>>>()?;
    summarize(records, keep_samples)
}

/// Metrics for predicted Weibull parameters.
pub fn evaluate_predictions(
    thetas: &[WeibullParams],
    labels: &[u32],
    problem: &DecisionProblem,
    keep_samples: bool,
) -> Result<EvalReport> {
    if thetas.len() != labels.len() {
        return Err(Error::ShapeMismatch(
            "prediction and label counts differ".into(),
        ));
    }
    let records = thetas
        .par_iter()
        .zip(labels.par_iter())
        .map_init(
            || (vec![0.0; problem.support().horizon()], Vec::new()),
            |(probs, scratch), (theta, y)| {
                problem.discretizer().fill(*theta, probs)?;
                score_sample(probs, *y, problem, scratch)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    summarize(records, keep_samples)
}

/// Eval-mode predictions of a model over a set of feature vectors.
pub fn predict_all(
    params: &MlpParams,
    config: &ModelConfig,
    features: &[&[f64]],
) -> Result<Vec<WeibullParams>> {
    features
        .par_iter()
        .map(|x| predict(x, params, config))
        .collect()
}

/// Run the model in eval mode over `(features, label)` pairs and score it.
pub fn evaluate(
    params: &MlpParams,
    config: &ModelConfig,
    problem: &DecisionProblem,
    features: &[&[f64]],
    labels: &[u32],
    keep_samples: bool,
) -> Result<EvalReport> {
    if features.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    let thetas = predict_all(params, config, features)?;
    evaluate_predictions(&thetas, labels, problem, keep_samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (denominator `n - 1`); absent for one trial.
    pub std: Option<f64>,
    pub max: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("no trials to aggregate".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { mean, std, max })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub n_trials: usize,
    pub regret: MetricSummary,
    pub failure_frequency: MetricSummary,
    pub nll: MetricSummary,
    pub mae: MetricSummary,
}

impl TrialAggregate {
    pub const CSV_HEADER: &'static str = "n_trials,regret_mean,regret_std,regret_max,failure_mean,failure_std,failure_max,nll_mean,nll_std,nll_max,mae_mean,mae_std,mae_max";

    pub fn csv_fields(&self) -> String {
        let f = |m: &MetricSummary| {
            let std = m.std.map(|s| s.to_string()).unwrap_or_default();
            format!("{},{},{}", m.mean, std, m.max)
        };
        format!(
            "{},{},{},{},{}",
            self.n_trials,
            f(&self.regret),
            f(&self.failure_frequency),
            f(&self.nll),
            f(&self.mae)
        )
    }
}

/// Mean, sample std, and max over trials of each per-trial metric.
pub fn aggregate(reports: &[EvalReport]) -> Result<TrialAggregate> {
    let pick = |f: fn(&EvalReport) -> f64| -> Result<MetricSummary> {
        MetricSummary::from_values(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Ok(TrialAggregate {
        n_trials: reports.len(),
        regret: pick(|r| r.mean_regret)?,
        failure_frequency: pick(|r| r.failure_frequency)?,
        nll: pick(|r| r.mean_nll)?,
        mae: pick(|r| r.mean_mae)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maintenance::{CostParams, FeasibleSet, QuantileParams};
    use crate::perturbation::PolicyKind;
    use crate::rul_dist::RulSupport;
    use approx::assert_relative_eq;

    fn problem(policy: PolicyKind) -> DecisionProblem {
        DecisionProblem::new(
            policy,
            CostParams::turbofan(),
            FeasibleSet::grid(0, 5, 125).unwrap(),
            RulSupport::new(150).unwrap(),
        )
    }

    fn point_mass(y: u32) -> Vec<f64> {
        let mut p = vec![0.0; 150];
        p[y as usize - 1] = 1.0;
        p
    }

    #[test]
    fn oracle_model_is_perfect() {
        let labels = [5, 40, 125, 60];
        let probs: Vec<_> = labels.iter().map(|y| point_mass(*y)).collect();
        for policy in [
            PolicyKind::Cso(CostParams::turbofan()),
            PolicyKind::Quantile(QuantileParams::new(0.01).unwrap()),
        ] {
            let r = evaluate_distributions(&probs, &labels, &problem(policy), false).unwrap();
            assert_eq!(r.mean_regret, 0.0);
            assert_eq!(r.failure_frequency, 0.0);
            assert_eq!(r.mean_mae, 0.0);
            assert_eq!(r.mean_nll, 0.0);
        }
    }

    #[test]
    fn late_decision_counts_as_failure() {
        // Point mass at 40 makes CSO pick 40; the true RUL is 35.
        let r = evaluate_distributions(
            &[point_mass(40)],
            &[35],
            &problem(PolicyKind::Cso(CostParams::turbofan())),
            true,
        )
        .unwrap();
        assert_eq!(r.failure_frequency, 1.0);
        assert_eq!(r.per_sample.unwrap()[0].decision, 40);
        assert_eq!(r.mean_regret, 225.0 - 50.0);
    }

    #[test]
    fn three_sample_reference() {
        // Independent recomputation from a standalone script.
        let thetas = [
            WeibullParams::new(100.0, 15.0).unwrap(),
            WeibullParams::new(60.0, 4.0).unwrap(),
            WeibullParams::new(30.0, 2.0).unwrap(),
        ];
        let labels = [95, 40, 31];
        let p = problem(PolicyKind::Cso(CostParams::turbofan()));
        let r = evaluate_predictions(&thetas, &labels, &p, true).unwrap();
        let recs = r.per_sample.clone().unwrap();
        assert_eq!(
            recs.iter().map(|s| s.decision).collect::<Vec<_>>(),
            vec![80, 25, 5]
        );
        assert_relative_eq!(r.mean_regret, 55.0 / 3.0, max_relative = 1e-14);
        assert_eq!(r.failure_frequency, 0.0);
        assert_relative_eq!(r.mean_nll, 3.6477822205978065, max_relative = 1e-10);
        assert_relative_eq!(r.mean_mae, 31.0 / 3.0, max_relative = 1e-14);
        let q = problem(PolicyKind::Quantile(QuantileParams::new(0.01).unwrap()));
        let rq = evaluate_predictions(&thetas, &labels, &q, true).unwrap();
        assert_eq!(
            rq.per_sample
                .unwrap()
                .iter()
                .map(|s| s.decision)
                .collect::<Vec<_>>(),
            vec![70, 15, 0]
        );
        assert_eq!(rq.mean_nll, r.mean_nll);
        assert_eq!(rq.mean_mae, r.mean_mae);
    }

    #[test]
    fn regret_linearity_identity() {
        let thetas: Vec<_> = (0..50)
            .map(|i| WeibullParams::new(20.0 + 2.0 * i as f64, 1.0 + (i % 7) as f64).unwrap())
            .collect();
        let labels: Vec<u32> = (0..50).map(|i| 1 + (i * 37 % 140) as u32).collect();
        let r = evaluate_predictions(
            &thetas,
            &labels,
            &problem(PolicyKind::Cso(CostParams::turbofan())),
            false,
        )
        .unwrap();
        assert!((r.mean_regret - (r.mean_cost - r.mean_oracle_cost)).abs() < 1e-9);
        assert!(r.mean_regret >= 0.0 && (0.0..=1.0).contains(&r.failure_frequency));
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(evaluate_distributions(
            &[],
            &[],
            &problem(PolicyKind::Cso(CostParams::turbofan())),
            false
        )
        .is_err());
        assert!(aggregate(&[]).is_err());
    }

    fn report(regret: f64) -> EvalReport {
        EvalReport {
            mean_regret: regret,
            failure_frequency: 0.0,
            mean_nll: 1.0,
            mean_mae: 2.0,
            mean_cost: regret,
            mean_oracle_cost: 0.0,
            max_sample_regret: regret,
            n_samples: 1,
            per_sample: None,
        }
    }

    #[test]
    fn aggregate_two_trials() {
        let a = aggregate(&[report(10.0), report(20.0)]).unwrap();
        assert_eq!(a.regret.mean, 15.0);
        assert_relative_eq!(a.regret.std.unwrap(), 50f64.sqrt(), max_relative = 1e-15);
        assert_eq!(a.regret.max, 20.0);
        let same = aggregate(&[report(7.0), report(7.0), report(7.0)]).unwrap();
        assert_eq!(same.regret.std, Some(0.0));
        assert_eq!(same.regret.max, same.regret.mean);
        assert_eq!(aggregate(&[report(3.0)]).unwrap().regret.std, None);
    }
}
