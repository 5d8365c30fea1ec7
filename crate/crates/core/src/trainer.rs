//! Likelihood training followed by decision-loss fine-tuning.
//!
//! Every random choice (initialization, batch order, dropout masks,
//! perturbations) is drawn from a stream derived from the phase seed and the
//! step, so a run is a pure function of its inputs. Per-sample gradients are
//! accumulated in fixed-size chunks and the chunk sums are added in order,
//! which keeps results bitwise identical for any thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    adam_step, add_l2_penalty, backprop_into, forward, AdamState, MlpParams, Mode, ModelConfig,
};
use crate::perturbation::{
    batch_smoothed_grad, DecisionProblem, DecisionScratch, PolicyKind, SpgConfig,
};
use crate::rng::{derive_seed, derived_rng, tag};
use crate::rul_dist::{DensityAnchor, RulSupport, WeibullDiscretizer, WeibullParams};

/// Samples per gradient-accumulation chunk.
const CHUNK: usize = 8;

/// Borrowed feature vectors with their labels.
#[derive(Clone, Debug)]
pub struct DataView<'a> {
    pub x: Vec<&'a [f64]>,
    pub y: Vec<u32>,
}

impl<'a> DataView<'a> {
    pub fn new(x: Vec<&'a [f64]>, y: Vec<u32>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(
                "feature and label counts differ".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn from_windows(samples: &'a [WindowSample]) -> Self {
        Self {
            x: samples.iter().map(|s| s.features.as_slice()).collect(),
            y: samples.iter().map(|s| s.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mean_label(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.len().max(1) as f64
    }
}

/// Seeded epoch-wise shuffling. Each epoch is a fresh permutation of all
/// samples split into `ceil(n / batch)` batches, the last possibly short.
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 || batch_size == 0 {
            return Err(Error::InsufficientData(
                "empty dataset or zero batch size".into(),
            ));
        }
        Ok(Self {
            n,
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    pub fn epoch_permutation(&self, epoch: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut derived_rng(self.seed, &[tag::BATCH, epoch]));
        perm
    }

    /// Dataset indices used at `step`.
    pub fn batch(&self, step: u64) -> Vec<usize> {
        let per = self.batches_per_epoch() as u64;
        let (epoch, b) = (step / per, (step % per) as usize);
        let perm = self.epoch_permutation(epoch);
        let start = b * self.batch_size;
        perm[start..(start + self.batch_size).min(self.n)].to_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtoConfig {
    pub steps: u64,
    pub continuation_steps: u64,
    pub lr: f64,
    pub continuation_lr: f64,
    pub batch_size: usize,
    pub lambda_reg: f64,
    pub seed: u64,
}

impl Default for EtoConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            continuation_steps: 100,
            lr: 1e-3,
            continuation_lr: 1e-3,
            batch_size: 64,
            lambda_reg: 0.0,
            seed: 0,
        }
    }
}

impl EtoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter(
                "ETO needs at least one step".into(),
            ));
        }
        if !(self.lr > 0.0 && self.continuation_lr > 0.0) {
            return Err(Error::InvalidParameter(
                "learning rates must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch size must be positive".into(),
            ));
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(Error::InvalidParameter(
                "regularization weight must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IeoConfig {
    pub steps: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub policy: PolicyKind,
    pub spg: SpgConfig,
    pub seed: u64,
    /// Optional radius of a ball around the starting weights to project onto.
    pub projection_radius: Option<f64>,
}

impl IeoConfig {
    pub fn new(policy: PolicyKind, seed: u64) -> Self {
        Self {
            steps: 100,
            lr: 2e-4,
            batch_size: 64,
            policy,
            spg: SpgConfig::default(),
            seed,
            projection_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidParameter(
                "IEO steps, batch size, and lr must be positive".into(),
            ));
        }
        if let Some(r) = self.projection_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(
                    "projection radius must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: String,
    pub step: u64,
    /// Batch mean NLL for likelihood steps, batch mean decision loss otherwise.
    pub loss: f64,
    pub grad_norm: f64,
    /// Seconds since the phase started; not serialized so outputs stay reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
}

impl TrainHistory {
    pub fn extend(&mut self, other: TrainHistory) {
        self.records.extend(other.records);
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Sum of per-sample gradients over `indices`, evaluated in parallel chunks
/// and reduced in a fixed order.
fn chunked_grad<F>(params: &MlpParams, count: usize, per_sample: F) -> Result<(MlpParams, f64)>
where
    F: Fn(usize, &mut MlpParams) -> Result<f64> + Sync,
{
    let chunks: Vec<(usize, usize)> = (0..count)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(count)))
        .collect();
    let partials = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut acc = params.zeros_like();
            let mut loss = 0.0;
            for pos in start..end {
                loss += per_sample(pos, &mut acc)?;
            }
            Ok((acc, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut total, mut loss) = iter.next().unwrap_or_else(|| (params.zeros_like(), 0.0));
    for (g, l) in iter {
        total.add_scaled(&g, 1.0);
        loss += l;
    }
    Ok((total, loss))
}

/// Mutable training state shared by the likelihood phases.
#[derive(Clone, Debug)]
pub struct EtoState {
    pub params: MlpParams,
    pub adam: AdamState,
    pub step: u64,
}

impl EtoState {
    pub fn init(model: &ModelConfig, seed: u64) -> Result<Self> {
        let params = MlpParams::init(model, seed)?;
        let adam = AdamState::new(&params);
        Ok(Self {
            params,
            adam,
            step: 0,
        })
    }
}

/// Run `n_steps` likelihood steps from `state.step`, continuing the batch schedule.
#[allow(clippy::too_many_arguments)]
pub fn eto_steps(
    state: &mut EtoState,
    data: &DataView,
    model: &ModelConfig,
    config: &EtoConfig,
    n_steps: u64,
    lr: f64,
    phase: &str,
    schedule: &BatchSchedule,
    disc: &WeibullDiscretizer,
) -> Result<TrainHistory> {
    let start = Instant::now();
    let mut history = TrainHistory::default();
    for _ in 0..n_steps {
        let step = state.step;
        let batch = schedule.batch(step);
        let inv = 1.0 / batch.len() as f64;
        let params = &state.params;
        let (mut grads, loss_sum) = chunked_grad(params, batch.len(), |pos, acc| {
            let idx = batch[pos];
            let mut rng = derived_rng(config.seed, &[tag::DROPOUT, step, pos as u64]);
            let (theta, trace) = forward(data.x[idx], params, model, Mode::Train, Some(&mut rng))?;
            let (nll, dtheta) = disc.nll_with_grad(theta, data.y[idx])?;
            backprop_into(&trace, dtheta, params, acc, inv)?;
            Ok(nll)
        })?;
        let mut loss = loss_sum * inv;
        loss += add_l2_penalty(params, config.lambda_reg, &mut grads);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        let grad_norm = grads.l2_norm();
        adam_step(&mut state.params, &grads, &mut state.adam, lr)?;
        if !state.params.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        history.records.push(StepRecord {
            phase: phase.to_string(),
            step,
            loss,
            grad_norm,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        state.step += 1;
    }
    Ok(history)
}

/// Likelihood training result: the snapshot after the main phase and the
/// parameters after the continuation phase.
#[derive(Clone, Debug)]
pub struct EtoRun {
    pub snapshot: MlpParams,
    pub params: MlpParams,
    pub history: TrainHistory,
}

pub fn train_eto_phases(
    data: &DataView,
    model: &ModelConfig,
    config: &EtoConfig,
    support: RulSupport,
) -> Result<EtoRun> {
    config.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let schedule = BatchSchedule::new(data.len(), config.batch_size, config.seed)?;
    let disc = WeibullDiscretizer::new(support, DensityAnchor::LeftEndpoint);
    let mut state = EtoState::init(model, config.seed)?;
    let mut history = eto_steps(
        &mut state,
        data,
        model,
        config,
        config.steps,
        config.lr,
        "eto",
        &schedule,
        &disc,
    )?;
    let snapshot = state.params.clone();
    history.extend(eto_steps(
        &mut state,
        data,
        model,
        config,
        config.continuation_steps,
        config.continuation_lr,
        "eto_continuation",
        &schedule,
        &disc,
    )?);
    Ok(EtoRun {
        snapshot,
        params: state.params,
        history,
    })
}

/// Likelihood training over `steps + continuation_steps` steps.
pub fn train_eto(
    data: &DataView,
    model: &ModelConfig,
    config: &EtoConfig,
    support: RulSupport,
) -> Result<(MlpParams, TrainHistory)> {
    let run = train_eto_phases(data, model, config, support)?;
    Ok((run.params, run.history))
}

/// Perturbation stream key of a batch element: the step and the dataset index.
fn perturb_key(step: u64, index: usize) -> u64 {
    derive_seed(step, &[index as u64])
}

/// Decision-loss fine-tuning from `init`.
pub fn finetune_ieo(
    init: &MlpParams,
    data: &DataView,
    model: &ModelConfig,
    config: &IeoConfig,
    problem: &DecisionProblem,
) -> Result<(MlpParams, TrainHistory)> {
    config.validate()?;
    if !init.matches_config(model) {
        return Err(Error::ShapeMismatch(
            "initial parameters do not match the model config".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let schedule = BatchSchedule::new(data.len(), config.batch_size, config.seed)?;
    let mut params = init.clone();
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let start = Instant::now();
    for step in 0..config.steps {
        let batch = schedule.batch(step);
        let inv = 1.0 / batch.len() as f64;
        let traces = batch
            .par_iter()
            .enumerate()
            .map(|(pos, &idx)| {
                let mut rng = derived_rng(config.seed, &[tag::DROPOUT, step, pos as u64]);
                forward(data.x[idx], &params, model, Mode::Train, Some(&mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        let thetas: Vec<WeibullParams> = traces.iter().map(|(t, _)| *t).collect();
        let ys: Vec<u32> = batch.iter().map(|&i| data.y[i]).collect();
        let keys: Vec<u64> = batch.iter().map(|&i| perturb_key(step, i)).collect();
        let dthetas = batch_smoothed_grad(&thetas, &ys, &keys, problem, &config.spg, config.seed)?;
        let mut scratch = DecisionScratch::default();
        let mut loss = 0.0;
        for (theta, y) in thetas.iter().zip(&ys) {
            let z = problem.decision_with(*theta, &mut scratch)?;
            loss += crate::maintenance::cost(z, *y, &problem.cost);
        }
        loss *= inv;
        let p = &params;
        let (grads, _) = chunked_grad(p, batch.len(), |pos, acc| {
            backprop_into(&traces[pos].1, dthetas[pos], p, acc, inv)?;
            Ok(0.0)
        })?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        let grad_norm = grads.l2_norm();
        adam_step(&mut params, &grads, &mut adam, config.lr)?;
        if let Some(r) = config.projection_radius {
            project_to_ball(&mut params, init, r);
        }
        if !params.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        history.records.push(StepRecord {
            phase: format!("ieo_{}", config.policy.label().to_lowercase()),
            step,
            loss,
            grad_norm,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

/// Pull `params` back onto the ball of radius `r` around `center`.
pub fn project_to_ball(params: &mut MlpParams, center: &MlpParams, r: f64) {
    let dist = params
        .iter()
        .zip(center.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist > r {
        let s = r / dist;
        for (a, b) in params.iter_mut().zip(center.iter()) {
            *a = b + (*a - b) * s;
        }
    }
}

/// Configuration of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: ModelConfig,
    pub eto: EtoConfig,
    pub ieo_steps: u64,
    pub ieo_lr: f64,
    pub ieo_batch_size: usize,
    pub spg: SpgConfig,
    pub cost: crate::maintenance::CostParams,
    pub quantile: crate::maintenance::QuantileParams,
    pub windows: crate::maintenance::FeasibleSet,
    pub horizon: usize,
    pub projection_radius: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub eto_c: EvalReport,
    pub eto_q: EvalReport,
    pub ieo_c: EvalReport,
    pub ieo_q: EvalReport,
    pub eto_snapshot: MlpParams,
    pub eto_params: MlpParams,
    pub ieo_c_params: MlpParams,
    pub ieo_q_params: MlpParams,
    pub history: TrainHistory,
}

impl TrialResult {
    /// `(framework, report)` in table order.
    pub fn reports(&self) -> [(&'static str, &EvalReport); 4] {
        [
            ("ETO-C", &self.eto_c),
            ("IEO-C", &self.ieo_c),
            ("ETO-Q", &self.eto_q),
            ("IEO-Q", &self.ieo_q),
        ]
    }
}

impl TrialConfig {
    pub fn support(&self) -> Result<RulSupport> {
        RulSupport::new(self.horizon)
    }

    pub fn cso_problem(&self) -> Result<DecisionProblem> {
        Ok(DecisionProblem::new(
            PolicyKind::Cso(self.cost),
            self.cost,
            self.windows.clone(),
            self.support()?,
        ))
    }

    pub fn quantile_problem(&self) -> Result<DecisionProblem> {
        Ok(DecisionProblem::new(
            PolicyKind::Quantile(self.quantile),
            self.cost,
            self.windows.clone(),
            self.support()?,
        ))
    }

    pub fn ieo_config(&self, policy: PolicyKind, seed: u64) -> IeoConfig {
        IeoConfig {
            steps: self.ieo_steps,
            lr: self.ieo_lr,
            batch_size: self.ieo_batch_size,
            policy,
            spg: self.spg.clone(),
            seed,
            projection_radius: self.projection_radius,
        }
    }
}

/// One full trial: likelihood training with a snapshot, continuation for the
/// ETO arm, two policy-specific fine-tunes from the snapshot, and evaluation
/// of all four frameworks.
pub fn run_trial(
    train: &DataView,
    eval: &DataView,
    config: &TrialConfig,
    trial: usize,
    trial_seed: u64,
) -> Result<TrialResult> {
    let support = config.support()?;
    let eto_config = EtoConfig {
        seed: derive_seed(trial_seed, &[tag::ETO]),
        ..config.eto.clone()
    };
    let eto = train_eto_phases(train, &config.model, &eto_config, support)?;
    let cso = config.cso_problem()?;
    let quant = config.quantile_problem()?;
    let ieo_c_cfg = config.ieo_config(cso.policy, derive_seed(trial_seed, &[tag::IEO_CSO]));
    let ieo_q_cfg = config.ieo_config(quant.policy, derive_seed(trial_seed, &[tag::IEO_QUANTILE]));
    let (ieo_c_params, hc) = finetune_ieo(&eto.snapshot, train, &config.model, &ieo_c_cfg, &cso)?;
    let (ieo_q_params, hq) = finetune_ieo(&eto.snapshot, train, &config.model, &ieo_q_cfg, &quant)?;
    let eval_with = |p: &MlpParams, problem: &DecisionProblem| {
        evaluate(p, &config.model, problem, &eval.x, &eval.y, false)
    };
    let eto_c = eval_with(&eto.params, &cso)?;
    let eto_q = eval_with(&eto.params, &quant)?;
    let ieo_c = eval_with(&ieo_c_params, &cso)?;
    let ieo_q = eval_with(&ieo_q_params, &quant)?;
    let mut history = eto.history;
    history.extend(hc);
    history.extend(hq);
    Ok(TrialResult {
        trial,
        seed: trial_seed,
        eto_c,
        eto_q,
        ieo_c,
        ieo_q,
        eto_snapshot: eto.snapshot,
        eto_params: eto.params,
        ieo_c_params,
        ieo_q_params,
        history,
    })
}
