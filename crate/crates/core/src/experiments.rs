//! Case-study orchestration: configuration, repeated trials, result files.
//!
//! # Output layout
//!
//! ```text
//! <out>/summary.json               config echo, data source, seeds, aggregates
//! <out>/trials.csv                 one row per (trial, framework)
//! <out>/history/<trial>.ndjson     per-step training records
//! <out>/checkpoints/<trial>-<phase>.bin
//! <out>/figures/metrics_long.csv   framework,trial,metric,value
//! <out>/figures/aggregates.csv     one row per framework
//! ```
//!
//! # Config file
//!
//! Flat `key = value` lines; `#` starts a comment. Keys are listed in
//! [`CaseConfig::set`]. Example:
//!
//! ```text
//! preset = desk          # must come first when present
//! case = base
//! n_trials = 20
//! master_seed = 7
//! spg_samples = 200
//! hidden_dims = 400,100
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    config_hash, hex, load_engines, make_split_with, read_cache, write_cache, CaseKind, DataConfig,
    DataSource, DatasetSplit,
};
use crate::error::{Error, Result};
use crate::maintenance::{CostParams, FeasibleSet, QuantileParams};
use crate::metrics::{aggregate, EvalReport, TrialAggregate};
use crate::model::{Checkpoint, ModelConfig};
use crate::perturbation::SpgConfig;
use crate::rng::{derive_seed, tag};
use crate::trainer::{run_trial, DataView, EtoConfig, TrialConfig, TrialResult};

pub const FRAMEWORKS: [&str; 4] = ["ETO-C", "IEO-C", "ETO-Q", "IEO-Q"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full configuration: 100 trials, M = 1000, 200 + 100 ETO steps, 100 IEO steps.
    Full,
    /// Reduced configuration: 20 trials, M = 200, 100 + 50 ETO steps, 50 IEO steps.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub preset: Preset,
    pub case: CaseKind,
    pub n_trials: usize,
    pub master_seed: u64,
    pub data: DataConfig,
    pub data_dir: Option<PathBuf>,
    pub surrogate_seed: u64,
    pub model: ModelConfig,
    /// Set the initial scale to the mean training label.
    pub auto_initial_scale: bool,
    pub initial_shape: f64,
    pub eto: EtoConfig,
    pub ieo_steps: u64,
    pub ieo_lr: f64,
    pub ieo_batch_size: usize,
    pub spg_samples: usize,
    pub spg_sigma: f64,
    pub spg_baseline: bool,
    pub clamp_floor: f64,
    pub cost: CostParams,
    pub alpha: f64,
    pub z_start: u32,
    pub z_step: u32,
    pub z_end: u32,
    pub horizon: usize,
    pub projection_radius: Option<f64>,
    pub save_checkpoints: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl CaseConfig {
    pub fn preset(preset: Preset, case: CaseKind) -> Self {
        let model = ModelConfig {
            output_scale: [10.0, 1.0],
            ..ModelConfig::default()
        };
        let base = Self {
            preset,
            case,
            n_trials: 100,
            master_seed: 0,
            data: case.data_config(&DataConfig::default()),
            data_dir: None,
            surrogate_seed: 1,
            model,
            auto_initial_scale: true,
            initial_shape: 2.0,
            eto: EtoConfig::default(),
            ieo_steps: 100,
            ieo_lr: 2e-4,
            ieo_batch_size: 64,
            spg_samples: 1000,
            spg_sigma: 1.0,
            spg_baseline: true,
            clamp_floor: 1e-3,
            cost: CostParams::turbofan(),
            alpha: 0.01,
            z_start: 0,
            z_step: 5,
            z_end: 125,
            horizon: 150,
            projection_radius: None,
            save_checkpoints: true,
            threads: None,
        };
        match preset {
            Preset::Full => base,
            Preset::Desk => Self {
                n_trials: 20,
                eto: EtoConfig {
                    steps: 100,
                    continuation_steps: 50,
                    ..EtoConfig::default()
                },
                ieo_steps: 50,
                spg_samples: 200,
                ..base
            },
        }
    }

    /// Switch case and reset the label cap and filter to that case's defaults.
    pub fn set_case(&mut self, case: CaseKind) {
        self.case = case;
        self.data = case.data_config(&self.data);
    }

    /// Apply one `key = value` setting. `preset` resets everything else and
    /// `case` resets `cap` and `filter_max`, so put them first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        fn opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
            if v.eq_ignore_ascii_case("none") || v.is_empty() {
                Ok(None)
            } else {
                parse(key, v).map(Some)
            }
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| parse(key, s.trim())).collect()
        }
        let v = value.trim();
        let mut cost = self.cost;
        match key {
            "preset" => {
                let p = match v {
                    "full" => Preset::Full,
                    "desk" => Preset::Desk,
                    _ => return Err(Error::Config(format!("unknown preset {v:?}"))),
                };
                *self = Self::preset(p, self.case);
            }
            "case" => {
                self.set_case(match v {
                    "base" => CaseKind::Base,
                    "short" | "short_term" => CaseKind::ShortTerm,
                    "long" | "long_term" => CaseKind::LongTerm,
                    _ => return Err(Error::Config(format!("unknown case {v:?}"))),
                });
            }
            "n_trials" | "trials" => self.n_trials = parse(key, v)?,
            "master_seed" | "seed" => self.master_seed = parse(key, v)?,
            "data_dir" => self.data_dir = opt::<PathBuf>(key, v)?,
            "surrogate_seed" => self.surrogate_seed = parse(key, v)?,
            "window" => self.data.window = parse(key, v)?,
            "stride" => self.data.stride = parse(key, v)?,
            "sensors" => self.data.sensor_ids = list(key, v)?,
            "cap" => self.data.cap = opt(key, v)?,
            "filter_max" => self.data.filter_max = opt(key, v)?,
            "horizon" => {
                self.horizon = parse(key, v)?;
                self.data.horizon = self.horizon as u32;
            }
            "hidden_dims" => self.model.hidden_dims = list(key, v)?,
            "dropout" => self.model.dropout_rate = parse(key, v)?,
            "theta_floor" => self.model.theta_floor = parse(key, v)?,
            "output_scale_scale" => self.model.output_scale[0] = parse(key, v)?,
            "output_scale_shape" => self.model.output_scale[1] = parse(key, v)?,
            "auto_initial_scale" => self.auto_initial_scale = parse(key, v)?,
            "initial_shape" => self.initial_shape = parse(key, v)?,
            "initial_scale" => {
                self.auto_initial_scale = false;
                self.model.initial_theta = opt::<f64>(key, v)?.map(|s| [s, self.initial_shape]);
            }
            "eto_steps" => self.eto.steps = parse(key, v)?,
            "eto_continuation_steps" => self.eto.continuation_steps = parse(key, v)?,
            "eto_lr" => self.eto.lr = parse(key, v)?,
            "eto_continuation_lr" => self.eto.continuation_lr = parse(key, v)?,
            "batch_size" => {
                self.eto.batch_size = parse(key, v)?;
                self.ieo_batch_size = self.eto.batch_size;
            }
            "lambda_reg" => self.eto.lambda_reg = parse(key, v)?,
            "ieo_steps" => self.ieo_steps = parse(key, v)?,
            "ieo_lr" => self.ieo_lr = parse(key, v)?,
            "ieo_batch_size" => self.ieo_batch_size = parse(key, v)?,
            "spg_samples" => self.spg_samples = parse(key, v)?,
            "spg_sigma" => self.spg_sigma = parse(key, v)?,
            "spg_baseline" => self.spg_baseline = parse(key, v)?,
            "clamp_floor" => self.clamp_floor = parse(key, v)?,
            "c_p" => cost.preventive = parse(key, v)?,
            "c_c" => cost.corrective = parse(key, v)?,
            "c_m" => cost.component_rate = parse(key, v)?,
            "c_d" => cost.downtime_rate = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "z_start" => self.z_start = parse(key, v)?,
            "z_step" => self.z_step = parse(key, v)?,
            "z_end" => self.z_end = parse(key, v)?,
            "projection_radius" => self.projection_radius = opt(key, v)?,
            "save_checkpoints" => self.save_checkpoints = parse(key, v)?,
            "threads" => self.threads = opt(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        if cost != self.cost {
            self.cost = CostParams::new(
                cost.preventive,
                cost.corrective,
                cost.component_rate,
                cost.downtime_rate,
            )?;
        }
        Ok(())
    }

    /// Apply a `key = value` document.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, found {line:?}"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn windows(&self) -> Result<FeasibleSet> {
        FeasibleSet::grid(self.z_start, self.z_step, self.z_end)
    }

    pub fn spg(&self) -> Result<SpgConfig> {
        SpgConfig::new(
            [[self.spg_sigma, 0.0], [0.0, self.spg_sigma]],
            self.spg_samples,
            self.spg_baseline,
            self.clamp_floor,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be positive".into()));
        }
        let windows = self.windows()?;
        if windows.max() as usize > self.horizon {
            return Err(Error::Config("largest window exceeds the horizon".into()));
        }
        if self.data.horizon as usize != self.horizon {
            return Err(Error::Config("data and model horizons differ".into()));
        }
        self.spg()?;
        QuantileParams::new(self.alpha)?;
        self.eto.validate()?;
        self.model.validate()
    }

    /// Trial configuration with the model input width and initial scale
    /// resolved against the training data.
    pub fn trial_config(&self, split: &DatasetSplit) -> Result<TrialConfig> {
        let mut model = self.model.clone();
        model.input_dim = split.feature_dim();
        if self.auto_initial_scale {
            let mean =
                split.train.iter().map(|s| s.label as f64).sum::<f64>() / split.train.len() as f64;
            model.initial_theta = Some([mean, self.initial_shape]);
        }
        Ok(TrialConfig {
            model,
            eto: self.eto.clone(),
            ieo_steps: self.ieo_steps,
            ieo_lr: self.ieo_lr,
            ieo_batch_size: self.ieo_batch_size,
            spg: self.spg()?,
            cost: self.cost,
            quantile: QuantileParams::new(self.alpha)?,
            windows: self.windows()?,
            horizon: self.horizon,
            projection_radius: self.projection_radius,
        })
    }
}

/// Seed of trial `index`.
pub fn trial_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, &[tag::TRIAL, index as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameworkSummary {
    pub framework: String,
    pub aggregate: TrialAggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub case: CaseKind,
    pub data_source: DataSource,
    pub n_train_samples: usize,
    pub n_eval_samples: usize,
    pub train_units: Vec<u32>,
    pub eval_units: Vec<u32>,
    pub trial_seeds: Vec<u64>,
    pub frameworks: Vec<FrameworkSummary>,
    pub failures: Vec<TrialFailure>,
    pub config: CaseConfig,
    pub trial_config: TrialConfig,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub summary: ExperimentSummary,
    /// `(trial, seed, [ETO-C, IEO-C, ETO-Q, IEO-Q])` in trial order.
    pub trials: Vec<(usize, u64, [EvalReport; 4])>,
    pub runtime_secs: f64,
}

impl ExperimentResult {
    pub fn aggregate(&self, framework: &str) -> Option<&TrialAggregate> {
        self.summary
            .frameworks
            .iter()
            .find(|f| f.framework == framework)
            .map(|f| &f.aggregate)
    }
}

fn write_trial_outputs(
    out: &Path,
    r: &TrialResult,
    config: &TrialConfig,
    save_checkpoints: bool,
) -> Result<()> {
    std::fs::write(
        out.join("history").join(format!("{}.ndjson", r.trial)),
        r.history.to_ndjson(),
    )?;
    if save_checkpoints {
        for (phase, params, seed) in [
            ("eto_snapshot", &r.eto_snapshot, r.seed),
            ("eto", &r.eto_params, r.seed),
            ("ieo_c", &r.ieo_c_params, r.seed),
            ("ieo_q", &r.ieo_q_params, r.seed),
        ] {
            let ck = Checkpoint {
                config: config.model.clone(),
                params: params.clone(),
                seed,
                step: 0,
            };
            ck.save(
                &out.join("checkpoints")
                    .join(format!("{}-{phase}.bin", r.trial)),
            )?;
        }
    }
    Ok(())
}

fn trials_csv(trials: &[(usize, u64, [EvalReport; 4])]) -> String {
    let mut s = format!("trial,seed,framework,{}\n", EvalReport::CSV_HEADER);
    for (t, seed, reports) in trials {
        for (name, r) in FRAMEWORKS.iter().zip(reports) {
            s.push_str(&format!("{t},{seed},{name},{}\n", r.csv_fields()));
        }
    }
    s
}

fn metrics_long_csv(trials: &[(usize, u64, [EvalReport; 4])]) -> String {
    let mut s = String::from("framework,trial,metric,value\n");
    for (t, _, reports) in trials {
        for (name, r) in FRAMEWORKS.iter().zip(reports) {
            for (metric, value) in [
                ("regret", r.mean_regret),
                ("failure_frequency", r.failure_frequency),
                ("nll", r.mean_nll),
                ("mae", r.mean_mae),
            ] {
                s.push_str(&format!("{name},{t},{metric},{value}\n"));
            }
        }
    }
    s
}

fn aggregates_csv(frameworks: &[FrameworkSummary]) -> String {
    let mut s = format!("framework,{}\n", TrialAggregate::CSV_HEADER);
    for f in frameworks {
        s.push_str(&format!("{},{}\n", f.framework, f.aggregate.csv_fields()));
    }
    s
}

/// Build the case split from the configured data source.
pub fn load_split(config: &CaseConfig) -> Result<(DatasetSplit, DataSource)> {
    let (engines, source) = load_engines(config.data_dir.as_deref(), config.surrogate_seed)?;
    let split = make_split_with(&engines, config.case, config.data.clone())?;
    Ok((split, source))
}

fn source_fingerprint(source: &DataSource) -> Result<Vec<u8>> {
    Ok(match source {
        DataSource::File { path } => std::fs::read(path)?,
        DataSource::Surrogate { seed } => format!("surrogate:{seed}").into_bytes(),
    })
}

/// Path of the cache file of `config` inside `dir`.
pub fn cache_path(config: &CaseConfig, source: &DataSource, dir: &Path) -> Result<PathBuf> {
    let hash = config_hash(&config.data, config.case, &source_fingerprint(source)?);
    Ok(dir.join(format!("{}-{}.bin", config.case.name(), &hex(&hash)[..16])))
}

/// Build the split and store it in `dir`.
pub fn prepare_cache(
    config: &CaseConfig,
    dir: &Path,
) -> Result<(DatasetSplit, DataSource, PathBuf)> {
    let (split, source) = load_split(config)?;
    let hash = config_hash(&config.data, config.case, &source_fingerprint(&source)?);
    std::fs::create_dir_all(dir)?;
    let path = cache_path(config, &source, dir)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write_cache(&split, &hash, &mut w)?;
    w.flush()?;
    Ok((split, source, path))
}

/// The split of `config`, read from a matching cache in `dir` when one exists.
pub fn load_split_cached(
    config: &CaseConfig,
    dir: Option<&Path>,
) -> Result<(DatasetSplit, DataSource)> {
    let Some(dir) = dir else {
        return load_split(config);
    };
    let (_, source) = load_engines(config.data_dir.as_deref(), config.surrogate_seed)?;
    let path = cache_path(config, &source, dir)?;
    if path.is_file() {
        let hash = config_hash(&config.data, config.case, &source_fingerprint(&source)?);
        let reader = std::io::BufReader::new(std::fs::File::open(&path)?);
        if let Some((train, eval)) = read_cache(reader, &hash)? {
            let units = |set: &[crate::data::WindowSample]| {
                let mut u: Vec<u32> = set.iter().map(|s| s.unit_id).collect();
                u.dedup();
                u
            };
            log::info!("using cached windows from {}", path.display());
            let split = DatasetSplit {
                case: config.case,
                config: config.data.clone(),
                train_units: units(&train),
                eval_units: units(&eval),
                train,
                eval,
                skipped_engines: 0,
            };
            return Ok((split, source));
        }
        log::warn!("stale cache {}; rebuilding", path.display());
    }
    load_split(config)
}

/// Run every trial of a case and write the result files under `out`.
pub fn run_experiment(config: &CaseConfig, out: &Path) -> Result<ExperimentResult> {
    config.validate()?;
    let (split, source) = load_split(config)?;
    run_experiment_on(config, &split, source, out)
}

pub fn run_experiment_on(
    config: &CaseConfig,
    split: &DatasetSplit,
    source: DataSource,
    out: &Path,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    config.validate()?;
    let trial_config = config.trial_config(split)?;
    std::fs::create_dir_all(out.join("history"))?;
    std::fs::create_dir_all(out.join("figures"))?;
    if config.save_checkpoints {
        std::fs::create_dir_all(out.join("checkpoints"))?;
    }
    log::info!(
        "case {} on {}: {} train / {} eval windows, {} trials",
        config.case.name(),
        source.describe(),
        split.train.len(),
        split.eval.len(),
        config.n_trials
    );
    let train = DataView::from_windows(&split.train);
    let eval = DataView::from_windows(&split.eval);
    let seeds: Vec<u64> = (0..config.n_trials)
        .map(|t| trial_seed(config.master_seed, t))
        .collect();
    let run_one = |t: usize| -> std::result::Result<(usize, u64, [EvalReport; 4]), TrialFailure> {
        let seed = seeds[t];
        let fail = |e: Error| TrialFailure {
            trial: t,
            seed,
            error: e.to_string(),
        };
        let tstart = Instant::now();
        let r = run_trial(&train, &eval, &trial_config, t, seed).map_err(fail)?;
        write_trial_outputs(out, &r, &trial_config, config.save_checkpoints).map_err(fail)?;
        log::info!(
            "trial {t}: regret ETO-C {:.3} IEO-C {:.3} ETO-Q {:.3} IEO-Q {:.3} ({:.1}s)",
            r.eto_c.mean_regret,
            r.ieo_c.mean_regret,
            r.eto_q.mean_regret,
            r.ieo_q.mean_regret,
            tstart.elapsed().as_secs_f64()
        );
        Ok((t, seed, [r.eto_c, r.ieo_c, r.eto_q, r.ieo_q]))
    };
    let outcomes: Vec<_> = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| (0..config.n_trials).into_par_iter().map(run_one).collect()),
        None => (0..config.n_trials).into_par_iter().map(run_one).collect(),
    };
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => trials.push(t),
            Err(f) => failures.push(f),
        }
    }
    let mut frameworks = Vec::new();
    if !trials.is_empty() {
        for (i, name) in FRAMEWORKS.iter().enumerate() {
            let reports: Vec<EvalReport> = trials.iter().map(|(_, _, r)| r[i].clone()).collect();
            frameworks.push(FrameworkSummary {
                framework: name.to_string(),
                aggregate: aggregate(&reports)?,
            });
        }
    }
    let summary = ExperimentSummary {
        case: config.case,
        data_source: source,
        n_train_samples: split.train.len(),
        n_eval_samples: split.eval.len(),
        train_units: split.train_units.clone(),
        eval_units: split.eval_units.clone(),
        trial_seeds: seeds,
        frameworks,
        failures,
        config: config.clone(),
        trial_config,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    std::fs::write(out.join("trials.csv"), trials_csv(&trials))?;
    std::fs::write(
        out.join("figures").join("metrics_long.csv"),
        metrics_long_csv(&trials),
    )?;
    std::fs::write(
        out.join("figures").join("aggregates.csv"),
        aggregates_csv(&summary.frameworks),
    )?;
    if let Some(f) = summary.failures.first() {
        return Err(Error::Trial {
            trial: f.trial,
            seed: f.seed,
            source: Box::new(Error::Config(f.error.clone())),
        });
    }
    Ok(ExperimentResult {
        summary,
        trials,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_documented_sizes() {
        let p = CaseConfig::preset(Preset::Full, CaseKind::Base);
        assert_eq!(
            (
                p.n_trials,
                p.spg_samples,
                p.eto.steps,
                p.eto.continuation_steps,
                p.ieo_steps
            ),
            (100, 1000, 200, 100, 100)
        );
        let d = CaseConfig::preset(Preset::Desk, CaseKind::Base);
        assert_eq!(
            (
                d.n_trials,
                d.spg_samples,
                d.eto.steps,
                d.eto.continuation_steps,
                d.ieo_steps
            ),
            (20, 200, 100, 50, 50)
        );
        assert_eq!(d.windows().unwrap().len(), 26);
        d.validate().unwrap();
    }

    #[test]
    fn config_text_overrides() {
        let mut c = CaseConfig::preset(Preset::Full, CaseKind::Base);
        c.apply_text("preset = desk\ncase = long # comment\n\nn_trials=3\nsensors = 2,3,4\nc_c = 300\ncap = none\n").unwrap();
        assert_eq!(c.preset, Preset::Desk);
        assert_eq!(c.case, CaseKind::LongTerm);
        assert_eq!(c.n_trials, 3);
        assert_eq!(c.data.sensor_ids, vec![2, 3, 4]);
        assert_eq!(c.cost.corrective, 300.0);
        assert_eq!(c.data.cap, None);
        assert_eq!(c.data.filter_max, None);
        c.set_case(CaseKind::Base);
        assert_eq!((c.data.cap, c.data.filter_max), (None, Some(125)));
        assert!(matches!(
            c.apply_text("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(c.apply_text("c_c = 10").is_err());
        assert!(c.apply_text("no equals sign").is_err());
    }

    #[test]
    fn trial_seeds_are_stable_under_extension() {
        let a: Vec<u64> = (0..3).map(|t| trial_seed(7, t)).collect();
        let b: Vec<u64> = (0..10).map(|t| trial_seed(7, t)).collect();
        assert_eq!(a[..], b[..3]);
        assert_ne!(a[0], a[1]);
    }
}
