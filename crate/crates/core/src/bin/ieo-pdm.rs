use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ieo_pdm::analysis::{
    corollary1_bound, run_motivating_example, theorem1_bound, BoundInputs, ExampleConfig,
};
use ieo_pdm::data::{write_cmapss, CaseKind, DataSource};
use ieo_pdm::error::{Error, Result};
use ieo_pdm::experiments::{load_split_cached, prepare_cache, run_experiment, CaseConfig, Preset};
use ieo_pdm::maintenance::CostParams;
use ieo_pdm::metrics::evaluate;
use ieo_pdm::model::{Checkpoint, MlpParams};
use ieo_pdm::perturbation::{DecisionProblem, PolicyKind, SpgConfig};
use ieo_pdm::rng::{derive_seed, rng_from_seed, tag};
use ieo_pdm::rul_dist::{RulSupport, WeibullParams};
use ieo_pdm::surrogate::{generate, SurrogateConfig};
use ieo_pdm::trainer::{finetune_ieo, train_eto_phases, DataView, EtoConfig, TrialConfig};

#[derive(Parser, Debug)]
#[command(
    name = "ieo-pdm",
    version,
    about = "Decision-focused predictive maintenance toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Configuration preset (default: full).
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Directory holding train_FD001.txt (falls back to CMAPSS_DIR, then the surrogate).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    case: Option<CaseKind>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Comma-separated 1-based sensor indices.
    #[arg(long, global = true)]
    sensors: Option<String>,
    /// RUL label cap, or "none".
    #[arg(long, global = true)]
    cap: Option<String>,
    /// Drop windows whose label exceeds this value, or "none".
    #[arg(long, global = true)]
    filter_max: Option<String>,
    /// Directory of prepared window caches.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Cso,
    Quantile,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and cache the windowed split; export surrogate data when no files exist.
    PrepareData,
    /// Likelihood (ETO) training; writes the snapshot and continued checkpoints.
    Train,
    /// Decision-loss (IEO) fine-tuning from a checkpoint.
    Finetune {
        #[arg(long)]
        init: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
    },
    /// Score a checkpoint on the evaluation split under one policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
    },
    /// Repeated-trial case study comparing ETO-C, IEO-C, ETO-Q, IEO-Q.
    Experiment,
    /// Motivating example: equal estimation error, different decision quality.
    Example,
    /// Generalization bound calculator.
    Bound {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        d: u64,
        /// Number of feasible decisions.
        #[arg(long = "K")]
        k: u64,
        /// Cost upper bound.
        #[arg(long = "C1")]
        c1: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        empirical_risk: f64,
    },
    /// Emit tidy CSVs for the figures.
    PlotData {
        /// Experiment output directory whose trials.csv is reshaped.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Perturbation samples for the scatter data.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

fn resolve_config(g: &Global) -> Result<CaseConfig> {
    let mut c = CaseConfig::preset(g.preset.unwrap_or(Preset::Full), CaseKind::Base);
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path)?;
        if g.preset.is_some() {
            let filtered: String = text
                .lines()
                .map(|l| {
                    if l.trim_start().starts_with("preset") {
                        ""
                    } else {
                        l
                    }
                })
                .collect::<Vec<_>>()
                .join("\n");
            c.apply_text(&filtered)?;
        } else {
            c.apply_text(&text)?;
        }
    }
    if let Some(case) = g.case {
        c.set_case(case);
    }
    let overrides: [(&str, Option<String>); 9] = [
        ("seed", g.seed.map(|v| v.to_string())),
        ("trials", g.trials.map(|v| v.to_string())),
        ("threads", g.threads.map(|v| v.to_string())),
        (
            "data_dir",
            g.data_dir.as_ref().map(|p| p.display().to_string()),
        ),
        ("window", g.window.map(|v| v.to_string())),
        ("stride", g.stride.map(|v| v.to_string())),
        ("sensors", g.sensors.clone()),
        ("cap", g.cap.clone()),
        ("filter_max", g.filter_max.clone()),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    c.validate()?;
    Ok(c)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn problem_for(tc: &TrialConfig, policy: PolicyArg) -> Result<DecisionProblem> {
    match policy {
        PolicyArg::Cso => tc.cso_problem(),
        PolicyArg::Quantile => tc.quantile_problem(),
    }
}

fn load_model(path: &Path, tc: &TrialConfig) -> Result<(Checkpoint, MlpParams)> {
    let ck = Checkpoint::load(path)?;
    if !ck.params.matches_config(&tc.model) {
        return Err(Error::ShapeMismatch(format!(
            "{} does not match the configured model",
            path.display()
        )));
    }
    let params = ck.params.clone();
    Ok((ck, params))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let out = &g.out;
    match cli.command {
        Command::Bound {
            n,
            d,
            k,
            c1,
            delta,
            empirical_risk,
        } => {
            let inputs = BoundInputs { n, d, k, c1, delta };
            let theorem = theorem1_bound(&inputs, empirical_risk)?;
            let corollary = corollary1_bound(&inputs)?;
            println!("risk_bound {theorem}");
            println!("excess_risk_bound {corollary}");
            return Ok(());
        }
        Command::Example => {
            let report = run_motivating_example(&ExampleConfig::default())?;
            std::fs::create_dir_all(out)?;
            write_json(&out.join("example.json"), &report)?;
            std::fs::write(
                out.join("example_probabilities.csv"),
                report.probabilities_csv(),
            )?;
            std::fs::write(out.join("example_gaps.csv"), report.gaps_csv())?;
            println!(
                "true decision {} (expected cost {:.4})",
                report.true_decision, report.true_expected_cost
            );
            for e in &report.estimates {
                println!(
                    "delta_e {:.4}% {}: decision {} delta_o {:.4}%",
                    e.delta_e, e.name, e.decision, e.delta_o
                );
            }
            return Ok(());
        }
        Command::PlotData { results, samples } => {
            std::fs::create_dir_all(out)?;
            let report = run_motivating_example(&ExampleConfig::default())?;
            std::fs::write(
                out.join("example_probabilities.csv"),
                report.probabilities_csv(),
            )?;
            std::fs::write(out.join("example_gaps.csv"), report.gaps_csv())?;
            std::fs::write(
                out.join("perturbation_scatter.csv"),
                perturbation_scatter(samples, g.seed.unwrap_or(0))?,
            )?;
            if let Some(dir) = results {
                let text = std::fs::read_to_string(dir.join("trials.csv"))?;
                std::fs::write(out.join("metrics_long.csv"), tidy_trials(&text)?)?;
            }
            println!("figure data written to {}", out.display());
            return Ok(());
        }
        _ => {}
    }

    let config = resolve_config(g)?;
    let cache_dir = g.cache_dir.as_deref();
    match cli.command {
        Command::PrepareData => {
            let dir = cache_dir.unwrap_or(out);
            let (split, source, path) = prepare_cache(&config, dir)?;
            if let DataSource::Surrogate { seed } = &source {
                let engines = generate(&SurrogateConfig::fd001_like(*seed))?;
                let file = std::fs::File::create(dir.join("train_FD001.txt"))?;
                write_cmapss(&engines, std::io::BufWriter::new(file))?;
            }
            let max_label = split.train.iter().map(|s| s.label).max().unwrap_or(0);
            println!("source: {}", source.describe());
            println!(
                "case {}: {} train windows ({} engines), {} eval windows ({} engines), {} features, max label {}",
                config.case.name(),
                split.train.len(),
                split.train_units.len(),
                split.eval.len(),
                split.eval_units.len(),
                split.feature_dim(),
                max_label
            );
            println!("cache: {}", path.display());
        }
        Command::Train => {
            let (split, _) = load_split_cached(&config, cache_dir)?;
            let tc = config.trial_config(&split)?;
            let data = DataView::from_windows(&split.train);
            let eto = EtoConfig {
                seed: derive_seed(config.master_seed, &[tag::ETO]),
                ..tc.eto.clone()
            };
            let run = train_eto_phases(&data, &tc.model, &eto, tc.support()?)?;
            std::fs::create_dir_all(out)?;
            for (name, params, step) in [
                ("eto_snapshot", &run.snapshot, eto.steps),
                ("eto", &run.params, eto.steps + eto.continuation_steps),
            ] {
                let ck = Checkpoint {
                    config: tc.model.clone(),
                    params: params.clone(),
                    seed: config.master_seed,
                    step,
                };
                ck.save(&out.join(format!("{name}.bin")))?;
            }
            std::fs::write(out.join("history_eto.ndjson"), run.history.to_ndjson())?;
            let last = run
                .history
                .records
                .last()
                .map(|r| r.loss)
                .unwrap_or(f64::NAN);
            println!(
                "final batch NLL {last:.4}; checkpoints in {}",
                out.display()
            );
        }
        Command::Finetune { init, policy } => {
            let (split, _) = load_split_cached(&config, cache_dir)?;
            let tc = config.trial_config(&split)?;
            let (ck, params) = load_model(&init, &tc)?;
            let problem = problem_for(&tc, policy)?;
            let tag_value = match policy {
                PolicyArg::Cso => tag::IEO_CSO,
                PolicyArg::Quantile => tag::IEO_QUANTILE,
            };
            let ieo = tc.ieo_config(
                problem.policy,
                derive_seed(config.master_seed, &[tag_value]),
            );
            let data = DataView::from_windows(&split.train);
            let (tuned, history) = finetune_ieo(&params, &data, &tc.model, &ieo, &problem)?;
            std::fs::create_dir_all(out)?;
            let label = problem.policy.label().to_lowercase();
            Checkpoint {
                config: tc.model.clone(),
                params: tuned,
                seed: config.master_seed,
                step: ck.step + ieo.steps,
            }
            .save(&out.join(format!("ieo_{label}.bin")))?;
            std::fs::write(
                out.join(format!("history_ieo_{label}.ndjson")),
                history.to_ndjson(),
            )?;
            let last = history.records.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!(
                "final batch decision loss {last:.4}; checkpoint in {}",
                out.display()
            );
        }
        Command::Evaluate { checkpoint, policy } => {
            let (split, _) = load_split_cached(&config, cache_dir)?;
            let tc = config.trial_config(&split)?;
            let (_, params) = load_model(&checkpoint, &tc)?;
            let problem = problem_for(&tc, policy)?;
            let data = DataView::from_windows(&split.eval);
            let report = evaluate(&params, &tc.model, &problem, &data.x, &data.y, false)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment => {
            let result = run_experiment(&config, out)?;
            println!("source: {}", result.summary.data_source.describe());
            println!("framework   regret            failure          nll      mae");
            for f in &result.summary.frameworks {
                let a = &f.aggregate;
                println!(
                    "{:<10}  {:>7.3} ± {:<7.3}  {:.4} ± {:.4}  {:.3}  {:.3}",
                    f.framework,
                    a.regret.mean,
                    a.regret.std.unwrap_or(0.0),
                    a.failure_frequency.mean,
                    a.failure_frequency.std.unwrap_or(0.0),
                    a.nll.mean,
                    a.mae.mean
                );
            }
            log::info!("finished in {:.1}s", result.runtime_secs);
        }
        Command::Bound { .. } | Command::Example | Command::PlotData { .. } => unreachable!(),
    }
    Ok(())
}

/// Score-function samples around `theta = (100, 15)` for a unit failing at 95.
fn perturbation_scatter(samples: usize, seed: u64) -> Result<String> {
    use rand_distr::{Distribution, StandardNormal};
    let support = RulSupport::new(150)?;
    let windows = ieo_pdm::maintenance::FeasibleSet::grid(0, 5, 125)?;
    let cost = CostParams::turbofan();
    let spg = SpgConfig::default();
    let theta = [100.0, 15.0];
    let y = 95;
    let mut s = String::from("policy,sample,eta_scale,eta_shape,scale,shape,decision,loss\n");
    for policy in [
        PolicyKind::Cso(cost),
        PolicyKind::Quantile(ieo_pdm::maintenance::QuantileParams::new(0.01)?),
    ] {
        let problem = DecisionProblem::new(policy, cost, windows.clone(), support);
        let mut rng = rng_from_seed(derive_seed(seed, &[tag::PERTURB]));
        for i in 0..samples {
            let eta: [f64; 2] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let p = [
                (theta[0] + eta[0]).max(spg.clamp_floor()),
                (theta[1] + eta[1]).max(spg.clamp_floor()),
            ];
            let w = WeibullParams::new(p[0], p[1])?;
            let z = problem.decision(w)?;
            let loss = ieo_pdm::maintenance::cost(z, y, &cost);
            s.push_str(&format!(
                "{},{i},{},{},{},{},{z},{loss}\n",
                policy.label(),
                eta[0],
                eta[1],
                p[0],
                p[1]
            ));
        }
    }
    Ok(s)
}

/// Reshape `trials.csv` into `framework,trial,metric,value` rows.
fn tidy_trials(text: &str) -> Result<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty trials.csv".into(),
        })?
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(t), Some(f)) = (col("trial"), col("framework")) else {
        return Err(Error::Parse {
            line: 1,
            message: "trials.csv lacks trial/framework columns".into(),
        });
    };
    let mut out = String::from("framework,trial,metric,value\n");
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: i + 2,
                message: "column count differs from header".into(),
            });
        }
        for (j, name) in header.iter().enumerate() {
            if j != t && j != f && *name != "seed" {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fields[f], fields[t], name, fields[j]
                ));
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
