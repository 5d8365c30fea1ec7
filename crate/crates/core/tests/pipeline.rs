use ieo_pdm::data::{make_split, CaseKind, DataConfig, DataSource};
use ieo_pdm::experiments::{run_experiment_on, trial_seed, CaseConfig, Preset};
use ieo_pdm::model::Checkpoint;
use ieo_pdm::surrogate::{generate, SurrogateConfig};

fn tiny_config(case: CaseKind, trials: usize) -> CaseConfig {
    let mut c = CaseConfig::preset(Preset::Desk, case);
    c.apply_text("eto_steps = 6\neto_continuation_steps = 3\nieo_steps = 3\nspg_samples = 16\nhidden_dims = 16,8\n")
        .unwrap();
    c.n_trials = trials;
    c
}

#[test]
fn frameworks_pair_up_within_each_trial() {
    let engines = generate(&SurrogateConfig {
        n_engines: 30,
        ..SurrogateConfig::fd001_like(3)
    })
    .unwrap();
    let config = tiny_config(CaseKind::ShortTerm, 3);
    let split = make_split(&engines, config.case, &DataConfig::default()).unwrap();
    assert_eq!(split.eval_units, (1..=20).collect::<Vec<_>>());
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment_on(
        &config,
        &split,
        DataSource::Surrogate { seed: 3 },
        dir.path(),
    )
    .unwrap();

    assert_eq!(result.trials.len(), 3);
    for (i, (t, seed, reports)) in result.trials.iter().enumerate() {
        assert_eq!((*t, *seed), (i, trial_seed(0, i)));
        let [eto_c, _, eto_q, _] = reports;
        assert_eq!(eto_c.mean_nll, eto_q.mean_nll);
        assert_eq!(eto_c.mean_mae, eto_q.mean_mae);
        assert!(eto_q.failure_frequency <= 1.0);
    }
    let names: Vec<&str> = result
        .summary
        .frameworks
        .iter()
        .map(|f| f.framework.as_str())
        .collect();
    assert_eq!(names, ["ETO-C", "IEO-C", "ETO-Q", "IEO-Q"]);
    assert_eq!(result.aggregate("IEO-Q").unwrap().n_trials, 3);

    let ck = Checkpoint::load(&dir.path().join("checkpoints/1-eto_snapshot.bin")).unwrap();
    assert!(ck.params.matches_config(&result.summary.trial_config.model));
    let tidy = std::fs::read_to_string(dir.path().join("figures/metrics_long.csv")).unwrap();
    assert_eq!(tidy.lines().count(), 1 + 3 * 4 * 4);
}

#[test]
fn adding_trials_keeps_earlier_results() {
    let engines = generate(&SurrogateConfig {
        n_engines: 12,
        ..SurrogateConfig::fd001_like(5)
    })
    .unwrap();
    let small = tiny_config(CaseKind::Base, 1);
    let split = make_split(&engines, CaseKind::Base, &DataConfig::default()).unwrap();
    let source = DataSource::Surrogate { seed: 5 };
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = run_experiment_on(&small, &split, source.clone(), a_dir.path()).unwrap();
    let large = CaseConfig {
        n_trials: 2,
        ..small
    };
    let b = run_experiment_on(&large, &split, source, b_dir.path()).unwrap();
    assert_eq!(a.trials[0].2, b.trials[0].2);
    assert_eq!(
        std::fs::read(a_dir.path().join("history/0.ndjson")).unwrap(),
        std::fs::read(b_dir.path().join("history/0.ndjson")).unwrap()
    );
}
