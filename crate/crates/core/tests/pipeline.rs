use semigraph_core::environment::{EnvSpec, Scenario};
use semigraph_core::harness::{replicate, ExperimentConfig, GridSpec, VMode};
use semigraph_core::policies::PolicyKind;
use semigraph_core::report::{read_final_csv, read_summary_csv, read_trace_csv, write_bench};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        t0: 50,
        horizon: 300,
        replications: 2,
        policies: vec![PolicyKind::SemiGraphTs, PolicyKind::GraphUcb, PolicyKind::Random, PolicyKind::Oracle],
        mc_samples: 100,
        checkpoints: 10,
        env: EnvSpec {
            n: 6,
            arms: 3,
            dim: 6,
            scenario: Scenario::AdversarialOptimal,
            ..EnvSpec::default()
        },
        grid: GridSpec {
            v: vec![0.01, 0.1],
            lambda: vec![0.2, 1.0],
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn bench_outputs_are_consistent() {
    let config = small();
    let result = replicate(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bench(&result, &config, dir.path(), false).unwrap();

    for trace in result.traces(PolicyKind::Oracle) {
        assert_eq!(trace.final_regret(), 0.0);
    }
    let rows = read_trace_csv(&dir.path().join("traces/semigraphts-rep0.csv")).unwrap();
    assert_eq!(rows.len(), 300);
    assert_eq!(rows.first().unwrap().t, 1);
    assert!(rows.windows(2).all(|w| w[1].cum_regret >= w[0].cum_regret));

    let summary = read_summary_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 4 * 10);
    let random: Vec<_> = summary.iter().filter(|r| r.policy == "random").collect();
    assert!(random.iter().all(|r| r.normalized_mean.is_none_or(|x| (x - 1.0).abs() < 1e-12)));

    let finals = read_final_csv(&dir.path().join("final.csv")).unwrap();
    assert!(finals.iter().all(|r| r.replications == 2));
    assert!(!dir.path().join("runtime.csv").exists());
}

#[test]
fn oracle_mode_skips_tuning_for_semigraphts() {
    let mut config = small();
    config.v_mode = VMode::Oracle;
    config.policies = vec![PolicyKind::SemiGraphTs];
    config.replications = 1;
    let result = replicate(&config).unwrap();
    let run = &result.replications[0].runs[0];
    assert!(run.tuning.is_none());
    assert_eq!(run.trace.len(), 300);
}
