use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, VMode};
use super::run::{coverage_check, psi_diagnostic, run_simulation, CoverageReport, Trace};
use super::HarnessError;
use crate::environment::Environment;
use crate::policies::{build_policy, Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::seed::{derive_seed, replication_seed};

/// Result of tuning one policy on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub v: f64,
    pub lambda: f64,
    /// Final tuning regret of every cell, in search order.
    pub cells: Vec<((f64, f64), f64)>,
}

/// Grid search with a caller-supplied policy factory. Every cell runs `t0`
/// rounds on the same environment under its own seed derived from
/// `seed` and the cell index. The lowest regret wins; ties go to the earlier
/// cell, i.e. smaller `v`, then smaller `λ`.
pub fn grid_search_by<F>(
    env: &Environment,
    cells: &[(f64, f64)],
    t0: u64,
    seed: u64,
    factory: F,
) -> Result<Tuned, HarnessError>
where
    F: Fn(f64, f64) -> Result<Box<dyn Policy>, PolicyError> + Sync,
{
    if cells.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let regrets: Vec<f64> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(v, lambda))| {
            let mut policy = factory(v, lambda)?;
            let cell_seed = derive_seed(seed, &format!("grid/{idx}"));
            Ok(run_simulation(env, policy.as_mut(), t0, cell_seed, 0)?.final_regret())
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut best = 0;
    for (i, &r) in regrets.iter().enumerate() {
        if r < regrets[best] {
            best = i;
        }
    }
    Ok(Tuned {
        v: cells[best].0,
        lambda: cells[best].1,
        cells: cells.iter().copied().zip(regrets).collect(),
    })
}

/// Tunes `(v, λ)` of `kind` on the grid.
pub fn grid_search(
    kind: PolicyKind,
    env: &Environment,
    cells: &[(f64, f64)],
    t0: u64,
    mc_samples: usize,
    seed: u64,
) -> Result<Tuned, HarnessError> {
    grid_search_by(env, cells, t0, seed, |v, lambda| {
        build_policy(kind, &PolicyConfig::shared(v, lambda, mc_samples), env)
    })
}

/// One evaluated policy within a replication.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub kind: PolicyKind,
    pub config: PolicyConfig,
    pub tuning: Option<Tuned>,
    pub trace: Trace,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub replication: u64,
    pub seed: u64,
    pub env: Environment,
    pub runs: Vec<PolicyRun>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub replications: Vec<ReplicationResult>,
}

impl BenchResult {
    /// Traces of `kind`, ordered by replication.
    pub fn traces(&self, kind: PolicyKind) -> Vec<&Trace> {
        self.replications
            .iter()
            .flat_map(|rep| rep.runs.iter().filter(move |r| r.kind == kind).map(|r| &r.trace))
            .collect()
    }

    pub fn policies(&self) -> Vec<PolicyKind> {
        self.replications
            .first()
            .map(|rep| rep.runs.iter().map(|r| r.kind).collect())
            .unwrap_or_default()
    }
}

/// Seed under which replication `r` evaluates its policies.
pub fn evaluation_seed(rep_seed: u64) -> u64 {
    derive_seed(rep_seed, "eval")
}

/// Seed under which replication `r` tunes its policies.
pub fn tuning_seed(rep_seed: u64) -> u64 {
    derive_seed(rep_seed, "tune")
}

fn evaluate(
    config: &ExperimentConfig,
    kind: PolicyKind,
    env: &Environment,
    replication: u64,
    rep_seed: u64,
) -> Result<PolicyRun, HarnessError> {
    let (policy_config, tuning) = if config.is_grid_tuned(kind) {
        let tuned = grid_search(
            kind,
            env,
            &config.grid.cells(),
            config.t0,
            config.mc_samples,
            tuning_seed(rep_seed),
        )?;
        log::info!(
            "replication {replication}: {kind} tuned to v={} lambda={}",
            tuned.v,
            tuned.lambda
        );
        (PolicyConfig::shared(tuned.v, tuned.lambda, config.mc_samples), Some(tuned))
    } else if kind == PolicyKind::SemiGraphTs && config.v_mode == VMode::Oracle {
        let c = PolicyConfig::oracle(env, config.lambda, config.delta, config.horizon, config.mc_samples);
        (c, None)
    } else {
        (PolicyConfig::shared(0.0, config.lambda, config.mc_samples), None)
    };
    let mut policy = build_policy(kind, &policy_config, env)?;
    let trace = run_simulation(env, policy.as_mut(), config.horizon, evaluation_seed(rep_seed), replication)?;
    Ok(PolicyRun {
        kind,
        config: policy_config,
        tuning,
        trace,
    })
}

/// Runs every replication: generate the environment, tune each tunable
/// policy on the grid, then evaluate all policies for `horizon` fresh rounds.
/// Replications and policies run in parallel on the current rayon pool;
/// results do not depend on the degree of parallelism.
pub fn replicate(config: &ExperimentConfig) -> Result<BenchResult, HarnessError> {
    config.validate()?;
    let envs: Vec<(u64, u64, Environment)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(config.seed, r);
            Ok((r, seed, Environment::generate(&config.env, seed)?))
        })
        .collect::<Result<_, HarnessError>>()?;
    let tasks: Vec<(usize, PolicyKind)> = (0..envs.len())
        .flat_map(|i| config.policies.iter().map(move |&k| (i, k)))
        .collect();
    let mut runs: Vec<PolicyRun> = tasks
        .par_iter()
        .map(|&(i, kind)| {
            let (r, seed, env) = &envs[i];
            evaluate(config, kind, env, *r, *seed)
        })
        .collect::<Result<_, HarnessError>>()?;
    let per_rep = config.policies.len();
    let mut replications = Vec::with_capacity(envs.len());
    for (r, seed, env) in envs.into_iter().rev() {
        let chunk = runs.split_off(r as usize * per_rep);
        replications.push(ReplicationResult {
            replication: r,
            seed,
            env,
            runs: chunk,
        });
    }
    replications.reverse();
    Ok(BenchResult { replications })
}

/// Per-run diagnostics written next to the summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub policy: PolicyKind,
    pub replication: u64,
    pub final_regret: f64,
    pub v: Option<f64>,
    pub lambda: f64,
    /// Per-user Ψ; absent users are `null`.
    pub psi: Option<Vec<Option<f64>>>,
    pub coverage_rounds: Option<u64>,
    pub coverage_violations: Option<u64>,
    pub coverage_frequency: Option<f64>,
}

pub fn diagnostics(result: &BenchResult, delta: f64) -> Vec<RunDiagnostics> {
    let mut out = Vec::new();
    for rep in &result.replications {
        for run in &rep.runs {
            let graph_policy = run.kind == PolicyKind::SemiGraphTs;
            let psi = graph_policy.then(|| psi_diagnostic(&run.trace, rep.env.params.n));
            let coverage: Option<CoverageReport> =
                graph_policy.then(|| coverage_check(&run.trace, &rep.env, run.config.lambda, delta));
            out.push(RunDiagnostics {
                policy: run.kind,
                replication: rep.replication,
                final_regret: run.trace.final_regret(),
                v: match &run.config.exploration {
                    crate::policies::Exploration::Shared(v) if run.kind.is_tunable() => Some(*v),
                    _ => None,
                },
                lambda: run.config.lambda,
                psi,
                coverage_rounds: coverage.map(|c| c.rounds_checked),
                coverage_violations: coverage.map(|c| c.violations),
                coverage_frequency: coverage.map(|c| c.frequency()),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvSpec;
    use crate::policies::{OraclePolicy, RandomPolicy};

    fn env() -> Environment {
        let spec = EnvSpec {
            n: 4,
            arms: 2,
            dim: 4,
            ..EnvSpec::default()
        };
        Environment::generate(&spec, 5).unwrap()
    }

    #[test]
    fn single_cell_grid() {
        let e = env();
        let tuned = grid_search(PolicyKind::LinTsInd, &e, &[(0.3, 0.2)], 50, 1, 1).unwrap();
        assert_eq!((tuned.v, tuned.lambda), (0.3, 0.2));
    }

    #[test]
    fn zero_rounds_picks_first_cell() {
        let e = env();
        let cells = [(0.001, 0.008), (0.001, 1.0), (1.0, 0.008)];
        let tuned = grid_search(PolicyKind::SemiGraphTs, &e, &cells, 0, 10, 1).unwrap();
        assert_eq!((tuned.v, tuned.lambda), (0.001, 0.008));
        assert!(tuned.cells.iter().all(|&(_, r)| r == 0.0));
    }

    #[test]
    fn oracle_cell_wins() {
        let e = env();
        let mus = e.params.mus.clone();
        let cells = [(0.1, 1.0), (0.2, 1.0), (0.3, 1.0)];
        let tuned = grid_search_by(&e, &cells, 200, 3, |v, _| {
            Ok(if v == 0.2 {
                Box::new(OraclePolicy::new(mus.clone())) as Box<dyn Policy>
            } else {
                Box::new(RandomPolicy)
            })
        })
        .unwrap();
        assert_eq!(tuned.v, 0.2);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 21,
            t0: 40,
            horizon: 120,
            replications: 3,
            policies: vec![PolicyKind::SemiGraphTs, PolicyKind::LinTsInd, PolicyKind::Random],
            mc_samples: 20,
            env: EnvSpec {
                n: 4,
                arms: 2,
                dim: 4,
                ..EnvSpec::default()
            },
            grid: crate::harness::GridSpec {
                v: vec![0.01, 1.0],
                lambda: vec![0.2, 1.0],
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn replicate_is_ordered_and_deterministic() {
        let c = small_config();
        let a = replicate(&c).unwrap();
        let b = replicate(&c).unwrap();
        assert_eq!(a.replications.len(), 3);
        for (r, rep) in a.replications.iter().enumerate() {
            assert_eq!(rep.replication, r as u64);
            assert_eq!(rep.seed, 21 ^ r as u64);
            let kinds: Vec<_> = rep.runs.iter().map(|x| x.kind).collect();
            assert_eq!(kinds, c.policies);
        }
        for (ra, rb) in a.replications.iter().zip(&b.replications) {
            for (x, y) in ra.runs.iter().zip(&rb.runs) {
                assert_eq!(x.trace.records, y.trace.records);
                assert_eq!(x.tuning, y.tuning);
            }
        }
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let c = small_config();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| replicate(&c)).unwrap();
        let b = wide.install(|| replicate(&c)).unwrap();
        for (ra, rb) in a.replications.iter().zip(&b.replications) {
            for (x, y) in ra.runs.iter().zip(&rb.runs) {
                assert_eq!(x.trace.records, y.trace.records);
            }
        }
    }

    #[test]
    fn oracle_mode_skips_tuning_for_graph_policy() {
        let mut c = small_config();
        c.v_mode = VMode::Oracle;
        let result = replicate(&c).unwrap();
        let run = &result.replications[0].runs[0];
        assert_eq!(run.kind, PolicyKind::SemiGraphTs);
        assert!(run.tuning.is_none());
        assert!(matches!(run.config.exploration, crate::policies::Exploration::PerUser(_)));
        assert!(result.replications[0].runs[1].tuning.is_some());
        let diag = diagnostics(&result, c.delta);
        assert!(diag[0].psi.is_some() && diag[0].coverage_frequency.is_some());
        assert!(diag[1].psi.is_none());
    }
}
