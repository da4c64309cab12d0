//! CSV output: per-round traces, checkpoint summaries, final tables.
//!
//! Trace columns: `t, user, arm, optimal_arm, reward, regret, cum_regret,
//! psi_num, psi_den, policy, replication`. `user`, `arm` and `optimal_arm`
//! are 1-based; `psi_num`/`psi_den` are empty for policies without Ψ.
//!
//! Summary columns: `policy, checkpoint_t, mean_cum_regret, stderr,
//! normalized_mean, band_low, band_high`. The band is
//! `mean ± 1.96·stderr` on the raw regret scale; `normalized_mean` is the
//! mean divided by the random policy's mean at the same checkpoint and is
//! empty when that is unavailable.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{diagnostics, BenchResult, ExperimentConfig, Trace};
use crate::policies::PolicyKind;

pub const TRACE_HEADER: [&str; 11] = [
    "t",
    "user",
    "arm",
    "optimal_arm",
    "reward",
    "regret",
    "cum_regret",
    "psi_num",
    "psi_den",
    "policy",
    "replication",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "policy",
    "checkpoint_t",
    "mean_cum_regret",
    "stderr",
    "normalized_mean",
    "band_low",
    "band_high",
];

pub const FINAL_HEADER: [&str; 7] = ["policy", "scale", "mean", "stderr", "band_low", "band_high", "replications"];

pub const PAIRWISE_HEADER: [&str; 3] = ["policy", "baseline", "percent_diff"];

pub const RUNTIME_HEADER: [&str; 3] = ["policy", "replication", "seconds"];

/// Normal quantile for a two-sided 95% band.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub t: u64,
    pub user: usize,
    pub arm: usize,
    pub optimal_arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub psi_num: Option<f64>,
    pub psi_den: Option<f64>,
    pub policy: String,
    pub replication: u64,
}

pub fn trace_rows(trace: &Trace) -> Vec<TraceCsvRow> {
    trace
        .records
        .iter()
        .map(|r| TraceCsvRow {
            t: r.t,
            user: r.user + 1,
            arm: r.arm + 1,
            optimal_arm: r.optimal_arm + 1,
            reward: r.reward,
            regret: r.regret,
            cum_regret: r.cum_regret,
            psi_num: r.psi.map(|p| p.gamma_norm),
            psi_den: r.psi.map(|p| p.gram_norm),
            policy: trace.policy.name().to_string(),
            replication: trace.replication,
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(ReportError::Mismatch(format!(
            "{}: expected columns {:?}, found {:?}",
            path.display(),
            header,
            got
        )));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<(), ReportError> {
    write_rows(path, &TRACE_HEADER, &trace_rows(trace))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceCsvRow>, ReportError> {
    read_rows(path, &TRACE_HEADER)
}

/// Mean and standard error (`sd/√k`, sample `sd` with `k − 1`). One value
/// gives a standard error of 0.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
}

impl CurvePoint {
    pub fn band(&self) -> (f64, f64) {
        let half = Z95 * self.stderr;
        (self.mean - half, self.mean + half)
    }
}

/// Mean cumulative-regret curve of one policy over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub points: Vec<CurvePoint>,
}

pub fn summarize_policy(policy: PolicyKind, traces: &[&Trace], checkpoints: &[u64]) -> PolicySummary {
    let points = checkpoints
        .iter()
        .map(|&t| {
            let values: Vec<f64> = traces.iter().map(|tr| tr.cum_regret_at(t)).collect();
            let (mean, stderr) = mean_and_stderr(&values);
            CurvePoint { t, mean, stderr }
        })
        .collect();
    PolicySummary { policy, points }
}

/// `(checkpoint, mean / random mean)`. Checkpoints where the random policy
/// has zero regret are dropped with a warning.
pub fn relative_to_random(
    summary: &PolicySummary,
    random: &PolicySummary,
) -> Result<Vec<(u64, f64)>, ReportError> {
    if summary.points.len() != random.points.len()
        || summary.points.iter().zip(&random.points).any(|(a, b)| a.t != b.t)
    {
        return Err(ReportError::Mismatch(format!(
            "checkpoints of {} and {} differ",
            summary.policy, random.policy
        )));
    }
    let mut out = Vec::with_capacity(summary.points.len());
    for (p, r) in summary.points.iter().zip(&random.points) {
        if r.mean == 0.0 {
            log::warn!("random regret is 0 at t={}; checkpoint dropped from normalization", p.t);
            continue;
        }
        out.push((p.t, p.mean / r.mean));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub checkpoint_t: u64,
    pub mean_cum_regret: f64,
    pub stderr: f64,
    pub normalized_mean: Option<f64>,
    pub band_low: f64,
    pub band_high: f64,
}

/// Summary CSV rows; normalized against the random policy when present.
pub fn summary_rows(summaries: &[PolicySummary]) -> Result<Vec<SummaryRow>, ReportError> {
    let random = summaries.iter().find(|s| s.policy == PolicyKind::Random);
    let mut rows = Vec::new();
    for s in summaries {
        let normalized = match random {
            Some(r) => relative_to_random(s, r)?,
            None => Vec::new(),
        };
        for p in &s.points {
            let (band_low, band_high) = p.band();
            rows.push(SummaryRow {
                policy: s.policy.name().to_string(),
                checkpoint_t: p.t,
                mean_cum_regret: p.mean,
                stderr: p.stderr,
                normalized_mean: normalized.iter().find(|(t, _)| *t == p.t).map(|&(_, v)| v),
                band_low,
                band_high,
            });
        }
    }
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), ReportError> {
    write_rows(path, &SUMMARY_HEADER, rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    read_rows(path, &SUMMARY_HEADER)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub policy: String,
    /// `normalized` or `raw`.
    pub scale: String,
    pub mean: f64,
    pub stderr: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub policy: String,
    pub baseline: String,
    /// `100·(mean_policy − mean_baseline)/mean_baseline`; empty when the
    /// baseline mean is 0.
    pub percent_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalTable {
    pub rows: Vec<FinalRow>,
    pub pairwise: Vec<PairwiseRow>,
}

/// Final regret per policy. Each replication's final regret is divided by
/// the random policy's final regret in the same replication when `random` is
/// given and nonzero everywhere; otherwise the raw scale is used.
pub fn summarize_final(finals: &[(PolicyKind, Vec<f64>)], random: Option<&[f64]>) -> FinalTable {
    let random = random.filter(|r| {
        let ok = r.iter().all(|&v| v != 0.0);
        if !ok {
            log::warn!("random final regret is 0 in some replication; final table stays on the raw scale");
        }
        ok
    });
    let scale = if random.is_some() { "normalized" } else { "raw" };
    let rows: Vec<FinalRow> = finals
        .iter()
        .map(|(kind, values)| {
            let scaled: Vec<f64> = match random {
                Some(r) => values.iter().zip(r).map(|(v, b)| v / b).collect(),
                None => values.clone(),
            };
            let (mean, stderr) = mean_and_stderr(&scaled);
            FinalRow {
                policy: kind.name().to_string(),
                scale: scale.to_string(),
                mean,
                stderr,
                band_low: mean - Z95 * stderr,
                band_high: mean + Z95 * stderr,
                replications: scaled.len(),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for a in &rows {
        for b in &rows {
            if a.policy == b.policy {
                continue;
            }
            pairwise.push(PairwiseRow {
                policy: a.policy.clone(),
                baseline: b.policy.clone(),
                percent_diff: percent_diff(a.mean, b.mean),
            });
        }
    }
    FinalTable { rows, pairwise }
}

/// `100·(a − b)/b`, or `None` when `b` is 0.
pub fn percent_diff(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (a - b) / b)
}

pub fn write_final_csv(table: &FinalTable, final_path: &Path, pairwise_path: &Path) -> Result<(), ReportError> {
    write_rows(final_path, &FINAL_HEADER, &table.rows)?;
    write_rows(pairwise_path, &PAIRWISE_HEADER, &table.pairwise)
}

pub fn read_final_csv(path: &Path) -> Result<Vec<FinalRow>, ReportError> {
    read_rows(path, &FINAL_HEADER)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub policy: String,
    pub replication: u64,
    pub seconds: f64,
}

pub fn write_runtime_csv(rows: &[RuntimeRow], path: &Path) -> Result<(), ReportError> {
    write_rows(path, &RUNTIME_HEADER, rows)
}

pub const TUNING_HEADER: [&str; 6] = ["policy", "replication", "v", "lambda", "regret", "selected"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub policy: String,
    pub replication: u64,
    pub v: f64,
    pub lambda: f64,
    pub regret: f64,
    pub selected: bool,
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ReportError::Mismatch(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// File name of the trace of `policy` in replication `r`.
pub fn trace_file_name(policy: PolicyKind, replication: u64) -> String {
    format!("{}-rep{replication}.csv", policy.name())
}

/// Writes the output tree of a bench or run:
///
/// ```text
/// env/rep<r>.json        environment snapshot
/// env/rep<r>.edges       edge list
/// traces/<policy>-rep<r>.csv
/// tuning.csv             every grid cell and the selected one
/// summary.csv            checkpoint curves
/// final.csv, pairwise.csv
/// diagnostics.json       per-run Ψ and coverage
/// runtime.csv            wall-clock seconds, only when `timing` is set
/// ```
///
/// Everything except `runtime.csv` is a pure function of the result.
pub fn write_bench(
    result: &BenchResult,
    config: &ExperimentConfig,
    dir: &Path,
    timing: bool,
) -> Result<(), ReportError> {
    let env_dir = dir.join("env");
    std::fs::create_dir_all(&env_dir)?;
    for rep in &result.replications {
        let snapshot = rep.env.to_snapshot(rep.seed);
        write_json(&snapshot, &env_dir.join(format!("rep{}.json", rep.replication)))?;
        std::fs::write(
            env_dir.join(format!("rep{}.edges", rep.replication)),
            rep.env.graph.to_edge_list(),
        )?;
    }
    if config.write_traces {
        let trace_dir = dir.join("traces");
        std::fs::create_dir_all(&trace_dir)?;
        for rep in &result.replications {
            for run in &rep.runs {
                write_trace_csv(&run.trace, &trace_dir.join(trace_file_name(run.kind, rep.replication)))?;
            }
        }
    }

    let mut tuning = Vec::new();
    for rep in &result.replications {
        for run in &rep.runs {
            let Some(t) = &run.tuning else { continue };
            for &((v, lambda), regret) in &t.cells {
                tuning.push(TuningRow {
                    policy: run.kind.name().to_string(),
                    replication: rep.replication,
                    v,
                    lambda,
                    regret,
                    selected: v == t.v && lambda == t.lambda,
                });
            }
        }
    }
    write_rows(&dir.join("tuning.csv"), &TUNING_HEADER, &tuning)?;

    let checkpoints = config.checkpoint_rounds();
    let summaries: Vec<PolicySummary> = result
        .policies()
        .into_iter()
        .map(|k| summarize_policy(k, &result.traces(k), &checkpoints))
        .collect();
    write_summary_csv(&summary_rows(&summaries)?, &dir.join("summary.csv"))?;

    let finals: Vec<(PolicyKind, Vec<f64>)> = result
        .policies()
        .into_iter()
        .map(|k| (k, result.traces(k).iter().map(|t| t.final_regret()).collect()))
        .collect();
    let random = finals.iter().find(|(k, _)| *k == PolicyKind::Random).map(|(_, v)| v.as_slice());
    let table = summarize_final(&finals, random);
    write_final_csv(&table, &dir.join("final.csv"), &dir.join("pairwise.csv"))?;

    write_json(&diagnostics(result, config.delta), &dir.join("diagnostics.json"))?;

    if timing {
        let rows: Vec<RuntimeRow> = result
            .replications
            .iter()
            .flat_map(|rep| {
                rep.runs.iter().map(move |run| RuntimeRow {
                    policy: run.kind.name().to_string(),
                    replication: rep.replication,
                    seconds: run.trace.elapsed.as_secs_f64(),
                })
            })
            .collect();
        write_runtime_csv(&rows, &dir.join("runtime.csv"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RoundRecord;
    use crate::policies::PsiTerms;
    use std::time::Duration;

    fn trace(policy: PolicyKind, regrets: &[f64]) -> Trace {
        let mut cum = 0.0;
        let records = regrets
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                cum += r;
                RoundRecord {
                    t: i as u64 + 1,
                    user: i % 3,
                    arm: 0,
                    optimal_arm: 1,
                    reward: -0.1 * i as f64 + 1.0 / 3.0,
                    regret: r,
                    cum_regret: cum,
                    psi: (i % 2 == 0).then_some(PsiTerms {
                        gamma_norm: 0.1 / 7.0,
                        gram_norm: 0.3 + 1e-17,
                    }),
                    worst_regret: r,
                    coverage_ratio: None,
                }
            })
            .collect();
        Trace {
            policy,
            replication: 2,
            records,
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(&trace(PolicyKind::Random, &[]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), TRACE_HEADER.join(",") + "\n");
        assert!(read_trace_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn trace_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let tr = trace(PolicyKind::SemiGraphTs, &[0.1, 1e-300, 0.7 / 3.0, 0.0, std::f64::consts::PI]);
        write_trace_csv(&tr, &path).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back, trace_rows(&tr));
        assert_eq!(back[0].user, 1);
        assert_eq!(back[1].psi_num, None);
        let first = std::fs::read(&path).unwrap();
        write_trace_csv(&tr, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn stderr_uses_sample_deviation() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn band_half_width_recomputes_from_finals() {
        let finals = [10.0, 12.0, 11.5, 9.0, 13.0];
        let traces: Vec<Trace> = finals.iter().map(|&f| trace(PolicyKind::LinTsInd, &[f])).collect();
        let refs: Vec<&Trace> = traces.iter().collect();
        let s = summarize_policy(PolicyKind::LinTsInd, &refs, &[1]);
        let (lo, hi) = s.points[0].band();
        let mean = finals.iter().sum::<f64>() / 5.0;
        let sd = (finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(((hi - lo) / 2.0 - 1.96 * sd / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_replication_has_zero_band() {
        let tr = trace(PolicyKind::LinTsInd, &[0.5, 0.25]);
        let s = summarize_policy(PolicyKind::LinTsInd, &[&tr], &[1, 2]);
        for p in &s.points {
            let (lo, hi) = p.band();
            assert_eq!(lo, hi);
        }
    }

    #[test]
    fn normalization_examples() {
        let random = trace(PolicyKind::Random, &[0.0, 0.5, 0.5, 1.0]);
        let oracle = trace(PolicyKind::Oracle, &[0.0; 4]);
        let half = trace(PolicyKind::LinTsInd, &[0.0, 0.25, 0.25, 0.5]);
        let cps = [1, 2, 3, 4];
        let sr = summarize_policy(PolicyKind::Random, &[&random], &cps);
        let so = summarize_policy(PolicyKind::Oracle, &[&oracle], &cps);
        let sh = summarize_policy(PolicyKind::LinTsInd, &[&half], &cps);
        // t = 1 dropped: random regret is 0 there
        assert_eq!(relative_to_random(&sr, &sr).unwrap(), vec![(2, 1.0), (3, 1.0), (4, 1.0)]);
        assert!(relative_to_random(&so, &sr).unwrap().iter().all(|&(_, v)| v == 0.0));
        assert!(relative_to_random(&sh, &sr).unwrap().iter().all(|&(_, v)| v == 0.5));
        let fewer = summarize_policy(PolicyKind::Oracle, &[&oracle], &[1, 2]);
        assert!(relative_to_random(&fewer, &sr).is_err());
    }

    #[test]
    fn normalization_commutes_with_checkpoint_selection() {
        let random = trace(PolicyKind::Random, &[0.3, 0.5, 0.2, 1.0, 0.1, 0.4]);
        let other = trace(PolicyKind::GraphUcb, &[0.1, 0.2, 0.0, 0.3, 0.1, 0.0]);
        let all: Vec<u64> = (1..=6).collect();
        let full = relative_to_random(
            &summarize_policy(PolicyKind::GraphUcb, &[&other], &all),
            &summarize_policy(PolicyKind::Random, &[&random], &all),
        )
        .unwrap();
        let picked = relative_to_random(
            &summarize_policy(PolicyKind::GraphUcb, &[&other], &[2, 5]),
            &summarize_policy(PolicyKind::Random, &[&random], &[2, 5]),
        )
        .unwrap();
        assert_eq!(picked, vec![full[1], full[4]]);
    }

    #[test]
    fn summary_csv_schema_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let random = trace(PolicyKind::Random, &[0.0, 0.5]);
        let other = trace(PolicyKind::LinTsSin, &[0.1, 0.1]);
        let rows = summary_rows(&[
            summarize_policy(PolicyKind::LinTsSin, &[&other], &[1, 2]),
            summarize_policy(PolicyKind::Random, &[&random], &[1, 2]),
        ])
        .unwrap();
        assert_eq!(rows[0].normalized_mean, None);
        assert_eq!(rows[1].normalized_mean, Some(0.2 / 0.5));
        write_summary_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_HEADER.join(","));
        assert_eq!(read_summary_csv(&path).unwrap(), rows);
    }

    #[test]
    fn final_table_examples() {
        let t = summarize_final(
            &[(PolicyKind::SemiGraphTs, vec![0.45]), (PolicyKind::SemiTsInd, vec![0.50])],
            None,
        );
        let a_vs_b = t
            .pairwise
            .iter()
            .find(|p| p.policy == "semigraphts" && p.baseline == "semits-ind")
            .unwrap();
        assert!((a_vs_b.percent_diff.unwrap() + 10.0).abs() < 1e-12);
        let same = summarize_final(&[(PolicyKind::LinTsInd, vec![2.0, 3.0]), (PolicyKind::LinTsSin, vec![2.0, 3.0])], None);
        assert!(same.pairwise.iter().all(|p| p.percent_diff == Some(0.0)));
        let norm = summarize_final(&[(PolicyKind::LinTsInd, vec![2.0, 3.0])], Some(&[4.0, 6.0]));
        assert_eq!(norm.rows[0].scale, "normalized");
        assert_eq!(norm.rows[0].mean, 0.5);
        assert_eq!(norm.rows[0].stderr, 0.0);

        let dir = tempfile::tempdir().unwrap();
        let (f, p) = (dir.path().join("final.csv"), dir.path().join("pairwise.csv"));
        write_final_csv(&t, &f, &p).unwrap();
        assert_eq!(read_final_csv(&f).unwrap(), t.rows);
        let header = std::fs::read_to_string(&p).unwrap();
        assert_eq!(header.lines().next().unwrap(), PAIRWISE_HEADER.join(","));
    }

    #[test]
    fn bench_tree_is_reproducible() {
        use crate::environment::EnvSpec;
        use crate::harness::{replicate, GridSpec};
        let config = ExperimentConfig {
            seed: 3,
            t0: 20,
            horizon: 60,
            replications: 2,
            policies: vec![PolicyKind::SemiGraphTs, PolicyKind::GraphUcb, PolicyKind::Random],
            mc_samples: 10,
            checkpoints: 10,
            env: EnvSpec {
                n: 3,
                arms: 2,
                dim: 4,
                ..EnvSpec::default()
            },
            grid: GridSpec {
                v: vec![0.1, 1.0],
                lambda: vec![1.0],
            },
            ..ExperimentConfig::default()
        };
        let write = || {
            let dir = tempfile::tempdir().unwrap();
            write_bench(&replicate(&config).unwrap(), &config, dir.path(), false).unwrap();
            let mut files = Vec::new();
            for sub in ["", "env", "traces"] {
                let mut names: Vec<_> = std::fs::read_dir(dir.path().join(sub))
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .filter(|p| p.is_file())
                    .collect();
                names.sort();
                for p in names {
                    files.push((p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap()));
                }
            }
            files
        };
        let a = write();
        assert_eq!(a.len(), 5 + 4 + 6);
        assert_eq!(a, write());
        let summary = a.iter().find(|(n, _)| n == "summary.csv").unwrap();
        let text = String::from_utf8(summary.1.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 10);
        let tuning = a.iter().find(|(n, _)| n == "tuning.csv").unwrap();
        assert_eq!(String::from_utf8(tuning.1.clone()).unwrap().lines().count(), 1 + 2 * 2 * 2);
    }
}
