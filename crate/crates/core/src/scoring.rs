//! Cumulative task score, run averaging, and aggregate statistics.
//!
//! Score(k) = 20·[compiles] + 100·[correct] + 100·s_k·[correct].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eval::{TaskEvalResult, TaskResultRecord};

pub const COMPILE_POINTS: f64 = 20.0;
pub const CORRECT_POINTS: f64 = 100.0;
pub const SPEEDUP_POINTS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("correct kernel reported as not compiled")]
    CorrectWithoutCompile,
    #[error("incorrect kernel carries speedup {0}")]
    SpeedupWithoutCorrectness(f64),
    #[error("speedup {0} is negative or not finite")]
    BadSpeedup(f64),
    #[error("runs for several tasks mixed: {0} and {1}")]
    MixedTasks(String, String),
    #[error("nothing to aggregate")]
    Empty,
}

pub fn score_task(compiled: bool, correct: bool, s_k: f64) -> Result<f64, ScoreError> {
    if !(s_k.is_finite() && s_k >= 0.0) {
        return Err(ScoreError::BadSpeedup(s_k));
    }
    if correct && !compiled {
        return Err(ScoreError::CorrectWithoutCompile);
    }
    if !correct && s_k != 0.0 {
        return Err(ScoreError::SpeedupWithoutCorrectness(s_k));
    }
    let mut score = 0.0;
    if compiled {
        score += COMPILE_POINTS;
    }
    if correct {
        score += CORRECT_POINTS;
        score += SPEEDUP_POINTS * s_k;
    }
    Ok(score)
}

/// One (task, run) outcome reduced to what scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub run_index: u32,
    pub compiled: bool,
    pub correct: bool,
    pub s_k: f64,
    pub score: f64,
}

impl TaskScore {
    pub fn new(
        task_id: impl Into<String>,
        run_index: u32,
        compiled: bool,
        correct: bool,
        s_k: f64,
    ) -> Result<Self, ScoreError> {
        Ok(TaskScore {
            task_id: task_id.into(),
            run_index,
            compiled,
            correct,
            s_k,
            score: score_task(compiled, correct, s_k)?,
        })
    }
}

impl TryFrom<&TaskEvalResult> for TaskScore {
    type Error = ScoreError;

    fn try_from(r: &TaskEvalResult) -> Result<Self, Self::Error> {
        TaskScore::new(&r.task_id, r.run_index, r.compiled, r.correct, r.task_speedup)
    }
}

impl TryFrom<&TaskResultRecord> for TaskScore {
    type Error = ScoreError;

    fn try_from(r: &TaskResultRecord) -> Result<Self, Self::Error> {
        TaskScore::new(&r.task_id, r.run_index, r.compiled, r.correct, r.mean_speedup)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTaskAverage {
    pub task_id: String,
    pub runs: usize,
    pub compile_frac: f64,
    pub correct_frac: f64,
    pub mean_s_k: f64,
    pub mean_score: f64,
}

/// Averages one task's runs. Failed runs contribute `s_k = 0`; the score
/// is the mean of per-run scores.
pub fn average_runs(runs: &[TaskScore]) -> Result<PerTaskAverage, ScoreError> {
    let first = runs.first().ok_or(ScoreError::Empty)?;
    if let Some(other) = runs.iter().find(|r| r.task_id != first.task_id) {
        return Err(ScoreError::MixedTasks(first.task_id.clone(), other.task_id.clone()));
    }
    let n = runs.len() as f64;
    let count = |f: fn(&TaskScore) -> bool| runs.iter().filter(|r| f(r)).count() as f64;
    Ok(PerTaskAverage {
        task_id: first.task_id.clone(),
        runs: runs.len(),
        compile_frac: count(|r| r.compiled) / n,
        correct_frac: count(|r| r.correct) / n,
        mean_s_k: mean(&runs.iter().map(|r| r.s_k).collect::<Vec<_>>()).unwrap_or(0.0),
        mean_score: mean(&runs.iter().map(|r| r.score).collect::<Vec<_>>()).unwrap_or(0.0),
    })
}

/// Groups scores by task id (sorted) and averages each group.
pub fn average_by_task(scores: &[TaskScore]) -> Result<Vec<PerTaskAverage>, ScoreError> {
    let mut groups: BTreeMap<&str, Vec<TaskScore>> = BTreeMap::new();
    for s in scores {
        groups.entry(s.task_id.as_str()).or_default().push(s.clone());
    }
    groups.values().map(|g| average_runs(g)).collect()
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (divisor n-1); absent below two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Geometric mean over strictly positive values; absent if there are none.
pub fn geometric_mean(xs: &[f64]) -> Option<f64> {
    let logs: Vec<f64> = xs.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    mean(&logs).map(f64::exp)
}

/// Percentage of values with `x >= p`.
pub fn fast_p(xs: &[f64], p: f64) -> Option<f64> {
    (!xs.is_empty()).then(|| 100.0 * xs.iter().filter(|&&x| x >= p).count() as f64 / xs.len() as f64)
}

/// Percentile `q` in [0, 1] with linear interpolation between closest ranks
/// (rank = q·(n-1)).
pub fn percentile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub task_std: Option<f64>,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
}

pub fn distribution(speedups: &[f64]) -> Option<DistributionStats> {
    Some(DistributionStats {
        task_std: sample_std(speedups),
        p25: percentile(speedups, 0.25)?,
        p75: percentile(speedups, 0.75)?,
        p90: percentile(speedups, 0.90)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastP {
    pub p: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub tasks: usize,
    pub compilation_rate: f64,
    pub correctness_rate: f64,
    pub mean_speedup: f64,
    pub sigma_r: Option<f64>,
    pub mean_score: f64,
    pub geo_mean: Option<f64>,
    pub geo_sigma_r: Option<f64>,
    pub fast_p: Vec<FastP>,
    pub distribution: DistributionStats,
}

impl AggregateMetrics {
    pub fn fast(&self, p: f64) -> Option<f64> {
        self.fast_p.iter().find(|f| f.p == p).map(|f| f.percent)
    }
}

/// Per-run aggregate means, one entry per run index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSpread {
    pub mean_speedups: Vec<f64>,
    pub geo_means: Vec<f64>,
}

/// Computes each run's mean speedup over all tasks and geometric mean over
/// that run's correct tasks, ordered by run index.
pub fn run_spread(scores: &[TaskScore]) -> RunSpread {
    let mut by_run: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for s in scores {
        by_run.entry(s.run_index).or_default().push(s.s_k);
    }
    let mut spread = RunSpread::default();
    for speedups in by_run.values() {
        spread.mean_speedups.extend(mean(speedups));
        spread.geo_means.extend(geometric_mean(speedups));
    }
    spread
}

pub const DEFAULT_P_VALUES: [f64; 2] = [1.0, 2.0];

pub fn aggregate(
    per_task: &[PerTaskAverage],
    runs: &RunSpread,
    p_values: &[f64],
) -> Result<AggregateMetrics, ScoreError> {
    if per_task.is_empty() {
        return Err(ScoreError::Empty);
    }
    let col = |f: fn(&PerTaskAverage) -> f64| per_task.iter().map(f).collect::<Vec<_>>();
    let speedups = col(|t| t.mean_s_k);
    Ok(AggregateMetrics {
        tasks: per_task.len(),
        compilation_rate: 100.0 * mean(&col(|t| t.compile_frac)).ok_or(ScoreError::Empty)?,
        correctness_rate: 100.0 * mean(&col(|t| t.correct_frac)).ok_or(ScoreError::Empty)?,
        mean_speedup: mean(&speedups).ok_or(ScoreError::Empty)?,
        sigma_r: sample_std(&runs.mean_speedups),
        mean_score: mean(&col(|t| t.mean_score)).ok_or(ScoreError::Empty)?,
        geo_mean: geometric_mean(&speedups),
        geo_sigma_r: sample_std(&runs.geo_means),
        fast_p: p_values
            .iter()
            .map(|&p| FastP {
                p,
                percent: fast_p(&speedups, p).unwrap_or(0.0),
            })
            .collect(),
        distribution: distribution(&speedups).ok_or(ScoreError::Empty)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_values() {
        assert_eq!(score_task(false, false, 0.0), Ok(0.0));
        assert_eq!(score_task(true, false, 0.0), Ok(20.0));
        assert_eq!(score_task(true, true, 1.0), Ok(220.0));
        assert_eq!(score_task(true, true, 2.0), Ok(320.0));
        assert_eq!(score_task(true, true, 1.23), Ok(243.0));
    }

    #[test]
    fn score_preconditions() {
        assert_eq!(score_task(false, true, 1.0), Err(ScoreError::CorrectWithoutCompile));
        assert_eq!(
            score_task(true, false, 1.5),
            Err(ScoreError::SpeedupWithoutCorrectness(1.5))
        );
        assert!(score_task(true, true, -1.0).is_err());
        assert!(score_task(true, true, f64::NAN).is_err());
    }

    fn ts(task: &str, run: u32, compiled: bool, correct: bool, s: f64) -> TaskScore {
        TaskScore::new(task, run, compiled, correct, s).unwrap()
    }

    #[test]
    fn averaging_runs() {
        let a = average_runs(&[
            ts("t", 1, true, true, 1.0),
            ts("t", 2, true, true, 2.0),
            ts("t", 3, true, true, 3.0),
        ])
        .unwrap();
        assert_eq!(a.mean_s_k, 2.0);
        assert_eq!(a.correct_frac, 1.0);
        assert_eq!(a.mean_score, 320.0);
        let b = average_runs(&[
            ts("t", 1, true, false, 0.0),
            ts("t", 2, true, false, 0.0),
            ts("t", 3, false, false, 0.0),
        ])
        .unwrap();
        assert_eq!(b.compile_frac, 2.0 / 3.0);
        assert!(matches!(
            average_runs(&[ts("a", 1, true, true, 1.0), ts("b", 1, true, true, 1.0)]),
            Err(ScoreError::MixedTasks(..))
        ));
        assert_eq!(average_runs(&[]), Err(ScoreError::Empty));
    }

    #[test]
    fn one_failure_in_seventy_two_runs() {
        let mut scores = Vec::new();
        for t in 0..24 {
            for r in 1..=3 {
                let fail = t == 7 && r == 2;
                scores.push(ts(
                    &format!("task_{t:02}"),
                    r,
                    true,
                    !fail,
                    if fail { 0.0 } else { 1.0 },
                ));
            }
        }
        let per_task = average_by_task(&scores).unwrap();
        let agg = aggregate(&per_task, &run_spread(&scores), &DEFAULT_P_VALUES).unwrap();
        assert_eq!(format!("{:.1}", agg.correctness_rate), "98.6");
        assert!((agg.correctness_rate - 100.0 * 71.0 / 72.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let pt = |id: &str, s: f64| PerTaskAverage {
            task_id: id.into(),
            runs: 1,
            compile_frac: 1.0,
            correct_frac: if s > 0.0 { 1.0 } else { 0.0 },
            mean_s_k: s,
            mean_score: if s > 0.0 { 120.0 + 100.0 * s } else { 20.0 },
        };
        let agg = aggregate(
            &[pt("a", 2.0), pt("b", 0.0), pt("c", 4.0)],
            &RunSpread::default(),
            &[1.0],
        )
        .unwrap();
        assert_eq!(agg.mean_speedup, 2.0);
        assert!(agg.sigma_r.is_none());
        let agg = aggregate(
            &[pt("a", 2.0), pt("b", 8.0), pt("c", 0.0)],
            &RunSpread::default(),
            &[1.0],
        )
        .unwrap();
        assert!((agg.geo_mean.unwrap() - 4.0).abs() < 1e-12);
        let agg = aggregate(
            &[pt("a", 0.9), pt("b", 1.0), pt("c", 2.5)],
            &RunSpread::default(),
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(format!("{:.1}", agg.fast(1.0).unwrap()), "66.7");
        assert_eq!(sample_std(&[2.0, 2.5, 3.0]), Some(0.5));
        let incorrect = aggregate(&[pt("a", 0.0)], &RunSpread::default(), &[1.0]).unwrap();
        assert!(incorrect.geo_mean.is_none());
        assert_eq!(aggregate(&[], &RunSpread::default(), &[1.0]), Err(ScoreError::Empty));
    }

    #[test]
    fn percentiles_linear() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&xs, 0.25), Some(1.75));
        assert_eq!(percentile(&xs, 0.75), Some(3.25));
        assert!((percentile(&xs, 0.90).unwrap() - 3.7).abs() < 1e-12);
        let d = distribution(&[1.5, 1.5, 1.5]).unwrap();
        assert_eq!(d.task_std, Some(0.0));
        assert_eq!(distribution(&[2.0]).unwrap().task_std, None);
    }

    #[test]
    fn run_spread_groups_by_run() {
        let scores = vec![
            ts("a", 1, true, true, 2.0),
            ts("b", 1, true, true, 2.0),
            ts("a", 2, true, true, 2.0),
            ts("b", 2, true, true, 3.0),
            ts("a", 3, true, true, 4.0),
            ts("b", 3, true, false, 0.0),
        ];
        let spread = run_spread(&scores);
        assert_eq!(spread.mean_speedups, vec![2.0, 2.5, 2.0]);
        assert_eq!(spread.geo_means.len(), 3);
        assert!((spread.geo_means[2] - 4.0).abs() < 1e-12);
    }
}
