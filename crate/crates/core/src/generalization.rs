//! Unseen-configuration protocol: the optimized and original kernels are
//! run side by side on held-out configs, each config is classified into a
//! correctness quadrant, and speedups on configs both sides pass are
//! compared against the seen-config speedup.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{self, Phase, PhaseOptions, PERF_RESULT_FILE};
use crate::task::TaskConfig;
use crate::unseen::{GeneralizationCategory, UnseenConfig, UnseenConfigSet, TESTCASE_FILE_ENV};
use crate::workspace::Workspace;

/// Single-config file written for each evaluation round.
pub const ACTIVE_CONFIG_FILE: &str = ".arena/unseen_active.yaml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantLabel {
    BothPass,
    OptRegression,
    BothFail,
    OptImprovement,
}

impl QuadrantLabel {
    pub const ALL: [QuadrantLabel; 4] = [
        QuadrantLabel::BothPass,
        QuadrantLabel::OptImprovement,
        QuadrantLabel::BothFail,
        QuadrantLabel::OptRegression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuadrantLabel::BothPass => "both_pass",
            QuadrantLabel::OptRegression => "opt_regression",
            QuadrantLabel::BothFail => "both_fail",
            QuadrantLabel::OptImprovement => "opt_improvement",
        }
    }

    /// Precedence for a single task-level label: a regression outranks
    /// everything.
    fn precedence(self) -> u8 {
        match self {
            QuadrantLabel::OptRegression => 3,
            QuadrantLabel::OptImprovement => 2,
            QuadrantLabel::BothPass => 1,
            QuadrantLabel::BothFail => 0,
        }
    }
}

impl fmt::Display for QuadrantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_quadrant(orig_correct: bool, opt_correct: bool) -> QuadrantLabel {
    match (orig_correct, opt_correct) {
        (true, true) => QuadrantLabel::BothPass,
        (true, false) => QuadrantLabel::OptRegression,
        (false, false) => QuadrantLabel::BothFail,
        (false, true) => QuadrantLabel::OptImprovement,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigOutcome {
    pub name: String,
    pub category: GeneralizationCategory,
    pub orig_correct: bool,
    pub opt_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orig_time_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_time_ms: Option<f64>,
    pub quadrant: QuadrantLabel,
}

impl ConfigOutcome {
    pub fn new(
        name: impl Into<String>,
        category: GeneralizationCategory,
        orig: (bool, Option<f64>),
        opt: (bool, Option<f64>),
    ) -> Self {
        ConfigOutcome {
            name: name.into(),
            category,
            orig_correct: orig.0,
            opt_correct: opt.0,
            orig_time_ms: orig.1.filter(|_| orig.0),
            opt_time_ms: opt.1.filter(|_| opt.0),
            quadrant: classify_quadrant(orig.0, opt.0),
        }
    }

    /// orig/opt time ratio, when both sides passed and were timed.
    pub fn unseen_speedup(&self) -> Option<f64> {
        match (self.quadrant, self.orig_time_ms, self.opt_time_ms) {
            (QuadrantLabel::BothPass, Some(o), Some(p)) if p > 0.0 => Some(o / p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnseenEvaluation {
    pub outcomes: Vec<ConfigOutcome>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

struct Side<'a> {
    label: &'static str,
    root: &'a Path,
    compiled: bool,
}

fn run_config(
    side: &Side<'_>,
    cfg: &TaskConfig,
    config: &UnseenConfig,
    base: &PhaseOptions,
    diags: &mut Vec<String>,
) -> (bool, Option<f64>) {
    if !side.compiled {
        return (false, None);
    }
    let active = side.root.join(ACTIVE_CONFIG_FILE);
    if let Some(dir) = active.parent() {
        let _ = std::fs::create_dir_all(dir);
    }
    if let Err(e) = std::fs::write(&active, UnseenConfigSet::single_yaml(config)) {
        diags.push(format!(
            "{} `{}`: cannot write active config: {e}",
            side.label, config.name
        ));
        return (false, None);
    }
    let mut opts = base.clone();
    opts.env.insert(TESTCASE_FILE_ENV.into(), active.display().to_string());
    opts.log_prefix = format!("unseen_{}_", config.name);

    let correctness = eval::run_phase(side.root, cfg.commands(Phase::Correctness), Phase::Correctness, &opts);
    if !correctness.passed {
        return (false, None);
    }
    let _ = std::fs::remove_file(side.root.join(PERF_RESULT_FILE));
    let perf = eval::run_phase(side.root, cfg.commands(Phase::Performance), Phase::Performance, &opts);
    let time = if perf.passed {
        match eval::parse_perf_output(side.root) {
            Ok(cases) => cases
                .iter()
                .find(|c| c.name == config.name)
                .or_else(|| (cases.len() == 1).then(|| &cases[0]))
                .map(|c| c.mean_ms),
            Err(_) => None,
        }
    } else {
        None
    };
    if time.is_none() {
        diags.push(format!(
            "{} `{}`: correct but no timing; excluded from speed comparison",
            side.label, config.name
        ));
    }
    (true, time)
}

/// Runs every config through both workspaces. Both must already contain the
/// injected config document; each round narrows `ARENA_TESTCASE_FILE` to a
/// single config. The two sides are run one after the other, never
/// concurrently.
pub fn evaluate_unseen(
    orig_ws: &Workspace,
    opt_ws: &Workspace,
    cfg: &TaskConfig,
    configs: &UnseenConfigSet,
    opts: &PhaseOptions,
) -> UnseenEvaluation {
    let mut diagnostics = Vec::new();
    let mut compile = |label: &'static str, ws: &Workspace| {
        let mut o = opts.clone();
        o.log_prefix = "unseen_".into();
        let out = eval::run_phase(&ws.root_path, cfg.commands(Phase::Compile), Phase::Compile, &o);
        if !out.passed {
            diagnostics.push(format!("{label} kernel failed to compile; incorrect on every config"));
        }
        out.passed
    };
    let orig = Side {
        label: "original",
        root: &orig_ws.root_path,
        compiled: compile("original", orig_ws),
    };
    let opt = Side {
        label: "optimized",
        root: &opt_ws.root_path,
        compiled: compile("optimized", opt_ws),
    };

    let outcomes = configs
        .configs
        .iter()
        .map(|config| {
            let o = run_config(&orig, cfg, config, opts, &mut diagnostics);
            let p = run_config(&opt, cfg, config, opts, &mut diagnostics);
            ConfigOutcome::new(&config.name, config.category, o, p)
        })
        .collect();
    UnseenEvaluation { outcomes, diagnostics }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub both_pass: usize,
    pub opt_regression: usize,
    pub both_fail: usize,
    pub opt_improvement: usize,
}

impl QuadrantCounts {
    pub fn from_outcomes(outcomes: &[ConfigOutcome]) -> Self {
        let mut c = QuadrantCounts::default();
        for o in outcomes {
            *c.slot(o.quadrant) += 1;
        }
        c
    }

    fn slot(&mut self, q: QuadrantLabel) -> &mut usize {
        match q {
            QuadrantLabel::BothPass => &mut self.both_pass,
            QuadrantLabel::OptRegression => &mut self.opt_regression,
            QuadrantLabel::BothFail => &mut self.both_fail,
            QuadrantLabel::OptImprovement => &mut self.opt_improvement,
        }
    }

    pub fn get(&self, q: QuadrantLabel) -> usize {
        let mut copy = *self;
        *copy.slot(q)
    }

    pub fn total(&self) -> usize {
        self.both_pass + self.opt_regression + self.both_fail + self.opt_improvement
    }

    pub fn add(&mut self, other: &QuadrantCounts) {
        for q in QuadrantLabel::ALL {
            *self.slot(q) += other.get(q);
        }
    }

    pub fn fraction(&self, q: QuadrantLabel) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.get(q) as f64 / total as f64)
    }

    /// P(opt correct | orig correct); absent when the original never passed.
    pub fn conditional_correctness(&self) -> Option<f64> {
        let orig_correct = self.both_pass + self.opt_regression;
        (orig_correct > 0).then(|| self.both_pass as f64 / orig_correct as f64)
    }

    /// Most safety-relevant label present.
    pub fn headline(&self) -> Option<QuadrantLabel> {
        QuadrantLabel::ALL
            .into_iter()
            .filter(|&q| self.get(q) > 0)
            .max_by_key(|q| q.precedence())
    }
}

/// (s̄_seen − s̄_unseen) / s̄_seen; absent unless s̄_seen > 0.
pub fn generalization_gap(s_bar_seen: f64, s_bar_unseen: f64) -> Option<f64> {
    (s_bar_seen > 0.0 && s_bar_seen.is_finite()).then(|| (s_bar_seen - s_bar_unseen) / s_bar_seen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub counts: QuadrantCounts,
    pub conditional_correctness: Option<f64>,
    pub s_bar_seen: f64,
    pub s_bar_unseen: Option<f64>,
    pub delta_g: Option<f64>,
    pub headline: Option<QuadrantLabel>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl GeneralizationReport {
    pub fn fraction(&self, q: QuadrantLabel) -> Option<f64> {
        self.counts.fraction(q)
    }
}

pub fn summarize(outcomes: &[ConfigOutcome], s_bar_seen: f64) -> GeneralizationReport {
    let counts = QuadrantCounts::from_outcomes(outcomes);
    let ratios: Vec<f64> = outcomes.iter().filter_map(ConfigOutcome::unseen_speedup).collect();
    let s_bar_unseen = crate::scoring::mean(&ratios);
    let mut diagnostics = Vec::new();
    let delta_g = s_bar_unseen.and_then(|u| {
        let gap = generalization_gap(s_bar_seen, u);
        if gap.is_none() {
            diagnostics.push(format!("seen speedup {s_bar_seen} is not positive; gap undefined"));
        }
        gap
    });
    GeneralizationReport {
        counts,
        conditional_correctness: counts.conditional_correctness(),
        s_bar_seen,
        s_bar_unseen,
        delta_g,
        headline: counts.headline(),
        diagnostics,
    }
}

/// Micro-averaged summary across several (task, run) reports: quadrant
/// counts are pooled; s̄_seen and s̄_unseen average over the reports that
/// have an unseen speedup.
pub fn pool(reports: &[GeneralizationReport]) -> Option<GeneralizationReport> {
    if reports.is_empty() {
        return None;
    }
    let mut counts = QuadrantCounts::default();
    for r in reports {
        counts.add(&r.counts);
    }
    let with_gap: Vec<&GeneralizationReport> = reports.iter().filter(|r| r.s_bar_unseen.is_some()).collect();
    let seen = crate::scoring::mean(&with_gap.iter().map(|r| r.s_bar_seen).collect::<Vec<_>>());
    let unseen = crate::scoring::mean(&with_gap.iter().filter_map(|r| r.s_bar_unseen).collect::<Vec<_>>());
    Some(GeneralizationReport {
        counts,
        conditional_correctness: counts.conditional_correctness(),
        s_bar_seen: seen.unwrap_or(0.0),
        s_bar_unseen: unseen,
        delta_g: seen.zip(unseen).and_then(|(s, u)| generalization_gap(s, u)),
        headline: counts.headline(),
        diagnostics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use GeneralizationCategory::*;

    #[test]
    fn quadrants() {
        assert_eq!(classify_quadrant(true, true), QuadrantLabel::BothPass);
        assert_eq!(classify_quadrant(true, false), QuadrantLabel::OptRegression);
        assert_eq!(classify_quadrant(false, false), QuadrantLabel::BothFail);
        assert_eq!(classify_quadrant(false, true), QuadrantLabel::OptImprovement);
    }

    #[test]
    fn conditional_correctness_counts() {
        // Original passes 4 of 6; optimized passes 3 of those 4.
        let outcomes = vec![
            ConfigOutcome::new("a", EdgeCase, (true, Some(1.0)), (true, Some(0.5))),
            ConfigOutcome::new("b", ScaleUp, (true, Some(1.0)), (true, Some(0.5))),
            ConfigOutcome::new("c", ScaleDown, (true, Some(1.0)), (true, Some(0.5))),
            ConfigOutcome::new("d", AlignmentStress, (true, Some(1.0)), (false, None)),
            ConfigOutcome::new("e", Asymmetric, (false, None), (false, None)),
            ConfigOutcome::new("f", ProductionRealistic, (false, None), (true, Some(1.0))),
        ];
        let r = summarize(&outcomes, 2.0);
        assert_eq!(r.conditional_correctness, Some(0.75));
        assert_eq!(r.s_bar_unseen, Some(2.0));
        assert_eq!(r.delta_g, Some(0.0));
        assert_eq!(r.headline, Some(QuadrantLabel::OptRegression));
        let total: f64 = QuadrantLabel::ALL.iter().map(|&q| r.fraction(q).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_examples() {
        assert_eq!(generalization_gap(4.0, 3.0), Some(0.25));
        assert!((generalization_gap(2.0, 2.46).unwrap() + 0.23).abs() < 1e-12);
        assert_eq!(generalization_gap(2.0, 2.0), Some(0.0));
        assert_eq!(generalization_gap(0.0, 1.0), None);
    }

    #[test]
    fn no_original_passes_means_no_conditional() {
        let outcomes = vec![ConfigOutcome::new("a", EdgeCase, (false, None), (false, None))];
        let r = summarize(&outcomes, 1.0);
        assert_eq!(r.conditional_correctness, None);
        assert_eq!(r.delta_g, None);
        assert_eq!(r.headline, Some(QuadrantLabel::BothFail));
    }

    #[test]
    fn non_positive_seen_speedup_drops_gap() {
        let outcomes = vec![ConfigOutcome::new("a", EdgeCase, (true, Some(1.0)), (true, Some(1.0)))];
        let r = summarize(&outcomes, 0.0);
        assert!(r.delta_g.is_none());
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn pooling_sums_counts() {
        let a = summarize(
            &[ConfigOutcome::new("a", EdgeCase, (true, Some(2.0)), (true, Some(1.0)))],
            2.0,
        );
        let b = summarize(
            &[ConfigOutcome::new("b", ScaleUp, (true, Some(2.0)), (false, None))],
            2.0,
        );
        let p = pool(&[a, b]).unwrap();
        assert_eq!(p.counts.total(), 2);
        assert_eq!(p.conditional_correctness, Some(0.5));
        assert_eq!(p.s_bar_unseen, Some(2.0));
        assert_eq!(p.delta_g, Some(0.0));
    }
}
