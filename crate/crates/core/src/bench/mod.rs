//! Experiment harness: runs every tool over a pair dataset under the WS and
//! WOS configurations, then aggregates detections.
//!
//! Work is split per pair and may run in parallel; results are gathered in
//! pair-id order so every output is independent of scheduling. Timing is
//! captured for reporting only and never influences a verdict.

mod metrics;
mod regression;
mod report;
mod results;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SensitiveCatalog;
use crate::explore::{
    explore_with, repetition_seed, union_traces, ExecutionTrace, ExploreError, ExploreOptions, Strategy,
    StrategyKind, DEFAULT_BUDGET, DEFAULT_REPETITIONS, DEFAULT_STEP_LIMIT,
};
use crate::ir::{AppPair, SkippedPair};
use crate::sandbox::{detect, observe, SandboxError, SandboxVerdict};
use crate::static_analysis::{static_sensitive_set, StaticCallSet};
use crate::taint::{analyze_taint, verdict_from, TaintVerdict};

pub use metrics::{
    combine_detectors, format_impact, impact, overlap_report, CombinedCount, OverlapError, OverlapRegion,
    OverlapReport,
};
pub use regression::{
    fit_design, fit_logistic, tool_column, Coefficient, Formula, RegressionError, RegressionFit, INTERCEPT,
    REPETITION, STATIC,
};
pub use report::{render_regression, render_report, Report, ToolCounts};
pub use results::{read_results, write_results, ResultsError, RunSummary, StoredResults, TaintRow};

/// Repetition number used for rows that aggregate all repetitions.
pub const UNION_REPETITION: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Markdown => "md",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Markdown => "markdown",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            _ => Err(format!("unknown output format `{s}`; expected csv, json or markdown")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tools: Vec<StrategyKind>,
    pub budget: u32,
    pub repetitions: u32,
    pub disable_static: bool,
    pub seed: u64,
    pub output_format: OutputFormat,
    pub step_limit: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tools: StrategyKind::ALL.to_vec(),
            budget: DEFAULT_BUDGET,
            repetitions: DEFAULT_REPETITIONS,
            disable_static: false,
            seed: 0,
            output_format: OutputFormat::Markdown,
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("at least one tool is required")]
    NoTools,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("tool `{0}` listed twice")]
    DuplicateTool(StrategyKind),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tools.is_empty() {
            return Err(ConfigError::NoTools);
        }
        if self.repetitions == 0 {
            return Err(ConfigError::NoRepetitions);
        }
        let mut seen = BTreeSet::new();
        for t in &self.tools {
            if !seen.insert(*t) {
                return Err(ConfigError::DuplicateTool(*t));
            }
        }
        Ok(())
    }

    /// Static-analysis settings evaluated by a run: WS then WOS, or WOS only.
    pub fn static_settings(&self) -> Vec<bool> {
        if self.disable_static {
            vec![false]
        } else {
            vec![true, false]
        }
    }
}

/// One row of `observations.csv`. `repetition` is 1-based for single runs and
/// [`UNION_REPETITION`] for the union over all repetitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tool: String,
    pub repetition: u32,
    pub static_enabled: bool,
    pub pair_id: String,
    pub detected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppTiming {
    pub app_id: String,
    pub taint_seconds: f64,
}

#[derive(Debug, Error)]
pub enum PairError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}

/// Everything produced for one pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pair_id: String,
    pub observations: Vec<Observation>,
    /// Union-of-repetitions verdicts, one per tool and static setting.
    pub verdicts: Vec<SandboxVerdict>,
    pub taint: TaintVerdict,
    pub traces: Vec<ExecutionTrace>,
    pub static_sets: Option<(StaticCallSet, StaticCallSet)>,
    pub timings: Vec<AppTiming>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub outcomes: Vec<PairOutcome>,
    pub skipped: Vec<SkippedPair>,
}

impl ExperimentResult {
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.outcomes.iter().flat_map(|o| o.observations.iter())
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &SandboxVerdict> {
        self.outcomes.iter().flat_map(|o| o.verdicts.iter())
    }

    pub fn taint_verdicts(&self) -> impl Iterator<Item = &TaintVerdict> {
        self.outcomes.iter().map(|o| &o.taint)
    }

    /// Detected-pair counts per tool for the given static setting.
    pub fn detection_counts(&self, with_static: bool) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.config.tools.iter().map(|t| (t.name().to_owned(), 0)).collect();
        for v in self.verdicts().filter(|v| v.with_static == with_static && v.detected) {
            *counts.entry(v.tool.clone()).or_default() += 1;
        }
        counts
    }
}

fn traces_for(
    pair: &AppPair,
    catalog: &SensitiveCatalog,
    config: &ExperimentConfig,
    kind: StrategyKind,
) -> (Vec<ExecutionTrace>, Vec<ExecutionTrace>) {
    let run = |app| {
        (1..=config.repetitions)
            .map(|rep| {
                let strategy = Strategy::new(kind, repetition_seed(config.seed, rep), config.budget);
                let options = ExploreOptions { step_limit: config.step_limit, repetition: rep };
                explore_with(app, catalog, &strategy, &options)
            })
            .collect::<Vec<_>>()
    };
    (run(&pair.benign), run(&pair.malign))
}

/// Run every configured tool and static setting on one pair, plus the taint
/// differencing detector.
pub fn run_pair(pair: &AppPair, catalog: &SensitiveCatalog, config: &ExperimentConfig) -> Result<PairOutcome, PairError> {
    let static_sets = (!config.disable_static)
        .then(|| (static_sensitive_set(&pair.benign, catalog), static_sensitive_set(&pair.malign, catalog)));

    let mut observations = Vec::new();
    let mut verdicts = Vec::new();
    let mut all_traces = Vec::new();
    for &kind in &config.tools {
        let tool = kind.name();
        let (benign_traces, malign_traces) = traces_for(pair, catalog, config, kind);
        let benign_dynamic = union_traces(&benign_traces)?;
        let malign_dynamic = union_traces(&malign_traces)?;
        for with_static in config.static_settings() {
            let (sb, sm) = match (&static_sets, with_static) {
                (Some((b, m)), true) => (Some(b), Some(m)),
                _ => (None, None),
            };
            let sandbox = crate::sandbox::build_sandbox(&pair.benign.id, &benign_dynamic, sb)?;
            let malign = observe(&pair.malign.id, &malign_dynamic, sm)?;
            let verdict = detect(pair, &sandbox, &malign, tool)?;
            observations.push(Observation {
                tool: tool.to_owned(),
                repetition: UNION_REPETITION,
                static_enabled: with_static,
                pair_id: pair.pair_id.clone(),
                detected: verdict.detected,
            });
            verdicts.push(verdict);
            for (b, m) in benign_traces.iter().zip(&malign_traces) {
                let sandbox = crate::sandbox::build_sandbox(&pair.benign.id, &b.sensitive_calls, sb)?;
                let malign = observe(&pair.malign.id, &m.sensitive_calls, sm)?;
                observations.push(Observation {
                    tool: tool.to_owned(),
                    repetition: b.repetition,
                    static_enabled: with_static,
                    pair_id: pair.pair_id.clone(),
                    detected: detect(pair, &sandbox, &malign, tool)?.detected,
                });
            }
        }
        all_traces.extend(benign_traces);
        all_traces.extend(malign_traces);
    }

    let timed = |app| {
        let start = Instant::now();
        let flows = analyze_taint(app, catalog);
        (flows, start.elapsed().as_secs_f64())
    };
    let (s1, t1) = timed(&pair.benign);
    let (s2, t2) = timed(&pair.malign);
    let timings = vec![
        AppTiming { app_id: pair.benign.id.clone(), taint_seconds: t1 },
        AppTiming { app_id: pair.malign.id.clone(), taint_seconds: t2 },
    ];
    let taint = verdict_from(pair.pair_id.clone(), s1, s2);

    Ok(PairOutcome {
        pair_id: pair.pair_id.clone(),
        observations,
        verdicts,
        taint,
        traces: all_traces,
        static_sets,
        timings,
    })
}

/// Run the configured experiment over `pairs`. Pairs whose evaluation fails
/// are skipped and listed in the result.
pub fn run_experiment(
    pairs: &[AppPair],
    catalog: &SensitiveCatalog,
    config: &ExperimentConfig,
) -> Result<ExperimentResult, ConfigError> {
    config.validate()?;
    let mut sorted: Vec<&AppPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let results: Vec<(String, Result<PairOutcome, PairError>)> = sorted
        .par_iter()
        .map(|p| (p.pair_id.clone(), run_pair(p, catalog, config)))
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (pair_id, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("skipping pair {pair_id}: {e}");
                skipped.push(SkippedPair { pair_id, reason: e.to_string() });
            }
        }
    }
    Ok(ExperimentResult { config: config.clone(), outcomes, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_app;

    fn catalog() -> SensitiveCatalog {
        SensitiveCatalog::parse("getDeviceId source\nsendSMS sink\n").unwrap()
    }

    fn pair(id: &str, malign_body: &str) -> AppPair {
        let base = "app {ID}\nentry boot\nmethod boot()\n{BODY}end\n";
        AppPair {
            pair_id: id.into(),
            benign: parse_app(&base.replace("{ID}", &format!("{id}_b")).replace("{BODY}", ""), None).unwrap(),
            malign: parse_app(&base.replace("{ID}", &format!("{id}_m")).replace("{BODY}", malign_body), None).unwrap(),
        }
    }

    #[test]
    fn observation_rows_cover_union_and_repetitions() {
        let pairs = vec![pair("p1", "  x = api getDeviceId()\n  api sendSMS(x)\n"), pair("p0", "")];
        let config = ExperimentConfig { tools: vec![StrategyKind::Random, StrategyKind::Joker], ..Default::default() };
        let r = run_experiment(&pairs, &catalog(), &config).unwrap();
        assert_eq!(r.outcomes[0].pair_id, "p0");
        // 2 pairs × 2 tools × 2 settings × (1 union + 3 reps)
        assert_eq!(r.observations().count(), 32);
        let ws = r.detection_counts(true);
        let wos = r.detection_counts(false);
        assert_eq!((ws["random"], wos["random"]), (1, 1));
        assert_eq!((ws["joker"], wos["joker"]), (1, 0));
        assert!(r.outcomes[1].taint.detected && !r.outcomes[0].taint.detected);
    }

    #[test]
    fn joker_without_static_detects_nothing() {
        let pairs = vec![pair("p", "  api sendSMS()\n")];
        let config =
            ExperimentConfig { tools: vec![StrategyKind::Joker], disable_static: true, ..Default::default() };
        let r = run_experiment(&pairs, &catalog(), &config).unwrap();
        assert!(r.observations().all(|o| !o.detected && !o.static_enabled));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = ExperimentConfig { tools: vec![], ..Default::default() };
        assert_eq!(run_experiment(&[], &catalog(), &c).unwrap_err(), ConfigError::NoTools);
        let c = ExperimentConfig { repetitions: 0, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::NoRepetitions));
        let c = ExperimentConfig { tools: vec![StrategyKind::Joker, StrategyKind::Joker], ..Default::default() };
        assert!(matches!(c.validate(), Err(ConfigError::DuplicateTool(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig { seed: 9, budget: 20, disable_static: true, ..Default::default() };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let partial: ExperimentConfig = toml::from_str("tools = [\"joker\"]\nseed = 4\n").unwrap();
        assert_eq!(partial.tools, [StrategyKind::Joker]);
        assert_eq!(partial.budget, DEFAULT_BUDGET);
    }
}
