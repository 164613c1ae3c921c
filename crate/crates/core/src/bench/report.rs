//! Aggregate views over a finished run and their text renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{combine_detectors, format_impact, impact, overlap_report, CombinedCount, OverlapReport};
use super::regression::RegressionFit;
use super::results::{StoredResults, TaintRow};
use super::{ExperimentResult, Observation, OutputFormat, UNION_REPETITION};
use crate::explore::StrategyKind;
use crate::ir::SkippedPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCounts {
    pub tool: String,
    /// `None` when the run disabled static analysis.
    pub ws: Option<usize>,
    pub wos: usize,
    pub impact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pairs: usize,
    pub tools: Vec<ToolCounts>,
    pub overlap_ws: Option<OverlapReport>,
    pub overlap_wos: OverlapReport,
    /// Each tool combined with the taint detector, using WS verdicts when
    /// available.
    pub combined: Vec<CombinedCount>,
    pub taint_detected: usize,
    pub skipped: Vec<SkippedPair>,
}

/// Tools that take part in overlap partitions: everything except the inert
/// control, unless it is the only tool.
fn overlap_tools(tools: &[String]) -> Vec<String> {
    let joker = StrategyKind::Joker.name();
    let active: Vec<String> = tools.iter().filter(|t| *t != joker).cloned().collect();
    if active.is_empty() {
        tools.to_vec()
    } else {
        active
    }
}

impl Report {
    pub fn build(
        tools: &[String],
        pair_ids: &[String],
        observations: &[Observation],
        taint: &[TaintRow],
        skipped: &[SkippedPair],
    ) -> Report {
        let union: Vec<&Observation> = observations.iter().filter(|o| o.repetition == UNION_REPETITION).collect();
        let static_evaluated = union.iter().any(|o| o.static_enabled);

        let verdicts = |with_static: bool, tool: &str| -> BTreeMap<String, bool> {
            let mut v: BTreeMap<String, bool> = pair_ids.iter().map(|p| (p.clone(), false)).collect();
            for o in union.iter().filter(|o| o.static_enabled == with_static && o.tool == tool) {
                v.insert(o.pair_id.clone(), o.detected);
            }
            v
        };
        let count = |with_static, tool: &str| verdicts(with_static, tool).values().filter(|d| **d).count();

        let counts = tools
            .iter()
            .map(|t| {
                let wos = count(false, t);
                let ws = static_evaluated.then(|| count(true, t));
                ToolCounts { tool: t.clone(), ws, wos, impact: ws.and_then(|ws| impact(ws, wos)) }
            })
            .collect();

        let partition = |with_static| {
            let by_tool: BTreeMap<String, BTreeMap<String, bool>> =
                overlap_tools(tools).into_iter().map(|t| { let v = verdicts(with_static, &t); (t, v) }).collect();
            overlap_report(&by_tool).expect("verdict maps share the run's pair set")
        };

        let taint_pairs: BTreeSet<String> = taint.iter().filter(|t| t.detected).map(|t| t.pair_id.clone()).collect();
        let detected_by_tool: BTreeMap<String, BTreeSet<String>> = tools
            .iter()
            .map(|t| {
                let v = verdicts(static_evaluated, t);
                (t.clone(), v.into_iter().filter(|(_, d)| *d).map(|(p, _)| p).collect())
            })
            .collect();

        Report {
            pairs: pair_ids.len(),
            tools: counts,
            overlap_ws: static_evaluated.then(|| partition(true)),
            overlap_wos: partition(false),
            combined: combine_detectors(&detected_by_tool, &taint_pairs),
            taint_detected: taint_pairs.len(),
            skipped: skipped.to_vec(),
        }
    }

    pub fn from_experiment(result: &ExperimentResult) -> Report {
        let stored = StoredResults::from_experiment(result, "");
        Report::from_stored(&stored)
    }

    pub fn from_stored(stored: &StoredResults) -> Report {
        let tools: Vec<String> = stored.summary.config.tools.iter().map(|t| t.name().to_owned()).collect();
        Report::build(&tools, &stored.summary.pairs, &stored.observations, &stored.taint, &stored.summary.skipped)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Detection summary\n");
        let _ = writeln!(out, "Pairs evaluated: {}\n", self.pairs);
        let _ = writeln!(out, "| Tool | Exec. (WS) | Exec. (WOS) | Impact (%) |");
        let _ = writeln!(out, "|------|-----------:|------------:|-----------:|");
        for t in &self.tools {
            let ws = t.ws.map_or_else(|| "-".to_owned(), |n| n.to_string());
            let _ = writeln!(out, "| {} | {} | {} | {} |", t.tool, ws, t.wos, format_impact(t.impact));
        }
        if let Some(o) = &self.overlap_ws {
            render_overlap(&mut out, "Tool overlap (WS)", o);
        }
        render_overlap(&mut out, "Tool overlap (WOS)", &self.overlap_wos);

        let _ = writeln!(out, "\n## Combined with taint differencing\n");
        let _ = writeln!(out, "Taint detector: {} pairs\n", self.taint_detected);
        let _ = writeln!(out, "| Tool | Tool alone | Combined | Increase |");
        let _ = writeln!(out, "|------|-----------:|---------:|---------:|");
        for c in &self.combined {
            let _ = writeln!(out, "| {} | {} | {} | {} |", c.tool, c.tool_count, c.combined, c.increase);
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "\n## Skipped pairs\n");
            for s in &self.skipped {
                let _ = writeln!(out, "- {}: {}", s.pair_id, s.reason);
            }
        }
        out
    }

    /// Table-1 rows only.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tool", "ws", "wos", "impact"]).expect("in-memory write");
        for t in &self.tools {
            let ws = t.ws.map(|n| n.to_string()).unwrap_or_default();
            w.write_record([t.tool.as_str(), &ws, &t.wos.to_string(), &format_impact(t.impact)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn render_overlap(out: &mut String, title: &str, o: &OverlapReport) {
    let _ = writeln!(out, "\n## {title}\n");
    let _ = writeln!(out, "| Detected by exactly | Pairs |");
    let _ = writeln!(out, "|---------------------|------:|");
    for r in &o.regions {
        let _ = writeln!(out, "| {} | {} |", r.tools.join(" + "), r.count);
    }
    let _ = writeln!(out, "| at least one | {} |", o.at_least_one);
    let _ = writeln!(out, "| none | {} |", o.none);
}

pub fn render_report(report: &Report, format: OutputFormat) -> String {
    match format {
        OutputFormat::Markdown => report.to_markdown(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => report.to_json(),
    }
}

/// Fixed-point formatting that never prints a negative zero.
fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_owned(),
        _ => s,
    }
}

pub fn render_regression(fit: &RegressionFit, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(fit).expect("fit serializes"),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["term", "estimate", "std_error", "z", "p_value", "ci_low", "ci_high"])
                .expect("in-memory write");
            for c in &fit.coefficients {
                let nums = [c.estimate, c.std_error, c.z, c.p_value, c.ci_low, c.ci_high].map(|v| v.to_string());
                let mut row = vec![c.name.clone()];
                row.extend(nums);
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
        }
        OutputFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "Model: {}", fit.formula);
            if let Some(r) = &fit.reference_tool {
                let _ = writeln!(out, "Reference tool: {r}");
            }
            let _ = writeln!(out, "\n| Term | Estimate | Std. Error | z | Pr(>|z|) | 95% CI |");
            let _ = writeln!(out, "|------|---------:|-----------:|--:|---------:|--------|");
            for c in &fit.coefficients {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.4} | {} | {:.3e} | [{}, {}] |",
                    c.name,
                    fixed(c.estimate, 4),
                    c.std_error,
                    fixed(c.z, 3),
                    c.p_value,
                    fixed(c.ci_low, 4),
                    fixed(c.ci_high, 4)
                );
            }
            let _ = writeln!(
                out,
                "\nn = {}, log-likelihood = {:.4}, AIC = {:.4}, iterations = {}",
                fit.n_obs, fit.log_likelihood, fit.aic, fit.iterations
            );
            out
        }
    }
}
