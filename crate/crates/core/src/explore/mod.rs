//! Simulated exploratory phase.
//!
//! A [`Strategy`] drives an app's GUI for a fixed number of events. Launch
//! handlers run first, then the launch screen is entered and widgets are fired
//! one per event. Every catalogued API called by the interpreted handlers is
//! recorded in the resulting [`ExecutionTrace`].

mod interp;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SensitiveCatalog;
use crate::ir::{ApiId, AppModel, MethodId};

pub use interp::{BranchDecider, Machine, Outcome, Value, DEFAULT_STEP_LIMIT};

pub const DEFAULT_BUDGET: u32 = 200;
pub const DEFAULT_REPETITIONS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Uniform choice among the current screen's widgets.
    Random,
    /// Prefers unvisited widgets in id order, then uniform among visited.
    ModelBased,
    /// Samples widgets proportionally to their weight.
    Humanoid,
    /// Fires nothing and runs no code.
    Joker,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] =
        [StrategyKind::Random, StrategyKind::ModelBased, StrategyKind::Humanoid, StrategyKind::Joker];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::ModelBased => "modelbased",
            StrategyKind::Humanoid => "humanoid",
            StrategyKind::Joker => "joker",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown tool `{0}`; valid tools: random, modelbased, humanoid, joker")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub seed: u64,
    /// Number of GUI events; ignored by joker.
    pub budget: u32,
}

impl Strategy {
    pub fn new(kind: StrategyKind, seed: u64, budget: u32) -> Self {
        Strategy { kind, seed, budget }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub screen: String,
    pub widget: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub app_id: String,
    pub strategy: Strategy,
    pub repetition: u32,
    pub events: Vec<Event>,
    pub sensitive_calls: BTreeSet<ApiId>,
    /// Some handler was cut off by the step limit.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub step_limit: usize,
    pub repetition: u32,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { step_limit: DEFAULT_STEP_LIMIT, repetition: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("cannot union traces of different apps (`{0}` vs `{1}`)")]
    MixedApps(String, String),
    #[error("cannot union traces of different tools (`{0}` vs `{1}`)")]
    MixedStrategies(StrategyKind, StrategyKind),
}

/// Seed used for the `repetition`-th run (1-based) of a base seed.
pub fn repetition_seed(base: u64, repetition: u32) -> u64 {
    base.wrapping_add(u64::from(repetition.saturating_sub(1)))
}

pub fn run_exploration(app: &AppModel, catalog: &SensitiveCatalog, strategy: &Strategy) -> ExecutionTrace {
    explore_with(app, catalog, strategy, &ExploreOptions::default())
}

struct RngDecider<'r>(&'r mut ChaCha8Rng);

impl BranchDecider for RngDecider<'_> {
    fn decide(&mut self, _: &MethodId, _: usize) -> bool {
        self.0.random_bool(0.5)
    }
}

pub fn explore_with(
    app: &AppModel,
    catalog: &SensitiveCatalog,
    strategy: &Strategy,
    options: &ExploreOptions,
) -> ExecutionTrace {
    let mut trace = ExecutionTrace {
        app_id: app.id.clone(),
        strategy: *strategy,
        repetition: options.repetition,
        events: Vec::new(),
        sensitive_calls: BTreeSet::new(),
        truncated: false,
    };
    if strategy.kind == StrategyKind::Joker {
        return trace;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let mut machine = Machine::new(app, catalog, options.step_limit);
    let mut truncated = false;
    let mut run = |machine: &mut Machine<'_>, rng: &mut ChaCha8Rng, m: &MethodId| {
        if machine.run_handler(m, &mut RngDecider(rng)) == Outcome::StepLimit {
            log::debug!("{}: handler {m} hit the step limit", app.id);
            truncated = true;
        }
    };

    for entry in &app.entry_points {
        run(&mut machine, &mut rng, entry);
    }
    let mut current = if app.screens.is_empty() { None } else { Some(0usize) };
    if let Some(hook) = current.and_then(|s| app.screens[s].on_enter.as_ref()) {
        run(&mut machine, &mut rng, hook);
    }

    let mut visited: BTreeSet<(usize, usize)> = BTreeSet::new();
    for _ in 0..strategy.budget {
        let Some(si) = current else { break };
        let screen = &app.screens[si];
        if screen.widgets.is_empty() {
            break;
        }
        let wi = match strategy.kind {
            StrategyKind::Random => rng.random_range(0..screen.widgets.len()),
            StrategyKind::ModelBased => {
                let unvisited = screen
                    .widgets
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !visited.contains(&(si, *i)))
                    .min_by(|a, b| a.1.id.cmp(&b.1.id))
                    .map(|(i, _)| i);
                unvisited.unwrap_or_else(|| rng.random_range(0..screen.widgets.len()))
            }
            StrategyKind::Humanoid => {
                let dist = WeightedIndex::new(screen.widgets.iter().map(|w| w.weight))
                    .expect("validated widget weights are positive");
                dist.sample(&mut rng)
            }
            StrategyKind::Joker => unreachable!(),
        };
        visited.insert((si, wi));
        let widget = &screen.widgets[wi];
        trace.events.push(Event { screen: screen.id.clone(), widget: widget.id.clone() });
        run(&mut machine, &mut rng, &widget.handler);
        if let Some(target) = &widget.transition {
            current = app.screens.iter().position(|s| &s.id == target);
            if let Some(hook) = current.and_then(|s| app.screens[s].on_enter.as_ref()) {
                run(&mut machine, &mut rng, hook);
            }
        }
    }

    trace.sensitive_calls = machine.into_observed();
    trace.truncated = truncated;
    trace
}

/// Union of the sensitive calls of several runs of one tool on one app.
pub fn union_traces(traces: &[ExecutionTrace]) -> Result<BTreeSet<ApiId>, ExploreError> {
    let mut out = BTreeSet::new();
    if let Some(first) = traces.first() {
        for t in traces {
            if t.app_id != first.app_id {
                return Err(ExploreError::MixedApps(first.app_id.clone(), t.app_id.clone()));
            }
            if t.strategy.kind != first.strategy.kind {
                return Err(ExploreError::MixedStrategies(first.strategy.kind, t.strategy.kind));
            }
            out.extend(t.sensitive_calls.iter().cloned());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_app;

    fn catalog() -> SensitiveCatalog {
        SensitiveCatalog::parse("getDeviceId source\nsendSMS sink\ngetMacAddress source\n").unwrap()
    }

    const GUI: &str = "\
app gui
entry boot
screen home
  widget a -> onA goto second
  widget b -> onB
end
screen second enter enterSecond
  widget back -> noop goto home
end
method boot()
end
method onA()
end
method onB()
  api sendSMS()
end
method enterSecond()
  api getMacAddress()
end
method noop()
end
";

    fn trace_of(kind: StrategyKind, seed: u64, budget: u32, src: &str) -> ExecutionTrace {
        let app = parse_app(src, None).unwrap();
        run_exploration(&app, &catalog(), &Strategy::new(kind, seed, budget))
    }

    #[test]
    fn joker_runs_nothing() {
        let src = "app a\nentry m\nmethod m()\n  api getDeviceId()\nend\n";
        let t = trace_of(StrategyKind::Joker, 1, 50, src);
        assert!(t.events.is_empty());
        assert!(t.sensitive_calls.is_empty());
    }

    #[test]
    fn launch_handlers_run_at_zero_budget() {
        let src = "app a\nentry m\nmethod m()\n  api getDeviceId()\nend\n";
        let t = trace_of(StrategyKind::Random, 9, 0, src);
        assert!(t.events.is_empty());
        assert_eq!(t.sensitive_calls, BTreeSet::from([ApiId::from("getDeviceId")]));
    }

    #[test]
    fn modelbased_prefers_unvisited_in_id_order() {
        let t = trace_of(StrategyKind::ModelBased, 3, 3, GUI);
        let fired: Vec<_> = t.events.iter().map(|e| (e.screen.as_str(), e.widget.as_str())).collect();
        assert_eq!(fired, [("home", "a"), ("second", "back"), ("home", "b")]);
        assert_eq!(t.sensitive_calls.len(), 2);
    }

    #[test]
    fn humanoid_follows_weights() {
        let src = "\
app h
entry boot
screen home
  widget heavy -> noop weight 1000000000
  widget light -> leak weight 0.000000001
end
method boot()
end
method noop()
end
method leak()
  api sendSMS()
end
";
        let t = trace_of(StrategyKind::Humanoid, 11, 100, src);
        assert_eq!(t.events.len(), 100);
        assert!(t.events.iter().all(|e| e.widget == "heavy"));
        assert!(t.sensitive_calls.is_empty());
    }

    #[test]
    fn exploration_is_deterministic_and_prefix_stable() {
        for kind in [StrategyKind::Random, StrategyKind::ModelBased, StrategyKind::Humanoid] {
            let a = trace_of(kind, 42, 30, GUI);
            let b = trace_of(kind, 42, 30, GUI);
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            let short = trace_of(kind, 42, 10, GUI);
            assert_eq!(short.events[..], a.events[..10]);
            assert!(short.sensitive_calls.is_subset(&a.sensitive_calls));
        }
    }

    #[test]
    fn screen_without_widgets_ends_exploration() {
        let src = "app a\nentry m\nscreen s\nend\nmethod m()\nend\n";
        assert!(trace_of(StrategyKind::Random, 1, 10, src).events.is_empty());
    }

    #[test]
    fn step_limit_sets_truncated_flag() {
        let src = "app a\nentry m\nmethod m()\n  t = true\n  if t then 0 else 2\nend\n";
        let app = parse_app(src, None).unwrap();
        let opts = ExploreOptions { step_limit: 50, repetition: 2 };
        let t = explore_with(&app, &catalog(), &Strategy::new(StrategyKind::Random, 0, 0), &opts);
        assert!(t.truncated);
        assert_eq!(t.repetition, 2);
    }

    fn fake(app: &str, kind: StrategyKind, calls: &[&str]) -> ExecutionTrace {
        ExecutionTrace {
            app_id: app.into(),
            strategy: Strategy::new(kind, 0, 0),
            repetition: 1,
            events: vec![],
            sensitive_calls: calls.iter().map(|c| ApiId::from(*c)).collect(),
            truncated: false,
        }
    }

    #[test]
    fn union_examples() {
        let r = StrategyKind::Random;
        let u = union_traces(&[fake("x", r, &["A"]), fake("x", r, &["B"]), fake("x", r, &["A"])]).unwrap();
        assert_eq!(u, BTreeSet::from(["A".into(), "B".into()]));
        let j = StrategyKind::Joker;
        assert!(union_traces(&[fake("x", j, &[]), fake("x", j, &[]), fake("x", j, &[])]).unwrap().is_empty());
        assert_eq!(union_traces(&[fake("x", r, &["A", "B"])]).unwrap().len(), 2);
    }

    #[test]
    fn union_rejects_mixed_inputs() {
        let r = StrategyKind::Random;
        assert!(matches!(
            union_traces(&[fake("x", r, &[]), fake("y", r, &[])]),
            Err(ExploreError::MixedApps(..))
        ));
        assert!(matches!(
            union_traces(&[fake("x", r, &[]), fake("x", StrategyKind::Humanoid, &[])]),
            Err(ExploreError::MixedStrategies(..))
        ));
    }

    #[test]
    fn strategy_names_parse() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        let err = "fuzzer".parse::<StrategyKind>().unwrap_err();
        assert!(err.to_string().contains("random, modelbased, humanoid, joker"));
    }

    #[test]
    fn repetition_seeds_are_consecutive() {
        assert_eq!(repetition_seed(7, 1), 7);
        assert_eq!(repetition_seed(7, 3), 9);
    }
}
