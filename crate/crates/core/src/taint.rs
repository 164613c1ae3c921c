//! Source-to-sink taint propagation and the flow-differencing detector.
//!
//! The analysis is flow-sensitive within a method body, context-insensitive
//! across calls (parameter and return taint is merged over all call sites) and
//! field-blind. Globals (`this.*`) are treated flow-insensitively: any taint
//! written to a global anywhere is visible to every read of it, which covers
//! every possible ordering of handler invocations.
//!
//! Propagation rules:
//! - `x = y` copies the taint of `y` into `x`; `x = <const>` clears `x`.
//! - `r = api f(args)` gives `r` the union of the argument taint, plus `{f}`
//!   when `f` is a source.
//! - `api f(args)` with `f` a sink reports one flow per source tainting any
//!   argument.
//! - calls bind argument taint to the callee's parameters and the callee's
//!   returned taint to the call's result variable.
//! - at control-flow merges the states are unioned.
//!
//! Every taint fact carries the chain of statements it travelled through. The
//! chain is fixed when the fact is first discovered and does not take part in
//! the fixpoint comparison, so the lattice stays finite.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::SensitiveCatalog;
use crate::ir::{is_global, ApiId, AppModel, AppPair, MethodId, Operand, Statement, Var};
use crate::static_analysis::{build_call_graph, Node};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub method: MethodId,
    pub index: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.method, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Flow {
    pub source: ApiId,
    pub sink: ApiId,
    /// Statements the tainted value passed through, from the source call to
    /// the sink call inclusive.
    pub witness: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSet {
    pub app_id: String,
    pub flows: BTreeSet<Flow>,
}

pub type ApiPair = (ApiId, ApiId);

impl FlowSet {
    /// Projection to (source, sink) endpoints.
    pub fn pairs(&self) -> BTreeSet<ApiPair> {
        self.flows.iter().map(|f| (f.source.clone(), f.sink.clone())).collect()
    }
}

/// Taint of one value: originating sources, each with the chain that first
/// delivered it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taint(BTreeMap<ApiId, Vec<Site>>);

impl Taint {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &ApiId> {
        self.0.keys()
    }

    /// Adds sources not yet present; true if any was added.
    fn join(&mut self, other: &Taint) -> bool {
        let mut changed = false;
        for (src, chain) in &other.0 {
            if !self.0.contains_key(src) {
                self.0.insert(src.clone(), chain.clone());
                changed = true;
            }
        }
        changed
    }

    fn through(&self, site: &Site) -> Taint {
        Taint(
            self.0
                .iter()
                .map(|(s, chain)| {
                    let mut c = chain.clone();
                    c.push(site.clone());
                    (s.clone(), c)
                })
                .collect(),
        )
    }
}

/// Taint of the local variables at one program point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaintState {
    tainted: BTreeMap<Var, Taint>,
}

impl TaintState {
    pub fn sources(&self, var: &str) -> BTreeSet<&ApiId> {
        self.tainted.get(var).map(|t| t.sources().collect()).unwrap_or_default()
    }

    fn get(&self, var: &str) -> Option<&Taint> {
        self.tainted.get(var)
    }

    fn set(&mut self, var: &str, t: Taint) {
        if t.is_empty() {
            self.tainted.remove(var);
        } else {
            self.tainted.insert(var.to_owned(), t);
        }
    }

    fn join(&mut self, other: &TaintState) -> bool {
        let mut changed = false;
        for (v, t) in &other.tainted {
            changed |= self.tainted.entry(v.clone()).or_default().join(t);
        }
        changed
    }
}

struct Analysis<'a> {
    app: &'a AppModel,
    catalog: &'a SensitiveCatalog,
    entry: BTreeMap<MethodId, TaintState>,
    summaries: BTreeMap<MethodId, Taint>,
    globals: BTreeMap<Var, Taint>,
    flows: BTreeMap<(ApiId, ApiId, Site), Vec<Site>>,
}

impl<'a> Analysis<'a> {
    fn read(&self, state: &TaintState, var: &str) -> Taint {
        let t = if is_global(var) { self.globals.get(var) } else { state.get(var) };
        t.cloned().unwrap_or_default()
    }

    /// Returns true when a global gained taint.
    fn write(&mut self, state: &mut TaintState, var: &str, t: Taint) -> bool {
        if is_global(var) {
            self.globals.entry(var.to_owned()).or_default().join(&t)
        } else {
            state.set(var, t);
            false
        }
    }

    /// Intraprocedural fixpoint over one method under the current global
    /// facts. Returns true if any interprocedural fact changed.
    fn method(&mut self, id: &MethodId) -> bool {
        let app = self.app;
        let Some(body) = app.method(id.as_str()) else { return false };
        let n = body.statements.len();
        let mut states: Vec<Option<TaintState>> = vec![None; n + 1];
        states[0] = Some(self.entry.get(id).cloned().unwrap_or_default());
        let mut queue = VecDeque::from([0usize]);
        let mut queued = vec![false; n + 1];
        queued[0] = true;
        let mut changed = false;

        while let Some(i) = queue.pop_front() {
            queued[i] = false;
            if i >= n {
                continue;
            }
            let mut state = states[i].clone().unwrap_or_default();
            let stmt = &body.statements[i];
            let site = Site { method: id.clone(), index: i };
            match stmt {
                Statement::Assign { dst, src } => {
                    let t = match src {
                        Operand::Var(v) => self.read(&state, v).through(&site),
                        Operand::Const(_) => Taint::default(),
                    };
                    changed |= self.write(&mut state, dst, t);
                }
                Statement::CallApi { api, args, ret } => {
                    let mut arg_taint = Taint::default();
                    for a in args {
                        arg_taint.join(&self.read(&state, a));
                    }
                    if self.catalog.is_sink(api.as_str()) {
                        for (src, chain) in &arg_taint.0 {
                            let key = (src.clone(), api.clone(), site.clone());
                            self.flows.entry(key).or_insert_with(|| {
                                let mut w = chain.clone();
                                w.push(site.clone());
                                w
                            });
                        }
                    }
                    if let Some(r) = ret {
                        let mut t = arg_taint.through(&site);
                        if self.catalog.is_source(api.as_str()) {
                            t.0.insert(api.clone(), vec![site.clone()]);
                        }
                        changed |= self.write(&mut state, r, t);
                    }
                }
                Statement::CallMethod { callee, args, ret } => {
                    if let Some(callee_body) = app.method(callee.as_str()) {
                        let mut bound = TaintState::default();
                        for (p, a) in callee_body.params.iter().zip(args) {
                            bound.set(p, self.read(&state, a).through(&site));
                        }
                        changed |= self.entry.entry(callee.clone()).or_default().join(&bound);
                    }
                    if let Some(r) = ret {
                        let t = self.summaries.get(callee).map(|s| s.through(&site)).unwrap_or_default();
                        changed |= self.write(&mut state, r, t);
                    }
                }
                Statement::Branch { .. } => {}
                Statement::Return(v) => {
                    if let Some(v) = v {
                        let t = self.read(&state, v).through(&site);
                        changed |= self.summaries.entry(id.clone()).or_default().join(&t);
                    }
                }
            }
            for succ in stmt.successors(i) {
                let grew = match &mut states[succ] {
                    slot @ None => {
                        *slot = Some(state.clone());
                        true
                    }
                    Some(existing) => existing.join(&state),
                };
                if grew && !queued[succ] {
                    queued[succ] = true;
                    queue.push_back(succ);
                }
            }
        }
        changed
    }
}

/// Methods reachable from the platform roots, in id order.
fn reachable_methods(app: &AppModel) -> Vec<MethodId> {
    let graph = build_call_graph(app);
    graph
        .reachable()
        .into_iter()
        .filter_map(|n| match n {
            Node::Method(m) => Some(m.clone()),
            _ => None,
        })
        .collect()
}

pub fn analyze_taint(app: &AppModel, catalog: &SensitiveCatalog) -> FlowSet {
    let methods = reachable_methods(app);
    let mut analysis = Analysis {
        app,
        catalog,
        entry: BTreeMap::new(),
        summaries: BTreeMap::new(),
        globals: BTreeMap::new(),
        flows: BTreeMap::new(),
    };
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        let mut changed = false;
        for m in &methods {
            changed |= analysis.method(m);
        }
        if !changed {
            break;
        }
    }
    log::trace!("{}: taint fixpoint after {sweeps} sweeps", app.id);
    let flows = analysis
        .flows
        .into_iter()
        .map(|((source, sink, _), witness)| Flow { source, sink, witness })
        .collect();
    FlowSet { app_id: app.id.clone(), flows }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintVerdict {
    pub pair_id: String,
    pub s1: FlowSet,
    pub s2: FlowSet,
    pub s3: BTreeSet<ApiPair>,
    pub detected: bool,
}

/// Flag the pair when the malign version has a (source, sink) pair the benign
/// version lacks.
pub fn taint_diff(pair: &AppPair, catalog: &SensitiveCatalog) -> TaintVerdict {
    let s1 = analyze_taint(&pair.benign, catalog);
    let s2 = analyze_taint(&pair.malign, catalog);
    verdict_from(pair.pair_id.clone(), s1, s2)
}

pub fn verdict_from(pair_id: String, s1: FlowSet, s2: FlowSet) -> TaintVerdict {
    let benign = s1.pairs();
    let s3: BTreeSet<ApiPair> = s2.pairs().difference(&benign).cloned().collect();
    let detected = !s3.is_empty();
    TaintVerdict { pair_id, s1, s2, s3, detected }
}
