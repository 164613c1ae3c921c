//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;

use sandmine::catalog::SensitiveCatalog;
use sandmine::ir::{is_global, parse_pair_dataset, ApiId, AppModel, AppPair, Const, MethodId, Operand, Statement};

pub type Sources = BTreeSet<ApiId>;
type Env = BTreeMap<String, Sources>;

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Small catalog dominated by sources and sinks, so random programs are
/// dense in flows.
pub fn flow_dense_catalog() -> SensitiveCatalog {
    SensitiveCatalog::parse(
        "readId source\nreadLocation source\nreadContacts source\nsendSms sink\npost sink\nquery both\nnetState sensitive\n",
    )
    .unwrap()
}

pub fn fixture_pairs() -> Vec<AppPair> {
    parse_pair_dataset(&data_dir("fixtures"), Some(&SensitiveCatalog::default_catalog())).unwrap()
}

pub fn fixture(name: &str) -> AppPair {
    fixture_pairs().into_iter().find(|p| p.pair_id == name).unwrap_or_else(|| panic!("no fixture {name}"))
}

/// Concrete taint semantics along every path of a loop-free program: each
/// branch is taken both ways, every callee path is followed.
pub struct PathOracle<'a> {
    app: &'a AppModel,
    catalog: &'a SensitiveCatalog,
    pub flows: BTreeSet<(ApiId, ApiId)>,
}

fn union(env: &Env, vars: &[String], globals: &Env) -> Sources {
    let mut out = Sources::new();
    for v in vars {
        let t = if is_global(v) { globals.get(v) } else { env.get(v) };
        if let Some(t) = t {
            out.extend(t.iter().cloned());
        }
    }
    out
}

fn assign(locals: &mut Env, globals: &mut Env, var: &str, t: Sources) {
    let target = if is_global(var) { globals } else { locals };
    target.insert(var.to_owned(), t);
}

impl<'a> PathOracle<'a> {
    pub fn new(app: &'a AppModel, catalog: &'a SensitiveCatalog) -> Self {
        PathOracle { app, catalog, flows: BTreeSet::new() }
    }

    /// All (return taint, final globals) outcomes of running `method`.
    fn run(&mut self, method: &MethodId, args: Vec<Sources>, globals: Env) -> BTreeSet<(Sources, Env)> {
        let body = self.app.method(method.as_str()).expect("declared method");
        let mut locals = Env::new();
        for (p, a) in body.params.iter().zip(args) {
            locals.insert(p.clone(), a);
        }
        let mut out = BTreeSet::new();
        self.walk(method, 0, locals, globals, &mut out);
        out
    }

    fn walk(&mut self, method: &MethodId, mut pc: usize, mut locals: Env, mut globals: Env, out: &mut BTreeSet<(Sources, Env)>) {
        let body = self.app.method(method.as_str()).expect("declared method");
        while pc < body.statements.len() {
            match &body.statements[pc] {
                Statement::Assign { dst, src } => {
                    let t = match src {
                        Operand::Var(v) => union(&locals, std::slice::from_ref(v), &globals),
                        Operand::Const(_) => Sources::new(),
                    };
                    assign(&mut locals, &mut globals, dst, t);
                }
                Statement::CallApi { api, args, ret } => {
                    let t = union(&locals, args, &globals);
                    if self.catalog.is_sink(api.as_str()) {
                        for s in &t {
                            self.flows.insert((s.clone(), api.clone()));
                        }
                    }
                    if let Some(r) = ret {
                        let mut t = t;
                        if self.catalog.is_source(api.as_str()) {
                            t.insert(api.clone());
                        }
                        assign(&mut locals, &mut globals, r, t);
                    }
                }
                Statement::CallMethod { callee, args, ret } => {
                    let arg_taint = args.iter().map(|a| union(&locals, std::slice::from_ref(a), &globals)).collect();
                    let outcomes = self.run(callee, arg_taint, globals.clone());
                    for (ret_taint, g) in outcomes {
                        let mut l = locals.clone();
                        let mut g = g;
                        if let Some(r) = ret {
                            assign(&mut l, &mut g, r, ret_taint);
                        }
                        self.walk(method, pc + 1, l, g, out);
                    }
                    return;
                }
                Statement::Branch { then_index, else_index, .. } => {
                    self.walk(method, *then_index, locals.clone(), globals.clone(), out);
                    if else_index != then_index {
                        self.walk(method, *else_index, locals, globals, out);
                    }
                    return;
                }
                Statement::Return(v) => {
                    let t = v.as_ref().map(|v| union(&locals, std::slice::from_ref(v), &globals)).unwrap_or_default();
                    out.insert((t, globals));
                    return;
                }
            }
            pc += 1;
        }
        out.insert((Sources::new(), globals));
    }
}

/// (source, sink) pairs realizable by running any root, or any ordered pair of
/// roots sharing globals.
pub fn oracle_taint_pairs(app: &AppModel, catalog: &SensitiveCatalog) -> BTreeSet<(ApiId, ApiId)> {
    let roots: Vec<MethodId> = app.root_methods().into_iter().cloned().collect();
    let mut oracle = PathOracle::new(app, catalog);
    for first in &roots {
        let after_first = oracle.run(first, vec![], Env::new());
        for second in &roots {
            for (_, g) in &after_first {
                oracle.run(second, vec![], g.clone());
            }
        }
    }
    oracle.flows
}

/// Reachable catalogued APIs by Warshall closure over the method call
/// relation, computed straight from the model's fields.
#[allow(clippy::needless_range_loop)]
pub fn closure_static_set(app: &AppModel, catalog: &SensitiveCatalog) -> BTreeSet<ApiId> {
    let ids: Vec<&MethodId> = app.methods.keys().collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let n = ids.len();
    let mut reach = vec![vec![false; n]; n];
    for (i, m) in ids.iter().enumerate() {
        reach[i][i] = true;
        for s in &app.methods[*m].statements {
            if let Statement::CallMethod { callee, .. } = s {
                reach[i][index[callee.as_str()]] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut roots: Vec<&str> = app.entry_points.iter().map(|m| m.as_str()).collect();
    for s in &app.screens {
        roots.extend(s.on_enter.iter().map(|m| m.as_str()));
        roots.extend(s.widgets.iter().map(|w| w.handler.as_str()));
    }
    let mut out = BTreeSet::new();
    for r in roots {
        for (j, m) in ids.iter().enumerate() {
            if reach[index[r]][j] {
                for s in &app.methods[*m].statements {
                    if let Statement::CallApi { api, .. } = s {
                        if catalog.contains(api.as_str()) {
                            out.insert(api.clone());
                        }
                    }
                }
            }
        }
    }
    out
}

/// `None` is a value the interpreter cannot know (API results, unset variables).
type Val = Option<Const>;
type Store = BTreeMap<String, Val>;

/// Brute-force explorer for loop-free, recursion-free apps: every widget is
/// fired from every reachable (screen, globals) state and every unknown
/// branch is taken both ways, until no new state appears. Returns every
/// catalogued API some run could call.
pub fn exhaustive_sensitive_calls(app: &AppModel, catalog: &SensitiveCatalog) -> BTreeSet<ApiId> {
    let mut ex = Exhaustive { app, catalog, seen: BTreeSet::new() };
    let mut launch: HashSet<Store> = HashSet::from([Store::new()]);
    for entry in &app.entry_points {
        launch = launch.into_iter().flat_map(|g| ex.handler(entry, g)).collect();
    }
    if app.screens.is_empty() {
        return ex.seen;
    }
    if let Some(hook) = &app.screens[0].on_enter {
        launch = launch.into_iter().flat_map(|g| ex.handler(hook, g)).collect();
    }
    let mut visited: HashSet<(usize, Store)> = HashSet::new();
    let mut queue: VecDeque<(usize, Store)> = launch.into_iter().map(|g| (0, g)).collect();
    while let Some(state) = queue.pop_front() {
        if !visited.insert(state.clone()) {
            continue;
        }
        let (si, globals) = state;
        for w in &app.screens[si].widgets {
            for g in ex.handler(&w.handler, globals.clone()) {
                let Some(target) = &w.transition else {
                    queue.push_back((si, g));
                    continue;
                };
                let ti = app.screens.iter().position(|s| &s.id == target).expect("validated transition");
                match &app.screens[ti].on_enter {
                    Some(hook) => queue.extend(ex.handler(hook, g).into_iter().map(|g| (ti, g))),
                    None => queue.push_back((ti, g)),
                }
            }
        }
    }
    ex.seen
}

struct Exhaustive<'a> {
    app: &'a AppModel,
    catalog: &'a SensitiveCatalog,
    seen: BTreeSet<ApiId>,
}

impl Exhaustive<'_> {
    fn handler(&mut self, method: &MethodId, globals: Store) -> HashSet<Store> {
        self.invoke(method, vec![], globals).into_iter().map(|(_, g)| g).collect()
    }

    /// Every (return value, final globals) outcome of one invocation.
    fn invoke(&mut self, method: &MethodId, args: Vec<Val>, globals: Store) -> HashSet<(Val, Store)> {
        let body = self.app.method(method.as_str()).expect("declared method");
        let locals: Store = body.params.iter().cloned().zip(args).collect();
        let mut out = HashSet::new();
        self.step(method, 0, locals, globals, &mut out);
        out
    }

    fn step(&mut self, method: &MethodId, mut pc: usize, mut locals: Store, mut globals: Store, out: &mut HashSet<(Val, Store)>) {
        let body = self.app.method(method.as_str()).expect("declared method");
        let get = |l: &Store, g: &Store, v: &str| -> Val {
            let store = if is_global(v) { g } else { l };
            store.get(v).cloned().flatten()
        };
        let set = |l: &mut Store, g: &mut Store, v: &str, val: Val| {
            let store = if is_global(v) { g } else { l };
            store.insert(v.to_owned(), val);
        };
        while let Some(stmt) = body.statements.get(pc) {
            match stmt {
                Statement::Assign { dst, src } => {
                    let v = match src {
                        Operand::Const(c) => Some(c.clone()),
                        Operand::Var(v) => get(&locals, &globals, v),
                    };
                    set(&mut locals, &mut globals, dst, v);
                }
                Statement::CallApi { api, ret, .. } => {
                    if self.catalog.contains(api.as_str()) {
                        self.seen.insert(api.clone());
                    }
                    if let Some(r) = ret {
                        set(&mut locals, &mut globals, r, None);
                    }
                }
                Statement::CallMethod { callee, args, ret } => {
                    let callee_params = self.app.method(callee.as_str()).expect("declared method").params.len();
                    let vals = (0..callee_params).map(|i| args.get(i).and_then(|a| get(&locals, &globals, a))).collect();
                    for (r, g) in self.invoke(callee, vals, globals.clone()) {
                        let (mut l, mut g) = (locals.clone(), g);
                        if let Some(dst) = ret {
                            set(&mut l, &mut g, dst, r);
                        }
                        self.step(method, pc + 1, l, g, out);
                    }
                    return;
                }
                Statement::Branch { cond, then_index, else_index } => {
                    match get(&locals, &globals, cond) {
                        Some(c) => pc = if truthy(&c) { *then_index } else { *else_index },
                        None => {
                            self.step(method, *then_index, locals.clone(), globals.clone(), out);
                            self.step(method, *else_index, locals, globals, out);
                            return;
                        }
                    }
                    continue;
                }
                Statement::Return(v) => {
                    let r = v.as_ref().map_or(Some(Const::Null), |v| get(&locals, &globals, v));
                    out.insert((r, globals));
                    return;
                }
            }
            pc += 1;
        }
        out.insert((Some(Const::Null), globals));
    }
}

fn truthy(c: &Const) -> bool {
    match c {
        Const::Int(n) => *n != 0,
        Const::Bool(b) => *b,
        Const::Str(s) => !s.is_empty(),
        Const::Null => false,
    }
}
