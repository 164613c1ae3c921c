//! Generators for test inputs: random apps and pairs for property checks, and
//! a hand-shaped benchmark dataset whose detection outcomes are known by
//! construction.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::SensitiveCatalog;
use crate::ir::{
    parse_app, ApiId, AppModel, AppPair, Const, MethodBody, MethodId, Operand, Screen, Statement, Widget,
    BENIGN_FILE, MALIGN_FILE,
};

/// API names that are never in the default catalog.
const NEUTRAL_APIS: [&str; 3] = ["format", "toString", "parseInt"];
const LOCALS: [&str; 4] = ["a", "b", "c", "d"];
const GLOBALS: [&str; 2] = ["this.g0", "this.g1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub max_methods: usize,
    /// Upper bound on the statement count summed over all methods.
    pub max_statements: usize,
    pub max_screens: usize,
    /// Forward-only branches and an acyclic call graph.
    pub loop_free: bool,
    /// Let statements read and write `this.*` globals.
    pub globals: bool,
    /// Number of local variable names (1 to 4) besides parameters.
    pub locals: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { max_methods: 5, max_statements: 40, max_screens: 3, loop_free: false, globals: true, locals: 4 }
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, items: &'a [String]) -> &'a String {
    items.choose(rng).expect("non-empty pool")
}

fn random_statement<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &FuzzConfig,
    apis: &[String],
    vars: &[String],
    callees: &[(MethodId, usize)],
    index: usize,
    len: usize,
) -> Statement {
    loop {
        let ret = |rng: &mut R| rng.random_bool(0.7).then(|| pick(rng, vars).clone());
        match rng.random_range(0..20) {
            0..=5 => {
                let src = if rng.random_bool(0.7) {
                    Operand::Var(pick(rng, vars).clone())
                } else {
                    Operand::Const(match rng.random_range(0..3) {
                        0 => Const::Int(rng.random_range(-3..10)),
                        1 => Const::Bool(rng.random()),
                        _ => Const::Null,
                    })
                };
                return Statement::Assign { dst: pick(rng, vars).clone(), src };
            }
            6..=12 => {
                let args = (0..rng.random_range(0..3)).map(|_| pick(rng, vars).clone()).collect();
                return Statement::CallApi { api: ApiId::new(pick(rng, apis).as_str()), args, ret: ret(rng) };
            }
            13..=15 if !callees.is_empty() => {
                let (callee, arity) = callees.choose(rng).expect("non-empty");
                let args = (0..*arity).map(|_| pick(rng, vars).clone()).collect();
                return Statement::CallMethod { callee: callee.clone(), args, ret: ret(rng) };
            }
            16..=18 => {
                // mostly if-shaped: one arm falls through, the other skips ahead
                // (or anywhere, when loops are allowed)
                let lo = if cfg.loop_free { index + 1 } else { 0 };
                let other = rng.random_range(lo..=len);
                let next = index + 1;
                let (then_index, else_index) = if rng.random_bool(0.5) { (next, other) } else { (other, next) };
                return Statement::Branch { cond: pick(rng, vars).clone(), then_index, else_index };
            }
            19 => return Statement::Return(rng.random_bool(0.7).then(|| pick(rng, vars).clone())),
            _ => continue,
        }
    }
}

/// A random well-formed app. Sensitive APIs are drawn from `catalog`, mixed
/// with a few neutral ones.
pub fn random_app<R: Rng + ?Sized>(rng: &mut R, catalog: &SensitiveCatalog, id: &str, cfg: &FuzzConfig) -> AppModel {
    let mut apis: Vec<String> = catalog.apis().map(|a| a.as_str().to_owned()).collect();
    apis.extend(NEUTRAL_APIS.iter().map(|s| s.to_string()));

    let n_methods = rng.random_range(1..=cfg.max_methods.max(1));
    let arities: Vec<usize> = (0..n_methods).map(|_| rng.random_range(0..=2)).collect();
    let ids: Vec<MethodId> = (0..n_methods).map(|k| MethodId::new(format!("m{k}"))).collect();
    let per_method = (cfg.max_statements / n_methods).max(1);

    let mut methods = std::collections::BTreeMap::new();
    for k in 0..n_methods {
        let params: Vec<String> = (0..arities[k]).map(|p| format!("p{p}")).collect();
        let mut vars: Vec<String> = LOCALS.iter().take(cfg.locals.clamp(1, LOCALS.len())).map(|s| s.to_string()).collect();
        if cfg.globals {
            vars.extend(GLOBALS.iter().map(|s| s.to_string()));
        }
        vars.extend(params.iter().cloned());
        let callees: Vec<(MethodId, usize)> = (0..n_methods)
            .filter(|j| !cfg.loop_free || *j > k)
            .map(|j| (ids[j].clone(), arities[j]))
            .collect();
        let len = rng.random_range(per_method / 2..=per_method);
        let statements = (0..len).map(|i| random_statement(rng, cfg, &apis, &vars, &callees, i, len)).collect();
        methods.insert(ids[k].clone(), MethodBody { id: ids[k].clone(), params, statements });
    }

    let n_screens = rng.random_range(0..=cfg.max_screens);
    let screen_ids: Vec<String> = (0..n_screens).map(|s| format!("s{s}")).collect();
    let screens = screen_ids
        .iter()
        .map(|sid| {
            let widgets = (0..rng.random_range(1..=3))
                .map(|w| Widget {
                    id: format!("w{w}"),
                    handler: ids.choose(rng).expect("non-empty").clone(),
                    transition: rng.random_bool(0.6).then(|| pick(rng, &screen_ids).clone()),
                    weight: *[0.5, 1.0, 2.0, 3.5].choose(rng).expect("non-empty"),
                })
                .collect();
            let on_enter = rng.random_bool(0.3).then(|| ids.choose(rng).expect("non-empty").clone());
            Screen { id: sid.clone(), widgets, on_enter }
        })
        .collect();

    let mut entry_points = vec![ids[0].clone()];
    entry_points.extend(ids.iter().skip(1).filter(|_| rng.random_bool(0.15)).cloned());

    let mut app = AppModel {
        id: id.to_owned(),
        manifest: Default::default(),
        screens,
        methods,
        entry_points,
    };
    if rng.random_bool(0.5) {
        app.manifest.permissions.insert("android.permission.INTERNET".into());
    }
    app
}

/// Insert `new` at the front of `method`, keeping branch targets pointing at
/// the same statements.
fn prepend(app: &mut AppModel, method: &MethodId, new: Vec<Statement>) {
    let body = app.methods.get_mut(method).expect("method exists");
    let shift = new.len();
    for s in &mut body.statements {
        if let Statement::Branch { then_index, else_index, .. } = s {
            *then_index += shift;
            *else_index += shift;
        }
    }
    body.statements.splice(0..0, new);
}

/// A benign random app and a mutated copy: extra sensitive calls, a new
/// source-to-sink flow, a new handler (possibly unreachable), or a manifest
/// edit.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R, catalog: &SensitiveCatalog, pair_id: &str, cfg: &FuzzConfig) -> AppPair {
    let benign = random_app(rng, catalog, &format!("{pair_id}_b"), cfg);
    let mut malign = benign.clone();
    malign.id = format!("{pair_id}_m");
    let all: Vec<String> = catalog.apis().map(|a| a.as_str().to_owned()).collect();
    let sources: Vec<String> = all.iter().filter(|a| catalog.is_source(a)).cloned().collect();
    let sinks: Vec<String> = all.iter().filter(|a| catalog.is_sink(a)).cloned().collect();
    let methods: Vec<MethodId> = malign.methods.keys().cloned().collect();

    for _ in 0..rng.random_range(1..=2) {
        let target = methods.choose(rng).expect("non-empty").clone();
        match rng.random_range(0..4) {
            0 if !all.is_empty() => {
                let api = ApiId::new(pick(rng, &all).as_str());
                prepend(&mut malign, &target, vec![Statement::CallApi { api, args: vec![], ret: Some("z".into()) }]);
            }
            1 if !sources.is_empty() && !sinks.is_empty() => {
                let src = ApiId::new(pick(rng, &sources).as_str());
                let sink = ApiId::new(pick(rng, &sinks).as_str());
                prepend(
                    &mut malign,
                    &target,
                    vec![
                        Statement::CallApi { api: src, args: vec![], ret: Some("z".into()) },
                        Statement::CallApi { api: sink, args: vec!["z".into()], ret: None },
                    ],
                );
            }
            2 if !all.is_empty() => {
                let id = MethodId::new(format!("inj{}", malign.methods.len()));
                let api = ApiId::new(pick(rng, &all).as_str());
                let statements = vec![Statement::CallApi { api, args: vec![], ret: None }];
                malign.methods.insert(id.clone(), MethodBody { id: id.clone(), params: vec![], statements });
                match rng.random_range(0..3) {
                    0 => malign.entry_points.push(id),
                    1 if !malign.screens.is_empty() => {
                        let s = rng.random_range(0..malign.screens.len());
                        let w = malign.screens[s].widgets.len();
                        malign.screens[s].widgets.push(Widget {
                            id: format!("w{w}"),
                            handler: id,
                            transition: None,
                            weight: 1.0,
                        });
                    }
                    // otherwise left unreferenced: dead code
                    _ => {}
                }
            }
            _ => {
                malign.manifest.metadata.insert("ADMOB_PUBLISHER_ID".into(), format!("a{}", rng.random::<u32>()));
            }
        }
    }
    AppPair { pair_id: pair_id.to_owned(), benign, malign }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Sensitive call added to the launch path: every exploring tool sees it.
    Launch,
    /// Call behind many widgets next to a trap that systematic and
    /// weight-guided exploration fall into.
    RandomOnly,
    /// Call at the end of a chain of rarely chosen forward widgets that only
    /// an unvisited-first strategy walks.
    ModelBasedOnly,
    /// Call behind a heavily weighted path hidden after more widgets than the
    /// event budget.
    HumanoidOnly,
    /// Call in the handler of the only widget on the first screen.
    FirstWidget,
    /// Same sensitive calls, new source-to-sink flow.
    TaintOnly,
    /// Manifest metadata edit only.
    ManifestOnly,
    /// Malign version calls at launch an API the benign version only has in
    /// reachable but never executed code.
    DeadCodeCover,
    /// Call in a handler no exploration can reach.
    StaticOnly,
    /// New source and sink at launch, connected.
    LaunchLeak,
}

/// Expected verdicts for one synthetic pair under the default configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub pair_id: String,
    pub category: Category,
    /// WS verdict; identical for every tool since dynamic calls are always
    /// within the static set.
    pub ws_detected: bool,
    /// Tools whose WOS sandbox flags the pair.
    pub wos_detected_by: BTreeSet<String>,
    pub taint_detected: bool,
    pub manifest_changed: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub expect: Expectation,
    pub benign: String,
    pub malign: String,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const PLANTED: [&str; 8] = [
    "getAccounts",
    "getCellLocation",
    "getInstalledPackages",
    "getWifiState",
    "getSubscriberId",
    "getSimSerialNumber",
    "requestLocationUpdates",
    "getNetworkOperator",
];

fn header(id: &str, extra_meta: &str) -> String {
    format!("app {id}\npermission android.permission.INTERNET\nmeta versionName 1.0\n{extra_meta}entry boot\n")
}

fn boot(extra: &str) -> String {
    format!(
        "\nmethod boot()\n  net = api getActiveNetworkInfo()\n  msg = \"started\"\n  api writeLog(msg)\n{extra}end\n"
    )
}

const NOOP: &str = "\nmethod noop()\nend\n";

fn reveal(api: Option<&str>) -> String {
    match api {
        Some(api) => format!("\nmethod reveal()\n  x = api {api}()\nend\n"),
        None => "\nmethod reveal()\n  s = \"shown\"\nend\n".to_owned(),
    }
}

fn build(category: Category, id: &str, api: &str, variant: usize, malign: bool) -> String {
    let planted = malign.then_some(api);
    let call = |indent: &str| planted.map(|a| format!("{indent}x = api {a}()\n")).unwrap_or_default();
    let mut out = String::new();
    match category {
        Category::Launch => {
            out += &header(id, "");
            out += &boot(&call("  "));
        }
        Category::FirstWidget => {
            out += &header(id, "");
            out += "\nscreen main\n  widget go -> tap\nend\n";
            out += &boot("");
            let _ = write!(out, "\nmethod tap()\n  s = \"tap\"\n  api writeLog(s)\n{}end\n", call("  "));
        }
        Category::RandomOnly => {
            out += &header(id, "");
            out += "\n# systematic and weight-guided exploration take the trap first\nscreen home\n";
            out += "  widget a_trap -> noop goto trap weight 1000000\n";
            for i in 0..30 {
                let _ = writeln!(out, "  widget inj_{i:02} -> reveal weight 0.000001");
            }
            out += "end\n\nscreen trap\n  widget loop -> noop goto trap\nend\n";
            out += &boot("");
            out += NOOP;
            out += &reveal(planted);
        }
        Category::ModelBasedOnly => {
            out += &header(id, "");
            const DEPTH: usize = 6;
            for step in 0..DEPTH {
                let _ = writeln!(out, "\nscreen step{step}");
                let _ = writeln!(out, "  widget a_fwd -> noop goto step{} weight 0.000001", step + 1);
                for b in 0..20 {
                    let _ = writeln!(out, "  widget b_back_{b:02} -> noop goto step0");
                }
                out += "end\n";
            }
            let _ = write!(out, "\nscreen step{DEPTH} enter reveal\n  widget b_back_00 -> noop goto step0\nend\n");
            out += &boot("");
            out += NOOP;
            out += &reveal(planted);
        }
        Category::HumanoidOnly => {
            out += &header(id, "");
            const DEPTH: usize = 3;
            for level in 0..DEPTH {
                let _ = writeln!(out, "\nscreen level{level}");
                for b in 0..250 {
                    let _ = writeln!(out, "  widget a_back_{b:03} -> noop goto level0");
                }
                let _ = writeln!(out, "  widget z_fwd -> noop goto level{} weight 1000000", level + 1);
                out += "end\n";
            }
            let _ = write!(out, "\nscreen level{DEPTH} enter reveal\n  widget a_back_000 -> noop goto level0\nend\n");
            out += &boot("");
            out += NOOP;
            out += &reveal(planted);
        }
        Category::TaintOnly => {
            let sources = ["getDeviceId", "getLine1Number", "getSimSerialNumber", "getMacAddress"];
            let sinks = ["sendSMS", "httpExecute", "openConnection", "sendTextMessage"];
            let (src, sink) = (sources[variant % sources.len()], sinks[variant % sinks.len()]);
            let arg = if malign { "id" } else { "text" };
            out += &header(id, "");
            out += &boot(&format!("  id = api {src}()\n  text = \"hello\"\n  api {sink}({arg})\n"));
        }
        Category::ManifestOnly => {
            let key = if malign { "a14e5b3c0d2f9a1" } else { "a14d9c7a1b8e2f0" };
            out += &header(id, &format!("meta ADMOB_PUBLISHER_ID {key}\n"));
            out += &boot("");
        }
        Category::DeadCodeCover => {
            out += &header(id, "");
            if malign {
                out += &boot(&call("  "));
            } else {
                out += &boot("  flag = false\n  if flag then 5 else 6\n  call rare()\n");
                let _ = write!(out, "\nmethod rare()\n  x = api {api}()\nend\n");
            }
        }
        Category::StaticOnly => {
            out += &header(id, "");
            out += "\nscreen main\n  widget go -> noop\nend\n";
            if malign {
                out += "\n# nothing transitions here\nscreen hidden\n  widget w -> spy\nend\n";
            }
            out += &boot("");
            out += NOOP;
            if malign {
                let _ = write!(out, "\nmethod spy()\n  x = api {api}()\nend\n");
            }
        }
        Category::LaunchLeak => {
            let sources = ["getLastKnownLocation", "getCellLocation", "queryContacts"];
            let sinks = ["httpExecute", "openConnection", "sendSMS"];
            let (src, sink) = (sources[variant % sources.len()], sinks[variant % sinks.len()]);
            out += &header(id, "");
            let leak = if malign { format!("  loc = api {src}()\n  api {sink}(loc)\n") } else { String::new() };
            out += &boot(&leak);
        }
    }
    out
}

const LAYOUT: [(Category, usize); 10] = [
    (Category::Launch, 4),
    (Category::RandomOnly, 3),
    (Category::ModelBasedOnly, 2),
    (Category::HumanoidOnly, 1),
    (Category::FirstWidget, 4),
    (Category::TaintOnly, 4),
    (Category::ManifestOnly, 3),
    (Category::DeadCodeCover, 3),
    (Category::StaticOnly, 4),
    (Category::LaunchLeak, 3),
];

fn expectation(category: Category, pair_id: String) -> Expectation {
    use Category::*;
    let tools = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let explorers = tools(&["random", "modelbased", "humanoid"]);
    let (ws, wos) = match category {
        Launch | FirstWidget | LaunchLeak => (true, explorers),
        RandomOnly => (true, tools(&["random"])),
        ModelBasedOnly => (true, tools(&["modelbased"])),
        HumanoidOnly => (true, tools(&["humanoid"])),
        TaintOnly | ManifestOnly => (false, tools(&[])),
        DeadCodeCover => (false, explorers),
        StaticOnly => (true, tools(&[])),
    };
    Expectation {
        pair_id,
        category,
        ws_detected: ws,
        wos_detected_by: wos,
        taint_detected: matches!(category, TaintOnly | LaunchLeak),
        manifest_changed: category == ManifestOnly,
    }
}

/// The benchmark dataset: 31 pairs across ten categories.
pub fn synthetic_pairs() -> Vec<SyntheticPair> {
    let mut out = Vec::new();
    let mut n = 0;
    for (category, count) in LAYOUT {
        for variant in 0..count {
            n += 1;
            let slug = serde_json::to_value(category).expect("category serializes");
            let pair_id = format!("p{n:02}_{}", slug.as_str().expect("string tag"));
            let api = PLANTED[n % PLANTED.len()];
            out.push(SyntheticPair {
                benign: build(category, &format!("{pair_id}.benign"), api, variant, false),
                malign: build(category, &format!("{pair_id}.malign"), api, variant, true),
                expect: expectation(category, pair_id),
            });
        }
    }
    out
}

pub fn synthetic_app_pairs() -> Vec<AppPair> {
    synthetic_pairs()
        .into_iter()
        .map(|p| AppPair {
            pair_id: p.expect.pair_id.clone(),
            benign: parse_app(&p.benign, None).expect("generated benign app parses"),
            malign: parse_app(&p.malign, None).expect("generated malign app parses"),
        })
        .collect()
}

/// Write the dataset in the on-disk pair layout plus its ground truth.
pub fn write_synthetic_dataset(root: &Path) -> io::Result<Vec<Expectation>> {
    let pairs = synthetic_pairs();
    for p in &pairs {
        let dir = root.join(&p.expect.pair_id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(BENIGN_FILE), &p.benign)?;
        fs::write(dir.join(MALIGN_FILE), &p.malign)?;
    }
    let truth: Vec<Expectation> = pairs.into_iter().map(|p| p.expect).collect();
    let text = serde_json::to_string_pretty(&truth).map_err(io::Error::other)?;
    fs::write(root.join(GROUND_TRUTH_FILE), text + "\n")?;
    Ok(truth)
}

pub fn read_ground_truth(root: &Path) -> io::Result<Vec<Expectation>> {
    let text = fs::read_to_string(root.join(GROUND_TRUTH_FILE))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

/// Write `count` random pairs in the on-disk layout.
pub fn write_fuzz_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    catalog: &SensitiveCatalog,
    root: &Path,
    count: usize,
    cfg: &FuzzConfig,
) -> io::Result<()> {
    for i in 0..count {
        let pair = random_pair(rng, catalog, &format!("fuzz{i:04}"), cfg);
        let dir = root.join(&pair.pair_id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(BENIGN_FILE), pair.benign.to_ir_string())?;
        fs::write(dir.join(MALIGN_FILE), pair.malign.to_ir_string())?;
    }
    Ok(())
}
