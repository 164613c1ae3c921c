//! The app intermediate representation.
//!
//! An [`AppModel`] stands in for one instrumented application package: a
//! manifest, a GUI made of screens and widgets, and methods written in a small
//! statement language. Models are produced by [`parse_app`] and are validated
//! on construction, so every model handed to the analyses satisfies the
//! structural invariants documented on each type.
//!
//! The text format is documented in `docs/ir-format.md` at the repository root.

mod dataset;
mod parse;
mod write;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{BENIGN_FILE, MALIGN_FILE, parse_pair_dataset, scan_pair_dataset, DatasetError, DatasetScan, SkippedPair};
pub use parse::{parse_app, ParseError};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Name of a method declared inside an app.
    MethodId
);
string_id!(
    /// Flat identifier of an external (platform) API, matched against the catalog.
    ApiId
);

/// A variable name. Names starting with `this.` live in the per-run global
/// store and persist across handler invocations; all other names are local to
/// a method activation.
pub type Var = String;

pub fn is_global(var: &str) -> bool {
    var.starts_with("this.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppModel {
    pub id: String,
    pub manifest: Manifest,
    /// The first screen is the launch screen.
    pub screens: Vec<Screen>,
    pub methods: BTreeMap<MethodId, MethodBody>,
    pub entry_points: Vec<MethodId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub permissions: BTreeSet<String>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub id: String,
    pub widgets: Vec<Widget>,
    pub on_enter: Option<MethodId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub handler: MethodId,
    pub transition: Option<String>,
    /// Prior interaction likelihood, strictly positive.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodBody {
    pub id: MethodId,
    pub params: Vec<Var>,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Const {
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
}

impl Const {
    pub fn truthy(&self) -> bool {
        match self {
            Const::Int(n) => *n != 0,
            Const::Bool(b) => *b,
            Const::Str(s) => !s.is_empty(),
            Const::Null => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Var(Var),
    Const(Const),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Assign {
        dst: Var,
        src: Operand,
    },
    CallApi {
        api: ApiId,
        args: Vec<Var>,
        ret: Option<Var>,
    },
    CallMethod {
        callee: MethodId,
        args: Vec<Var>,
        ret: Option<Var>,
    },
    /// Jump targets are statement indices; a target equal to the statement
    /// count means "fall off the end of the method".
    Branch {
        cond: Var,
        then_index: usize,
        else_index: usize,
    },
    Return(Option<Var>),
}

impl Statement {
    /// Variables read by this statement.
    pub fn reads(&self) -> Vec<&str> {
        match self {
            Statement::Assign { src: Operand::Var(v), .. } => vec![v.as_str()],
            Statement::Assign { .. } => Vec::new(),
            Statement::CallApi { args, .. } | Statement::CallMethod { args, .. } => {
                args.iter().map(String::as_str).collect()
            }
            Statement::Branch { cond, .. } => vec![cond.as_str()],
            Statement::Return(v) => v.iter().map(String::as_str).collect(),
        }
    }

    /// Variable written by this statement, if any.
    pub fn writes(&self) -> Option<&str> {
        match self {
            Statement::Assign { dst, .. } => Some(dst),
            Statement::CallApi { ret, .. } | Statement::CallMethod { ret, .. } => ret.as_deref(),
            _ => None,
        }
    }

    /// Control-flow successors inside the enclosing method. An index equal to
    /// `len` denotes method exit.
    pub fn successors(&self, index: usize) -> Vec<usize> {
        match self {
            Statement::Branch { then_index, else_index, .. } => {
                if then_index == else_index {
                    vec![*then_index]
                } else {
                    vec![*then_index, *else_index]
                }
            }
            Statement::Return(_) => Vec::new(),
            _ => vec![index + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppPair {
    pub pair_id: String,
    pub benign: AppModel,
    pub malign: AppModel,
}

impl AppModel {
    pub fn method(&self, id: &str) -> Option<&MethodBody> {
        self.methods.get(id)
    }

    pub fn screen(&self, id: &str) -> Option<&Screen> {
        self.screens.iter().find(|s| s.id == id)
    }

    /// Methods invoked by the platform rather than by app code: launch
    /// handlers, screen entry hooks and widget handlers, in that order and
    /// without duplicates.
    pub fn root_methods(&self) -> Vec<&MethodId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let hooks = self.screens.iter().filter_map(|s| s.on_enter.as_ref());
        let handlers = self.screens.iter().flat_map(|s| s.widgets.iter().map(|w| &w.handler));
        for m in self.entry_points.iter().chain(hooks).chain(handlers) {
            if seen.insert(m) {
                out.push(m);
            }
        }
        out
    }

    /// Every external API identifier named by a `CallApi` statement.
    pub fn referenced_apis(&self) -> BTreeSet<&ApiId> {
        self.methods
            .values()
            .flat_map(|m| m.statements.iter())
            .filter_map(|s| match s {
                Statement::CallApi { api, .. } => Some(api),
                _ => None,
            })
            .collect()
    }

    /// Serialize back to the text format accepted by [`parse_app`].
    pub fn to_ir_string(&self) -> String {
        write::write_app(self)
    }
}

/// A variable read on some path before any assignment reaches it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lint {
    pub method: MethodId,
    pub index: usize,
    pub var: Var,
}

impl fmt::Display for Lint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: `{}` may be read before assignment", self.method, self.index, self.var)
    }
}

/// Report local variables that may be read before being assigned. Globals and
/// parameters are always considered defined.
pub fn lint(app: &AppModel) -> Vec<Lint> {
    let mut out = Vec::new();
    for body in app.methods.values() {
        let n = body.statements.len();
        // must-defined sets; `None` = not yet visited
        let mut defined: Vec<Option<BTreeSet<&str>>> = vec![None; n + 1];
        defined[0] = Some(body.params.iter().map(String::as_str).collect());
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                let Some(mut cur) = defined[i].clone() else { continue };
                if let Some(w) = body.statements[i].writes() {
                    cur.insert(w);
                }
                for succ in body.statements[i].successors(i) {
                    let next = match &defined[succ] {
                        None => cur.clone(),
                        Some(prev) => prev.intersection(&cur).copied().collect(),
                    };
                    if defined[succ].as_ref() != Some(&next) {
                        defined[succ] = Some(next);
                        changed = true;
                    }
                }
            }
        }
        for (i, stmt) in body.statements.iter().enumerate() {
            let Some(def) = &defined[i] else { continue };
            for v in stmt.reads() {
                if !is_global(v) && !def.contains(v) {
                    out.push(Lint { method: body.id.clone(), index: i, var: v.to_owned() });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lint_flags_read_before_assign() {
        let app = parse_app(
            "app a\nentry m\nmethod m(p)\n  x = p\n  if y then 2 else 2\n  return x\nend\n",
            None,
        )
        .unwrap();
        let lints = lint(&app);
        assert_eq!(lints.len(), 1);
        assert_eq!(lints[0].var, "y");
        assert_eq!(lints[0].index, 1);
    }

    #[test]
    fn lint_accepts_assignment_on_all_paths() {
        let src = "app a\nentry m\nmethod m(c)\n  if c then 1 else 3\n  x = 1\n  return x\n  x = 2\n  return x\nend\n";
        let app = parse_app(src, None).unwrap();
        assert!(lint(&app).is_empty());
    }

    #[test]
    fn root_methods_deduplicates() {
        let src = "app a\nentry m\nscreen s enter m\n  widget w -> m\nend\nmethod m()\nend\n";
        let app = parse_app(src, None).unwrap();
        assert_eq!(app.root_methods(), vec![&MethodId::from("m")]);
    }
}
