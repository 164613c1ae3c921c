//! Concrete small-step interpreter for method bodies.

use std::collections::{BTreeSet, HashMap};

use crate::catalog::SensitiveCatalog;
use crate::ir::{is_global, ApiId, AppModel, Const, MethodBody, MethodId, Operand, Statement};

pub const DEFAULT_STEP_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Known(Const),
    /// Input-dependent or otherwise unknowable value, e.g. an API result.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    StepLimit,
}

/// Resolves branches whose condition is [`Value::Unknown`].
pub trait BranchDecider {
    fn decide(&mut self, method: &MethodId, index: usize) -> bool;
}

impl<F: FnMut(&MethodId, usize) -> bool> BranchDecider for F {
    fn decide(&mut self, method: &MethodId, index: usize) -> bool {
        self(method, index)
    }
}

struct Frame<'a> {
    body: &'a MethodBody,
    pc: usize,
    locals: HashMap<&'a str, Value>,
}

/// Interpreter state for one exploration run: the global store persists
/// across handler invocations, locals live for one activation.
pub struct Machine<'a> {
    app: &'a AppModel,
    catalog: &'a SensitiveCatalog,
    globals: HashMap<String, Value>,
    observed: BTreeSet<ApiId>,
    step_limit: usize,
}

impl<'a> Machine<'a> {
    pub fn new(app: &'a AppModel, catalog: &'a SensitiveCatalog, step_limit: usize) -> Self {
        Machine { app, catalog, globals: HashMap::new(), observed: BTreeSet::new(), step_limit }
    }

    /// Sensitive APIs called so far.
    pub fn observed(&self) -> &BTreeSet<ApiId> {
        &self.observed
    }

    pub fn into_observed(self) -> BTreeSet<ApiId> {
        self.observed
    }

    pub fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    /// Run `method` with no arguments until it returns or the step limit is hit.
    pub fn run_handler(&mut self, method: &MethodId, decider: &mut dyn BranchDecider) -> Outcome {
        let Some(body) = self.app.method(method.as_str()) else {
            return Outcome::Completed;
        };
        let app = self.app;
        let mut stack: Vec<(Frame<'a>, Option<&'a str>)> = vec![(Frame { body, pc: 0, locals: HashMap::new() }, None)];
        let mut steps = 0usize;
        loop {
            let (frame, _) = stack.last_mut().expect("non-empty stack");
            let action = match frame.body.statements.get(frame.pc) {
                // falling off the end is an implicit `return`
                None => Action::Return(Value::Known(Const::Null)),
                Some(stmt) => {
                    steps += 1;
                    if steps > self.step_limit {
                        return Outcome::StepLimit;
                    }
                    match stmt {
                        Statement::Assign { dst, src } => {
                            let v = match src {
                                Operand::Const(c) => Value::Known(c.clone()),
                                Operand::Var(v) => read(&self.globals, &frame.locals, v),
                            };
                            write(&mut self.globals, &mut frame.locals, dst, v);
                            frame.pc += 1;
                            Action::Continue
                        }
                        Statement::CallApi { api, ret, .. } => {
                            if self.catalog.contains(api.as_str()) {
                                self.observed.insert(api.clone());
                            }
                            if let Some(r) = ret {
                                write(&mut self.globals, &mut frame.locals, r, Value::Unknown);
                            }
                            frame.pc += 1;
                            Action::Continue
                        }
                        Statement::CallMethod { callee, args, ret } => match app.method(callee.as_str()) {
                            Some(callee_body) => {
                                let mut locals = HashMap::new();
                                for (i, p) in callee_body.params.iter().enumerate() {
                                    let v = args
                                        .get(i)
                                        .map_or(Value::Unknown, |a| read(&self.globals, &frame.locals, a));
                                    locals.insert(p.as_str(), v);
                                }
                                Action::Call(Frame { body: callee_body, pc: 0, locals }, ret.as_deref())
                            }
                            None => {
                                // validated models never reach this
                                if let Some(r) = ret {
                                    write(&mut self.globals, &mut frame.locals, r, Value::Unknown);
                                }
                                frame.pc += 1;
                                Action::Continue
                            }
                        },
                        Statement::Branch { cond, then_index, else_index } => {
                            let taken = match read(&self.globals, &frame.locals, cond) {
                                Value::Known(c) => c.truthy(),
                                Value::Unknown => decider.decide(&frame.body.id, frame.pc),
                            };
                            frame.pc = if taken { *then_index } else { *else_index };
                            Action::Continue
                        }
                        Statement::Return(v) => Action::Return(match v {
                            Some(v) => read(&self.globals, &frame.locals, v),
                            None => Value::Known(Const::Null),
                        }),
                    }
                }
            };
            match action {
                Action::Continue => {}
                Action::Call(frame, ret) => stack.push((frame, ret)),
                Action::Return(value) => {
                    let (_, ret_var) = stack.pop().expect("non-empty stack");
                    let Some((caller, _)) = stack.last_mut() else {
                        return Outcome::Completed;
                    };
                    if let Some(r) = ret_var {
                        write(&mut self.globals, &mut caller.locals, r, value);
                    }
                    caller.pc += 1;
                }
            }
        }
    }
}

enum Action<'a> {
    Continue,
    Call(Frame<'a>, Option<&'a str>),
    Return(Value),
}

fn read(globals: &HashMap<String, Value>, locals: &HashMap<&str, Value>, var: &str) -> Value {
    let v = if is_global(var) { globals.get(var) } else { locals.get(var) };
    v.cloned().unwrap_or(Value::Unknown)
}

fn write<'a>(globals: &mut HashMap<String, Value>, locals: &mut HashMap<&'a str, Value>, var: &'a str, v: Value) {
    if is_global(var) {
        globals.insert(var.to_owned(), v);
    } else {
        locals.insert(var, v);
    }
}
