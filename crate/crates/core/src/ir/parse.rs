use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{ApiId, AppModel, Const, Manifest, MethodBody, MethodId, Operand, Screen, Statement, Widget};
use crate::catalog::SensitiveCatalog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: unresolved {kind} `{name}`")]
    Reference { line: usize, kind: &'static str, name: String },
    #[error("line {line}: duplicate {kind} `{name}`")]
    Duplicate { line: usize, kind: &'static str, name: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl ParseError {
    fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax { line, column, message: message.into() }
    }
}

/// Parse and validate one `.app` document.
///
/// `call` targets that name no declared method are rewritten to external API
/// calls when `catalog` lists them; otherwise they are reported as dangling
/// references. Explicit `api` statements may name any identifier.
pub fn parse_app(text: &str, catalog: Option<&SensitiveCatalog>) -> Result<AppModel, ParseError> {
    let raw = Parser::new(text).parse()?;
    raw.validate(catalog)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '$' | '.')
}

fn tokenize(line_no: usize, line: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), column });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = matches!(d, '+' | '-') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || matches!(d, '.' | 'e' | 'E') || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token { tok: Tok::Number(chars[start..i].iter().collect()), column });
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(ParseError::syntax(line_no, column, "unterminated string literal")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            _ => return Err(ParseError::syntax(line_no, i + 1, "invalid escape sequence")),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), column });
        } else {
            let punct = match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                ':' => ":",
                '=' => "=",
                '-' if chars.get(i + 1) == Some(&'>') => "->",
                _ => return Err(ParseError::syntax(line_no, column, format!("unexpected character `{c}`"))),
            };
            i += punct.len();
            out.push(Token { tok: Tok::Punct(punct), column });
        }
    }
    Ok(out)
}

const KEYWORDS: &[&str] = &["api", "call", "if", "then", "else", "return", "true", "false", "null", "end"];

/// Cursor over the tokens of a single line.
struct Line {
    no: usize,
    toks: Vec<Token>,
    pos: usize,
    end_column: usize,
}

impl Line {
    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |t| t.column)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::syntax(self.no, self.column(), message)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|t| &t.tok)
    }

    fn is_done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        let col = self.column();
        let v = self.ident("variable name")?;
        if KEYWORDS.contains(&v.as_str()) {
            return Err(ParseError::syntax(self.no, col, format!("`{v}` is a reserved word")));
        }
        Ok(v)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn punct(&mut self, p: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Punct(q)) if *q == p => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{p}`"))),
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let v = n.parse::<usize>().map_err(|_| self.err(format!("invalid statement index `{n}`")))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected statement index")),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.is_done() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing input"))
        }
    }

    /// Comma-separated identifiers between parentheses.
    fn name_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.punct("(")?;
        let mut out = Vec::new();
        if self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            out.push(self.var()?);
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.punct(",")?;
        }
    }
}

#[derive(Default)]
struct RawApp {
    id: Option<(String, usize)>,
    permissions: Vec<(String, usize)>,
    metadata: Vec<(String, String, usize)>,
    entries: Vec<(String, usize)>,
    screens: Vec<RawScreen>,
    methods: Vec<RawMethod>,
}

struct RawScreen {
    id: String,
    line: usize,
    on_enter: Option<String>,
    widgets: Vec<RawWidget>,
}

struct RawWidget {
    id: String,
    line: usize,
    handler: String,
    transition: Option<String>,
    weight: f64,
}

struct RawMethod {
    id: String,
    line: usize,
    params: Vec<String>,
    statements: Vec<(RawStmt, usize)>,
}

enum RawStmt {
    Plain(Statement),
    /// `call` whose target is resolved during validation.
    Call { callee: String, args: Vec<String>, ret: Option<String> },
}

enum Block {
    Top,
    Screen,
    Method,
}

struct Parser<'a> {
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text }
    }

    fn parse(self) -> Result<RawApp, ParseError> {
        let mut app = RawApp::default();
        let mut block = Block::Top;
        let mut last_line = 0;
        for (idx, raw_line) in self.text.lines().enumerate() {
            let no = idx + 1;
            last_line = no;
            let trimmed = raw_line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            // `meta` values are free text; handle before tokenizing.
            if matches!(block, Block::Top) && (trimmed.starts_with("meta ") || trimmed.starts_with("meta\t")) {
                let rest = trimmed[4..].trim();
                let (key, value) = match rest.split_once(char::is_whitespace) {
                    Some((k, v)) => (k, v.trim()),
                    None => (rest, ""),
                };
                if key.is_empty() {
                    return Err(ParseError::syntax(no, raw_line.len() + 1, "expected metadata key"));
                }
                app.metadata.push((key.to_owned(), value.to_owned(), no));
                continue;
            }
            let toks = tokenize(no, raw_line)?;
            if toks.is_empty() {
                continue;
            }
            let mut line = Line { no, toks, pos: 0, end_column: raw_line.chars().count() + 1 };
            if line.eat_keyword("end") {
                line.finish()?;
                match block {
                    Block::Top => return Err(ParseError::syntax(no, 1, "`end` outside of a block")),
                    _ => block = Block::Top,
                }
                continue;
            }
            block = match block {
                Block::Top => self.top_level(&mut app, &mut line)?,
                Block::Screen => {
                    let screen = app.screens.last_mut().expect("open screen");
                    screen.widgets.push(widget(&mut line)?);
                    Block::Screen
                }
                Block::Method => {
                    let method = app.methods.last_mut().expect("open method");
                    let expected = method.statements.len();
                    let stmt = statement(&mut line, expected)?;
                    method.statements.push((stmt, no));
                    Block::Method
                }
            };
        }
        if !matches!(block, Block::Top) {
            return Err(ParseError::syntax(last_line + 1, 1, "missing `end` before end of input"));
        }
        Ok(app)
    }

    fn top_level(&self, app: &mut RawApp, line: &mut Line) -> Result<Block, ParseError> {
        let col = line.column();
        let kw = line.ident("a declaration keyword")?;
        if app.id.is_none() && kw != "app" {
            return Err(ParseError::syntax(line.no, col, "expected `app <id>` as the first declaration"));
        }
        match kw.as_str() {
            "app" => {
                if let Some((prev, _)) = &app.id {
                    return Err(ParseError::Duplicate { line: line.no, kind: "app declaration", name: prev.clone() });
                }
                let id = line.ident("app id")?;
                line.finish()?;
                app.id = Some((id, line.no));
                Ok(Block::Top)
            }
            "permission" => {
                let p = line.ident("permission name")?;
                line.finish()?;
                app.permissions.push((p, line.no));
                Ok(Block::Top)
            }
            "entry" => {
                let m = line.ident("method name")?;
                line.finish()?;
                app.entries.push((m, line.no));
                Ok(Block::Top)
            }
            "screen" => {
                let id = line.ident("screen id")?;
                let on_enter = if line.eat_keyword("enter") { Some(line.ident("method name")?) } else { None };
                line.finish()?;
                app.screens.push(RawScreen { id, line: line.no, on_enter, widgets: Vec::new() });
                Ok(Block::Screen)
            }
            "method" => {
                let id = line.ident("method name")?;
                let params = line.name_list()?;
                line.finish()?;
                app.methods.push(RawMethod { id, line: line.no, params, statements: Vec::new() });
                Ok(Block::Method)
            }
            other => Err(ParseError::syntax(line.no, col, format!("unknown declaration `{other}`"))),
        }
    }
}

fn widget(line: &mut Line) -> Result<RawWidget, ParseError> {
    line.keyword("widget")?;
    let id = line.ident("widget id")?;
    line.punct("->")?;
    let handler = line.ident("handler method")?;
    let mut transition = None;
    let mut weight = None;
    while !line.is_done() {
        if line.eat_keyword("goto") {
            if transition.is_some() {
                return Err(line.err("`goto` given twice"));
            }
            transition = Some(line.ident("screen id")?);
        } else if line.eat_keyword("weight") {
            if weight.is_some() {
                return Err(line.err("`weight` given twice"));
            }
            let col = line.column();
            let w = match line.next() {
                Some(Tok::Number(n)) => n.parse::<f64>().map_err(|_| ParseError::syntax(line.no, col, "invalid weight"))?,
                _ => return Err(ParseError::syntax(line.no, col, "expected weight")),
            };
            if !(w.is_finite() && w > 0.0) {
                return Err(ParseError::syntax(line.no, col, "widget weight must be positive"));
            }
            weight = Some(w);
        } else {
            return Err(line.err("expected `goto` or `weight`"));
        }
    }
    Ok(RawWidget { id, line: line.no, handler, transition, weight: weight.unwrap_or(1.0) })
}

fn statement(line: &mut Line, expected_index: usize) -> Result<RawStmt, ParseError> {
    if matches!(line.peek(), Some(Tok::Number(_))) && matches!(line.peek_at(1), Some(Tok::Punct(":"))) {
        let col = line.column();
        let idx = line.index()?;
        line.punct(":")?;
        if idx != expected_index {
            return Err(ParseError::syntax(line.no, col, format!("statement label {idx} out of sequence, expected {expected_index}")));
        }
    }
    if line.eat_keyword("return") {
        let v = if line.is_done() { None } else { Some(line.var()?) };
        line.finish()?;
        return Ok(RawStmt::Plain(Statement::Return(v)));
    }
    if line.eat_keyword("if") {
        let cond = line.var()?;
        line.keyword("then")?;
        let then_index = line.index()?;
        line.keyword("else")?;
        let else_index = line.index()?;
        line.finish()?;
        return Ok(RawStmt::Plain(Statement::Branch { cond, then_index, else_index }));
    }
    if matches!(line.peek(), Some(Tok::Ident(k)) if k == "api" || k == "call") {
        return call(line, None);
    }
    let dst = line.var()?;
    line.punct("=")?;
    if matches!(line.peek(), Some(Tok::Ident(k)) if k == "api" || k == "call") {
        return call(line, Some(dst));
    }
    let col = line.column();
    let src = match line.next() {
        Some(Tok::Ident(s)) => match s.as_str() {
            "true" => Operand::Const(Const::Bool(true)),
            "false" => Operand::Const(Const::Bool(false)),
            "null" => Operand::Const(Const::Null),
            k if KEYWORDS.contains(&k) => return Err(ParseError::syntax(line.no, col, format!("`{k}` is a reserved word"))),
            _ => Operand::Var(s),
        },
        Some(Tok::Number(n)) => Operand::Const(Const::Int(
            n.parse::<i64>().map_err(|_| ParseError::syntax(line.no, col, format!("invalid integer `{n}`")))?,
        )),
        Some(Tok::Str(s)) => Operand::Const(Const::Str(s)),
        _ => return Err(ParseError::syntax(line.no, col, "expected operand")),
    };
    line.finish()?;
    Ok(RawStmt::Plain(Statement::Assign { dst, src }))
}

fn call(line: &mut Line, ret: Option<String>) -> Result<RawStmt, ParseError> {
    let is_api = line.eat_keyword("api");
    if !is_api {
        line.keyword("call")?;
    }
    let target = line.ident("call target")?;
    let args = line.name_list()?;
    line.finish()?;
    Ok(if is_api {
        RawStmt::Plain(Statement::CallApi { api: ApiId::new(target), args, ret })
    } else {
        RawStmt::Call { callee: target, args, ret }
    })
}

impl RawApp {
    fn validate(self, catalog: Option<&SensitiveCatalog>) -> Result<AppModel, ParseError> {
        let Some((id, _)) = self.id else {
            return Err(ParseError::Invalid { line: 1, message: "missing `app <id>` declaration".into() });
        };

        let mut manifest = Manifest::default();
        for (p, line) in self.permissions {
            if !manifest.permissions.insert(p.clone()) {
                return Err(ParseError::Duplicate { line, kind: "permission", name: p });
            }
        }
        for (k, v, line) in self.metadata {
            if manifest.metadata.insert(k.clone(), v).is_some() {
                return Err(ParseError::Duplicate { line, kind: "metadata key", name: k });
            }
        }

        let mut declared: BTreeSet<String> = BTreeSet::new();
        for m in &self.methods {
            if !declared.insert(m.id.clone()) {
                return Err(ParseError::Duplicate { line: m.line, kind: "method", name: m.id.clone() });
            }
        }
        let resolve = |name: &str, line: usize, kind: &'static str| -> Result<MethodId, ParseError> {
            if declared.contains(name) {
                Ok(MethodId::new(name))
            } else {
                Err(ParseError::Reference { line, kind, name: name.to_owned() })
            }
        };

        let mut entry_points = Vec::new();
        for (m, line) in &self.entries {
            let mid = resolve(m, *line, "entry point")?;
            if entry_points.contains(&mid) {
                return Err(ParseError::Duplicate { line: *line, kind: "entry point", name: m.clone() });
            }
            entry_points.push(mid);
        }
        if entry_points.is_empty() {
            return Err(ParseError::Invalid { line: 1, message: "app declares no entry point".into() });
        }

        let mut screen_ids = BTreeSet::new();
        for s in &self.screens {
            if !screen_ids.insert(s.id.as_str()) {
                return Err(ParseError::Duplicate { line: s.line, kind: "screen", name: s.id.clone() });
            }
        }
        let mut screens = Vec::with_capacity(self.screens.len());
        for s in &self.screens {
            let on_enter = s.on_enter.as_deref().map(|m| resolve(m, s.line, "screen entry hook")).transpose()?;
            let mut widget_ids = BTreeSet::new();
            let mut widgets = Vec::with_capacity(s.widgets.len());
            for w in &s.widgets {
                if !widget_ids.insert(w.id.as_str()) {
                    return Err(ParseError::Duplicate { line: w.line, kind: "widget", name: w.id.clone() });
                }
                if let Some(t) = &w.transition {
                    if !screen_ids.contains(t.as_str()) {
                        return Err(ParseError::Reference { line: w.line, kind: "screen", name: t.clone() });
                    }
                }
                widgets.push(Widget {
                    id: w.id.clone(),
                    handler: resolve(&w.handler, w.line, "widget handler")?,
                    transition: w.transition.clone(),
                    weight: w.weight,
                });
            }
            screens.push(Screen { id: s.id.clone(), widgets, on_enter });
        }

        let mut methods = BTreeMap::new();
        for m in self.methods {
            let mut seen = BTreeSet::new();
            for p in &m.params {
                if !seen.insert(p.as_str()) {
                    return Err(ParseError::Duplicate { line: m.line, kind: "parameter", name: p.clone() });
                }
            }
            let len = m.statements.len();
            let mut statements = Vec::with_capacity(len);
            for (raw, line) in m.statements {
                let stmt = match raw {
                    RawStmt::Plain(s) => s,
                    RawStmt::Call { callee, args, ret } => {
                        if declared.contains(callee.as_str()) {
                            Statement::CallMethod { callee: MethodId::new(callee), args, ret }
                        } else if catalog.is_some_and(|c| c.contains(&callee)) {
                            Statement::CallApi { api: ApiId::new(callee), args, ret }
                        } else {
                            return Err(ParseError::Reference { line, kind: "method", name: callee });
                        }
                    }
                };
                if let Statement::Branch { then_index, else_index, .. } = &stmt {
                    for t in [then_index, else_index] {
                        if *t > len {
                            return Err(ParseError::Invalid {
                                line,
                                message: format!("branch target {t} out of range (method has {len} statements)"),
                            });
                        }
                    }
                }
                statements.push(stmt);
            }
            let mid = MethodId::new(m.id);
            methods.insert(mid.clone(), MethodBody { id: mid, params: m.params, statements });
        }

        Ok(AppModel { id, manifest, screens, methods, entry_points })
    }
}
