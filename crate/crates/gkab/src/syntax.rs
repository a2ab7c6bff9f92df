//! Instance files: a hand-written lexer and recursive-descent parser, model
//! validation, and a serializer emitting the same grammar.
//!
//! ```text
//! tbox { concept N, M; role P; funct P-; N <= exists P; N <= not M; }
//! constants { a, b; distinguished rep; }
//! abox { N(a); P(a,b); }
//! action grow(x) { effect [N(x)] -> add { P(x, f(x)) }, del { N(x) }; }
//! process { [N(x)] => grow(x); }
//! program while [N(a)] do pick [N(x)] . grow(x);
//! formula reach: mu Z. [M(a)] | <>Z;
//! service f { f(a) = b; default = a; }
//! ```
//!
//! Identifiers declared in `constants`, `abox` or service blocks are
//! constants everywhere; every other identifier in a term position is a
//! variable. Names starting with `_` are reserved for variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::action::{Action, Effect, HeadAtom, HeadTerm, Kab, Rule, ServiceCall, ServiceConfig, ServiceMap};
use crate::golog::{Gkab, Kind, Program};
use crate::kb::{is_marker, ABox, Concept, Fact, Role, TBox};
use crate::mu::Formula;
use crate::query::{check_domain_independent, Atom, Cq, Ecq, Term, Ucq};
use crate::{name, Name};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("invalid instance: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> SyntaxError {
    SyntaxError::Validation(msg.into())
}

/// A parsed instance file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Instance {
    pub tbox: TBox,
    /// All constants, distinguished ones included.
    pub constants: BTreeSet<Name>,
    pub distinguished: BTreeSet<Name>,
    pub abox: ABox,
    pub actions: Vec<Action>,
    pub process: Option<Vec<Rule>>,
    pub program: Option<Arc<Program>>,
    pub formulas: Vec<(Name, Formula)>,
    pub services: ServiceConfig,
}

impl Instance {
    pub fn gkab(&self) -> Option<Gkab> {
        Some(Gkab { tbox: self.tbox.clone(), abox: self.abox.clone(), actions: self.actions.clone(), program: self.program.clone()? })
    }

    pub fn kab(&self) -> Option<Kab> {
        Some(Kab { tbox: self.tbox.clone(), abox: self.abox.clone(), actions: self.actions.clone(), process: self.process.clone()? })
    }

    pub fn formula(&self, n: &str) -> Option<&Formula> {
        self.formulas.iter().find(|(k, _)| &**k == n).map(|(_, f)| f)
    }

    /// Adds every constant mentioned by the ABox, the dynamics and the
    /// service configuration to `constants`.
    pub fn collect_constants(&mut self) {
        self.constants.extend(self.abox.adom());
        self.constants.extend(self.distinguished.iter().cloned());
        match &self.services {
            ServiceConfig::Oracle { table, defaults } => {
                for (c, v) in table {
                    self.constants.extend(c.args.iter().cloned());
                    self.constants.insert(v.clone());
                }
                self.constants.extend(defaults.values().cloned());
            }
            ServiceConfig::Enumerate(vs) => self.constants.extend(vs.iter().cloned()),
        }
        let g = Gkab {
            tbox: self.tbox.clone(),
            abox: self.abox.clone(),
            actions: self.actions.clone(),
            program: self.program.clone().unwrap_or_else(Program::skip),
        };
        self.constants.extend(crate::compiler::system_constants(&g));
        for r in self.process.iter().flatten() {
            self.constants.extend(r.guard.constants());
        }
        for (_, f) in &self.formulas {
            for q in formula_queries(f) {
                self.constants.extend(q.constants());
            }
        }
    }
}

/// Parses and validates an instance.
pub fn parse_instance(src: &str) -> Result<Instance, SyntaxError> {
    parse_instance_with(src, false)
}

pub fn parse_instance_with(src: &str, allow_specialized_funct: bool) -> Result<Instance, SyntaxError> {
    let toks = lex(src)?;
    let consts = prescan_constants(&toks);
    let mut p = Parser { toks, pos: 0, consts };
    let inst = p.instance()?;
    validate(&inst, allow_specialized_funct)?;
    Ok(inst)
}

/// Parses a standalone formula; `constants` decides which identifiers are constants.
pub fn parse_formula(src: &str, constants: &BTreeSet<Name>) -> Result<Formula, SyntaxError> {
    let mut p = Parser { toks: lex(src)?, pos: 0, consts: constants.clone() };
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 20] = ["<=", "<>", "[]", "->", "=>", "{", "}", "(", ")", "[", "]", ",", ";", ".", ":", "=", "-", "!", "&", "|"];

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    for (i, text) in src.lines().enumerate() {
        let line = i + 1;
        let chars: Vec<char> = text.chars().collect();
        let mut j = 0;
        'scan: while j < chars.len() {
            let ch = chars[j];
            let col = j + 1;
            if ch == '#' {
                break;
            }
            if ch.is_whitespace() {
                j += 1;
                continue;
            }
            if ch.is_alphanumeric() || ch == '_' {
                let start = j;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..j].iter().collect()), line, col });
                continue;
            }
            for s in SYMBOLS {
                let n = s.chars().count();
                if chars[j..].iter().take(n).copied().eq(s.chars()) {
                    out.push(Token { tok: Tok::Sym(s), line, col });
                    j += n;
                    continue 'scan;
                }
            }
            return Err(SyntaxError::Parse { line, col, msg: format!("unexpected character `{ch}`") });
        }
    }
    let line = src.lines().count().max(1);
    out.push(Token { tok: Tok::Eof, line, col: 1 });
    Ok(out)
}

/// Identifiers in `constants`, `abox` and `service` blocks.
fn prescan_constants(toks: &[Token]) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i + 1 < toks.len() {
        let block = match &toks[i].tok {
            Tok::Ident(k) if ["constants", "abox", "service"].contains(&k.as_str()) => k.clone(),
            _ => {
                i += 1;
                continue;
            }
        };
        let mut j = i + 1;
        while j < toks.len() && toks[j].tok != Tok::Sym("{") {
            j += 1;
        }
        let mut depth_end = j + 1;
        while depth_end < toks.len() && !matches!(toks[depth_end].tok, Tok::Sym("}") | Tok::Eof) {
            if let Tok::Ident(s) = &toks[depth_end].tok {
                let before = &toks[depth_end - 1].tok;
                let after = &toks[depth_end + 1].tok;
                let is_const = match block.as_str() {
                    "constants" => s != "distinguished",
                    "abox" => matches!(before, Tok::Sym("(") | Tok::Sym(",")),
                    _ => s != "default" && *after != Tok::Sym("("),
                };
                if is_const {
                    out.insert(name(s));
                }
            }
            depth_end += 1;
        }
        i = depth_end;
    }
    out
}

const BLOCKS: [&str; 8] = ["tbox", "constants", "abox", "action", "process", "program", "formula", "service"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    consts: BTreeSet<Name>,
}

/// A TBox expression before concepts and roles are told apart.
enum Expr {
    Named(Name, bool),
    Exists(Name, bool),
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(SyntaxError::Parse { line: t.line, col: t.col, msg: msg.into() })
    }

    fn advance(&mut self) {
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        if hit {
            self.advance();
        }
        hit
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        let hit = self.is_kw(k);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.err(format!("expected `{k}`, found {}", self.describe()))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => self.err(format!("unexpected {}", self.describe())),
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(name(&s))
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    /// `item (',' item)*`, possibly empty when `close` follows immediately.
    fn list<T>(&mut self, close: &str, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.is_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if !self.eat_sym(",") {
                return Ok(out);
            }
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let n = self.ident()?;
        Ok(if self.consts.contains(&n) { Term::Const(n) } else { Term::Var(n) })
    }

    fn instance(&mut self) -> PResult<Instance> {
        let mut inst = Instance::default();
        let mut oracle: Option<(ServiceMap, BTreeMap<Name, Name>)> = None;
        let mut seen_tbox = false;
        loop {
            let kw = match self.peek() {
                Tok::Eof => break,
                Tok::Ident(k) if BLOCKS.contains(&k.as_str()) => k.clone(),
                _ => return self.err(format!("expected a block keyword, found {}", self.describe())),
            };
            self.advance();
            match kw.as_str() {
                "tbox" => {
                    if std::mem::replace(&mut seen_tbox, true) {
                        return self.err("duplicate tbox block");
                    }
                    inst.tbox = self.tbox()?;
                }
                "constants" => self.constants(&mut inst)?,
                "abox" => {
                    self.expect_sym("{")?;
                    while !self.eat_sym("}") {
                        let pred = self.ident()?;
                        self.expect_sym("(")?;
                        let args = self.list(")", |p| p.ident())?;
                        self.expect_sym(")")?;
                        self.expect_sym(";")?;
                        inst.abox.insert(Fact { pred, args });
                    }
                }
                "action" => inst.actions.push(self.action()?),
                "process" => {
                    if inst.process.is_some() {
                        return self.err("duplicate process block");
                    }
                    inst.process = Some(self.process()?);
                }
                "program" => {
                    if inst.program.is_some() {
                        return self.err("duplicate program");
                    }
                    let p = self.program()?;
                    self.eat_sym(";");
                    inst.program = Some(p.with_ids("r"));
                }
                "formula" => {
                    let n = self.ident()?;
                    self.expect_sym(":")?;
                    let f = self.formula()?;
                    self.expect_sym(";")?;
                    if inst.formula(&n).is_some() {
                        return Err(invalid(format!("duplicate formula `{n}`")));
                    }
                    inst.formulas.push((n, f));
                }
                _ => self.service(&mut inst, &mut oracle)?,
            }
        }
        if let Some((table, defaults)) = oracle {
            inst.services = ServiceConfig::Oracle { table, defaults };
        }
        inst.constants = self.consts.clone();
        Ok(inst)
    }

    fn tbox(&mut self) -> PResult<TBox> {
        self.expect_sym("{")?;
        let mut t = TBox::default();
        let mut axioms = Vec::new();
        while !self.eat_sym("}") {
            if self.eat_kw("concept") {
                t.concepts.extend(self.list(";", |p| p.ident())?);
            } else if self.eat_kw("role") {
                t.roles.extend(self.list(";", |p| p.ident())?);
            } else if self.eat_kw("funct") {
                let r = self.ident()?;
                let inv = self.eat_sym("-");
                t.funct.push(Role { name: r, inverse: inv });
            } else {
                let lhs = self.tbox_expr()?;
                self.expect_sym("<=")?;
                let neg = self.eat_kw("not");
                let rhs = self.tbox_expr()?;
                axioms.push((lhs, neg, rhs));
            }
            self.expect_sym(";")?;
        }
        for (lhs, neg, rhs) in axioms {
            let is_role = |e: &Expr| matches!(e, Expr::Named(n, _) if t.roles.contains(n));
            if is_role(&lhs) != is_role(&rhs) {
                return Err(invalid("inclusion mixes a concept and a role"));
            }
            if is_role(&lhs) {
                let role = |e: Expr| match e {
                    Expr::Named(n, inv) | Expr::Exists(n, inv) => Role { name: n, inverse: inv },
                };
                let pair = (role(lhs), role(rhs));
                if neg { t.role_disj.push(pair) } else { t.role_incl.push(pair) }
            } else {
                let concept = |e: Expr| match e {
                    Expr::Named(n, false) => Ok(Concept::Atomic(n)),
                    Expr::Named(n, true) => Err(invalid(format!("`{n}-` is not a concept"))),
                    Expr::Exists(n, inv) => Ok(Concept::Exists(Role { name: n, inverse: inv })),
                };
                let pair = (concept(lhs)?, concept(rhs)?);
                if neg { t.concept_disj.push(pair) } else { t.concept_incl.push(pair) }
            }
        }
        Ok(t)
    }

    fn tbox_expr(&mut self) -> PResult<Expr> {
        let exists = self.eat_kw("exists");
        let n = self.ident()?;
        let inv = self.eat_sym("-");
        Ok(if exists { Expr::Exists(n, inv) } else { Expr::Named(n, inv) })
    }

    fn constants(&mut self, inst: &mut Instance) -> PResult<()> {
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            let dist = self.eat_kw("distinguished");
            let names = self.list(";", |p| p.ident())?;
            if dist {
                inst.distinguished.extend(names);
            }
            self.expect_sym(";")?;
        }
        Ok(())
    }

    fn action(&mut self) -> PResult<Action> {
        let n = self.ident()?;
        if BLOCKS.contains(&&*n) {
            return self.err(format!("`{n}` is a reserved word"));
        }
        self.expect_sym("(")?;
        let params = self.list(")", |p| p.ident())?;
        self.expect_sym(")")?;
        self.expect_sym("{")?;
        let mut effects = Vec::new();
        while !self.eat_sym("}") {
            self.expect_kw("effect")?;
            let guard = self.ecq()?;
            self.expect_sym("->")?;
            let (mut add, mut del) = (Vec::new(), Vec::new());
            if self.eat_kw("add") {
                add = self.heads()?;
                if self.eat_sym(",") {
                    self.expect_kw("del")?;
                    del = self.heads()?;
                }
            } else {
                self.expect_kw("del")?;
                del = self.heads()?;
            }
            self.expect_sym(";")?;
            effects.push(Effect { guard, add, del });
        }
        Ok(Action { name: n, params, effects })
    }

    fn heads(&mut self) -> PResult<Vec<HeadAtom>> {
        self.expect_sym("{")?;
        let out = self.list("}", |p| {
            let pred = p.ident()?;
            p.expect_sym("(")?;
            let args = p.list(")", |p| {
                if matches!(p.peek_at(1), Tok::Sym("(")) {
                    let func = p.ident()?;
                    p.expect_sym("(")?;
                    let args = p.list(")", |p| {
                        if matches!(p.peek_at(1), Tok::Sym("(")) {
                            return p.err("nested service calls are not allowed");
                        }
                        p.term()
                    })?;
                    p.expect_sym(")")?;
                    Ok(HeadTerm::Call { func, args })
                } else {
                    Ok(HeadTerm::Term(p.term()?))
                }
            })?;
            p.expect_sym(")")?;
            Ok(HeadAtom { pred, args })
        })?;
        self.expect_sym("}")?;
        Ok(out)
    }

    fn process(&mut self) -> PResult<Vec<Rule>> {
        self.expect_sym("{")?;
        let mut rules = Vec::new();
        while !self.eat_sym("}") {
            let guard = self.ecq()?;
            self.expect_sym("=>")?;
            let action = self.ident()?;
            self.expect_sym("(")?;
            let args = self.list(")", |p| p.ident())?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            rules.push(Rule { guard, action, args });
        }
        Ok(rules)
    }

    fn service(&mut self, inst: &mut Instance, oracle: &mut Option<(ServiceMap, BTreeMap<Name, Name>)>) -> PResult<()> {
        let f = self.ident()?;
        self.expect_sym("{")?;
        if &*f == "enumerate" {
            if oracle.is_some() || matches!(inst.services, ServiceConfig::Enumerate(_)) {
                return self.err("enumerate cannot be combined with other service blocks");
            }
            let vs = self.list("}", |p| p.ident())?;
            self.eat_sym(";");
            self.expect_sym("}")?;
            inst.services = ServiceConfig::Enumerate(vs);
            return Ok(());
        }
        if matches!(inst.services, ServiceConfig::Enumerate(_)) {
            return self.err("enumerate cannot be combined with other service blocks");
        }
        let (table, defaults) = oracle.get_or_insert_with(Default::default);
        while !self.eat_sym("}") {
            if self.eat_kw("default") {
                self.expect_sym("=")?;
                let v = self.ident()?;
                if defaults.insert(f.clone(), v).is_some() {
                    return self.err(format!("duplicate default for `{f}`"));
                }
            } else {
                let g = self.ident()?;
                if g != f {
                    return self.err(format!("entry for `{g}` inside service `{f}`"));
                }
                self.expect_sym("(")?;
                let args = self.list(")", |p| p.ident())?;
                self.expect_sym(")")?;
                self.expect_sym("=")?;
                let v = self.ident()?;
                if table.insert(ServiceCall { func: f.clone(), args }, v).is_some() {
                    return self.err(format!("duplicate entry for `{f}`"));
                }
            }
            self.expect_sym(";")?;
        }
        Ok(())
    }

    fn program(&mut self) -> PResult<Arc<Program>> {
        let a = self.seq()?;
        if self.eat_sym("|") {
            return Ok(Program::choice(a, self.program()?));
        }
        Ok(a)
    }

    fn starts_program(&self) -> bool {
        match self.peek() {
            Tok::Sym("(") => true,
            Tok::Ident(k) => {
                ["skip", "pick", "if", "while"].contains(&k.as_str()) || matches!(self.peek_at(1), Tok::Sym("("))
            }
            _ => false,
        }
    }

    fn seq(&mut self) -> PResult<Arc<Program>> {
        let a = self.unary()?;
        if self.is_sym(";") && {
            self.advance();
            let more = self.starts_program();
            self.pos -= 1;
            more
        } {
            self.advance();
            return Ok(Program::seq(a, self.seq()?));
        }
        Ok(a)
    }

    fn unary(&mut self) -> PResult<Arc<Program>> {
        if self.eat_kw("skip") {
            Ok(Program::skip())
        } else if self.eat_kw("pick") {
            let guard = self.ecq()?;
            self.expect_sym(".")?;
            let action = self.ident()?;
            self.expect_sym("(")?;
            let args = self.list(")", |p| p.ident())?;
            self.expect_sym(")")?;
            Ok(Arc::new(Program { pid: name(""), kind: Kind::Invoke { guard, action, args } }))
        } else if self.eat_kw("if") {
            let c = self.ecq()?;
            self.expect_kw("then")?;
            let a = self.unary()?;
            self.expect_kw("else")?;
            let b = self.unary()?;
            Ok(Program::if_(c, a, b))
        } else if self.eat_kw("while") {
            let c = self.ecq()?;
            self.expect_kw("do")?;
            Ok(Program::while_(c, self.unary()?))
        } else if self.eat_sym("(") {
            let p = self.program()?;
            self.expect_sym(")")?;
            Ok(p)
        } else {
            let action = self.ident()?;
            self.expect_sym("(")?;
            if !self.is_sym(")") {
                return self.err("an invocation with arguments needs `pick <query> .`");
            }
            self.expect_sym(")")?;
            Ok(Program::invoke(Ecq::True, &action, &[]))
        }
    }

    fn ecq(&mut self) -> PResult<Ecq> {
        let start = self.pos;
        let f = self.formula()?;
        match f.to_ecq() {
            Some(q) => Ok(q),
            None => {
                self.pos = start;
                self.err("modal operators and fixpoints are not allowed in queries")
            }
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut f = self.conj()?;
        while self.eat_sym("|") {
            f = f.or(self.conj()?);
        }
        Ok(f)
    }

    fn conj(&mut self) -> PResult<Formula> {
        let mut f = self.prefix()?;
        while self.eat_sym("&") {
            f = f.and(self.prefix()?);
        }
        Ok(f)
    }

    fn prefix(&mut self) -> PResult<Formula> {
        if self.eat_sym("!") {
            return Ok(self.prefix()?.not());
        }
        if self.eat_sym("<>") {
            return Ok(self.prefix()?.possibly());
        }
        if self.eat_sym("[]") {
            return Ok(self.prefix()?.necessarily());
        }
        for kw in ["exists", "forall", "mu", "nu"] {
            if self.eat_kw(kw) {
                let x = self.ident()?;
                self.expect_sym(".")?;
                let body = Box::new(self.formula()?);
                return Ok(match kw {
                    "exists" => Formula::Exists(x, body),
                    "forall" => Formula::Forall(x, body),
                    "mu" => Formula::Mu(x, body),
                    _ => Formula::Nu(x, body),
                });
            }
        }
        if self.eat_kw("true") {
            return Ok(Formula::True);
        }
        if self.eat_kw("false") {
            return Ok(Formula::False);
        }
        if self.eat_sym("(") {
            let f = self.formula()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        let raw = self.is_kw("db") && matches!(self.peek_at(1), Tok::Sym("["));
        if raw {
            self.advance();
        }
        if self.eat_sym("[") {
            let ucq = self.ucq()?;
            self.expect_sym("]")?;
            return Ok(Formula::Query(Ecq::Query { ucq, raw }));
        }
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("(")) {
            let pred = self.ident()?;
            self.expect_sym("(")?;
            let args = self.list(")", |p| p.term())?;
            self.expect_sym(")")?;
            let atom = Atom::Pred { pred, args };
            let free = Cq::new(vec![atom.clone()]).vars().into_iter().collect();
            return Ok(Formula::Query(Ecq::Query { ucq: Ucq::new(free, vec![Cq::new(vec![atom])]), raw: false }));
        }
        match self.peek() {
            Tok::Ident(_) => Ok(Formula::Var(self.ident()?)),
            _ => self.err(format!("expected a formula, found {}", self.describe())),
        }
    }

    fn ucq(&mut self) -> PResult<Ucq> {
        let mut parts = Vec::new();
        loop {
            let bound = if self.eat_kw("exists") {
                let vs = self.list(".", |p| p.ident())?;
                self.expect_sym(".")?;
                vs
            } else {
                vec![]
            };
            let atoms = self.list("]", |p| {
                if matches!(p.peek_at(1), Tok::Sym("(")) {
                    let pred = p.ident()?;
                    p.expect_sym("(")?;
                    let args = p.list(")", |p| p.term())?;
                    p.expect_sym(")")?;
                    Ok(Atom::Pred { pred, args })
                } else {
                    let a = p.term()?;
                    p.expect_sym("=")?;
                    Ok(Atom::Eq(a, p.term()?))
                }
            })?;
            if atoms.is_empty() {
                return self.err("empty conjunctive query");
            }
            for v in &bound {
                if self.consts.contains(v) {
                    return self.err(format!("constant `{v}` cannot be quantified"));
                }
            }
            parts.push((bound, Cq::new(atoms)));
            if !self.eat_sym("|") {
                break;
            }
        }
        let mut free = BTreeSet::new();
        for (bound, cq) in &parts {
            free.extend(cq.vars().into_iter().filter(|v| !bound.contains(v)));
        }
        if let Some(v) = parts.iter().flat_map(|(b, _)| b).find(|v| free.contains(*v)) {
            return self.err(format!("variable `{v}` is both free and quantified"));
        }
        Ok(Ucq::new(free.into_iter().collect(), parts.into_iter().map(|(_, c)| c).collect()))
    }
}

/// Every embedded ECQ of a formula.
pub fn formula_queries(f: &Formula) -> Vec<&Ecq> {
    let mut out = Vec::new();
    let mut stack = vec![f];
    while let Some(g) = stack.pop() {
        match g {
            Formula::Query(q) => out.push(q),
            Formula::Not(a) | Formula::Possibly(a) | Formula::Necessarily(a) => stack.push(a),
            Formula::And(a, b) | Formula::Or(a, b) => stack.extend([&**a, &**b]),
            Formula::Exists(_, a) | Formula::Forall(_, a) | Formula::Mu(_, a) | Formula::Nu(_, a) => stack.push(a),
            Formula::True | Formula::False | Formula::Var(_) => {}
        }
    }
    out
}

fn ecq_atoms(q: &Ecq) -> Vec<&Atom> {
    match q {
        Ecq::True | Ecq::False => vec![],
        Ecq::Query { ucq, .. } => ucq.disjuncts.iter().flat_map(|c| &c.atoms).collect(),
        Ecq::Not(a) | Ecq::Exists(_, a) | Ecq::Forall(_, a) => ecq_atoms(a),
        Ecq::And(a, b) | Ecq::Or(a, b) => {
            let mut v = ecq_atoms(a);
            v.extend(ecq_atoms(b));
            v
        }
    }
}

fn ecq_bound_vars(q: &Ecq, out: &mut BTreeSet<Name>) {
    match q {
        Ecq::True | Ecq::False => {}
        Ecq::Query { ucq, .. } => {
            for c in &ucq.disjuncts {
                out.extend(c.vars().into_iter().filter(|v| !ucq.is_free(v)));
            }
        }
        Ecq::Not(a) => ecq_bound_vars(a, out),
        Ecq::Exists(x, a) | Ecq::Forall(x, a) => {
            out.insert(x.clone());
            ecq_bound_vars(a, out);
        }
        Ecq::And(a, b) | Ecq::Or(a, b) => {
            ecq_bound_vars(a, out);
            ecq_bound_vars(b, out);
        }
    }
}

struct Checker<'a> {
    tbox: &'a TBox,
}

impl Checker<'_> {
    fn pred(&self, p: &str, arity: usize) -> Result<(), SyntaxError> {
        let want = if is_marker(p) { Some(1) } else { self.tbox.arity(p) };
        match want {
            None => Err(invalid(format!("undeclared predicate `{p}`"))),
            Some(k) if k != arity => Err(invalid(format!("`{p}` has arity {k}, used with {arity}"))),
            Some(_) => Ok(()),
        }
    }

    fn ecq(&self, q: &Ecq, bound: &BTreeSet<Name>) -> Result<(), SyntaxError> {
        for a in ecq_atoms(q) {
            if let Atom::Pred { pred, args } = a {
                self.pred(pred, args.len())?;
            }
        }
        check_domain_independent(q, bound).map_err(|e| invalid(e.to_string()))
    }
}

fn validate(inst: &Instance, allow_specialized_funct: bool) -> Result<(), SyntaxError> {
    inst.tbox.validate(allow_specialized_funct).map_err(|e| invalid(e.to_string()))?;
    if let Some(c) = inst.constants.iter().find(|c| c.starts_with('_')) {
        return Err(invalid(format!("constant `{c}` starts with `_`, which is reserved for variables")));
    }
    let ck = Checker { tbox: &inst.tbox };
    for f in inst.abox.iter() {
        ck.pred(&f.pred, f.args.len())?;
    }
    let mut names = BTreeSet::new();
    for a in &inst.actions {
        if !names.insert(a.name.clone()) {
            return Err(invalid(format!("duplicate action `{}`", a.name)));
        }
        let params: BTreeSet<Name> = a.params.iter().cloned().collect();
        if params.len() != a.params.len() {
            return Err(invalid(format!("repeated parameter in action `{}`", a.name)));
        }
        if let Some(p) = params.iter().find(|p| inst.constants.contains(*p)) {
            return Err(invalid(format!("parameter `{p}` of `{}` is a declared constant", a.name)));
        }
        for e in &a.effects {
            ck.ecq(&e.guard, &params)?;
            let mut scope = params.clone();
            scope.extend(e.guard.free_vars());
            for h in e.add.iter().chain(&e.del) {
                ck.pred(&h.pred, h.args.len())?;
                if let Some(v) = h.vars().into_iter().find(|v| !scope.contains(v)) {
                    return Err(invalid(format!("variable `{v}` in an effect of `{}` is not bound", a.name)));
                }
            }
            if let Some(h) = e.del.iter().find(|h| h.has_calls()) {
                return Err(invalid(format!("service call in deletion `{h}`")));
            }
        }
    }
    let arity = |n: &Name| -> Result<usize, SyntaxError> {
        inst.actions
            .iter()
            .find(|a| a.name == *n)
            .map(|a| a.params.len())
            .ok_or_else(|| invalid(format!("unknown action `{n}`")))
    };
    for r in inst.process.iter().flatten() {
        ck.ecq(&r.guard, &BTreeSet::new())?;
        if arity(&r.action)? != r.args.len() {
            return Err(invalid(format!("rule for `{}` has the wrong number of arguments", r.action)));
        }
        let args: BTreeSet<Name> = r.args.iter().cloned().collect();
        if args != r.guard.free_vars() {
            return Err(invalid(format!("arguments of the rule for `{}` must be the free variables of its guard", r.action)));
        }
    }
    if let Some(p) = &inst.program {
        for n in p.nodes() {
            match &n.kind {
                Kind::Invoke { guard, action, args } => {
                    ck.ecq(guard, &BTreeSet::new())?;
                    if arity(action)? != args.len() {
                        return Err(invalid(format!("invocation of `{action}` has the wrong number of arguments")));
                    }
                    let free = guard.free_vars();
                    if let Some(v) = args.iter().find(|v| !free.contains(*v)) {
                        return Err(invalid(format!("argument `{v}` of `{action}` is not a free variable of the guard")));
                    }
                }
                Kind::If(c, ..) | Kind::While(c, _) => {
                    ck.ecq(c, &BTreeSet::new())?;
                    if let Some(v) = c.free_vars().into_iter().next() {
                        return Err(invalid(format!("condition has free variable `{v}`")));
                    }
                }
                Kind::Empty | Kind::Choice(..) | Kind::Seq(..) => {}
            }
        }
    }
    for (n, f) in &inst.formulas {
        f.validate().map_err(|e| invalid(format!("formula `{n}`: {e}")))?;
        for q in formula_queries(f) {
            ck.ecq(q, &f.free_vars_all())?;
        }
    }
    let mut bound = BTreeSet::new();
    for q in inst.actions.iter().flat_map(|a| a.effects.iter().map(|e| &e.guard)) {
        ecq_bound_vars(q, &mut bound);
    }
    if let Some(c) = bound.iter().find(|v| inst.constants.contains(*v)) {
        return Err(invalid(format!("constant `{c}` cannot be quantified")));
    }
    if let ServiceConfig::Oracle { table, .. } = &inst.services {
        let mut arities: BTreeMap<&Name, usize> = BTreeMap::new();
        for c in table.keys() {
            if *arities.entry(&c.func).or_insert(c.args.len()) != c.args.len() {
                return Err(invalid(format!("service `{}` used with different arities", c.func)));
            }
        }
    }
    Ok(())
}

impl Formula {
    /// Individual variables bound anywhere in the formula.
    fn free_vars_all(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(g) = stack.pop() {
            match g {
                Formula::Exists(x, a) | Formula::Forall(x, a) => {
                    out.insert(x.clone());
                    stack.push(a);
                }
                Formula::Query(q) => ecq_bound_vars(q, &mut out),
                Formula::Not(a) | Formula::Possibly(a) | Formula::Necessarily(a) | Formula::Mu(_, a) | Formula::Nu(_, a) => {
                    stack.push(a)
                }
                Formula::And(a, b) | Formula::Or(a, b) => stack.extend([&**a, &**b]),
                Formula::True | Formula::False | Formula::Var(_) => {}
            }
        }
        out
    }
}

fn join<T: fmt::Display>(xs: impl IntoIterator<Item = T>, sep: &str) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.tbox;
        writeln!(f, "tbox {{")?;
        if !t.concepts.is_empty() {
            writeln!(f, "  concept {};", join(&t.concepts, ", "))?;
        }
        if !t.roles.is_empty() {
            writeln!(f, "  role {};", join(&t.roles, ", "))?;
        }
        for r in &t.funct {
            writeln!(f, "  funct {r};")?;
        }
        for (a, b) in &t.concept_incl {
            writeln!(f, "  {a} <= {b};")?;
        }
        for (a, b) in &t.concept_disj {
            writeln!(f, "  {a} <= not {b};")?;
        }
        for (a, b) in &t.role_incl {
            writeln!(f, "  {a} <= {b};")?;
        }
        for (a, b) in &t.role_disj {
            writeln!(f, "  {a} <= not {b};")?;
        }
        writeln!(f, "}}")?;
        let plain: Vec<&Name> = self.constants.iter().filter(|c| !self.distinguished.contains(*c)).collect();
        if !self.constants.is_empty() || !self.distinguished.is_empty() {
            write!(f, "constants {{")?;
            if !plain.is_empty() {
                write!(f, " {};", join(plain, ", "))?;
            }
            if !self.distinguished.is_empty() {
                write!(f, " distinguished {};", join(&self.distinguished, ", "))?;
            }
            writeln!(f, " }}")?;
        }
        writeln!(f, "abox {{")?;
        for fact in self.abox.iter() {
            writeln!(f, "  {fact};")?;
        }
        writeln!(f, "}}")?;
        for a in &self.actions {
            writeln!(f, "action {}({}) {{", a.name, join(&a.params, ", "))?;
            for e in &a.effects {
                let mut parts = Vec::new();
                if !e.add.is_empty() || e.del.is_empty() {
                    parts.push(format!("add {{ {} }}", join(&e.add, ", ")));
                }
                if !e.del.is_empty() {
                    parts.push(format!("del {{ {} }}", join(&e.del, ", ")));
                }
                writeln!(f, "  effect {} -> {};", e.guard, parts.join(", "))?;
            }
            writeln!(f, "}}")?;
        }
        if let Some(rules) = &self.process {
            writeln!(f, "process {{")?;
            for r in rules {
                writeln!(f, "  {} => {}({});", r.guard, r.action, join(&r.args, ", "))?;
            }
            writeln!(f, "}}")?;
        }
        if let Some(p) = &self.program {
            writeln!(f, "program {p};")?;
        }
        for (n, phi) in &self.formulas {
            writeln!(f, "formula {n}: {phi};")?;
        }
        match &self.services {
            ServiceConfig::Enumerate(vs) => writeln!(f, "service enumerate {{ {} }}", join(vs, ", "))?,
            ServiceConfig::Oracle { table, defaults } => {
                let funcs: BTreeSet<&Name> = table.keys().map(|c| &c.func).chain(defaults.keys()).collect();
                for func in funcs {
                    write!(f, "service {func} {{")?;
                    for (c, v) in table.iter().filter(|(c, _)| c.func == *func) {
                        write!(f, " {c} = {v};")?;
                    }
                    if let Some(d) = defaults.get(func) {
                        write!(f, " default = {d};")?;
                    }
                    writeln!(f, " }}")?;
                }
            }
        }
        Ok(())
    }
}
