//! UCQ and ECQ syntax, certain answers through positive-inclusion rewriting,
//! and active-domain evaluation of ECQs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::kb::{concept_atom, role_atom, ABox, Concept, Role, TBox};
use crate::{name, Name};

/// Default cap on the number of disjuncts produced by rewriting.
pub const DEFAULT_REWRITE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query rewriting exceeded {0} disjuncts")]
    RewriteBlowup(usize),
    #[error("query is not domain independent: {0}")]
    NonDomainIndependent(String),
}

/// A variable-to-constant map; query answers and action parameters.
pub type Subst = BTreeMap<Name, Name>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Name),
    Const(Name),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(name(s))
    }

    pub fn cons(s: &str) -> Term {
        Term::Const(name(s))
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    /// The constant this term denotes under `s`, if any.
    pub fn resolve(&self, s: &Subst) -> Option<Name> {
        match self {
            Term::Const(c) => Some(c.clone()),
            Term::Var(v) => s.get(v).cloned(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) | Term::Const(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Pred { pred: Name, args: Vec<Term> },
    Eq(Term, Term),
}

impl Atom {
    pub fn pred(pred: Name, args: Vec<Term>) -> Atom {
        Atom::Pred { pred, args }
    }

    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Atom::Pred { args, .. } => args.iter().collect(),
            Atom::Eq(a, b) => vec![a, b],
        }
    }

    fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> Atom {
        match self {
            Atom::Pred { pred, args } => Atom::Pred { pred: pred.clone(), args: args.iter().map(f).collect() },
            Atom::Eq(a, b) => Atom::Eq(f(a), f(b)),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Pred { pred, args } => {
                write!(f, "{pred}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Atom::Eq(a, b) => write!(f, "{a} = {b}"),
        }
    }
}

/// A conjunctive query body; variables that are not free in the enclosing
/// UCQ are existentially quantified.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cq {
    pub atoms: Vec<Atom>,
}

impl Cq {
    pub fn new(atoms: Vec<Atom>) -> Cq {
        Cq { atoms }
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        self.atoms.iter().flat_map(|a| a.terms()).filter_map(|t| t.as_var().cloned()).collect()
    }

    fn occurrences(&self, v: &Name) -> usize {
        self.atoms.iter().flat_map(|a| a.terms()).filter(|t| t.as_var() == Some(v)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ucq {
    pub free: Vec<Name>,
    pub disjuncts: Vec<Cq>,
}

impl Ucq {
    /// A UCQ with the given free variables, kept in sorted order.
    pub fn new(free: Vec<Name>, disjuncts: Vec<Cq>) -> Ucq {
        let free: BTreeSet<Name> = free.into_iter().collect();
        Ucq { free: free.into_iter().collect(), disjuncts }
    }

    pub fn single(free: Vec<Name>, cq: Cq) -> Ucq {
        Ucq::new(free, vec![cq])
    }

    pub fn is_free(&self, v: &Name) -> bool {
        self.free.contains(v)
    }

    /// Predicates mentioned anywhere in the query.
    pub fn preds(&self) -> BTreeSet<Name> {
        self.disjuncts
            .iter()
            .flat_map(|c| &c.atoms)
            .filter_map(|a| match a {
                Atom::Pred { pred, .. } => Some(pred.clone()),
                Atom::Eq(..) => None,
            })
            .collect()
    }
}

impl fmt::Display for Ucq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, cq) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            let ex: Vec<Name> = cq.vars().into_iter().filter(|v| !self.is_free(v)).collect();
            if !ex.is_empty() {
                write!(f, "exists ")?;
                for (j, v) in ex.iter().enumerate() {
                    if j > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ". ")?;
            }
            for (j, a) in cq.atoms.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}

/// First-order combination of embedded UCQs. `raw` queries are evaluated
/// directly over the ABox, without rewriting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ecq {
    True,
    False,
    Query { ucq: Ucq, raw: bool },
    Not(Box<Ecq>),
    And(Box<Ecq>, Box<Ecq>),
    Or(Box<Ecq>, Box<Ecq>),
    Exists(Name, Box<Ecq>),
    Forall(Name, Box<Ecq>),
}

impl Ecq {
    pub fn certain(ucq: Ucq) -> Ecq {
        Ecq::Query { ucq, raw: false }
    }

    pub fn raw(ucq: Ucq) -> Ecq {
        Ecq::Query { ucq, raw: true }
    }

    /// A single ground or open atom, evaluated with certain answers.
    pub fn atom(pred: &str, args: Vec<Term>) -> Ecq {
        Ecq::single_atom(pred, args, false)
    }

    /// A single atom evaluated raw.
    pub fn raw_atom(pred: &str, args: Vec<Term>) -> Ecq {
        Ecq::single_atom(pred, args, true)
    }

    fn single_atom(pred: &str, args: Vec<Term>, raw: bool) -> Ecq {
        let mut free: Vec<Name> = Vec::new();
        for a in &args {
            if let Some(v) = a.as_var() {
                if !free.contains(v) {
                    free.push(v.clone());
                }
            }
        }
        Ecq::Query { ucq: Ucq::single(free, Cq::new(vec![Atom::pred(name(pred), args)])), raw }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Ecq {
        Ecq::Not(Box::new(self))
    }

    pub fn and(self, other: Ecq) -> Ecq {
        Ecq::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Ecq) -> Ecq {
        Ecq::Or(Box::new(self), Box::new(other))
    }

    pub fn exists_all(vars: &[&str], body: Ecq) -> Ecq {
        vars.iter().rev().fold(body, |b, v| Ecq::Exists(name(v), Box::new(b)))
    }

    /// Disjunction of `parts`; `false` when empty.
    pub fn disj(parts: Vec<Ecq>) -> Ecq {
        parts.into_iter().reduce(|a, b| a.or(b)).unwrap_or(Ecq::False)
    }

    /// Conjunction of `parts`; `true` when empty.
    pub fn conj(parts: Vec<Ecq>) -> Ecq {
        parts.into_iter().reduce(|a, b| a.and(b)).unwrap_or(Ecq::True)
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        match self {
            Ecq::True | Ecq::False => BTreeSet::new(),
            Ecq::Query { ucq, .. } => ucq.free.iter().cloned().collect(),
            Ecq::Not(q) => q.free_vars(),
            Ecq::And(a, b) | Ecq::Or(a, b) => a.free_vars().union(&b.free_vars()).cloned().collect(),
            Ecq::Exists(x, q) | Ecq::Forall(x, q) => {
                let mut s = q.free_vars();
                s.remove(x);
                s
            }
        }
    }

    /// Predicates mentioned anywhere in the query.
    pub fn preds(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |q| {
            if let Ecq::Query { ucq, .. } = q {
                out.extend(ucq.preds());
            }
        });
        out
    }

    /// Constants mentioned anywhere in the query.
    pub fn constants(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |q| {
            if let Ecq::Query { ucq, .. } = q {
                for cq in &ucq.disjuncts {
                    for a in &cq.atoms {
                        for t in a.terms() {
                            if let Term::Const(c) = t {
                                out.insert(c.clone());
                            }
                        }
                    }
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Ecq)) {
        f(self);
        match self {
            Ecq::Not(q) | Ecq::Exists(_, q) | Ecq::Forall(_, q) => q.visit(f),
            Ecq::And(a, b) | Ecq::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Replaces free occurrences of variables by constants.
    pub fn substitute(&self, s: &Subst) -> Ecq {
        match self {
            Ecq::True | Ecq::False => self.clone(),
            Ecq::Query { ucq, raw } => {
                let map = |t: &Term| match t {
                    Term::Var(v) if ucq.is_free(v) => s.get(v).map(|c| Term::Const(c.clone())).unwrap_or(t.clone()),
                    _ => t.clone(),
                };
                let disjuncts =
                    ucq.disjuncts.iter().map(|c| Cq::new(c.atoms.iter().map(|a| a.map_terms(&map)).collect())).collect();
                let free = ucq.free.iter().filter(|v| !s.contains_key(*v)).cloned().collect();
                Ecq::Query { ucq: Ucq { free, disjuncts }, raw: *raw }
            }
            Ecq::Not(q) => q.substitute(s).not(),
            Ecq::And(a, b) => a.substitute(s).and(b.substitute(s)),
            Ecq::Or(a, b) => a.substitute(s).or(b.substitute(s)),
            Ecq::Exists(x, q) | Ecq::Forall(x, q) => {
                let mut inner = s.clone();
                inner.remove(x);
                let body = Box::new(q.substitute(&inner));
                if matches!(self, Ecq::Exists(..)) {
                    Ecq::Exists(x.clone(), body)
                } else {
                    Ecq::Forall(x.clone(), body)
                }
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Ecq::Exists(..) | Ecq::Forall(..) => 0,
            Ecq::Or(..) => 1,
            Ecq::And(..) => 2,
            Ecq::Not(..) => 3,
            _ => 4,
        }
    }

    /// Pushes one negation inward; used for the domain-independence check.
    fn negate(&self) -> Ecq {
        match self {
            Ecq::True => Ecq::False,
            Ecq::False => Ecq::True,
            Ecq::Not(q) => (**q).clone(),
            Ecq::And(a, b) => a.negate().or(b.negate()),
            Ecq::Or(a, b) => a.negate().and(b.negate()),
            Ecq::Exists(x, q) => Ecq::Forall(x.clone(), Box::new(q.negate())),
            Ecq::Forall(x, q) => Ecq::Exists(x.clone(), Box::new(q.negate())),
            Ecq::Query { .. } => self.clone().not(),
        }
    }
}

pub(crate) fn write_child<T: fmt::Display>(f: &mut fmt::Formatter<'_>, child: &T, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Ecq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ecq::True => write!(f, "true"),
            Ecq::False => write!(f, "false"),
            Ecq::Query { ucq, raw } => write!(f, "{}[{ucq}]", if *raw { "db" } else { "" }),
            Ecq::Not(q) => {
                write!(f, "!")?;
                write_child(f, q, q.prec() < 3)
            }
            Ecq::And(a, b) => {
                write_child(f, a, a.prec() < 2)?;
                write!(f, " & ")?;
                write_child(f, b, b.prec() < 3)
            }
            Ecq::Or(a, b) => {
                write_child(f, a, a.prec() < 1)?;
                write!(f, " | ")?;
                write_child(f, b, b.prec() < 2)
            }
            Ecq::Exists(x, q) | Ecq::Forall(x, q) => {
                let kw = if matches!(self, Ecq::Exists(..)) { "exists" } else { "forall" };
                write!(f, "{kw} {x}. ")?;
                write_child(f, q, q.prec() < 3 && q.prec() > 0)
            }
        }
    }
}

/// Variables guaranteed bound by a positive occurrence in `q`.
fn positive_vars(q: &Ecq) -> BTreeSet<Name> {
    match q {
        Ecq::True | Ecq::False | Ecq::Not(_) | Ecq::Forall(..) => BTreeSet::new(),
        Ecq::Query { ucq, .. } => {
            let mut acc: Option<BTreeSet<Name>> = None;
            for cq in &ucq.disjuncts {
                let mut pos: BTreeSet<Name> = cq
                    .atoms
                    .iter()
                    .filter(|a| matches!(a, Atom::Pred { .. }))
                    .flat_map(|a| a.terms())
                    .filter_map(|t| t.as_var().cloned())
                    .collect();
                loop {
                    let before = pos.len();
                    for a in &cq.atoms {
                        if let Atom::Eq(x, y) = a {
                            let known = |t: &Term| matches!(t, Term::Const(_)) || t.as_var().is_some_and(|v| pos.contains(v));
                            let (kx, ky) = (known(x), known(y));
                            if kx && !ky {
                                pos.insert(y.as_var().unwrap().clone());
                            } else if ky && !kx {
                                pos.insert(x.as_var().unwrap().clone());
                            }
                        }
                    }
                    if pos.len() == before {
                        break;
                    }
                }
                acc = Some(match acc {
                    None => pos,
                    Some(a) => a.intersection(&pos).cloned().collect(),
                });
            }
            acc.unwrap_or_default().into_iter().filter(|v| ucq.is_free(v)).collect()
        }
        Ecq::And(a, b) => positive_vars(a).union(&positive_vars(b)).cloned().collect(),
        Ecq::Or(a, b) => positive_vars(a).intersection(&positive_vars(b)).cloned().collect(),
        Ecq::Exists(x, b) => {
            let mut s = positive_vars(b);
            s.remove(x);
            s
        }
    }
}

fn check_di(q: &Ecq, bound: &BTreeSet<Name>) -> Result<(), QueryError> {
    let union = |a: &BTreeSet<Name>, b: &BTreeSet<Name>| -> BTreeSet<Name> { a.union(b).cloned().collect() };
    match q {
        Ecq::True | Ecq::False => Ok(()),
        Ecq::Query { ucq, .. } => {
            let pos = positive_vars(q);
            match ucq.free.iter().find(|v| !pos.contains(*v) && !bound.contains(*v)) {
                Some(v) => Err(QueryError::NonDomainIndependent(format!("variable `{v}` is not range restricted in [{ucq}]"))),
                None => Ok(()),
            }
        }
        Ecq::Not(b) => {
            if let Some(v) = b.free_vars().iter().find(|v| !bound.contains(*v)) {
                return Err(QueryError::NonDomainIndependent(format!("variable `{v}` is only bound under negation")));
            }
            check_di(b, bound)
        }
        Ecq::And(a, b) => {
            check_di(a, &union(bound, &positive_vars(b)))?;
            check_di(b, &union(bound, &positive_vars(a)))
        }
        Ecq::Or(a, b) => {
            for side in [a, b] {
                let other = if std::ptr::eq(&**side, &**a) { b } else { a };
                for v in other.free_vars().difference(&side.free_vars()) {
                    if !bound.contains(v) {
                        return Err(QueryError::NonDomainIndependent(format!("variable `{v}` is free in only one disjunct")));
                    }
                }
                check_di(side, bound)?;
            }
            Ok(())
        }
        Ecq::Exists(x, b) => {
            if !positive_vars(b).contains(x) {
                return Err(QueryError::NonDomainIndependent(format!("quantified variable `{x}` is not range restricted")));
            }
            let mut inner = bound.clone();
            inner.remove(x);
            check_di(b, &inner)
        }
        Ecq::Forall(x, b) => check_di(&Ecq::Exists(x.clone(), Box::new(b.negate())).not(), bound),
    }
}

/// Syntactic domain-independence check; `bound` lists variables bound by
/// the context (action parameters, outer quantifiers).
pub fn check_domain_independent(q: &Ecq, bound: &BTreeSet<Name>) -> Result<(), QueryError> {
    check_di(q, bound)
}

/// Certain-answer evaluation with a memoized rewriting over the positive
/// inclusions of a TBox.
#[derive(Debug)]
pub struct QueryEngine {
    tbox: TBox,
    cap: usize,
    cache: Mutex<HashMap<Ucq, Arc<Ucq>>>,
}

impl Clone for QueryEngine {
    fn clone(&self) -> Self {
        QueryEngine { tbox: self.tbox.clone(), cap: self.cap, cache: Mutex::new(HashMap::new()) }
    }
}

impl QueryEngine {
    pub fn new(t: &TBox) -> Self {
        Self::with_cap(t, DEFAULT_REWRITE_CAP)
    }

    pub fn with_cap(t: &TBox, cap: usize) -> Self {
        QueryEngine { tbox: t.positive_part(), cap, cache: Mutex::new(HashMap::new()) }
    }

    pub fn tbox(&self) -> &TBox {
        &self.tbox
    }

    pub fn rewrite(&self, q: &Ucq) -> Result<Arc<Ucq>, QueryError> {
        if let Some(r) = self.cache.lock().expect("rewrite cache poisoned").get(q) {
            return Ok(r.clone());
        }
        let r = Arc::new(rewrite_with_cap(q, &self.tbox, self.cap)?);
        self.cache.lock().expect("rewrite cache poisoned").insert(q.clone(), r.clone());
        Ok(r)
    }

    /// Certain answers of a UCQ.
    pub fn certain_answers(&self, q: &Ucq, a: &ABox) -> Result<BTreeSet<Subst>, QueryError> {
        self.eval(&Ecq::certain(q.clone()), a, &Subst::new())
    }

    /// Answers of `q` over `a` extending `partial`.
    pub fn eval(&self, q: &Ecq, a: &ABox, partial: &Subst) -> Result<BTreeSet<Subst>, QueryError> {
        let adom: Vec<Name> = a.user_adom().into_iter().collect();
        let mut out = BTreeSet::new();
        Evaluator { engine: self, abox: a, adom: &adom }.eval(q, partial, &mut out)?;
        Ok(out)
    }

    /// Truth of `q` under `partial`, which must bind all its free variables.
    pub fn holds_with(&self, q: &Ecq, a: &ABox, partial: &Subst) -> Result<bool, QueryError> {
        Ok(!self.eval(q, a, partial)?.is_empty())
    }

    pub fn holds(&self, q: &Ecq, a: &ABox) -> Result<bool, QueryError> {
        self.holds_with(q, a, &Subst::new())
    }
}

struct Evaluator<'a> {
    engine: &'a QueryEngine,
    abox: &'a ABox,
    adom: &'a [Name],
}

impl Evaluator<'_> {
    /// Adds to `out` every extension of `s` to the free variables of `q` that satisfies `q`.
    fn eval(&self, q: &Ecq, s: &Subst, out: &mut BTreeSet<Subst>) -> Result<(), QueryError> {
        match q {
            Ecq::True => {
                out.insert(s.clone());
            }
            Ecq::False => {}
            Ecq::Query { ucq, raw } => {
                let rewritten;
                let target = if *raw {
                    ucq
                } else {
                    rewritten = self.engine.rewrite(ucq)?;
                    &rewritten
                };
                self.eval_ucq(target, s, out);
            }
            Ecq::Not(inner) => {
                for ext in self.complete(&q.free_vars(), s) {
                    let mut sub = BTreeSet::new();
                    self.eval(inner, &ext, &mut sub)?;
                    if sub.is_empty() {
                        out.insert(ext);
                    }
                }
            }
            Ecq::And(..) => {
                let mut parts = Vec::new();
                flatten_and(q, &mut parts);
                parts.sort_by_key(|p| matches!(p, Ecq::Not(_)));
                let mut current: BTreeSet<Subst> = [s.clone()].into_iter().collect();
                for p in parts {
                    let mut next = BTreeSet::new();
                    for c in &current {
                        self.eval(p, c, &mut next)?;
                    }
                    current = next;
                    if current.is_empty() {
                        break;
                    }
                }
                out.extend(current);
            }
            Ecq::Or(a, b) => {
                let fv = q.free_vars();
                for side in [a, b] {
                    let mut part = BTreeSet::new();
                    self.eval(side, s, &mut part)?;
                    for r in part {
                        out.extend(self.complete(&fv, &r));
                    }
                }
            }
            Ecq::Exists(x, body) => {
                let mut inner = s.clone();
                inner.remove(x);
                let mut part = BTreeSet::new();
                self.eval(body, &inner, &mut part)?;
                for mut r in part {
                    r.remove(x);
                    if let Some(v) = s.get(x) {
                        r.insert(x.clone(), v.clone());
                    }
                    out.insert(r);
                }
            }
            Ecq::Forall(x, body) => {
                let desugared = Ecq::Exists(x.clone(), Box::new((**body).clone().not())).not();
                self.eval(&desugared, s, out)?;
            }
        }
        Ok(())
    }

    /// All extensions of `s` binding every variable of `vars` to an adom constant.
    fn complete(&self, vars: &BTreeSet<Name>, s: &Subst) -> Vec<Subst> {
        let mut acc = vec![s.clone()];
        for v in vars.iter().filter(|v| !s.contains_key(*v)) {
            acc = acc
                .into_iter()
                .flat_map(|b| {
                    self.adom.iter().map(move |c| {
                        let mut b2 = b.clone();
                        b2.insert(v.clone(), c.clone());
                        b2
                    })
                })
                .collect();
        }
        acc
    }

    fn eval_ucq(&self, q: &Ucq, s: &Subst, out: &mut BTreeSet<Subst>) {
        let init: Subst = q.free.iter().filter_map(|v| s.get(v).map(|c| (v.clone(), c.clone()))).collect();
        let free: BTreeSet<Name> = q.free.iter().cloned().collect();
        for cq in &q.disjuncts {
            let mut atoms: Vec<&Atom> = cq.atoms.iter().collect();
            atoms.sort_by_key(|a| matches!(a, Atom::Eq(..)));
            let mut binding = init.clone();
            let mut found = Vec::new();
            self.join(&atoms, &mut binding, &mut found);
            for b in found {
                let projected: Subst = b.into_iter().filter(|(k, _)| free.contains(k)).collect();
                for mut r in self.complete(&free, &projected) {
                    for (k, v) in s {
                        r.entry(k.clone()).or_insert_with(|| v.clone());
                    }
                    out.insert(r);
                }
            }
        }
    }

    fn join(&self, atoms: &[&Atom], b: &mut Subst, found: &mut Vec<Subst>) {
        let Some((first, rest)) = atoms.split_first() else {
            found.push(b.clone());
            return;
        };
        match first {
            Atom::Pred { pred, args } => {
                for fact in self.abox.with_pred(pred) {
                    if fact.args.len() != args.len() {
                        continue;
                    }
                    let mut newly = Vec::new();
                    let mut ok = true;
                    for (t, c) in args.iter().zip(&fact.args) {
                        match t.resolve(b) {
                            Some(v) if &v == c => {}
                            Some(_) => {
                                ok = false;
                                break;
                            }
                            None => {
                                let v = t.as_var().expect("unresolved constant").clone();
                                b.insert(v.clone(), c.clone());
                                newly.push(v);
                            }
                        }
                    }
                    if ok {
                        self.join(rest, b, found);
                    }
                    for v in newly {
                        b.remove(&v);
                    }
                }
            }
            Atom::Eq(x, y) => match (x.resolve(b), y.resolve(b)) {
                (Some(p), Some(q)) => {
                    if p == q {
                        self.join(rest, b, found);
                    }
                }
                (Some(p), None) | (None, Some(p)) => {
                    let v = if x.resolve(b).is_none() { x } else { y }.as_var().unwrap().clone();
                    b.insert(v.clone(), p);
                    self.join(rest, b, found);
                    b.remove(&v);
                }
                (None, None) => {
                    let (vx, vy) = (x.as_var().unwrap().clone(), y.as_var().unwrap().clone());
                    for c in self.adom {
                        b.insert(vx.clone(), c.clone());
                        b.insert(vy.clone(), c.clone());
                        self.join(rest, b, found);
                    }
                    b.remove(&vx);
                    b.remove(&vy);
                }
            },
        }
    }
}

fn flatten_and<'a>(q: &'a Ecq, out: &mut Vec<&'a Ecq>) {
    match q {
        Ecq::And(a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        _ => out.push(q),
    }
}

/// Rewrites `q` over the positive inclusions of `t` so that plain database
/// evaluation yields the certain answers.
pub fn rewrite_ucq(q: &Ucq, t: &TBox) -> Result<Ucq, QueryError> {
    rewrite_with_cap(q, t, DEFAULT_REWRITE_CAP)
}

/// Certain answers of `q` over `(t, a)`.
pub fn certain_answers_ucq(q: &Ucq, t: &TBox, a: &ABox) -> Result<BTreeSet<Subst>, QueryError> {
    QueryEngine::new(t).certain_answers(q, a)
}

/// Answers of `q` over `(t, a)` extending `partial`.
pub fn eval_ecq(q: &Ecq, t: &TBox, a: &ABox, partial: &Subst) -> Result<BTreeSet<Subst>, QueryError> {
    QueryEngine::new(t).eval(q, a, partial)
}

struct Rewriter<'a> {
    tbox: &'a TBox,
    free: BTreeSet<Name>,
    fresh: usize,
}

impl Rewriter<'_> {
    fn fresh(&mut self) -> String {
        self.fresh += 1;
        format!("_r{}", self.fresh)
    }

    fn unbound(&self, cq: &Cq, t: &Term) -> bool {
        match t {
            Term::Var(v) => !self.free.contains(v) && cq.occurrences(v) == 1,
            Term::Const(_) => false,
        }
    }

    /// Atoms obtained by applying one positive inclusion backwards to `g`.
    fn apply(&mut self, cq: &Cq, g: &Atom) -> Vec<Atom> {
        let Atom::Pred { pred, args } = g else { return vec![] };
        let mut out = Vec::new();
        match args.as_slice() {
            [x] => {
                for (lhs, rhs) in &self.tbox.concept_incl {
                    if *rhs == Concept::Atomic(pred.clone()) {
                        let anon = self.fresh();
                        out.push(concept_atom(lhs, x, &anon));
                    }
                }
            }
            [x, y] => {
                let role = Role::new(pred.clone());
                for (lhs, rhs) in &self.tbox.concept_incl {
                    if self.unbound(cq, y) && *rhs == Concept::Exists(role.clone()) {
                        let anon = self.fresh();
                        out.push(concept_atom(lhs, x, &anon));
                    }
                    if self.unbound(cq, x) && *rhs == Concept::Exists(role.inv()) {
                        let anon = self.fresh();
                        out.push(concept_atom(lhs, y, &anon));
                    }
                }
                for (lhs, rhs) in &self.tbox.role_incl {
                    if rhs.name != *pred {
                        continue;
                    }
                    let sub = if rhs.inverse { lhs.inv() } else { lhs.clone() };
                    out.push(role_atom(&sub, x, y));
                }
            }
            _ => {}
        }
        out
    }

    /// Most general unifier of two atoms, with equalities recording merged
    /// free variables.
    fn unify(&self, a: &Atom, b: &Atom) -> Option<(BTreeMap<Name, Term>, Vec<Atom>)> {
        let (Atom::Pred { pred: p1, args: a1 }, Atom::Pred { pred: p2, args: a2 }) = (a, b) else { return None };
        if p1 != p2 || a1.len() != a2.len() {
            return None;
        }
        let mut map: BTreeMap<Name, Term> = BTreeMap::new();
        let mut eqs = Vec::new();
        let find = |map: &BTreeMap<Name, Term>, t: &Term| {
            let mut cur = t.clone();
            while let Term::Var(v) = &cur {
                match map.get(v) {
                    Some(n) => cur = n.clone(),
                    None => break,
                }
            }
            cur
        };
        for (s, t) in a1.iter().zip(a2) {
            let (s, t) = (find(&map, s), find(&map, t));
            if s == t {
                continue;
            }
            let rank = |x: &Term| match x {
                Term::Const(_) => 2,
                Term::Var(v) if self.free.contains(v) => 1,
                Term::Var(_) => 0,
            };
            let (lo, hi) = if rank(&s) <= rank(&t) { (s, t) } else { (t, s) };
            match (&lo, &hi) {
                (Term::Const(_), Term::Const(_)) => return None,
                (Term::Var(v), _) => {
                    if self.free.contains(v) {
                        eqs.push(Atom::Eq(lo.clone(), hi.clone()));
                    }
                    map.insert(v.clone(), hi.clone());
                }
                _ => unreachable!(),
            }
        }
        let resolved = map.keys().map(|k| (k.clone(), find(&map, &Term::Var(k.clone())))).collect();
        Some((resolved, eqs))
    }

    /// Canonical form: deduplicated sorted atoms with existential variables
    /// renamed by first occurrence.
    fn canon(&self, cq: &Cq) -> Cq {
        let shape = |a: &Atom| {
            a.map_terms(&|t| match t {
                Term::Var(v) if !self.free.contains(v) => Term::var("_"),
                _ => t.clone(),
            })
        };
        let mut atoms = cq.atoms.clone();
        atoms.sort_by_key(shape);
        let mut names: BTreeMap<Name, Name> = BTreeMap::new();
        for a in &atoms {
            for t in a.terms() {
                if let Term::Var(v) = t {
                    if !self.free.contains(v) && !names.contains_key(v) {
                        let n = name(&format!("_e{}", names.len()));
                        names.insert(v.clone(), n);
                    }
                }
            }
        }
        let mut out: Vec<Atom> = atoms
            .iter()
            .map(|a| {
                a.map_terms(&|t| match t {
                    Term::Var(v) => names.get(v).map(|n| Term::Var(n.clone())).unwrap_or(t.clone()),
                    _ => t.clone(),
                })
            })
            .collect();
        out.sort();
        out.dedup();
        Cq::new(out)
    }
}

fn rewrite_with_cap(q: &Ucq, t: &TBox, cap: usize) -> Result<Ucq, QueryError> {
    let mut rw = Rewriter { tbox: t, free: q.free.iter().cloned().collect(), fresh: 0 };
    let mut seen: BTreeSet<Cq> = BTreeSet::new();
    let mut order: Vec<Cq> = Vec::new();
    let mut work: Vec<Cq> = Vec::new();
    for cq in &q.disjuncts {
        let c = rw.canon(cq);
        if seen.insert(c.clone()) {
            order.push(c.clone());
            work.push(c);
        }
    }
    while let Some(cq) = work.pop() {
        let mut produced = Vec::new();
        for (i, g) in cq.atoms.iter().enumerate() {
            for repl in rw.apply(&cq, g) {
                let mut atoms = cq.atoms.clone();
                atoms[i] = repl;
                produced.push(Cq::new(atoms));
            }
        }
        for i in 0..cq.atoms.len() {
            for j in i + 1..cq.atoms.len() {
                if let Some((map, eqs)) = rw.unify(&cq.atoms[i], &cq.atoms[j]) {
                    let sub = |t: &Term| match t {
                        Term::Var(v) => map.get(v).cloned().unwrap_or(t.clone()),
                        _ => t.clone(),
                    };
                    let mut atoms: Vec<Atom> = cq.atoms.iter().map(|a| a.map_terms(&sub)).collect();
                    atoms.extend(eqs);
                    produced.push(Cq::new(atoms));
                }
            }
        }
        for p in produced {
            let c = rw.canon(&p);
            if seen.insert(c.clone()) {
                if seen.len() > cap {
                    return Err(QueryError::RewriteBlowup(cap));
                }
                order.push(c.clone());
                work.push(c);
            }
        }
    }
    Ok(Ucq { free: q.free.clone(), disjuncts: order })
}
