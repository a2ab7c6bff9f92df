//! DL-Lite_A vocabulary, TBoxes, ABoxes, negative-inclusion closure and
//! consistency checking.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::query::{Atom, Cq, Ecq, Term, Ucq};
use crate::{name, Name};

/// Concept name used for the `rep` and `temp` state markers.
pub const STATE: &str = "__state";
/// Concept name used for program-position flags.
pub const FLAG: &str = "__flag";
/// Concept name used for loop-progress markers.
pub const NOOP: &str = "__noop";
/// Constant of the repair-phase marker `__state(rep)`.
pub const REP: &str = "rep";
/// Constant of the intermediate-state marker `__state(temp)`.
pub const TEMP: &str = "temp";

/// True for the reserved marker predicates.
pub fn is_marker(pred: &str) -> bool {
    pred == STATE || pred == FLAG || pred == NOOP
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("undeclared name `{0}`")]
    Undeclared(String),
    #[error("reserved name `{0}` used in the TBox")]
    Reserved(String),
    #[error("`{0}` declared both as concept and role")]
    NameClash(String),
    #[error("functional role `{sup}` is specialized by `{sub}`")]
    SpecializedFunctional { sub: String, sup: String },
    #[error("TBox derives `{0} <= not {0}`")]
    SaturationDerivedUnsat(String),
    #[error("TBox derives `{0} <= not {1}`, which a single assertion can violate")]
    SelfConflicting(String, String),
}

/// A role name or its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Role {
    pub name: Name,
    pub inverse: bool,
}

impl Role {
    pub fn new(name: Name) -> Self {
        Role { name, inverse: false }
    }

    pub fn inv(&self) -> Role {
        Role { name: self.name.clone(), inverse: !self.inverse }
    }

    /// Orients a pair of arguments so that the result is a fact over `name`.
    pub fn orient<T: Clone>(&self, x: &T, y: &T) -> (T, T) {
        if self.inverse {
            (y.clone(), x.clone())
        } else {
            (x.clone(), y.clone())
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.name, if self.inverse { "-" } else { "" })
    }
}

/// A basic concept: a concept name or an unqualified existential.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Concept {
    Atomic(Name),
    Exists(Role),
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Concept::Atomic(n) => write!(f, "{n}"),
            Concept::Exists(r) => write!(f, "exists {r}"),
        }
    }
}

/// Intensional part of a knowledge base.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TBox {
    pub concepts: BTreeSet<Name>,
    pub roles: BTreeSet<Name>,
    pub concept_incl: Vec<(Concept, Concept)>,
    pub role_incl: Vec<(Role, Role)>,
    pub concept_disj: Vec<(Concept, Concept)>,
    pub role_disj: Vec<(Role, Role)>,
    pub funct: Vec<Role>,
}

impl TBox {
    /// The positive inclusions together with the full vocabulary.
    pub fn positive_part(&self) -> TBox {
        TBox {
            concepts: self.concepts.clone(),
            roles: self.roles.clone(),
            concept_incl: self.concept_incl.clone(),
            role_incl: self.role_incl.clone(),
            ..TBox::default()
        }
    }

    /// Arity of a vocabulary predicate, if declared.
    pub fn arity(&self, pred: &str) -> Option<usize> {
        if self.concepts.contains(pred) {
            Some(1)
        } else if self.roles.contains(pred) {
            Some(2)
        } else {
            None
        }
    }

    /// Every basic concept over the vocabulary.
    pub fn basic_concepts(&self) -> Vec<Concept> {
        let mut out: Vec<Concept> = self.concepts.iter().cloned().map(Concept::Atomic).collect();
        for r in &self.roles {
            out.push(Concept::Exists(Role::new(r.clone())));
            out.push(Concept::Exists(Role::new(r.clone()).inv()));
        }
        out
    }

    /// Every basic role over the vocabulary.
    pub fn basic_roles(&self) -> Vec<Role> {
        self.roles
            .iter()
            .flat_map(|r| [Role::new(r.clone()), Role::new(r.clone()).inv()])
            .collect()
    }

    /// Checks declarations, reserved names and, unless `allow_specialized_funct`,
    /// that no functional role is specialized.
    pub fn validate(&self, allow_specialized_funct: bool) -> Result<(), KbError> {
        for n in self.concepts.iter().chain(&self.roles) {
            if is_marker(n) {
                return Err(KbError::Reserved(n.to_string()));
            }
        }
        if let Some(n) = self.concepts.intersection(&self.roles).next() {
            return Err(KbError::NameClash(n.to_string()));
        }
        let concept_ok = |c: &Concept| match c {
            Concept::Atomic(n) => self.concepts.contains(n),
            Concept::Exists(r) => self.roles.contains(&r.name),
        };
        let role_ok = |r: &Role| self.roles.contains(&r.name);
        for (a, b) in self.concept_incl.iter().chain(&self.concept_disj) {
            for c in [a, b] {
                if !concept_ok(c) {
                    return Err(KbError::Undeclared(c.to_string()));
                }
            }
        }
        for r in self.role_incl.iter().chain(&self.role_disj).flat_map(|(a, b)| [a, b]).chain(&self.funct) {
            if !role_ok(r) {
                return Err(KbError::Undeclared(r.to_string()));
            }
        }
        if !allow_specialized_funct {
            for (sub, sup) in &self.role_incl {
                if self.funct.iter().any(|f| f.name == sup.name) {
                    return Err(KbError::SpecializedFunctional { sub: sub.to_string(), sup: sup.to_string() });
                }
            }
        }
        Ok(())
    }
}

/// Entailed negative inclusions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativeClosure {
    pub concepts: BTreeSet<(Concept, Concept)>,
    pub roles: BTreeSet<(Role, Role)>,
}

/// Reflexive-transitive closure of the positive inclusions between basic
/// concepts and between basic roles.
fn positive_closure(t: &TBox) -> (BTreeSet<(Concept, Concept)>, BTreeSet<(Role, Role)>) {
    let mut roles: BTreeSet<(Role, Role)> = BTreeSet::new();
    for r in t.basic_roles() {
        roles.insert((r.clone(), r));
    }
    for (a, b) in &t.role_incl {
        roles.insert((a.clone(), b.clone()));
        roles.insert((a.inv(), b.inv()));
    }
    transitive(&mut roles);

    let mut concepts: BTreeSet<(Concept, Concept)> = BTreeSet::new();
    for c in t.basic_concepts() {
        concepts.insert((c.clone(), c));
    }
    for (a, b) in &t.concept_incl {
        concepts.insert((a.clone(), b.clone()));
    }
    for (a, b) in &roles {
        concepts.insert((Concept::Exists(a.clone()), Concept::Exists(b.clone())));
    }
    transitive(&mut concepts);
    (concepts, roles)
}

fn transitive<T: Ord + Clone>(rel: &mut BTreeSet<(T, T)>) {
    loop {
        let mut added = Vec::new();
        for (a, b) in rel.iter() {
            for (_, d) in rel.iter().filter(|(c, _)| c == b) {
                if !rel.contains(&(a.clone(), d.clone())) {
                    added.push((a.clone(), d.clone()));
                }
            }
        }
        if added.is_empty() {
            return;
        }
        rel.extend(added);
    }
}

fn weaken<T: Ord + Clone>(seeds: &[(T, T)], sub: &BTreeSet<(T, T)>) -> BTreeSet<(T, T)> {
    let mut sym: BTreeSet<(T, T)> = BTreeSet::new();
    for (a, b) in seeds {
        sym.insert((a.clone(), b.clone()));
        sym.insert((b.clone(), a.clone()));
    }
    let mut out = BTreeSet::new();
    for (b1, b2) in &sym {
        for (b0, _) in sub.iter().filter(|(_, x)| x == b1) {
            for (b3, _) in sub.iter().filter(|(_, x)| x == b2) {
                out.insert((b0.clone(), b3.clone()));
                out.insert((b3.clone(), b0.clone()));
            }
        }
    }
    out
}

/// Computes every negative inclusion entailed by `t`.
pub fn saturate_negatives(t: &TBox) -> Result<NegativeClosure, KbError> {
    let (csub, rsub) = positive_closure(t);
    let concepts = weaken(&t.concept_disj, &csub);
    let mut role_seeds = Vec::new();
    for (a, b) in &t.role_disj {
        role_seeds.push((a.clone(), b.clone()));
        role_seeds.push((a.inv(), b.inv()));
    }
    let roles = weaken(&role_seeds, &rsub);
    for (a, b) in &concepts {
        if a == b {
            return Err(KbError::SaturationDerivedUnsat(a.to_string()));
        }
        if let (Concept::Exists(r1), Concept::Exists(r2)) = (a, b) {
            if r1.inv() == *r2 {
                return Err(KbError::SelfConflicting(a.to_string(), b.to_string()));
            }
        }
    }
    for (a, b) in &roles {
        if a == b {
            return Err(KbError::SaturationDerivedUnsat(a.to_string()));
        }
        if a.inv() == *b {
            return Err(KbError::SelfConflicting(a.to_string(), b.to_string()));
        }
    }
    Ok(NegativeClosure { concepts, roles })
}

/// A ground assertion `N(c)` or `P(c1,c2)`, including marker facts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Fact {
    pub pred: Name,
    pub args: Vec<Name>,
}

impl Fact {
    pub fn new(pred: &str, args: &[&str]) -> Fact {
        Fact { pred: name(pred), args: args.iter().map(|a| name(a)).collect() }
    }

    pub fn is_marker(&self) -> bool {
        is_marker(&self.pred)
    }

    /// Basic concepts this assertion puts an individual into.
    pub fn concept_instances(&self) -> Vec<(Concept, Name)> {
        match self.args.as_slice() {
            [c] => vec![(Concept::Atomic(self.pred.clone()), c.clone())],
            [a, b] => {
                let r = Role::new(self.pred.clone());
                vec![(Concept::Exists(r.inv()), b.clone()), (Concept::Exists(r), a.clone())]
            }
            _ => vec![],
        }
    }

    /// Basic roles this assertion puts a pair into.
    pub fn role_instances(&self) -> Vec<(Role, Name, Name)> {
        match self.args.as_slice() {
            [a, b] => {
                let r = Role::new(self.pred.clone());
                vec![(r.inv(), b.clone(), a.clone()), (r, a.clone(), b.clone())]
            }
            _ => vec![],
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A finite set of assertions kept in canonical sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ABox {
    facts: BTreeSet<Fact>,
}

impl ABox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, f: Fact) -> bool {
        self.facts.insert(f)
    }

    pub fn remove(&mut self, f: &Fact) -> bool {
        self.facts.remove(f)
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.facts.contains(f)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Facts whose predicate is `pred`.
    pub fn with_pred<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Fact> + 'a {
        let start = Fact { pred: name(pred), args: Vec::new() };
        self.facts.range(start..).take_while(move |f| &*f.pred == pred)
    }

    /// Constants occurring in any fact, markers included.
    pub fn adom(&self) -> BTreeSet<Name> {
        self.facts.iter().flat_map(|f| f.args.iter().cloned()).collect()
    }

    /// Constants occurring in non-marker facts.
    pub fn user_adom(&self) -> BTreeSet<Name> {
        self.facts.iter().filter(|f| !f.is_marker()).flat_map(|f| f.args.iter().cloned()).collect()
    }

    /// The ABox without marker facts.
    pub fn strip_markers(&self) -> ABox {
        self.facts.iter().filter(|f| !f.is_marker()).cloned().collect()
    }

    pub fn union(&self, other: &ABox) -> ABox {
        self.facts.union(&other.facts).cloned().collect()
    }

    pub fn difference(&self, other: &ABox) -> ABox {
        self.facts.difference(&other.facts).cloned().collect()
    }

    pub fn intersection(&self, other: &ABox) -> ABox {
        self.facts.intersection(&other.facts).cloned().collect()
    }

    pub fn is_subset(&self, other: &ABox) -> bool {
        self.facts.is_subset(&other.facts)
    }
}

impl FromIterator<Fact> for ABox {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        ABox { facts: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a ABox {
    type Item = &'a Fact;
    type IntoIter = std::collections::btree_set::Iter<'a, Fact>;
    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

impl fmt::Display for ABox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.facts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

/// Adom of an ABox, markers included.
pub fn adom(a: &ABox) -> BTreeSet<Name> {
    a.adom()
}

/// Negative inclusions and functionality assertions of a TBox, ready for
/// fact-level conflict detection.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub closure: NegativeClosure,
    pub funct: BTreeSet<Role>,
}

impl Constraints {
    pub fn new(t: &TBox) -> Result<Self, KbError> {
        Ok(Constraints { closure: saturate_negatives(t)?, funct: t.funct.iter().cloned().collect() })
    }

    /// True if `{f, g}` violates some constraint. Marker facts never conflict.
    pub fn conflict(&self, f: &Fact, g: &Fact) -> bool {
        if f.is_marker() || g.is_marker() {
            return false;
        }
        for (b1, c1) in f.concept_instances() {
            for (b2, c2) in g.concept_instances() {
                if c1 == c2 && self.closure.concepts.contains(&(b1.clone(), b2)) {
                    return true;
                }
            }
        }
        for (r1, a1, b1) in f.role_instances() {
            for (r2, a2, b2) in g.role_instances() {
                if a1 == a2 && b1 == b2 && self.closure.roles.contains(&(r1.clone(), r2.clone())) {
                    return true;
                }
                if r1 == r2 && a1 == a2 && b1 != b2 && self.funct.contains(&r1) {
                    return true;
                }
            }
        }
        false
    }

    /// Facts of `a` in conflict with `f`.
    pub fn partners<'a>(&'a self, a: &'a ABox, f: &'a Fact) -> impl Iterator<Item = &'a Fact> + 'a {
        a.iter().filter(move |g| self.conflict(f, g))
    }

    /// Unordered conflicting pairs `(f, g)` with `f <= g`.
    pub fn conflict_pairs<'a>(&self, a: &'a ABox) -> Vec<(&'a Fact, &'a Fact)> {
        let facts: Vec<&Fact> = a.iter().collect();
        let mut out = Vec::new();
        for (i, f) in facts.iter().enumerate() {
            for g in &facts[i..] {
                if self.conflict(f, g) {
                    out.push((*f, *g));
                }
            }
        }
        out
    }

    pub fn is_consistent(&self, a: &ABox) -> bool {
        let facts: Vec<&Fact> = a.iter().filter(|f| !f.is_marker()).collect();
        facts.iter().enumerate().all(|(i, f)| facts[i..].iter().all(|g| !self.conflict(f, g)))
    }

    /// Assertions that take part in some violation.
    pub fn inc_set(&self, a: &ABox) -> ABox {
        a.iter().filter(|f| self.partners(a, f).next().is_some()).cloned().collect()
    }
}

/// True iff `a` has a model with `t`.
pub fn is_consistent(t: &TBox, a: &ABox) -> Result<bool, KbError> {
    Ok(Constraints::new(t)?.is_consistent(a))
}

/// The assertions of `a` that participate in some inconsistency.
pub fn inc_set(t: &TBox, a: &ABox) -> Result<ABox, KbError> {
    Ok(Constraints::new(t)?.inc_set(a))
}

/// Query atom for `b(x)`; an existential introduces the variable `anon`.
pub fn concept_atom(b: &Concept, x: &Term, anon: &str) -> Atom {
    match b {
        Concept::Atomic(n) => Atom::pred(n.clone(), vec![x.clone()]),
        Concept::Exists(r) => {
            let (s, o) = r.orient(x, &Term::var(anon));
            Atom::pred(r.name.clone(), vec![s, o])
        }
    }
}

/// Query atom for `r(x, y)`.
pub fn role_atom(r: &Role, x: &Term, y: &Term) -> Atom {
    let (s, o) = r.orient(x, y);
    Atom::pred(r.name.clone(), vec![s, o])
}

/// Raw query for a concept violation `b1(x) & b2(x)` with `x` free.
pub fn concept_violation(b1: &Concept, b2: &Concept, x: &str) -> Ucq {
    let xv = Term::var(x);
    Ucq::single(
        vec![name(x)],
        Cq::new(vec![concept_atom(b1, &xv, "_u1"), concept_atom(b2, &xv, "_u2")]),
    )
}

/// Raw query for a role violation `r1(x,y) & r2(x,y)` with `x, y` free.
pub fn role_violation(r1: &Role, r2: &Role, x: &str, y: &str) -> Ucq {
    let (xv, yv) = (Term::var(x), Term::var(y));
    Ucq::single(vec![name(x), name(y)], Cq::new(vec![role_atom(r1, &xv, &yv), role_atom(r2, &xv, &yv)]))
}

/// `r(x,y) & r(x,z) & !(y = z)` with `x, y, z` free, evaluated raw.
pub fn funct_violation(r: &Role, x: &str, y: &str, z: &str) -> Ecq {
    let (xv, yv, zv) = (Term::var(x), Term::var(y), Term::var(z));
    let both = Ucq::single(
        vec![name(x), name(y), name(z)],
        Cq::new(vec![role_atom(r, &xv, &yv), role_atom(r, &xv, &zv)]),
    );
    let eq = Ucq::single(vec![name(y), name(z)], Cq::new(vec![Atom::Eq(yv, zv)]));
    Ecq::raw(both).and(Ecq::raw(eq).not())
}

/// The boolean query that holds exactly on inconsistent ABoxes.
pub fn build_qunsat(t: &TBox) -> Result<Ecq, KbError> {
    let closure = saturate_negatives(t)?;
    let mut parts = Vec::new();
    for r in &t.funct {
        let q = funct_violation(r, "x", "y", "z");
        parts.push(Ecq::exists_all(&["x", "y", "z"], q));
    }
    for (b1, b2) in closure.concepts.iter().filter(|(a, b)| a <= b) {
        parts.push(Ecq::exists_all(&["x"], Ecq::raw(concept_violation(b1, b2, "x"))));
    }
    for (r1, r2) in closure.roles.iter().filter(|(a, b)| a <= b) {
        parts.push(Ecq::exists_all(&["x", "y"], Ecq::raw(role_violation(r1, r2, "x", "y"))));
    }
    Ok(Ecq::disj(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::QueryEngine;

    fn c(n: &str) -> Concept {
        Concept::Atomic(name(n))
    }
    fn r(n: &str) -> Role {
        Role::new(name(n))
    }

    fn tbox(concepts: &[&str], roles: &[&str]) -> TBox {
        TBox {
            concepts: concepts.iter().map(|x| name(x)).collect(),
            roles: roles.iter().map(|x| name(x)).collect(),
            ..TBox::default()
        }
    }

    /// Interpretations over a domain of size `n`: concept extensions as bit
    /// masks over elements, role extensions as bit masks over pairs.
    struct Interp {
        n: usize,
        concepts: Vec<u32>,
        roles: Vec<u32>,
    }

    impl Interp {
        fn ext(&self, t: &TBox, b: &Concept) -> u32 {
            match b {
                Concept::Atomic(x) => self.concepts[t.concepts.iter().position(|y| y == x).unwrap()],
                Concept::Exists(rr) => {
                    let m = self.roles[t.roles.iter().position(|y| *y == rr.name).unwrap()];
                    let mut out = 0;
                    for i in 0..self.n {
                        for j in 0..self.n {
                            if m >> (i * self.n + j) & 1 == 1 {
                                out |= 1 << if rr.inverse { j } else { i };
                            }
                        }
                    }
                    out
                }
            }
        }
        fn rext(&self, t: &TBox, rr: &Role) -> Vec<(usize, usize)> {
            let m = self.roles[t.roles.iter().position(|y| *y == rr.name).unwrap()];
            let mut out = Vec::new();
            for i in 0..self.n {
                for j in 0..self.n {
                    if m >> (i * self.n + j) & 1 == 1 {
                        out.push(if rr.inverse { (j, i) } else { (i, j) });
                    }
                }
            }
            out
        }
        fn models(&self, t: &TBox) -> bool {
            t.concept_incl.iter().all(|(a, b)| self.ext(t, a) & !self.ext(t, b) == 0)
                && t.concept_disj.iter().all(|(a, b)| self.ext(t, a) & self.ext(t, b) == 0)
                && t.role_incl.iter().all(|(a, b)| {
                    let eb = self.rext(t, b);
                    self.rext(t, a).iter().all(|p| eb.contains(p))
                })
                && t.role_disj.iter().all(|(a, b)| {
                    let eb = self.rext(t, b);
                    self.rext(t, a).iter().all(|p| !eb.contains(p))
                })
        }
    }

    fn all_interps(t: &TBox, n: usize) -> impl Iterator<Item = Interp> + '_ {
        let nc = t.concepts.len();
        let nr = t.roles.len();
        let bits = nc * n + nr * n * n;
        (0u64..(1u64 << bits)).map(move |m| {
            let mut concepts = Vec::new();
            let mut off = 0;
            for _ in 0..nc {
                concepts.push(((m >> off) & ((1 << n) - 1)) as u32);
                off += n;
            }
            let mut roles = Vec::new();
            for _ in 0..nr {
                roles.push(((m >> off) & ((1 << (n * n)) - 1)) as u32);
                off += n * n;
            }
            Interp { n, concepts, roles }
        })
    }

    /// T entails b1 <= not b2 iff no model over small domains has a shared element.
    fn entails_concept_ni(t: &TBox, b1: &Concept, b2: &Concept, n: usize) -> bool {
        all_interps(t, n).filter(|i| i.models(t)).all(|i| i.ext(t, b1) & i.ext(t, b2) == 0)
    }

    fn entails_role_ni(t: &TBox, r1: &Role, r2: &Role, n: usize) -> bool {
        all_interps(t, n).filter(|i| i.models(t)).all(|i| {
            let e2 = i.rext(t, r2);
            i.rext(t, r1).iter().all(|p| !e2.contains(p))
        })
    }

    #[test]
    fn adom_examples() {
        assert!(ABox::new().adom().is_empty());
        let a: ABox = [Fact::new("N", &["a"]), Fact::new("P", &["a", "b"])].into_iter().collect();
        assert_eq!(a.adom(), [name("a"), name("b")].into_iter().collect());
        let d: ABox = [Fact::new("N", &["a"]), Fact::new("N", &["a"])].into_iter().collect();
        assert_eq!(d.len(), 1);
        assert_eq!(d.adom(), [name("a")].into_iter().collect());
    }

    #[test]
    fn user_adom_skips_markers() {
        let a: ABox = [Fact::new("N", &["a"]), Fact::new(FLAG, &["c1"])].into_iter().collect();
        assert_eq!(a.user_adom(), [name("a")].into_iter().collect());
        assert_eq!(a.adom().len(), 2);
    }

    #[test]
    fn saturation_left_weakening_matches_model_search() {
        let mut t = tbox(&["N1", "N2", "N3"], &[]);
        t.concept_incl.push((c("N3"), c("N1")));
        t.concept_disj.push((c("N1"), c("N2")));
        let cl = saturate_negatives(&t).unwrap();
        for (a, b) in [("N3", "N2"), ("N2", "N1"), ("N2", "N3")] {
            assert!(cl.concepts.contains(&(c(a), c(b))));
        }
        for b1 in t.basic_concepts() {
            for b2 in t.basic_concepts() {
                assert_eq!(cl.concepts.contains(&(b1.clone(), b2.clone())), entails_concept_ni(&t, &b1, &b2, 3));
            }
        }
    }

    #[test]
    fn saturation_without_negatives_is_empty() {
        let mut t = tbox(&["N1", "N2"], &[]);
        t.concept_incl.push((c("N1"), c("N2")));
        let cl = saturate_negatives(&t).unwrap();
        assert!(cl.concepts.is_empty() && cl.roles.is_empty());
    }

    #[test]
    fn saturation_role_level_only() {
        let mut t = tbox(&[], &["R1", "R2", "R3"]);
        t.role_incl.push((r("R1"), r("R2")));
        t.role_disj.push((r("R2"), r("R3")));
        let cl = saturate_negatives(&t).unwrap();
        assert!(cl.roles.contains(&(r("R1"), r("R3"))));
        assert!(!cl
            .concepts
            .contains(&(Concept::Exists(r("R1")), Concept::Exists(r("R3")))));
        for r1 in t.basic_roles() {
            for r2 in t.basic_roles() {
                assert_eq!(cl.roles.contains(&(r1.clone(), r2.clone())), entails_role_ni(&t, &r1, &r2, 2));
            }
        }
    }

    #[test]
    fn saturation_reports_unsat_name() {
        let mut t = tbox(&["N1", "N2"], &[]);
        t.concept_incl.push((c("N1"), c("N2")));
        t.concept_disj.push((c("N1"), c("N2")));
        assert_eq!(saturate_negatives(&t), Err(KbError::SaturationDerivedUnsat("N1".into())));
    }

    #[test]
    fn saturation_reports_self_conflicting_role() {
        let mut t = tbox(&[], &["P"]);
        t.concept_disj.push((Concept::Exists(r("P")), Concept::Exists(r("P").inv())));
        assert!(matches!(saturate_negatives(&t), Err(KbError::SelfConflicting(..))));
    }

    #[test]
    fn specialized_functional_rejected() {
        let mut t = tbox(&[], &["P", "Q"]);
        t.role_incl.push((r("P"), r("Q")));
        t.funct.push(r("Q").inv());
        assert!(matches!(t.validate(false), Err(KbError::SpecializedFunctional { .. })));
        assert!(t.validate(true).is_ok());
    }

    #[test]
    fn reserved_name_rejected() {
        let t = tbox(&[FLAG], &[]);
        assert_eq!(t.validate(false), Err(KbError::Reserved(FLAG.into())));
    }

    #[test]
    fn qunsat_shapes() {
        let mut t = tbox(&[], &["P"]);
        t.funct.push(r("P"));
        assert_eq!(build_qunsat(&t).unwrap().to_string(), "exists x. exists y. exists z. (db[P(x,y), P(x,z)] & !db[y = z])");
        let empty = tbox(&["N"], &[]);
        assert_eq!(build_qunsat(&empty).unwrap(), Ecq::False);
        let mut t2 = tbox(&["N1", "N2"], &[]);
        t2.concept_disj.push((c("N1"), c("N2")));
        assert_eq!(build_qunsat(&t2).unwrap().to_string(), "exists x. db[N1(x), N2(x)]");
    }

    /// Herbrand-style model search: an ABox over concept names only is
    /// consistent iff closing it under the positive inclusions violates no NI.
    fn herbrand_consistent(t: &TBox, a: &ABox) -> bool {
        let mut facts: BTreeSet<(Name, Name)> = a.iter().map(|f| (f.pred.clone(), f.args[0].clone())).collect();
        loop {
            let mut more = Vec::new();
            for (n, x) in &facts {
                for (l, rr) in &t.concept_incl {
                    if let (Concept::Atomic(l), Concept::Atomic(rr)) = (l, rr) {
                        if l == n && !facts.contains(&(rr.clone(), x.clone())) {
                            more.push((rr.clone(), x.clone()));
                        }
                    }
                }
            }
            if more.is_empty() {
                break;
            }
            facts.extend(more);
        }
        t.concept_disj.iter().all(|(b1, b2)| match (b1, b2) {
            (Concept::Atomic(n1), Concept::Atomic(n2)) => {
                !facts.iter().any(|(n, x)| n == n1 && facts.contains(&(n2.clone(), x.clone())))
            }
            _ => true,
        })
    }

    #[test]
    fn consistency_examples() {
        let mut t = tbox(&["N1", "N2"], &[]);
        t.concept_disj.push((c("N1"), c("N2")));
        let a: ABox = [Fact::new("N1", &["a"]), Fact::new("N2", &["a"])].into_iter().collect();
        assert!(!is_consistent(&t, &a).unwrap());
        assert!(!herbrand_consistent(&t, &a));
        assert!(is_consistent(&t, &ABox::new()).unwrap());
        let mut f = tbox(&[], &["P"]);
        f.funct.push(r("P"));
        let same: ABox = [Fact::new("P", &["a", "b"]), Fact::new("P", &["a", "b"])].into_iter().collect();
        assert!(is_consistent(&f, &same).unwrap());
    }

    #[test]
    fn inc_set_examples() {
        let mut t = tbox(&["N1", "N2"], &[]);
        t.concept_disj.push((c("N1"), c("N2")));
        let a: ABox =
            [Fact::new("N1", &["a"]), Fact::new("N2", &["a"]), Fact::new("N1", &["b"])].into_iter().collect();
        let expect: ABox = [Fact::new("N1", &["a"]), Fact::new("N2", &["a"])].into_iter().collect();
        assert_eq!(inc_set(&t, &a).unwrap(), expect);
        let mut f = tbox(&[], &["P"]);
        f.funct.push(r("P"));
        let b: ABox = [Fact::new("P", &["a", "b"]), Fact::new("P", &["a", "c"])].into_iter().collect();
        assert_eq!(inc_set(&f, &b).unwrap(), b);
        let ok: ABox = [Fact::new("N1", &["a"])].into_iter().collect();
        assert!(inc_set(&t, &ok).unwrap().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tbox() -> impl Strategy<Value = TBox> {
            let names = ["A", "B", "C", "D"];
            let conc = prop_oneof![
                (0..4usize).prop_map(move |i| c(names[i])),
                (0..2usize, any::<bool>()).prop_map(|(i, inv)| {
                    let rr = r(["P", "Q"][i]);
                    Concept::Exists(if inv { rr.inv() } else { rr })
                }),
            ];
            let incl = proptest::collection::vec((conc.clone(), conc.clone()), 0..4);
            let disj = proptest::collection::vec((conc.clone(), conc), 0..3);
            let functs = proptest::collection::vec((0..2usize, any::<bool>()), 0..2);
            (incl, disj, functs).prop_map(|(incl, disj, functs)| {
                let mut t = tbox(&["A", "B", "C", "D"], &["P", "Q"]);
                t.concept_incl = incl;
                t.concept_disj = disj;
                t.funct = functs.into_iter().map(|(i, inv)| {
                    let rr = r(["P", "Q"][i]);
                    if inv { rr.inv() } else { rr }
                }).collect();
                t
            })
        }

        fn arb_abox() -> impl Strategy<Value = ABox> {
            let consts = ["a", "b", "c"];
            let fact = prop_oneof![
                (0..4usize, 0..3usize).prop_map(move |(p, x)| Fact::new(["A", "B", "C", "D"][p], &[consts[x]])),
                (0..2usize, 0..3usize, 0..3usize)
                    .prop_map(move |(p, x, y)| Fact::new(["P", "Q"][p], &[consts[x], consts[y]])),
            ];
            proptest::collection::vec(fact, 0..6).prop_map(|v| v.into_iter().collect())
        }

        proptest! {
            #[test]
            fn inc_empty_iff_consistent_iff_qunsat_false(t in arb_tbox(), a in arb_abox()) {
                let Ok(k) = Constraints::new(&t) else { return Ok(()); };
                let q = build_qunsat(&t).unwrap();
                let eng = QueryEngine::new(&t);
                let unsat = eng.holds(&q, &a).unwrap();
                prop_assert_eq!(k.is_consistent(&a), !unsat);
                prop_assert_eq!(k.inc_set(&a).is_empty(), k.is_consistent(&a));
            }

            #[test]
            fn saturation_idempotent_and_monotone(t in arb_tbox(), extra in (0..4usize, 0..4usize)) {
                let Ok(cl) = saturate_negatives(&t) else { return Ok(()); };
                let mut t2 = t.clone();
                t2.concept_disj = cl.concepts.iter().cloned().collect();
                t2.role_disj = cl.roles.iter().cloned().collect();
                prop_assert_eq!(saturate_negatives(&t2).unwrap(), cl.clone());
                let mut t3 = t.clone();
                let names = ["A", "B", "C", "D"];
                t3.concept_disj.push((c(names[extra.0]), c(names[extra.1])));
                if let Ok(cl3) = saturate_negatives(&t3) {
                    prop_assert!(cl.concepts.is_subset(&cl3.concepts));
                    prop_assert!(cl.roles.is_subset(&cl3.roles));
                }
            }

            #[test]
            fn adom_distributes_over_union(a in arb_abox(), b in arb_abox()) {
                let u: BTreeSet<Name> = a.adom().union(&b.adom()).cloned().collect();
                prop_assert_eq!(a.union(&b).adom(), u);
            }
        }
    }
}
