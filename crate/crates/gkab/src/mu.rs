//! First-order mu-calculus over ECQs and an explicit-state model checker.
//!
//! Extensions are computed bottom-up as state sets. Fixpoints use Kleene
//! iteration; individual variables are instantiated with constants from the
//! active domains of the system's states.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::kb::is_marker;
use crate::query::{write_child, Ecq, QueryEngine, QueryError, Subst};
use crate::ts::Ts;
use crate::Name;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MuError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("fixpoint variable {0} occurs under an odd number of negations")]
    NonMonotoneFixpoint(Name),
    #[error("formula is not closed: {0}")]
    NotClosed(String),
    #[error("formula mentions reserved predicate {0}")]
    ReservedPredicate(Name),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Query(Ecq),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Exists(Name, Box<Formula>),
    Forall(Name, Box<Formula>),
    /// Some successor satisfies the body.
    Possibly(Box<Formula>),
    /// Every successor satisfies the body.
    Necessarily(Box<Formula>),
    Var(Name),
    Mu(Name, Box<Formula>),
    Nu(Name, Box<Formula>),
}

use Formula as F;

impl Formula {
    pub fn query(q: Ecq) -> Formula {
        F::Query(q)
    }

    /// Lifts the connectives of an ECQ to formula connectives.
    pub fn from_ecq(q: Ecq) -> Formula {
        match q {
            Ecq::True => F::True,
            Ecq::False => F::False,
            Ecq::Query { .. } => F::Query(q),
            Ecq::Not(a) => F::from_ecq(*a).not(),
            Ecq::And(a, b) => F::from_ecq(*a).and(F::from_ecq(*b)),
            Ecq::Or(a, b) => F::from_ecq(*a).or(F::from_ecq(*b)),
            Ecq::Exists(x, a) => F::Exists(x, Box::new(F::from_ecq(*a))),
            Ecq::Forall(x, a) => F::Forall(x, Box::new(F::from_ecq(*a))),
        }
    }

    /// The ECQ this formula denotes, if it has no modal or fixpoint parts.
    pub fn to_ecq(&self) -> Option<Ecq> {
        Some(match self {
            F::True => Ecq::True,
            F::False => Ecq::False,
            F::Query(q) => q.clone(),
            F::Not(a) => a.to_ecq()?.not(),
            F::And(a, b) => a.to_ecq()?.and(b.to_ecq()?),
            F::Or(a, b) => a.to_ecq()?.or(b.to_ecq()?),
            F::Exists(x, a) => Ecq::Exists(x.clone(), Box::new(a.to_ecq()?)),
            F::Forall(x, a) => Ecq::Forall(x.clone(), Box::new(a.to_ecq()?)),
            _ => return None,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Formula {
        F::Not(Box::new(self))
    }

    pub fn and(self, o: Formula) -> Formula {
        F::And(Box::new(self), Box::new(o))
    }

    pub fn or(self, o: Formula) -> Formula {
        F::Or(Box::new(self), Box::new(o))
    }

    pub fn possibly(self) -> Formula {
        F::Possibly(Box::new(self))
    }

    pub fn necessarily(self) -> Formula {
        F::Necessarily(Box::new(self))
    }

    pub fn exists(x: &str, body: Formula) -> Formula {
        F::Exists(crate::name(x), Box::new(body))
    }

    pub fn forall(x: &str, body: Formula) -> Formula {
        F::Forall(crate::name(x), Box::new(body))
    }

    pub fn var(z: &str) -> Formula {
        F::Var(crate::name(z))
    }

    pub fn mu(z: &str, body: Formula) -> Formula {
        F::Mu(crate::name(z), Box::new(body))
    }

    pub fn nu(z: &str, body: Formula) -> Formula {
        F::Nu(crate::name(z), Box::new(body))
    }

    fn children(&self) -> Vec<&Formula> {
        match self {
            F::True | F::False | F::Query(_) | F::Var(_) => vec![],
            F::Not(a) | F::Exists(_, a) | F::Forall(_, a) | F::Possibly(a) | F::Necessarily(a) | F::Mu(_, a) | F::Nu(_, a) => {
                vec![a]
            }
            F::And(a, b) | F::Or(a, b) => vec![a, b],
        }
    }

    /// Free individual variables.
    pub fn free_vars(&self) -> BTreeSet<Name> {
        match self {
            F::Query(q) => q.free_vars(),
            F::Exists(x, a) | F::Forall(x, a) => {
                let mut s = a.free_vars();
                s.remove(x);
                s
            }
            _ => self.children().into_iter().flat_map(|c| c.free_vars()).collect(),
        }
    }

    /// Free fixpoint variables.
    pub fn free_pred_vars(&self) -> BTreeSet<Name> {
        match self {
            F::Var(z) => [z.clone()].into_iter().collect(),
            F::Mu(z, a) | F::Nu(z, a) => {
                let mut s = a.free_pred_vars();
                s.remove(z);
                s
            }
            _ => self.children().into_iter().flat_map(|c| c.free_pred_vars()).collect(),
        }
    }

    /// Every fixpoint variable name, bound or free.
    pub fn pred_var_names(&self) -> BTreeSet<Name> {
        let mut s: BTreeSet<Name> = self.children().into_iter().flat_map(|c| c.pred_var_names()).collect();
        if let F::Var(z) | F::Mu(z, _) | F::Nu(z, _) = self {
            s.insert(z.clone());
        }
        s
    }

    /// Predicates mentioned by embedded queries.
    pub fn preds(&self) -> BTreeSet<Name> {
        match self {
            F::Query(q) => q.preds(),
            _ => self.children().into_iter().flat_map(|c| c.preds()).collect(),
        }
    }

    /// Checks closedness and fixpoint monotonicity.
    pub fn validate(&self) -> Result<(), MuError> {
        if let Some(v) = self.free_vars().into_iter().next() {
            return Err(MuError::NotClosed(format!("free variable `{v}`")));
        }
        check_monotone(self, false, &mut BTreeMap::new())
    }

    /// Rejects reserved marker predicates, which user formulas may not mention.
    pub fn check_user_vocabulary(&self) -> Result<(), MuError> {
        match self.preds().into_iter().find(|p| is_marker(p)) {
            Some(p) => Err(MuError::ReservedPredicate(p)),
            None => Ok(()),
        }
    }

    fn prec(&self) -> u8 {
        match self {
            F::Exists(..) | F::Forall(..) | F::Mu(..) | F::Nu(..) => 0,
            F::Or(..) => 1,
            F::And(..) => 2,
            F::Not(_) | F::Possibly(_) | F::Necessarily(_) => 3,
            F::True | F::False | F::Var(_) => 4,
            F::Query(q) => match q {
                Ecq::True | Ecq::False | Ecq::Query { .. } => 4,
                _ => 0,
            },
        }
    }
}

fn check_monotone(f: &Formula, negated: bool, env: &mut BTreeMap<Name, bool>) -> Result<(), MuError> {
    match f {
        F::Var(z) => match env.get(z) {
            Some(&p) if p != negated => Err(MuError::NonMonotoneFixpoint(z.clone())),
            Some(_) => Ok(()),
            None => Err(MuError::NotClosed(format!("unbound fixpoint variable `{z}`"))),
        },
        F::Not(a) => check_monotone(a, !negated, env),
        F::Mu(z, a) | F::Nu(z, a) => {
            let old = env.insert(z.clone(), negated);
            let r = check_monotone(a, negated, env);
            match old {
                Some(p) => env.insert(z.clone(), p),
                None => env.remove(z),
            };
            r
        }
        _ => f.children().into_iter().try_for_each(|c| check_monotone(c, negated, env)),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F::True => write!(f, "true"),
            F::False => write!(f, "false"),
            F::Query(q) => write_child(f, q, self.prec() == 0),
            F::Var(z) => write!(f, "{z}"),
            F::Not(a) | F::Possibly(a) | F::Necessarily(a) => {
                let op = match self {
                    F::Not(_) => "!",
                    F::Possibly(_) => "<>",
                    _ => "[]",
                };
                write!(f, "{op}")?;
                write_child(f, a, a.prec() < 3)
            }
            F::And(a, b) => {
                write_child(f, a, a.prec() < 2)?;
                write!(f, " & ")?;
                write_child(f, b, b.prec() < 3)
            }
            F::Or(a, b) => {
                write_child(f, a, a.prec() < 1)?;
                write!(f, " | ")?;
                write_child(f, b, b.prec() < 2)
            }
            F::Exists(x, a) | F::Forall(x, a) | F::Mu(x, a) | F::Nu(x, a) => {
                let kw = match self {
                    F::Exists(..) => "exists",
                    F::Forall(..) => "forall",
                    F::Mu(..) => "mu",
                    _ => "nu",
                };
                write!(f, "{kw} {x}. ")?;
                write_child(f, a, false)
            }
        }
    }
}

/// Negation normal form: negations only directly above queries.
pub fn nnf(f: &Formula) -> Formula {
    push(f, false, &BTreeSet::new())
}

/// True if every negation sits directly above a query or a constant.
pub fn is_nnf(f: &Formula) -> bool {
    match f {
        F::Not(a) => matches!(**a, F::Query(_) | F::True | F::False),
        _ => f.children().into_iter().all(is_nnf),
    }
}

/// `flipped` holds the fixpoint variables whose occurrences stand for their
/// own negation after dualizing the enclosing binder.
fn push(f: &Formula, neg: bool, flipped: &BTreeSet<Name>) -> Formula {
    let bin = |a: &Formula, b: &Formula, and: bool| {
        let (a, b) = (push(a, neg, flipped), push(b, neg, flipped));
        if and != neg {
            a.and(b)
        } else {
            a.or(b)
        }
    };
    match f {
        F::True => if neg { F::False } else { F::True },
        F::False => if neg { F::True } else { F::False },
        F::Query(q) => match q {
            Ecq::True | Ecq::False | Ecq::Query { .. } => {
                if neg {
                    f.clone().not()
                } else {
                    f.clone()
                }
            }
            _ => push(&Formula::from_ecq(q.clone()), neg, flipped),
        },
        F::Var(z) => {
            if neg != flipped.contains(z) {
                F::Var(z.clone()).not()
            } else {
                F::Var(z.clone())
            }
        }
        F::Not(a) => push(a, !neg, flipped),
        F::And(a, b) => bin(a, b, true),
        F::Or(a, b) => bin(a, b, false),
        F::Exists(x, a) | F::Forall(x, a) => {
            let body = Box::new(push(a, neg, flipped));
            if matches!(f, F::Exists(..)) != neg {
                F::Exists(x.clone(), body)
            } else {
                F::Forall(x.clone(), body)
            }
        }
        F::Possibly(a) | F::Necessarily(a) => {
            let body = Box::new(push(a, neg, flipped));
            if matches!(f, F::Possibly(_)) != neg {
                F::Possibly(body)
            } else {
                F::Necessarily(body)
            }
        }
        F::Mu(z, a) | F::Nu(z, a) => {
            let mut fl = flipped.clone();
            if neg {
                fl.insert(z.clone());
            } else {
                fl.remove(z);
            }
            let body = Box::new(push(a, neg, &fl));
            if matches!(f, F::Mu(..)) != neg {
                F::Mu(z.clone(), body)
            } else {
                F::Nu(z.clone(), body)
            }
        }
    }
}

/// Valuation of fixpoint variables.
pub type PredValuation = BTreeMap<Name, FixedBitSet>;

/// Whether the initial state of `ts` satisfies the closed formula `f`.
pub fn model_check(ts: &Ts, f: &Formula) -> Result<bool, MuError> {
    f.validate()?;
    Ok(Checker::new(ts).extension(f, &Subst::new(), &PredValuation::new())?.contains(ts.initial))
}

/// States of `ts` satisfying `f` under the given valuations.
pub fn extension(ts: &Ts, f: &Formula, v: &Subst, pv: &PredValuation) -> Result<FixedBitSet, MuError> {
    Checker::new(ts).extension(f, v, pv)
}

/// Model checker bound to one transition system.
pub struct Checker<'a> {
    ts: &'a Ts,
    engine: QueryEngine,
    succ: Vec<Vec<usize>>,
    domain: Vec<Name>,
    /// For each constant of `domain`, the states whose active domain has it.
    holders: Vec<FixedBitSet>,
    /// Per-call caches keyed by node address; cleared between calls.
    closed: HashMap<(usize, Subst), FixedBitSet>,
    free: HashMap<usize, (BTreeSet<Name>, bool)>,
    /// Number of Kleene rounds of the last fixpoint evaluated.
    pub last_rounds: usize,
}

impl<'a> Checker<'a> {
    pub fn new(ts: &'a Ts) -> Self {
        let n = ts.len();
        let mut domain: BTreeSet<Name> = BTreeSet::new();
        for s in &ts.states {
            domain.extend(s.abox.user_adom());
        }
        let domain: Vec<Name> = domain.into_iter().collect();
        let holders = domain
            .iter()
            .map(|d| {
                let mut b = FixedBitSet::with_capacity(n);
                for (i, s) in ts.states.iter().enumerate() {
                    if s.abox.user_adom().contains(d) {
                        b.insert(i);
                    }
                }
                b
            })
            .collect();
        Checker {
            ts,
            engine: QueryEngine::new(&ts.tbox),
            succ: ts.successors(),
            domain,
            holders,
            closed: HashMap::new(),
            free: HashMap::new(),
            last_rounds: 0,
        }
    }

    pub fn extension(&mut self, f: &Formula, v: &Subst, pv: &PredValuation) -> Result<FixedBitSet, MuError> {
        self.closed.clear();
        self.free.clear();
        let r = self.ext(f, v, pv);
        self.closed.clear();
        self.free.clear();
        r
    }

    fn n(&self) -> usize {
        self.ts.len()
    }

    fn full(&self) -> FixedBitSet {
        let mut b = FixedBitSet::with_capacity(self.n());
        b.insert_range(..);
        b
    }

    fn free_info(&mut self, f: &Formula) -> (BTreeSet<Name>, bool) {
        let key = f as *const Formula as usize;
        if let Some(x) = self.free.get(&key) {
            return x.clone();
        }
        let x = (f.free_vars(), f.free_pred_vars().is_empty());
        self.free.insert(key, x.clone());
        x
    }

    fn ext(&mut self, f: &Formula, v: &Subst, pv: &PredValuation) -> Result<FixedBitSet, MuError> {
        let (fv, pred_closed) = self.free_info(f);
        if !pred_closed {
            return self.compute(f, v, pv);
        }
        let key = (f as *const Formula as usize, v.iter().filter(|(k, _)| fv.contains(*k)).map(|(k, x)| (k.clone(), x.clone())).collect());
        if let Some(b) = self.closed.get(&key) {
            return Ok(b.clone());
        }
        let b = self.compute(f, v, pv)?;
        self.closed.insert(key, b.clone());
        Ok(b)
    }

    fn compute(&mut self, f: &Formula, v: &Subst, pv: &PredValuation) -> Result<FixedBitSet, MuError> {
        let n = self.n();
        Ok(match f {
            F::True => self.full(),
            F::False => FixedBitSet::with_capacity(n),
            F::Query(q) => {
                let fv = q.free_vars();
                if let Some(x) = fv.iter().find(|x| !v.contains_key(*x)) {
                    return Err(MuError::NotClosed(format!("free variable `{x}`")));
                }
                let partial: Subst = v.iter().filter(|(k, _)| fv.contains(*k)).map(|(k, x)| (k.clone(), x.clone())).collect();
                let mut b = FixedBitSet::with_capacity(n);
                for (i, s) in self.ts.states.iter().enumerate() {
                    if self.engine.holds_with(q, &s.abox, &partial)? {
                        b.insert(i);
                    }
                }
                b
            }
            F::Not(a) => {
                let mut b = self.ext(a, v, pv)?;
                b.toggle_range(..);
                b
            }
            F::And(a, b) => {
                let mut x = self.ext(a, v, pv)?;
                x.intersect_with(&self.ext(b, v, pv)?);
                x
            }
            F::Or(a, b) => {
                let mut x = self.ext(a, v, pv)?;
                x.union_with(&self.ext(b, v, pv)?);
                x
            }
            F::Exists(x, a) | F::Forall(x, a) => {
                let exists = matches!(f, F::Exists(..));
                let mut acc = if exists { FixedBitSet::with_capacity(n) } else { self.full() };
                for i in 0..self.domain.len() {
                    let mut inner = v.clone();
                    inner.insert(x.clone(), self.domain[i].clone());
                    let mut b = self.ext(a, &inner, pv)?;
                    if exists {
                        b.intersect_with(&self.holders[i]);
                        acc.union_with(&b);
                    } else {
                        let mut absent = self.holders[i].clone();
                        absent.toggle_range(..);
                        b.union_with(&absent);
                        acc.intersect_with(&b);
                    }
                }
                acc
            }
            F::Possibly(a) | F::Necessarily(a) => {
                let inner = self.ext(a, v, pv)?;
                let some = matches!(f, F::Possibly(_));
                let mut b = FixedBitSet::with_capacity(n);
                for s in 0..n {
                    let ok = if some {
                        self.succ[s].iter().any(|&t| inner.contains(t))
                    } else {
                        self.succ[s].iter().all(|&t| inner.contains(t))
                    };
                    b.set(s, ok);
                }
                b
            }
            F::Var(z) => pv.get(z).cloned().ok_or_else(|| MuError::NotClosed(format!("unbound fixpoint variable `{z}`")))?,
            F::Mu(z, a) | F::Nu(z, a) => {
                let mut cur = if matches!(f, F::Mu(..)) { FixedBitSet::with_capacity(n) } else { self.full() };
                let mut inner = pv.clone();
                let mut rounds = 0;
                loop {
                    inner.insert(z.clone(), cur.clone());
                    let next = self.ext(a, v, &inner)?;
                    rounds += 1;
                    if next == cur {
                        break;
                    }
                    cur = next;
                }
                self.last_rounds = rounds;
                cur
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{ABox, Fact, TBox};
    use crate::query::Term;
    use crate::name;

    fn tb() -> TBox {
        TBox { concepts: ["N", "M", "bad"].iter().map(|x| name(x)).collect(), ..TBox::default() }
    }

    fn na() -> Formula {
        F::Query(Ecq::atom("N", vec![Term::cons("a")]))
    }

    fn ts_of(aboxes: Vec<ABox>, edges: &[(usize, usize)]) -> Ts {
        Ts::from_graph(&tb(), aboxes, edges)
    }

    fn with(facts: &[(&str, &[&str])]) -> ABox {
        facts.iter().map(|(p, a)| Fact::new(p, a)).collect()
    }

    fn reach() -> Formula {
        F::mu("Z", na().or(F::var("Z").possibly()))
    }

    #[test]
    fn basic_examples() {
        let ts = ts_of(vec![ABox::new(), with(&[("N", &["a"])])], &[(0, 1)]);
        assert!(model_check(&ts, &reach()).unwrap());
        assert!(!model_check(&ts, &na()).unwrap());
        let safe = F::nu("Z", F::Query(Ecq::atom("bad", vec![Term::cons("a")])).not().and(F::var("Z").necessarily()));
        assert!(model_check(&ts, &safe).unwrap());
        let pv: PredValuation = [(name("Z"), FixedBitSet::with_capacity(2))].into_iter().collect();
        let mut one = FixedBitSet::with_capacity(2);
        one.insert(1);
        let pv1: PredValuation = [(name("Z"), one.clone())].into_iter().collect();
        assert_eq!(extension(&ts, &F::var("Z"), &Subst::new(), &pv1).unwrap(), one);
        assert_eq!(extension(&ts, &na().not(), &Subst::new(), &pv).unwrap().ones().collect::<Vec<_>>(), vec![0]);
        let edgeless = ts_of(vec![with(&[("N", &["a"])])], &[]);
        assert_eq!(extension(&edgeless, &F::True.possibly(), &Subst::new(), &pv).unwrap().count_ones(..), 0);
    }

    #[test]
    fn validation() {
        let bad = F::mu("Z", F::var("Z").not());
        let ts = ts_of(vec![ABox::new()], &[]);
        assert_eq!(model_check(&ts, &bad), Err(MuError::NonMonotoneFixpoint(name("Z"))));
        let open = F::Query(Ecq::atom("N", vec![Term::var("x")]));
        assert!(matches!(model_check(&ts, &open), Err(MuError::NotClosed(_))));
        let twice = F::mu("Z", F::var("Z").not().not());
        assert!(model_check(&ts, &twice).is_ok());
    }

    #[test]
    fn quantifiers_bind_per_state() {
        let ts = ts_of(vec![with(&[("N", &["a"])]), with(&[("M", &["a"])])], &[(0, 1)]);
        let nx = F::Query(Ecq::atom("N", vec![Term::var("x")]));
        let mx = F::Query(Ecq::atom("M", vec![Term::var("x")]));
        // the binding made at state 0 persists to state 1
        assert!(model_check(&ts, &F::exists("x", nx.clone().and(mx.clone().possibly()))).unwrap());
        let e = extension(&ts, &F::exists("x", nx.clone()), &Subst::new(), &PredValuation::new()).unwrap();
        assert_eq!(e.ones().collect::<Vec<_>>(), vec![0]);
        let all = extension(&ts, &F::forall("x", nx), &Subst::new(), &PredValuation::new()).unwrap();
        assert_eq!(all.ones().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn nnf_examples() {
        let q = na();
        assert_eq!(nnf(&q.clone().possibly().not()), q.clone().not().necessarily());
        let lfp = F::mu("Z", q.clone().or(F::var("Z").possibly()));
        assert_eq!(nnf(&lfp.not()), F::nu("Z", q.clone().not().and(F::var("Z").necessarily())));
        assert_eq!(nnf(&q), q);
        assert!(is_nnf(&nnf(&F::exists("x", q.clone()).not().or(q.clone().not().not()))));
    }

    #[test]
    fn display_shapes() {
        let f = F::mu("Z", na().or(F::var("Z").possibly())).not().and(F::True.necessarily());
        assert_eq!(f.to_string(), "!(mu Z. [N(a)] | <>Z) & []true");
    }

    /// Random small TS: `n` states, edges from a bit pattern, N(a) on some states.
    fn random_ts(n: usize, bits: &[bool], marks: &[bool]) -> Ts {
        let mut edges = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if bits[(s * n + t) % bits.len()] {
                    edges.push((s, t));
                }
            }
        }
        let aboxes = (0..n).map(|s| if marks[s % marks.len()] { with(&[("N", &["a"])]) } else { ABox::new() }).collect();
        ts_of(aboxes, &edges)
    }

    fn bfs_reach(ts: &Ts, target: &dyn Fn(usize) -> bool) -> Vec<bool> {
        let succ = ts.successors();
        (0..ts.len())
            .map(|s| {
                let mut seen = vec![false; ts.len()];
                let mut stack = vec![s];
                while let Some(x) = stack.pop() {
                    if seen[x] {
                        continue;
                    }
                    seen[x] = true;
                    stack.extend(&succ[x]);
                }
                (0..ts.len()).any(|t| seen[t] && target(t))
            })
            .collect()
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lfp_is_reachability(n in 1usize..10, bits in proptest::collection::vec(any::<bool>(), 1..40), marks in proptest::collection::vec(any::<bool>(), 1..10)) {
                let ts = random_ts(n, &bits, &marks);
                let e = extension(&ts, &reach(), &Subst::new(), &PredValuation::new()).unwrap();
                let oracle = bfs_reach(&ts, &|t| ts.abox(t).len() == 1);
                for s in 0..n {
                    prop_assert_eq!(e.contains(s), oracle[s]);
                }
                let inv = F::nu("Z", na().and(F::var("Z").necessarily()));
                let e = extension(&ts, &inv, &Subst::new(), &PredValuation::new()).unwrap();
                let bad = bfs_reach(&ts, &|t| ts.abox(t).is_empty());
                for s in 0..n {
                    prop_assert_eq!(e.contains(s), !bad[s]);
                }
            }

            #[test]
            fn negation_matches_nnf_dual(n in 1usize..8, bits in proptest::collection::vec(any::<bool>(), 1..30), marks in proptest::collection::vec(any::<bool>(), 1..8), pick in 0usize..4) {
                let ts = random_ts(n, &bits, &marks);
                let f = match pick {
                    0 => reach(),
                    1 => F::nu("Z", na().and(F::var("Z").possibly())),
                    2 => F::mu("Z", na().or(F::var("Z").necessarily())).possibly(),
                    _ => F::exists("x", F::Query(Ecq::atom("N", vec![Term::var("x")])).and(F::nu("Y", F::var("Y").possibly()))),
                };
                let pos = model_check(&ts, &f).unwrap();
                let neg = model_check(&ts, &nnf(&f.not())).unwrap();
                prop_assert!(pos != neg);
            }

            #[test]
            fn lfp_is_least_prefixpoint(n in 1usize..7, bits in proptest::collection::vec(any::<bool>(), 1..30), marks in proptest::collection::vec(any::<bool>(), 1..7)) {
                let ts = random_ts(n, &bits, &marks);
                let body = na().or(F::var("Z").possibly());
                let kleene = extension(&ts, &F::mu("Z", body.clone()), &Subst::new(), &PredValuation::new()).unwrap();
                let mut meet = FixedBitSet::with_capacity(n);
                meet.insert_range(..);
                for mask in 0u32..1 << n {
                    let mut e = FixedBitSet::with_capacity(n);
                    for s in 0..n {
                        e.set(s, mask >> s & 1 == 1);
                    }
                    let pv: PredValuation = [(name("Z"), e.clone())].into_iter().collect();
                    let img = extension(&ts, &body, &Subst::new(), &pv).unwrap();
                    if img.is_subset(&e) {
                        meet.intersect_with(&e);
                    }
                }
                prop_assert_eq!(kleene, meet);
            }
        }
    }
}
