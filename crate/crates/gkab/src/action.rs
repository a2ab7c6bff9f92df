//! Actions with conditional effects, deterministic service calls, the
//! filtered `tell` relation, and transition systems of plain KABs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kb::{ABox, Constraints, Fact, KbError, TBox};
use crate::query::{Ecq, QueryEngine, QueryError, Subst, Term};
use crate::repair::{b_repairs_with, c_repair_with, evolve_with, RepairError, DEFAULT_REPAIR_CAP};
use crate::ts::{explore, BuildError, Limits, State, Transition, Ts};
use crate::Name;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error("deletion {0} is not ground")]
    UngroundedDeletion(String),
    #[error("addition {0} is not ground")]
    UngroundedAddition(String),
    #[error("no oracle value for service call {0}")]
    OracleIncomplete(String),
    #[error("unknown action {0}")]
    UnknownAction(Name),
    #[error("action {action} expects {expected} arguments, got {got}")]
    Arity { action: Name, expected: usize, got: usize },
}

/// Argument of an effect head: a plain term or a service call over terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadTerm {
    Term(Term),
    Call { func: Name, args: Vec<Term> },
}

impl fmt::Display for HeadTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadTerm::Term(t) => write!(f, "{t}"),
            HeadTerm::Call { func, args } => write!(f, "{func}({})", join(args)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeadAtom {
    pub pred: Name,
    pub args: Vec<HeadTerm>,
}

impl HeadAtom {
    /// A head atom without service calls.
    pub fn plain(pred: &str, args: Vec<Term>) -> HeadAtom {
        HeadAtom { pred: crate::name(pred), args: args.into_iter().map(HeadTerm::Term).collect() }
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for a in &self.args {
            let ts: Vec<&Term> = match a {
                HeadTerm::Term(t) => vec![t],
                HeadTerm::Call { args, .. } => args.iter().collect(),
            };
            out.extend(ts.into_iter().filter_map(|t| t.as_var().cloned()));
        }
        out
    }

    pub fn has_calls(&self) -> bool {
        self.args.iter().any(|a| matches!(a, HeadTerm::Call { .. }))
    }

    fn ground(&self, s: &Subst) -> Option<GroundAtom> {
        let args = self
            .args
            .iter()
            .map(|a| match a {
                HeadTerm::Term(t) => t.resolve(s).map(GroundTerm::Const),
                HeadTerm::Call { func, args } => args
                    .iter()
                    .map(|t| t.resolve(s))
                    .collect::<Option<Vec<_>>>()
                    .map(|args| GroundTerm::Call(ServiceCall { func: func.clone(), args })),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(GroundAtom { pred: self.pred.clone(), args })
    }
}

impl fmt::Display for HeadAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.pred, join(&self.args))
    }
}

/// `guard -> add {..}, del {..}`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Effect {
    pub guard: Ecq,
    pub add: Vec<HeadAtom>,
    pub del: Vec<HeadAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub name: Name,
    pub params: Vec<Name>,
    pub effects: Vec<Effect>,
}

impl Action {
    /// Binds parameters to the given values.
    pub fn bind(&self, values: &[Name]) -> Result<Subst, ActionError> {
        if values.len() != self.params.len() {
            return Err(ActionError::Arity { action: self.name.clone(), expected: self.params.len(), got: values.len() });
        }
        Ok(self.params.iter().cloned().zip(values.iter().cloned()).collect())
    }
}

/// Condition-action rule `guard => action(args)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub guard: Ecq,
    pub action: Name,
    pub args: Vec<Name>,
}

/// Ground service call `f(c1,..,cn)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceCall {
    pub func: Name,
    pub args: Vec<Name>,
}

impl fmt::Display for ServiceCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.func, join(&self.args))
    }
}

/// Results of the service calls issued so far.
pub type ServiceMap = BTreeMap<ServiceCall, Name>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroundTerm {
    Const(Name),
    Call(ServiceCall),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub pred: Name,
    pub args: Vec<GroundTerm>,
}

impl GroundAtom {
    fn instantiate(&self, theta: &ServiceMap) -> Option<Fact> {
        let args = self
            .args
            .iter()
            .map(|a| match a {
                GroundTerm::Const(c) => Some(c.clone()),
                GroundTerm::Call(call) => theta.get(call).cloned(),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Fact { pred: self.pred.clone(), args })
    }

    fn to_fact(&self) -> Option<Fact> {
        self.instantiate(&ServiceMap::new())
    }
}

/// How service call results are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceConfig {
    /// A fixed table with per-function fallbacks.
    Oracle { table: ServiceMap, defaults: BTreeMap<Name, Name> },
    /// Every value of the domain is a possible result of every fresh call.
    Enumerate(Vec<Name>),
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig::Oracle { table: ServiceMap::new(), defaults: BTreeMap::new() }
    }
}

impl ServiceConfig {
    /// Constants that can be returned by some call.
    pub fn values(&self) -> BTreeSet<Name> {
        match self {
            ServiceConfig::Oracle { table, defaults } => table.values().chain(defaults.values()).cloned().collect(),
            ServiceConfig::Enumerate(vs) => vs.iter().cloned().collect(),
        }
    }
}

/// Filter relation selecting successor ABoxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Filter {
    /// Apply the update as is.
    S,
    /// Any b-repair of the updated ABox.
    B,
    /// The c-repair of the updated ABox.
    C,
    /// Bold evolution, preferring new facts.
    E,
}

/// A TBox with its precomputed constraints and query engine.
#[derive(Debug, Clone)]
pub struct Theory {
    pub tbox: TBox,
    pub constraints: Constraints,
    pub engine: QueryEngine,
    pub repair_cap: usize,
}

impl Theory {
    pub fn new(t: &TBox) -> Result<Self, KbError> {
        Ok(Theory {
            tbox: t.clone(),
            constraints: Constraints::new(t)?,
            engine: QueryEngine::new(t),
            repair_cap: DEFAULT_REPAIR_CAP,
        })
    }

    pub fn is_consistent(&self, a: &ABox) -> bool {
        self.constraints.is_consistent(a)
    }
}

fn answers(th: &Theory, e: &Effect, a: &ABox, sigma: &Subst) -> Result<BTreeSet<Subst>, ActionError> {
    Ok(th.engine.eval(&e.guard, a, sigma)?)
}

/// Instantiated additions of `action` under `sigma`, possibly with service calls.
pub fn add_facts(th: &Theory, a: &ABox, action: &Action, sigma: &Subst) -> Result<BTreeSet<GroundAtom>, ActionError> {
    let mut out = BTreeSet::new();
    for e in &action.effects {
        if e.add.is_empty() {
            continue;
        }
        for rho in answers(th, e, a, sigma)? {
            for h in &e.add {
                out.insert(h.ground(&rho).ok_or_else(|| ActionError::UngroundedAddition(h.to_string()))?);
            }
        }
    }
    Ok(out)
}

/// Instantiated deletions of `action` under `sigma`.
pub fn del_facts(th: &Theory, a: &ABox, action: &Action, sigma: &Subst) -> Result<ABox, ActionError> {
    let mut out = ABox::new();
    for e in &action.effects {
        if e.del.is_empty() {
            continue;
        }
        for rho in answers(th, e, a, sigma)? {
            for h in &e.del {
                let g = h.ground(&rho).and_then(|g| g.to_fact());
                out.insert(g.ok_or_else(|| ActionError::UngroundedDeletion(h.to_string()))?);
            }
        }
    }
    Ok(out)
}

/// Service calls occurring in `facts`.
pub fn ground_calls(facts: &BTreeSet<GroundAtom>) -> BTreeSet<ServiceCall> {
    facts
        .iter()
        .flat_map(|f| &f.args)
        .filter_map(|t| match t {
            GroundTerm::Call(c) => Some(c.clone()),
            GroundTerm::Const(_) => None,
        })
        .collect()
}

/// All admissible result maps for `calls` that agree with `m`.
pub fn eval_thetas(
    calls: &BTreeSet<ServiceCall>,
    m: &ServiceMap,
    cfg: &ServiceConfig,
) -> Result<Vec<ServiceMap>, ActionError> {
    match cfg {
        ServiceConfig::Oracle { table, defaults } => {
            let mut theta = ServiceMap::new();
            for c in calls {
                let v = table
                    .get(c)
                    .or_else(|| defaults.get(&c.func))
                    .ok_or_else(|| ActionError::OracleIncomplete(c.to_string()))?;
                if m.get(c).is_some_and(|old| old != v) {
                    return Ok(Vec::new());
                }
                theta.insert(c.clone(), v.clone());
            }
            Ok(vec![theta])
        }
        ServiceConfig::Enumerate(values) => {
            let mut out = vec![ServiceMap::new()];
            for c in calls {
                let choices: Vec<Name> = match m.get(c) {
                    Some(v) => vec![v.clone()],
                    None => values.clone(),
                };
                out = out
                    .into_iter()
                    .flat_map(|t| {
                        choices.iter().map(move |v| {
                            let mut t = t.clone();
                            t.insert(c.clone(), v.clone());
                            t
                        })
                    })
                    .collect();
            }
            Ok(out)
        }
    }
}

/// Replaces service calls by their results.
pub fn apply_theta(add: &BTreeSet<GroundAtom>, theta: &ServiceMap) -> ABox {
    add.iter().map(|g| g.instantiate(theta).expect("theta covers every call")).collect()
}

/// `(a \ del) | add`: additions win over deletions.
pub fn do_update(a: &ABox, add: &ABox, del: &ABox) -> ABox {
    a.difference(del).union(add)
}

/// Candidate successor ABoxes selected by `filter`.
pub fn apply_filter(th: &Theory, a: &ABox, fplus: &ABox, fminus: &ABox, filter: Filter) -> Result<Vec<ABox>, ActionError> {
    let updated = do_update(a, fplus, fminus);
    let k = &th.constraints;
    Ok(match filter {
        Filter::S => vec![updated],
        Filter::B => b_repairs_with(k, &updated, th.repair_cap)?,
        Filter::C => vec![c_repair_with(k, &updated, th.repair_cap)?],
        Filter::E => {
            if !k.is_consistent(a) || !k.is_consistent(fplus) {
                Vec::new()
            } else {
                vec![evolve_with(k, a, fplus, fminus)?]
            }
        }
    })
}

/// One successor produced by `tell`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Told {
    pub abox: ABox,
    pub scmap: ServiceMap,
    pub theta: ServiceMap,
}

/// Successors of `(a, m)` when executing `action` with parameters `sigma`.
pub fn tell(
    th: &Theory,
    filter: Filter,
    a: &ABox,
    m: &ServiceMap,
    action: &Action,
    sigma: &Subst,
    cfg: &ServiceConfig,
) -> Result<Vec<Told>, ActionError> {
    let add = add_facts(th, a, action, sigma)?;
    let del = del_facts(th, a, action, sigma)?;
    let mut out = Vec::new();
    for theta in eval_thetas(&ground_calls(&add), m, cfg)? {
        let fplus = apply_theta(&add, &theta);
        let mut scmap = m.clone();
        scmap.extend(theta.iter().map(|(k, v)| (k.clone(), v.clone())));
        for abox in apply_filter(th, a, &fplus, &del, filter)? {
            if th.is_consistent(&abox) {
                out.push(Told { abox, scmap: scmap.clone(), theta: theta.clone() });
            }
        }
    }
    Ok(out)
}

/// Knowledge and action base driven by condition-action rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kab {
    pub tbox: TBox,
    pub abox: ABox,
    pub actions: Vec<Action>,
    pub process: Vec<Rule>,
}

impl Kab {
    pub fn action(&self, n: &str) -> Result<&Action, ActionError> {
        find_action(&self.actions, n)
    }
}

pub(crate) fn find_action<'a>(actions: &'a [Action], n: &str) -> Result<&'a Action, ActionError> {
    actions.iter().find(|a| &*a.name == n).ok_or_else(|| ActionError::UnknownAction(crate::name(n)))
}

/// Transition system of a KAB under standard semantics.
pub fn build_ts_skab(k: &Kab, cfg: &ServiceConfig, limits: &Limits) -> Result<Ts, BuildError> {
    let th = Theory::new(&k.tbox)?;
    let init = State { abox: k.abox.clone(), scmap: ServiceMap::new(), program: None };
    explore(&k.tbox, init, limits, |s| {
        let mut out = Vec::new();
        for rule in &k.process {
            let action = k.action(&rule.action)?;
            for ans in th.engine.eval(&rule.guard, &s.abox, &Subst::new())? {
                let values: Vec<Name> = rule.args.iter().map(|v| ans[v].clone()).collect();
                let sigma = action.bind(&values)?;
                for t in tell(&th, Filter::S, &s.abox, &s.scmap, action, &sigma, cfg)? {
                    out.push(Transition {
                        action: action.name.clone(),
                        sigma: sigma.clone(),
                        theta: t.theta,
                        target: State { abox: t.abox, scmap: t.scmap, program: None },
                    });
                }
            }
        }
        Ok(out)
    })
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
