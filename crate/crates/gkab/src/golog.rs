//! Golog programs over KAB actions: occurrence ids, final states, the
//! one-step execution relation and transition systems under a filter.

use std::fmt;
use std::sync::Arc;

use crate::action::{find_action, tell, Action, ActionError, Filter, ServiceConfig, ServiceMap, Theory};
use crate::kb::{ABox, TBox};
use crate::query::{Ecq, QueryEngine, QueryError, Subst};
use crate::ts::{explore, BuildError, Limits, State, Transition, Ts};
use crate::{name, Name};

/// A program node tagged with its occurrence id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub pid: Name,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    Empty,
    /// `pick guard . action(args)`; `args` are free variables of `guard`.
    Invoke { guard: Ecq, action: Name, args: Vec<Name> },
    Choice(Arc<Program>, Arc<Program>),
    Seq(Arc<Program>, Arc<Program>),
    If(Ecq, Arc<Program>, Arc<Program>),
    While(Ecq, Arc<Program>),
}

impl Program {
    fn node(kind: Kind) -> Arc<Program> {
        Arc::new(Program { pid: name(""), kind })
    }

    pub fn skip() -> Arc<Program> {
        Program::node(Kind::Empty)
    }

    pub fn invoke(guard: Ecq, action: &str, args: &[&str]) -> Arc<Program> {
        Program::node(Kind::Invoke { guard, action: name(action), args: args.iter().map(|a| name(a)).collect() })
    }

    pub fn choice(a: Arc<Program>, b: Arc<Program>) -> Arc<Program> {
        Program::node(Kind::Choice(a, b))
    }

    /// Right-nested choice over `parts`; `skip` when empty.
    pub fn choice_all(parts: Vec<Arc<Program>>) -> Arc<Program> {
        parts.into_iter().rev().reduce(|acc, p| Program::choice(p, acc)).unwrap_or_else(Program::skip)
    }

    pub fn seq(a: Arc<Program>, b: Arc<Program>) -> Arc<Program> {
        Program::node(Kind::Seq(a, b))
    }

    /// Right-nested sequence over `parts`; `skip` when empty.
    pub fn seq_all(parts: Vec<Arc<Program>>) -> Arc<Program> {
        parts.into_iter().rev().reduce(|acc, p| Program::seq(p, acc)).unwrap_or_else(Program::skip)
    }

    pub fn if_(cond: Ecq, a: Arc<Program>, b: Arc<Program>) -> Arc<Program> {
        Program::node(Kind::If(cond, a, b))
    }

    pub fn while_(cond: Ecq, body: Arc<Program>) -> Arc<Program> {
        Program::node(Kind::While(cond, body))
    }

    /// Copy of this program with ids assigned from `id` downwards: children
    /// of a node `i` are `i.1` and `i.2`.
    pub fn with_ids(&self, id: &str) -> Arc<Program> {
        let child = |p: &Arc<Program>, k: u8| p.with_ids(&format!("{id}.{k}"));
        let kind = match &self.kind {
            Kind::Empty | Kind::Invoke { .. } => self.kind.clone(),
            Kind::Choice(a, b) => Kind::Choice(child(a, 1), child(b, 2)),
            Kind::Seq(a, b) => Kind::Seq(child(a, 1), child(b, 2)),
            Kind::If(c, a, b) => Kind::If(c.clone(), child(a, 1), child(b, 2)),
            Kind::While(c, a) => Kind::While(c.clone(), child(a, 1)),
        };
        Arc::new(Program { pid: name(id), kind })
    }

    /// Id of the empty program left behind by an invocation.
    pub fn after_invoke_pid(pid: &str) -> Name {
        name(&format!("{pid}.e"))
    }

    /// Every node in pre-order.
    pub fn nodes(self: &Arc<Program>) -> Vec<Arc<Program>> {
        let mut out = vec![self.clone()];
        match &self.kind {
            Kind::Empty | Kind::Invoke { .. } => {}
            Kind::Choice(a, b) | Kind::Seq(a, b) | Kind::If(_, a, b) => {
                out.extend(a.nodes());
                out.extend(b.nodes());
            }
            Kind::While(_, a) => out.extend(a.nodes()),
        }
        out
    }

    /// Rebuilds the tree bottom-up, replacing nodes by `f`.
    pub fn map(self: &Arc<Program>, f: &mut impl FnMut(&Arc<Program>) -> Option<Arc<Program>>) -> Arc<Program> {
        if let Some(r) = f(self) {
            return r;
        }
        let kind = match &self.kind {
            Kind::Empty | Kind::Invoke { .. } => return self.clone(),
            Kind::Choice(a, b) => Kind::Choice(a.map(f), b.map(f)),
            Kind::Seq(a, b) => Kind::Seq(a.map(f), b.map(f)),
            Kind::If(c, a, b) => Kind::If(c.clone(), a.map(f), b.map(f)),
            Kind::While(c, a) => Kind::While(c.clone(), a.map(f)),
        };
        Arc::new(Program { pid: self.pid.clone(), kind })
    }

    fn prec(&self) -> u8 {
        match self.kind {
            Kind::Choice(..) => 0,
            Kind::Seq(..) => 1,
            Kind::If(..) | Kind::While(..) => 2,
            Kind::Empty | Kind::Invoke { .. } => 3,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Empty => write!(f, "skip"),
            Kind::Invoke { guard, action, args } => {
                let args: Vec<&str> = args.iter().map(|a| &**a).collect();
                if *guard == Ecq::True && args.is_empty() {
                    write!(f, "{action}()")
                } else {
                    write!(f, "pick {guard} . {action}({})", args.join(","))
                }
            }
            Kind::Choice(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " | ")?;
                b.write_child(f, 0)
            }
            Kind::Seq(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "; ")?;
                b.write_child(f, 1)
            }
            Kind::If(c, a, b) => {
                write!(f, "if {c} then ")?;
                a.write_child(f, 2)?;
                write!(f, " else ")?;
                b.write_child(f, 2)
            }
            Kind::While(c, a) => {
                write!(f, "while {c} do ")?;
                a.write_child(f, 2)
            }
        }
    }
}

/// Golog knowledge and action base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gkab {
    pub tbox: TBox,
    pub abox: ABox,
    pub actions: Vec<Action>,
    pub program: Arc<Program>,
}

/// Whether the program may terminate in ABox `a`.
pub fn is_final(engine: &QueryEngine, a: &ABox, p: &Program) -> Result<bool, QueryError> {
    Ok(match &p.kind {
        Kind::Empty => true,
        Kind::Invoke { .. } => false,
        Kind::Choice(x, y) => is_final(engine, a, x)? || is_final(engine, a, y)?,
        Kind::Seq(x, y) => is_final(engine, a, x)? && is_final(engine, a, y)?,
        Kind::If(c, x, y) => {
            if engine.holds(c, a)? {
                is_final(engine, a, x)?
            } else {
                is_final(engine, a, y)?
            }
        }
        Kind::While(c, body) => !engine.holds(c, a)? || is_final(engine, a, body)?,
    })
}

/// One-step successors of the configuration `(a, m, p)`.
pub fn program_step(
    th: &Theory,
    actions: &[Action],
    filter: Filter,
    cfg: &ServiceConfig,
    a: &ABox,
    m: &ServiceMap,
    p: &Arc<Program>,
) -> Result<Vec<Transition>, ActionError> {
    let step = |q: &Arc<Program>| program_step(th, actions, filter, cfg, a, m, q);
    let rewrap = |ts: Vec<Transition>, f: &dyn Fn(Arc<Program>) -> Arc<Program>| -> Vec<Transition> {
        ts.into_iter()
            .map(|mut t| {
                let rest = t.target.program.take().expect("golog successor carries a program");
                t.target.program = Some(f(rest));
                t
            })
            .collect()
    };
    Ok(match &p.kind {
        Kind::Empty => Vec::new(),
        Kind::Invoke { guard, action, args } => {
            let act = find_action(actions, action)?;
            let rest = Arc::new(Program { pid: Program::after_invoke_pid(&p.pid), kind: Kind::Empty });
            let mut out = Vec::new();
            for ans in th.engine.eval(guard, a, &Subst::new())? {
                let values: Vec<Name> = args.iter().map(|v| ans[v].clone()).collect();
                let sigma = act.bind(&values)?;
                for t in tell(th, filter, a, m, act, &sigma, cfg)? {
                    out.push(Transition {
                        action: act.name.clone(),
                        sigma: sigma.clone(),
                        theta: t.theta,
                        target: State { abox: t.abox, scmap: t.scmap, program: Some(rest.clone()) },
                    });
                }
            }
            out
        }
        Kind::Choice(x, y) => {
            let mut out = step(x)?;
            out.extend(step(y)?);
            out
        }
        Kind::Seq(x, y) => {
            let mut out = rewrap(step(x)?, &|rest| Arc::new(Program { pid: p.pid.clone(), kind: Kind::Seq(rest, y.clone()) }));
            if is_final(&th.engine, a, x)? {
                out.extend(step(y)?);
            }
            out
        }
        Kind::If(c, x, y) => {
            if th.engine.holds(c, a)? {
                step(x)?
            } else {
                step(y)?
            }
        }
        Kind::While(c, body) => {
            if th.engine.holds(c, a)? {
                let unrolled = name(&format!("{}.u", p.pid));
                rewrap(step(body)?, &|rest| Arc::new(Program { pid: unrolled.clone(), kind: Kind::Seq(rest, p.clone()) }))
            } else {
                Vec::new()
            }
        }
    })
}

/// Transition system of `g` under `filter`. Program ids are reassigned from
/// the root before exploring.
pub fn build_ts_gkab(g: &Gkab, filter: Filter, cfg: &ServiceConfig, limits: &Limits) -> Result<Ts, BuildError> {
    let th = Theory::new(&g.tbox)?;
    if filter != Filter::S && !th.is_consistent(&g.abox) {
        return Err(BuildError::InconsistentInitialABox);
    }
    let init = State { abox: g.abox.clone(), scmap: ServiceMap::new(), program: Some(g.program.with_ids("r")) };
    explore(&g.tbox, init, limits, |s| {
        let p = s.program.as_ref().expect("golog state carries a program");
        program_step(&th, &g.actions, filter, cfg, &s.abox, &s.scmap, p)
    })
}

/// States whose remaining program is final.
pub fn final_states(ts: &Ts) -> Result<Vec<usize>, QueryError> {
    let engine = QueryEngine::new(&ts.tbox);
    let mut out = Vec::new();
    for (i, s) in ts.states.iter().enumerate() {
        if let Some(p) = &s.program {
            if is_final(&engine, &s.abox, p)? {
                out.push(i);
            }
        }
    }
    Ok(out)
}
