//! Translations between system variants.
//!
//! Inconsistency-aware Golog systems (b-repair, c-repair and evolution
//! semantics) compile to standard-semantics Golog systems over the positive
//! TBox, standard Golog systems compile to rule-based KABs through flag
//! markers, and rule-based KABs compile to Golog systems. Each system
//! translation has a matching formula translation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::action::{Action, Effect, HeadAtom, HeadTerm, Kab, Rule};
use crate::golog::{Gkab, Kind, Program};
use crate::kb::{
    build_qunsat, concept_atom, role_atom, ABox, Concept, Constraints, Fact, KbError, Role, TBox, FLAG, NOOP, REP, STATE,
    TEMP,
};
use crate::mu::{is_nnf, nnf, Formula};
use crate::query::{Atom, Cq, Ecq, Term, Ucq};
use crate::{name, Name};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("formula is not in negation normal form")]
    FormulaNotNNF,
    #[error("vocabulary collision: {0}")]
    VocabularyCollision(String),
    #[error("generated action name {0} is already in use")]
    ActionNameCollision(Name),
}

/// Suffix of the duplicated vocabulary used by the evolution translation.
pub const NEW_SUFFIX: &str = "__n";

const KEEP_PREFIX: &str = "__keep_";
const REP_ON: &str = "__rep_on";
const REP_OFF: &str = "__rep_off";
const CREPAIR: &str = "__crep";
const EVOLVE: &str = "__evol";

fn marker(pred: &str, c: &str) -> HeadAtom {
    HeadAtom::plain(pred, vec![Term::cons(c)])
}

fn marker_query(pred: &str, c: &str) -> Ecq {
    Ecq::raw_atom(pred, vec![Term::cons(c)])
}

fn head(a: &Atom) -> HeadAtom {
    match a {
        Atom::Pred { pred, args } => HeadAtom { pred: pred.clone(), args: args.iter().cloned().map(HeadTerm::Term).collect() },
        Atom::Eq(..) => unreachable!("equalities are never deleted"),
    }
}

/// Raw query over `atoms` with every variable free.
fn open_query(atoms: Vec<Atom>) -> Ecq {
    let cq = Cq::new(atoms);
    Ecq::raw(Ucq::single(cq.vars().into_iter().collect(), cq))
}

/// Raw query over `atoms` with only `free` free.
fn closed_query(free: &[&str], atoms: Vec<Atom>) -> Ecq {
    Ecq::raw(Ucq::single(free.iter().map(|v| name(v)).collect(), Cq::new(atoms)))
}

fn check_action_names(actions: &[Action], generated: &[Action]) -> Result<(), CompileError> {
    let taken: BTreeSet<&Name> = actions.iter().map(|a| &a.name).collect();
    match generated.iter().find(|g| taken.contains(&g.name)) {
        Some(g) => Err(CompileError::ActionNameCollision(g.name.clone())),
        None => Ok(()),
    }
}

/// Replaces every invocation of the user program by `f(invocation)`.
fn around_invocations(p: &Arc<Program>, f: &dyn Fn(Arc<Program>) -> Arc<Program>) -> Arc<Program> {
    p.map(&mut |n| matches!(n.kind, Kind::Invoke { .. }).then(|| f(n.clone())))
}

/// Rule-based KAB to Golog: repeatedly pick any enabled rule. An empty
/// process becomes `skip`, reported as a warning.
pub fn tkabs(k: &Kab) -> (Gkab, Vec<String>) {
    let mut warnings = Vec::new();
    let program = if k.process.is_empty() {
        warnings.push("empty process: translated program is skip".to_string());
        Program::skip()
    } else {
        let picks = k
            .process
            .iter()
            .map(|r| {
                let args: Vec<&str> = r.args.iter().map(|a| &**a).collect();
                Program::invoke(r.guard.clone(), &r.action, &args)
            })
            .collect();
        Program::while_(Ecq::True, Program::choice_all(picks))
    };
    let g = Gkab { tbox: k.tbox.clone(), abox: k.abox.clone(), actions: k.actions.clone(), program: program.with_ids("r") };
    (g, warnings)
}

/// A pattern for the conflict partners of a kept fact: a query testing for
/// their presence and an effect deleting them.
struct Partner {
    present: Ecq,
    delete: Effect,
}

fn partner_concept(b: &Concept, at: &Term) -> Partner {
    let atom = concept_atom(b, at, "_w");
    match b {
        Concept::Atomic(_) => Partner {
            present: open_query(vec![atom.clone()]),
            delete: Effect { guard: Ecq::True, add: vec![], del: vec![head(&atom)] },
        },
        Concept::Exists(_) => Partner {
            present: Ecq::exists_all(&["_w"], open_query(vec![atom.clone()])),
            delete: Effect { guard: open_query(vec![atom.clone()]), add: vec![], del: vec![head(&atom)] },
        },
    }
}

fn partner_role(r: &Role, x: &Term, y: &Term) -> Partner {
    let atom = role_atom(r, x, y);
    Partner {
        present: open_query(vec![atom.clone()]),
        delete: Effect { guard: Ecq::True, add: vec![], del: vec![head(&atom)] },
    }
}

/// Facts `r(x, z)` with `z != y`.
fn partner_funct(r: &Role, x: &Term, y: &Term) -> Partner {
    let z = Term::var("_w");
    let atom = role_atom(r, x, &z);
    let other = open_query(vec![atom.clone()]).and(open_query(vec![Atom::Eq(z, y.clone())]).not());
    Partner {
        present: Ecq::exists_all(&["_w"], other.clone()),
        delete: Effect { guard: other, add: vec![], del: vec![head(&atom)] },
    }
}

fn keep_action(pred: &Name, params: &[&str], kept: Atom, partners: Vec<Partner>) -> (Arc<Program>, Action) {
    let act_name = format!("{KEEP_PREFIX}{pred}");
    let present = Ecq::disj(partners.iter().map(|p| p.present.clone()).collect());
    let guard = open_query(vec![kept]).and(present);
    let action = Action {
        name: name(&act_name),
        params: params.iter().map(|p| name(p)).collect(),
        effects: partners.into_iter().map(|p| p.delete).collect(),
    };
    (Program::invoke(guard, &act_name, params), action)
}

/// Repair invocations and their actions. For every predicate taking part
/// in some constraint there is one action that keeps a conflicting fact and
/// deletes all of its conflict partners.
pub fn brepair_actions(t: &TBox) -> Result<(Vec<Arc<Program>>, Vec<Action>), CompileError> {
    let k = Constraints::new(t)?;
    let (x, y) = (Term::var("_x"), Term::var("_y"));
    let mut invocations = Vec::new();
    let mut actions = Vec::new();
    for n in &t.concepts {
        let b = Concept::Atomic(n.clone());
        let partners: Vec<Partner> =
            k.closure.concepts.iter().filter(|(b1, _)| *b1 == b).map(|(_, b2)| partner_concept(b2, &x)).collect();
        if !partners.is_empty() {
            let (i, a) = keep_action(n, &["_x"], Atom::pred(n.clone(), vec![x.clone()]), partners);
            invocations.push(i);
            actions.push(a);
        }
    }
    for p in &t.roles {
        let r = Role::new(p.clone());
        let mut partners = Vec::new();
        for (b, at) in [(Concept::Exists(r.clone()), &x), (Concept::Exists(r.inv()), &y)] {
            partners.extend(k.closure.concepts.iter().filter(|(b1, _)| *b1 == b).map(|(_, b2)| partner_concept(b2, at)));
        }
        for (r1, u, w) in [(r.clone(), &x, &y), (r.inv(), &y, &x)] {
            partners.extend(k.closure.roles.iter().filter(|(a, _)| *a == r1).map(|(_, r2)| partner_role(r2, u, w)));
            if k.funct.contains(&r1) {
                partners.push(partner_funct(&r1, u, w));
            }
        }
        if !partners.is_empty() {
            let (i, a) = keep_action(p, &["_x", "_y"], Atom::pred(p.clone(), vec![x.clone(), y.clone()]), partners);
            invocations.push(i);
            actions.push(a);
        }
    }
    Ok((invocations, actions))
}

/// `while q_unsat do (keep_1 | .. | keep_n)`, with its actions.
pub fn brepair_program(t: &TBox) -> Result<(Arc<Program>, Vec<Action>), CompileError> {
    let (invocations, actions) = brepair_actions(t)?;
    Ok((Program::while_(build_qunsat(t)?, Program::choice_all(invocations)), actions))
}

fn set_rep(on: bool) -> Action {
    let m = marker(STATE, REP);
    let (add, del) = if on { (vec![m], vec![]) } else { (vec![], vec![m]) };
    Action { name: name(if on { REP_ON } else { REP_OFF }), params: vec![], effects: vec![Effect { guard: Ecq::True, add, del }] }
}

/// b-repair semantics to standard semantics: each invocation is followed by
/// a repair phase bracketed by the repair marker.
pub fn tgkabb(g: &Gkab) -> Result<Gkab, CompileError> {
    let (repair, mut generated) = brepair_program(&g.tbox)?;
    generated.push(set_rep(true));
    generated.push(set_rep(false));
    check_action_names(&g.actions, &generated)?;
    let program = around_invocations(&g.program, &|inv| {
        Program::seq_all(vec![
            inv,
            Program::invoke(Ecq::True, REP_ON, &[]),
            repair.clone(),
            Program::invoke(Ecq::True, REP_OFF, &[]),
        ])
    });
    let mut actions = g.actions.clone();
    actions.extend(generated);
    Ok(Gkab { tbox: g.tbox.positive_part(), abox: g.abox.clone(), actions, program: program.with_ids("r") })
}

/// The 0-ary action deleting every fact involved in a violation.
pub fn crepair_action(t: &TBox) -> Result<Action, CompileError> {
    let k = Constraints::new(t)?;
    let (x, y, z) = (Term::var("_x"), Term::var("_y"), Term::var("_z"));
    let mut effects = Vec::new();
    let both = |atoms: Vec<Atom>| Effect { guard: open_query(atoms.clone()), add: vec![], del: atoms.iter().map(head).collect() };
    for (b1, b2) in k.closure.concepts.iter().filter(|(a, b)| a <= b) {
        effects.push(both(vec![concept_atom(b1, &x, "_u1"), concept_atom(b2, &x, "_u2")]));
    }
    for (r1, r2) in k.closure.roles.iter().filter(|(a, b)| a <= b) {
        effects.push(both(vec![role_atom(r1, &x, &y), role_atom(r2, &x, &y)]));
    }
    for r in &k.funct {
        let atoms = vec![role_atom(r, &x, &y), role_atom(r, &x, &z)];
        effects.push(Effect {
            guard: open_query(atoms.clone()).and(open_query(vec![Atom::Eq(y.clone(), z.clone())]).not()),
            add: vec![],
            del: atoms.iter().map(head).collect(),
        });
    }
    Ok(Action { name: name(CREPAIR), params: vec![], effects })
}

/// c-repair semantics to standard semantics: each invocation is followed by
/// the c-repair action.
pub fn tgkabc(g: &Gkab) -> Result<Gkab, CompileError> {
    let crep = crepair_action(&g.tbox)?;
    check_action_names(&g.actions, std::slice::from_ref(&crep))?;
    let program = around_invocations(&g.program, &|inv| Program::seq(inv, Program::invoke(Ecq::True, CREPAIR, &[])));
    let mut actions = g.actions.clone();
    actions.push(crep);
    Ok(Gkab { tbox: g.tbox.positive_part(), abox: g.abox.clone(), actions, program: program.with_ids("r") })
}

/// Name of the duplicate of a vocabulary name.
pub fn new_name(n: &str) -> Name {
    name(&format!("{n}{NEW_SUFFIX}"))
}

fn new_role(r: &Role) -> Role {
    Role { name: new_name(&r.name), inverse: r.inverse }
}

fn new_concept(b: &Concept) -> Concept {
    match b {
        Concept::Atomic(n) => Concept::Atomic(new_name(n)),
        Concept::Exists(r) => Concept::Exists(new_role(r)),
    }
}

fn check_new_vocabulary(t: &TBox) -> Result<(), CompileError> {
    let voc: BTreeSet<&Name> = t.concepts.iter().chain(&t.roles).collect();
    for n in &voc {
        if n.ends_with(NEW_SUFFIX) || voc.contains(&new_name(n)) {
            return Err(CompileError::VocabularyCollision(n.to_string()));
        }
    }
    Ok(())
}

/// The TBox copied onto the duplicated vocabulary.
fn duplicated_tbox(t: &TBox) -> TBox {
    TBox {
        concepts: t.concepts.iter().map(|n| new_name(n)).collect(),
        roles: t.roles.iter().map(|n| new_name(n)).collect(),
        concept_incl: t.concept_incl.iter().map(|(a, b)| (new_concept(a), new_concept(b))).collect(),
        role_incl: t.role_incl.iter().map(|(a, b)| (new_role(a), new_role(b))).collect(),
        concept_disj: t.concept_disj.iter().map(|(a, b)| (new_concept(a), new_concept(b))).collect(),
        role_disj: t.role_disj.iter().map(|(a, b)| (new_role(a), new_role(b))).collect(),
        funct: t.funct.iter().map(new_role).collect(),
    }
}

/// The action removing old facts that conflict with newly added ones, then
/// flushing the duplicated vocabulary.
pub fn evolution_action(t: &TBox) -> Result<Action, CompileError> {
    check_new_vocabulary(t)?;
    let k = Constraints::new(t)?;
    let (x, y, z) = (Term::var("_x"), Term::var("_y"), Term::var("_z"));
    let mut effects = Vec::new();
    for (b1, b2) in &k.closure.concepts {
        let old = concept_atom(b2, &x, "_u2");
        let mut free = vec!["_x"];
        if matches!(b2, Concept::Exists(_)) {
            free.push("_u2");
        }
        effects.push(Effect {
            guard: closed_query(&free, vec![concept_atom(&new_concept(b1), &x, "_u1"), old.clone()]),
            add: vec![],
            del: vec![head(&old)],
        });
    }
    for (r1, r2) in &k.closure.roles {
        let old = role_atom(r2, &x, &y);
        effects.push(Effect {
            guard: open_query(vec![role_atom(&new_role(r1), &x, &y), old.clone()]),
            add: vec![],
            del: vec![head(&old)],
        });
    }
    for r in &k.funct {
        let old = role_atom(r, &x, &z);
        effects.push(Effect {
            guard: open_query(vec![role_atom(r, &x, &y), old.clone(), role_atom(&new_role(r), &x, &y)])
                .and(open_query(vec![Atom::Eq(y.clone(), z.clone())]).not()),
            add: vec![],
            del: vec![head(&old)],
        });
    }
    for n in &t.concepts {
        let a = Atom::pred(new_name(n), vec![x.clone()]);
        effects.push(Effect { guard: open_query(vec![a.clone()]), add: vec![], del: vec![head(&a)] });
    }
    for p in &t.roles {
        let a = Atom::pred(new_name(p), vec![x.clone(), y.clone()]);
        effects.push(Effect { guard: open_query(vec![a.clone()]), add: vec![], del: vec![head(&a)] });
    }
    Ok(Action { name: name(EVOLVE), params: vec![], effects })
}

/// Evolution semantics to standard semantics: additions are mirrored on the
/// duplicated vocabulary, whose copy of the TBox rejects inconsistent
/// additions, and the evolution action runs after each invocation.
pub fn tgkabe(g: &Gkab) -> Result<Gkab, CompileError> {
    let evol = evolution_action(&g.tbox)?;
    check_action_names(&g.actions, std::slice::from_ref(&evol))?;
    let mut actions: Vec<Action> = g
        .actions
        .iter()
        .map(|a| Action {
            effects: a
                .effects
                .iter()
                .map(|e| {
                    let mut add = e.add.clone();
                    add.extend(e.add.iter().filter(|h| !crate::kb::is_marker(&h.pred)).map(|h| HeadAtom { pred: new_name(&h.pred), args: h.args.clone() }));
                    Effect { guard: e.guard.clone(), add, del: e.del.clone() }
                })
                .collect(),
            ..a.clone()
        })
        .collect();
    actions.push(evol);
    let dup = duplicated_tbox(&g.tbox);
    let mut tbox = g.tbox.positive_part();
    tbox.concepts.extend(dup.concepts);
    tbox.roles.extend(dup.roles);
    tbox.concept_incl.extend(dup.concept_incl);
    tbox.role_incl.extend(dup.role_incl);
    tbox.concept_disj = dup.concept_disj;
    tbox.role_disj = dup.role_disj;
    tbox.funct = dup.funct;
    let program = around_invocations(&g.program, &|inv| Program::seq(inv, Program::invoke(Ecq::True, EVOLVE, &[])));
    Ok(Gkab { tbox, abox: g.abox.clone(), actions, program: program.with_ids("r") })
}

/// Flags placed before and after each program occurrence, by program id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlagTable {
    pub pre: BTreeMap<Name, Name>,
    pub post: BTreeMap<Name, Name>,
}

/// Constant names `c<k>` avoiding a set of used names.
#[derive(Debug, Clone)]
pub struct Fresh {
    used: BTreeSet<Name>,
    next: u64,
}

impl Fresh {
    pub fn new(used: BTreeSet<Name>, seed: u64) -> Self {
        Fresh { used, next: seed }
    }

    pub fn constant(&mut self) -> Name {
        loop {
            let c = name(&format!("c{}", self.next));
            self.next += 1;
            if self.used.insert(c.clone()) {
                return c;
            }
        }
    }
}

/// Rules and actions produced by translating a program.
#[derive(Debug, Clone, Default)]
pub struct ProgramTranslation {
    pub flags: FlagTable,
    pub rules: Vec<Rule>,
    pub actions: Vec<Action>,
    /// Flag and loop constants introduced.
    pub constants: BTreeSet<Name>,
}

struct ProgTr<'a> {
    user: &'a [Action],
    fresh: Fresh,
    out: ProgramTranslation,
    counter: usize,
}

impl ProgTr<'_> {
    fn fresh(&mut self) -> Name {
        let c = self.fresh.constant();
        self.out.constants.insert(c.clone());
        c
    }

    fn action_name(&mut self, kind: &str) -> Name {
        self.counter += 1;
        name(&format!("__{kind}{}", self.counter))
    }

    fn flag(c: &Name) -> Ecq {
        marker_query(FLAG, c)
    }

    /// A rule `guard => a()` where `a` adds `add` plus temp and deletes `del`.
    fn marker_step(&mut self, kind: &str, guard: Ecq, add: Vec<HeadAtom>, del: Vec<HeadAtom>) {
        let n = self.action_name(kind);
        let mut add = add;
        add.push(marker(STATE, TEMP));
        self.out.actions.push(Action { name: n.clone(), params: vec![], effects: vec![Effect { guard: Ecq::True, add, del }] });
        self.out.rules.push(Rule { guard, action: n, args: vec![] });
    }

    fn tr(&mut self, pre: &Name, p: &Program, post: &Name) -> Result<(), crate::action::ActionError> {
        self.out.flags.pre.insert(p.pid.clone(), pre.clone());
        self.out.flags.post.insert(p.pid.clone(), post.clone());
        let flag = |c: &Name| marker(FLAG, c);
        match &p.kind {
            Kind::Empty => self.marker_step("eps", Self::flag(pre), vec![flag(post)], vec![flag(pre)]),
            Kind::Invoke { guard, action, args } => {
                let user = crate::action::find_action(self.user, action)?;
                let n = self.action_name(&format!("{action}_"));
                let mut v = String::from("_nv");
                while user.params.iter().any(|p| **p == *v) {
                    v.push('_');
                }
                let mut effects = user.effects.clone();
                effects.push(Effect { guard: Ecq::True, add: vec![flag(post)], del: vec![] });
                effects.push(Effect { guard: Ecq::True, add: vec![], del: vec![flag(pre), marker(STATE, TEMP)] });
                let noop = HeadAtom::plain(NOOP, vec![Term::var(&v)]);
                effects.push(Effect { guard: Ecq::raw_atom(NOOP, vec![Term::var(&v)]), add: vec![], del: vec![noop] });
                self.out.actions.push(Action { name: n.clone(), params: user.params.clone(), effects });
                self.out.rules.push(Rule { guard: guard.clone().and(Self::flag(pre)), action: n, args: args.clone() });
                let rest = Program { pid: Program::after_invoke_pid(&p.pid), kind: Kind::Empty };
                self.tr(post, &rest, post)?;
            }
            Kind::Choice(a, b) => {
                let (c1, c2) = (self.fresh(), self.fresh());
                self.marker_step("choose", Self::flag(pre), vec![flag(&c1)], vec![flag(pre)]);
                self.marker_step("choose", Self::flag(pre), vec![flag(&c2)], vec![flag(pre)]);
                self.tr(&c1, a, post)?;
                self.tr(&c2, b, post)?;
            }
            Kind::Seq(a, b) => {
                let c = self.fresh();
                self.tr(pre, a, &c)?;
                self.tr(&c, b, post)?;
            }
            Kind::If(cond, a, b) => {
                let (c1, c2) = (self.fresh(), self.fresh());
                self.marker_step("then", Self::flag(pre).and(cond.clone()), vec![flag(&c1)], vec![flag(pre)]);
                self.marker_step("else", Self::flag(pre).and(cond.clone().not()), vec![flag(&c2)], vec![flag(pre)]);
                self.tr(&c1, a, post)?;
                self.tr(&c2, b, post)?;
            }
            Kind::While(cond, body) => {
                let (noop, start) = (self.fresh(), self.fresh());
                let progress = marker_query(NOOP, &noop);
                self.marker_step(
                    "loop",
                    Self::flag(pre).and(cond.clone()).and(progress.clone().not()),
                    vec![flag(&start), marker(NOOP, &noop)],
                    vec![flag(pre)],
                );
                self.marker_step(
                    "endloop",
                    Self::flag(pre).and(cond.clone().not().or(progress)),
                    vec![flag(post)],
                    vec![flag(pre), marker(NOOP, &noop)],
                );
                self.tr(&start, body, pre)?;
            }
        }
        Ok(())
    }
}

/// Flag-based translation of `p` between the flags `pre` and `post`.
pub fn tgprog(
    pre: &Name,
    p: &Program,
    post: &Name,
    user: &[Action],
    fresh: Fresh,
) -> Result<ProgramTranslation, crate::action::ActionError> {
    let mut t = ProgTr { user, fresh, out: ProgramTranslation::default(), counter: 0 };
    t.tr(pre, p, post)?;
    Ok(t.out)
}

/// Flag constant marking the program start.
pub const START: &str = "start";
/// Flag constant marking the program end.
pub const END: &str = "end";

/// Constants mentioned anywhere in a Golog system.
pub fn system_constants(g: &Gkab) -> BTreeSet<Name> {
    let mut out = g.abox.adom();
    for a in &g.actions {
        for e in &a.effects {
            out.extend(e.guard.constants());
            for h in e.add.iter().chain(&e.del) {
                for t in &h.args {
                    match t {
                        HeadTerm::Term(Term::Const(c)) => {
                            out.insert(c.clone());
                        }
                        HeadTerm::Call { args, .. } => {
                            out.extend(args.iter().filter_map(|t| match t {
                                Term::Const(c) => Some(c.clone()),
                                Term::Var(_) => None,
                            }));
                        }
                        HeadTerm::Term(Term::Var(_)) => {}
                    }
                }
            }
        }
    }
    for n in g.program.nodes() {
        match &n.kind {
            Kind::Invoke { guard, .. } => out.extend(guard.constants()),
            Kind::If(c, ..) | Kind::While(c, _) => out.extend(c.constants()),
            _ => {}
        }
    }
    out
}

/// Golog system to rule-based KAB, with the flag table of the program.
/// Fresh flag constants are numbered from `seed`.
pub fn tgkab(g: &Gkab, seed: u64) -> Result<(Kab, FlagTable, BTreeSet<Name>), crate::action::ActionError> {
    let mut used = system_constants(g);
    used.extend([name(START), name(END), name(REP), name(TEMP)]);
    let program = g.program.with_ids("r");
    let t = tgprog(&name(START), &program, &name(END), &g.actions, Fresh::new(used, seed))?;
    let mut abox: ABox = g.abox.clone();
    abox.insert(Fact::new(FLAG, &[START]));
    let mut constants = t.constants;
    constants.extend([name(START), name(END), name(TEMP)]);
    Ok((Kab { tbox: g.tbox.clone(), abox, actions: t.actions, process: t.rules }, t.flags, constants))
}

/// Fixpoint variable names `Z<k>` not used in a formula.
struct FreshVars {
    used: BTreeSet<Name>,
    next: usize,
}

impl FreshVars {
    fn new(f: &Formula) -> Self {
        FreshVars { used: f.pred_var_names(), next: 0 }
    }

    fn get(&mut self) -> Name {
        loop {
            let z = name(&format!("Z{}", self.next));
            self.next += 1;
            if self.used.insert(z.clone()) {
                return z;
            }
        }
    }
}

fn state_marker(c: &str) -> Formula {
    Formula::Query(marker_query(STATE, c))
}

/// Applies `modal` to each modality, recursing homomorphically elsewhere.
fn translate(f: &Formula, modal: &mut dyn FnMut(bool, Formula) -> Formula) -> Formula {
    use Formula as F;
    let mut rec = |g: &Formula| translate(g, modal);
    match f {
        F::True | F::False | F::Query(_) | F::Var(_) => f.clone(),
        F::Not(a) => F::Not(Box::new(rec(a))),
        F::And(a, b) => {
            let a = rec(a);
            a.and(rec(b))
        }
        F::Or(a, b) => {
            let a = rec(a);
            a.or(rec(b))
        }
        F::Exists(x, a) => F::Exists(x.clone(), Box::new(rec(a))),
        F::Forall(x, a) => F::Forall(x.clone(), Box::new(rec(a))),
        F::Mu(z, a) => F::Mu(z.clone(), Box::new(rec(a))),
        F::Nu(z, a) => F::Nu(z.clone(), Box::new(rec(a))),
        F::Possibly(a) => {
            let inner = rec(a);
            modal(true, inner)
        }
        F::Necessarily(a) => {
            let inner = rec(a);
            modal(false, inner)
        }
    }
}

fn require_nnf(f: &Formula) -> Result<(), CompileError> {
    if is_nnf(f) {
        Ok(())
    } else {
        Err(CompileError::FormulaNotNNF)
    }
}

/// Normalizes to NNF first when needed; the flag reports whether it did.
pub fn ensure_nnf(f: &Formula) -> (Formula, bool) {
    if is_nnf(f) {
        (f.clone(), false)
    } else {
        (nnf(f), true)
    }
}

/// Formula translation matching `tgkabb`: a step becomes the invocation,
/// the repair-marker step and the repair run up to the next unmarked state.
pub fn tau_b(f: &Formula) -> Result<Formula, CompileError> {
    require_nnf(f)?;
    let mut vars = FreshVars::new(f);
    Ok(translate(f, &mut |some, inner| {
        let z = vars.get();
        let zv = Formula::Var(z.clone());
        let m = state_marker(REP);
        let stay = if some { m.clone().and(zv.possibly()) } else { m.clone().and(zv.necessarily()).and(Formula::True.possibly()) };
        let body = Formula::Mu(z, Box::new(stay.or(m.not().and(inner))));
        if some {
            body.possibly().possibly()
        } else {
            body.necessarily().necessarily()
        }
    }))
}

/// Formula translation matching `tgkabc` and `tgkabe`: each step is two steps.
pub fn tau_d(f: &Formula) -> Formula {
    translate(f, &mut |some, inner| if some { inner.possibly().possibly() } else { inner.necessarily().necessarily() })
}

/// Formula translation matching `tgkab`: a step becomes a run through
/// temp-marked states ending in an unmarked one.
pub fn tau_j(f: &Formula) -> Result<Formula, CompileError> {
    require_nnf(f)?;
    let mut vars = FreshVars::new(f);
    Ok(translate(f, &mut |some, inner| {
        let z = vars.get();
        let zv = Formula::Var(z.clone());
        let temp = state_marker(TEMP);
        if some {
            Formula::Mu(z, Box::new(temp.clone().and(zv.possibly()).or(temp.not().and(inner)))).possibly()
        } else {
            Formula::Nu(z, Box::new(temp.clone().and(zv.necessarily()).or(temp.not().and(inner)))).necessarily()
        }
    }))
}
