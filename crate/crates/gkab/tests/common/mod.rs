//! Seeded generators of small random instances shared by integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use gkab::action::{Action, Effect, HeadAtom, HeadTerm, Kab, Rule, ServiceConfig};
use gkab::golog::{Gkab, Program};
use gkab::kb::{ABox, Concept, Constraints, Fact, Role, TBox};
use gkab::mu::Formula;
use gkab::query::{Ecq, Term};
use gkab::syntax::Instance;
use gkab::{name, Name};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CONCEPTS: [&str; 4] = ["N0", "N1", "N2", "N3"];
pub const ROLES: [&str; 2] = ["P0", "P1"];
pub const CONSTS: [&str; 3] = ["a", "b", "c"];
pub const VALUES: [&str; 2] = ["v0", "v1"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn role(rng: &mut ChaCha8Rng, t: &TBox) -> Role {
    let n = t.roles.iter().collect::<Vec<_>>().choose(rng).map(|n| (*n).clone()).expect("roles");
    Role { name: n, inverse: rng.gen_bool(0.5) }
}

fn concept(rng: &mut ChaCha8Rng, t: &TBox) -> Concept {
    if !t.roles.is_empty() && rng.gen_bool(0.3) {
        Concept::Exists(role(rng, t))
    } else {
        Concept::Atomic(t.concepts.iter().collect::<Vec<_>>().choose(rng).map(|n| (*n).clone()).expect("concepts"))
    }
}

/// A valid TBox with at most three negative axioms and a satisfiable closure.
pub fn tbox(rng: &mut ChaCha8Rng) -> TBox {
    loop {
        let nc = rng.gen_range(2..=4);
        let nr = rng.gen_range(0..=2);
        let mut t = TBox {
            concepts: CONCEPTS[..nc].iter().map(|c| name(c)).collect(),
            roles: ROLES[..nr].iter().map(|r| name(r)).collect(),
            ..TBox::default()
        };
        for _ in 0..rng.gen_range(0..=3) {
            if nr > 0 && rng.gen_bool(0.2) {
                t.role_incl.push((role(rng, &t), role(rng, &t)));
            } else {
                t.concept_incl.push((concept(rng, &t), concept(rng, &t)));
            }
        }
        for _ in 0..rng.gen_range(1..=3) {
            match rng.gen_range(0..6) {
                0 if nr > 0 => t.role_disj.push((role(rng, &t), role(rng, &t))),
                1 if nr > 0 => t.funct.push(role(rng, &t)),
                _ => t.concept_disj.push((concept(rng, &t), concept(rng, &t))),
            }
        }
        if t.validate(false).is_ok() && Constraints::new(&t).is_ok() {
            return t;
        }
    }
}

/// Up to `max` facts over the TBox vocabulary and `CONSTS`.
pub fn abox(rng: &mut ChaCha8Rng, t: &TBox, max: usize) -> ABox {
    let mut a = ABox::new();
    for _ in 0..rng.gen_range(0..=max) {
        a.insert(fact(rng, t, &CONSTS));
    }
    a
}

pub fn fact(rng: &mut ChaCha8Rng, t: &TBox, consts: &[&str]) -> Fact {
    let roles: Vec<&Name> = t.roles.iter().collect();
    if !roles.is_empty() && rng.gen_bool(0.4) {
        let p = roles.choose(rng).unwrap().to_string();
        let (x, y) = (*consts.choose(rng).unwrap(), *consts.choose(rng).unwrap());
        Fact::new(&p, &[x, y])
    } else {
        let n = t.concepts.iter().collect::<Vec<_>>().choose(rng).unwrap().to_string();
        Fact::new(&n, &[*consts.choose(rng).unwrap()])
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a BTreeSet<Name>) -> &'a Name {
    xs.iter().collect::<Vec<_>>().choose(rng).copied().unwrap()
}

/// A positive query in which `x` occurs free.
fn anchor(rng: &mut ChaCha8Rng, t: &TBox, x: &str) -> Ecq {
    let v = Term::var(x);
    if !t.roles.is_empty() && rng.gen_bool(0.3) {
        let p = pick(rng, &t.roles).to_string();
        let y = Term::var("y");
        let args = if rng.gen_bool(0.5) { vec![v, y] } else { vec![y, v] };
        Ecq::exists_all(&["y"], Ecq::atom(&p, args))
    } else {
        Ecq::atom(pick(rng, &t.concepts).as_ref(), vec![v])
    }
}

/// A closed ECQ.
pub fn condition(rng: &mut ChaCha8Rng, t: &TBox) -> Ecq {
    match rng.gen_range(0..4) {
        0 => Ecq::True,
        1 => Ecq::exists_all(&["x"], anchor(rng, t, "x")),
        2 => ground_query(rng, t),
        _ => ground_query(rng, t).not(),
    }
}

fn ground_query(rng: &mut ChaCha8Rng, t: &TBox) -> Ecq {
    let f = fact(rng, t, &CONSTS);
    Ecq::atom(&f.pred, f.args.iter().map(|a| Term::cons(a)).collect())
}

fn head_term(rng: &mut ChaCha8Rng, scope: &[&str], calls: bool) -> HeadTerm {
    if calls && rng.gen_bool(0.25) {
        let arg = if !scope.is_empty() && rng.gen_bool(0.7) { Term::var(scope.choose(rng).unwrap()) } else { Term::cons("a") };
        return HeadTerm::Call { func: name("f"), args: vec![arg] };
    }
    if !scope.is_empty() && rng.gen_bool(0.7) {
        HeadTerm::Term(Term::var(scope.choose(rng).unwrap()))
    } else {
        HeadTerm::Term(Term::cons(CONSTS.choose(rng).unwrap()))
    }
}

fn head(rng: &mut ChaCha8Rng, t: &TBox, scope: &[&str], calls: bool) -> HeadAtom {
    if !t.roles.is_empty() && rng.gen_bool(0.35) {
        let p = pick(rng, &t.roles).clone();
        let x = head_term(rng, scope, calls);
        HeadAtom { pred: p, args: vec![x, head_term(rng, scope, calls)] }
    } else {
        let n = pick(rng, &t.concepts).clone();
        HeadAtom { pred: n, args: vec![head_term(rng, scope, calls)] }
    }
}

/// Actions `act0..`, each with zero or one parameter.
pub fn actions(rng: &mut ChaCha8Rng, t: &TBox, n: usize, calls: bool) -> Vec<Action> {
    (0..n)
        .map(|i| {
            let params: Vec<&str> = if rng.gen_bool(0.5) { vec!["x"] } else { vec![] };
            let effects = (0..rng.gen_range(1..=2))
                .map(|_| {
                    let (guard, mut scope) = if rng.gen_bool(0.4) {
                        (anchor(rng, t, "z"), params.clone())
                    } else if rng.gen_bool(0.5) {
                        (condition(rng, t), params.clone())
                    } else {
                        (Ecq::True, params.clone())
                    };
                    if guard.free_vars().contains("z") {
                        scope.push("z");
                    }
                    let add = (0..rng.gen_range(0..=2)).map(|_| head(rng, t, &scope, calls)).collect();
                    let del = (0..rng.gen_range(0..=1)).map(|_| head(rng, t, &scope, false)).collect();
                    Effect { guard, add, del }
                })
                .collect();
            Action { name: name(&format!("act{i}")), params: params.iter().map(|p| name(p)).collect(), effects }
        })
        .collect()
}

fn invocation(rng: &mut ChaCha8Rng, t: &TBox, a: &Action) -> Arc<Program> {
    if a.params.is_empty() {
        let guard = if rng.gen_bool(0.7) { Ecq::True } else { condition(rng, t) };
        Program::invoke(guard, &a.name, &[])
    } else {
        Program::invoke(anchor(rng, t, "x"), &a.name, &["x"])
    }
}

/// A random program of the given depth over the actions.
pub fn program(rng: &mut ChaCha8Rng, t: &TBox, acts: &[Action], depth: usize) -> Arc<Program> {
    if depth == 0 || rng.gen_bool(0.3) {
        return if acts.is_empty() || rng.gen_bool(0.1) {
            Program::skip()
        } else {
            let a = acts.choose(rng).unwrap();
            invocation(rng, t, a)
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..4) {
        0 => {
            let a = program(rng, t, acts, d);
            Program::choice(a, program(rng, t, acts, d))
        }
        1 => {
            let a = program(rng, t, acts, d);
            Program::seq(a, program(rng, t, acts, d))
        }
        2 => {
            let c = condition(rng, t);
            let a = program(rng, t, acts, d);
            Program::if_(c, a, program(rng, t, acts, d))
        }
        _ => {
            let c = condition(rng, t);
            Program::while_(c, program(rng, t, acts, d))
        }
    }
}

pub fn rules(rng: &mut ChaCha8Rng, t: &TBox, acts: &[Action]) -> Vec<Rule> {
    let chosen: Vec<&Action> = acts.iter().filter(|_| rng.gen_bool(0.8)).collect();
    chosen
        .into_iter()
        .map(|a| {
            if a.params.is_empty() {
                Rule { guard: condition(rng, t), action: a.name.clone(), args: vec![] }
            } else {
                Rule { guard: anchor(rng, t, "x"), action: a.name.clone(), args: vec![name("x")] }
            }
        })
        .collect()
}

pub fn services() -> ServiceConfig {
    ServiceConfig::Enumerate(VALUES.iter().map(|v| name(v)).collect())
}

/// A Golog system with `initial` facts and up to three actions.
pub fn gkab(rng: &mut ChaCha8Rng, t: &TBox, initial: usize, depth: usize) -> Gkab {
    let n = rng.gen_range(1..=3);
    let acts = actions(rng, t, n, true);
    let program = program(rng, t, &acts, depth).with_ids("r");
    Gkab { tbox: t.clone(), abox: abox(rng, t, initial), actions: acts, program }
}

pub fn kab(rng: &mut ChaCha8Rng, t: &TBox, initial: usize) -> Kab {
    let n = rng.gen_range(1..=3);
    let acts = actions(rng, t, n, true);
    let process = rules(rng, t, &acts);
    Kab { tbox: t.clone(), abox: abox(rng, t, initial), actions: acts, process }
}

fn fact_formula(rng: &mut ChaCha8Rng, t: &TBox) -> Formula {
    match rng.gen_range(0..5) {
        0 => Formula::from_ecq(Ecq::exists_all(&["x"], anchor(rng, t, "x"))),
        1 => Formula::from_ecq(ground_query(rng, t)).not(),
        2 => {
            let a = Formula::from_ecq(anchor(rng, t, "x"));
            Formula::exists("x", a.and(Formula::from_ecq(anchor(rng, t, "x"))))
        }
        _ => Formula::from_ecq(ground_query(rng, t)),
    }
}

fn modal(rng: &mut ChaCha8Rng, t: &TBox, depth: usize) -> Formula {
    if depth == 0 {
        return fact_formula(rng, t);
    }
    let inner = modal(rng, t, depth - 1);
    match rng.gen_range(0..5) {
        0 => inner.possibly(),
        1 => inner.necessarily(),
        2 => fact_formula(rng, t).and(inner.possibly()),
        3 => fact_formula(rng, t).or(inner.necessarily()),
        _ => inner.possibly().and(fact_formula(rng, t).necessarily()),
    }
}

/// Closed NNF formulas: fact queries, modal nestings up to depth three and
/// one least and one greatest fixpoint template.
pub fn formula_suite(rng: &mut ChaCha8Rng, t: &TBox, n: usize) -> Vec<Formula> {
    let mut out = vec![
        Formula::True.possibly(),
        Formula::False.necessarily(),
        Formula::mu("Z", fact_formula(rng, t).or(Formula::var("Z").possibly())),
        Formula::nu("Z", fact_formula(rng, t).and(Formula::var("Z").necessarily())),
    ];
    while out.len() < n {
        let d = rng.gen_range(0..=3);
        out.push(modal(rng, t, d));
    }
    out
}

/// A complete instance for round-trip testing.
pub fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let t = tbox(&mut r);
    let g = gkab(&mut r, &t, 6, 3);
    let process = if r.gen_bool(0.5) { Some(rules(&mut r, &t, &g.actions)) } else { None };
    let formulas = formula_suite(&mut r, &t, 5).into_iter().enumerate().map(|(i, f)| (name(&format!("f{i}")), f)).collect();
    let mut inst = Instance {
        tbox: t,
        constants: CONSTS.iter().chain(&VALUES).map(|c| name(c)).collect(),
        distinguished: [name("a")].into(),
        abox: g.abox,
        actions: g.actions,
        process,
        program: if r.gen_bool(0.8) { Some(g.program) } else { None },
        formulas,
        services: services(),
    };
    inst.collect_constants();
    inst
}
