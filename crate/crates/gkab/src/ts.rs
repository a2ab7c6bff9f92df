//! Explicit transition systems: breadth-first construction with state
//! deduplication, plus JSON and DOT export.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::action::{ActionError, ServiceMap};
use crate::golog::Program;
use crate::kb::{ABox, KbError, TBox};
use crate::query::Subst;
use crate::Name;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("more than {0} states")]
    StateLimitExceeded(usize),
    #[error("a run mentions more than {0} constants")]
    RunBoundExceeded(usize),
    #[error("initial ABox is inconsistent")]
    InconsistentInitialABox,
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

/// Exploration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
    pub max_run_adom: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: 100_000, max_run_adom: None }
    }
}

/// A data state plus, for Golog systems, the remaining program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub abox: ABox,
    pub scmap: ServiceMap,
    pub program: Option<Arc<Program>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub action: Name,
    pub sigma: Subst,
    pub theta: ServiceMap,
}

/// A labelled successor produced by a step function.
#[derive(Debug, Clone)]
pub struct Transition {
    pub action: Name,
    pub sigma: Subst,
    pub theta: ServiceMap,
    pub target: State,
}

/// States are numbered in discovery order; `initial` is always 0.
#[derive(Debug, Clone)]
pub struct Ts {
    pub tbox: TBox,
    pub states: Vec<State>,
    pub edges: Vec<Edge>,
    pub initial: usize,
}

/// Breadth-first closure of `init` under `step`.
pub fn explore(
    tbox: &TBox,
    init: State,
    limits: &Limits,
    mut step: impl FnMut(&State) -> Result<Vec<Transition>, ActionError>,
) -> Result<Ts, BuildError> {
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states = vec![init.clone()];
    let mut run_adom: Vec<BTreeSet<Name>> = vec![init.abox.user_adom()];
    check_run(&run_adom[0], limits)?;
    index.insert(init, 0);
    let mut edges = Vec::new();
    let mut seen_edges: HashSet<Edge> = HashSet::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(src) = queue.pop_front() {
        for t in step(&states[src])? {
            let dst = match index.get(&t.target) {
                Some(&d) => d,
                None => {
                    if states.len() >= limits.max_states {
                        return Err(BuildError::StateLimitExceeded(limits.max_states));
                    }
                    let d = states.len();
                    let mut seen = run_adom[src].clone();
                    seen.extend(t.target.abox.user_adom());
                    check_run(&seen, limits)?;
                    run_adom.push(seen);
                    index.insert(t.target.clone(), d);
                    states.push(t.target);
                    queue.push_back(d);
                    d
                }
            };
            let e = Edge { src, dst, action: t.action, sigma: t.sigma, theta: t.theta };
            if seen_edges.insert(e.clone()) {
                edges.push(e);
            }
        }
    }
    Ok(Ts { tbox: tbox.clone(), states, edges, initial: 0 })
}

fn check_run(seen: &BTreeSet<Name>, limits: &Limits) -> Result<(), BuildError> {
    match limits.max_run_adom {
        Some(b) if seen.len() > b => Err(BuildError::RunBoundExceeded(b)),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct CallJson {
    call: String,
    value: String,
}

#[derive(Serialize)]
struct StateJson {
    id: usize,
    abox: Vec<String>,
    scmap: Vec<CallJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    program_pid: Option<String>,
}

#[derive(Serialize)]
struct EdgeJson {
    src: usize,
    dst: usize,
    action: String,
    sigma: BTreeMap<String, String>,
    theta: Vec<CallJson>,
}

#[derive(Serialize)]
struct TsJson {
    states: Vec<StateJson>,
    edges: Vec<EdgeJson>,
    initial: usize,
}

fn calls(m: &ServiceMap) -> Vec<CallJson> {
    m.iter().map(|(c, v)| CallJson { call: c.to_string(), value: v.to_string() }).collect()
}

impl Ts {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn abox(&self, s: usize) -> &ABox {
        &self.states[s].abox
    }

    /// Sorted, deduplicated successor lists.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.states.len()];
        for e in &self.edges {
            out[e.src].insert(e.dst);
        }
        out.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Sorted, deduplicated predecessor lists.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.states.len()];
        for e in &self.edges {
            out[e.dst].insert(e.src);
        }
        out.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// A bare TS over the given ABoxes and edges, without labels.
    pub fn from_graph(tbox: &TBox, aboxes: Vec<ABox>, edges: &[(usize, usize)]) -> Ts {
        Ts {
            tbox: tbox.clone(),
            states: aboxes.into_iter().map(|abox| State { abox, scmap: ServiceMap::new(), program: None }).collect(),
            edges: edges
                .iter()
                .map(|&(src, dst)| Edge { src, dst, action: crate::name("step"), sigma: Subst::new(), theta: ServiceMap::new() })
                .collect(),
            initial: 0,
        }
    }

    /// Compact JSON with the documented field order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.doc()).expect("TS serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.doc()).expect("TS serializes")
    }

    fn doc(&self) -> TsJson {
        TsJson {
            states: self
                .states
                .iter()
                .enumerate()
                .map(|(id, s)| StateJson {
                    id,
                    abox: s.abox.iter().map(|f| f.to_string()).collect(),
                    scmap: calls(&s.scmap),
                    program_pid: s.program.as_ref().map(|p| p.pid.to_string()),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    src: e.src,
                    dst: e.dst,
                    action: e.action.to_string(),
                    sigma: e.sigma.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                    theta: calls(&e.theta),
                })
                .collect(),
            initial: self.initial,
        }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ts {\n");
        for (i, s) in self.states.iter().enumerate() {
            let shape = if i == self.initial { "doublecircle" } else { "box" };
            let _ = writeln!(out, "  s{i} [shape={shape}, label=\"{i}: {}\"];", s.abox.to_string().replace('"', "\\\""));
        }
        for e in &self.edges {
            let args: Vec<String> = e.sigma.values().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "  s{} -> s{} [label=\"{}({})\"];", e.src, e.dst, e.action, args.join(","));
        }
        out.push_str("}\n");
        out
    }
}
