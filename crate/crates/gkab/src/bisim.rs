//! Bisimulation checks between a source system and a translated system
//! whose steps may be stretched over marked intermediate states.
//!
//! All four relations are greatest fixpoints computed by refinement. Each
//! differs only in how states are compared and in which states of the second
//! system count as the successors of a state (its macro-successors).

use std::collections::{HashMap, HashSet};

use crate::kb::{ABox, Fact, REP, STATE, TEMP};
use crate::ts::Ts;

/// Equality of the non-marker facts.
pub fn equal_modulo_markers(a1: &ABox, a2: &ABox) -> bool {
    a1.strip_markers() == a2.strip_markers()
}

/// Plain bisimulation with ABox equality.
pub fn e_bisimilar(ts1: &Ts, ts2: &Ts) -> bool {
    let succ = ts2.successors();
    bisimilar(ts1, ts2, false, &succ)
}

/// Each step of `ts1` matches a run of `ts2` through temp-marked states
/// ending in an unmarked one; states agree modulo markers.
pub fn j_bisimilar(ts1: &Ts, ts2: &Ts) -> bool {
    let succ = ts2.successors();
    let temp = marked(ts2, TEMP);
    let macro_succ: Vec<Vec<usize>> = (0..ts2.len()).map(|s| corridor_exits(&succ, &temp, &succ[s])).collect();
    bisimilar(ts1, ts2, true, &macro_succ)
}

/// Each step of `ts1` matches one arbitrary step of `ts2` followed by a run
/// through repair-marked states ending in an unmarked one.
pub fn l_bisimilar(ts1: &Ts, ts2: &Ts) -> bool {
    let succ = ts2.successors();
    let rep = marked(ts2, REP);
    let macro_succ: Vec<Vec<usize>> = (0..ts2.len())
        .map(|s| {
            let mut out: Vec<usize> = succ[s].iter().flat_map(|&m| corridor_exits(&succ, &rep, &succ[m])).collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    bisimilar(ts1, ts2, false, &macro_succ)
}

/// Each step of `ts1` matches exactly two steps of `ts2` ending in a state
/// without the temp marker.
pub fn s_bisimilar(ts1: &Ts, ts2: &Ts) -> bool {
    let succ = ts2.successors();
    let temp = marked(ts2, TEMP);
    let macro_succ: Vec<Vec<usize>> = (0..ts2.len())
        .map(|s| {
            let mut out: Vec<usize> =
                succ[s].iter().flat_map(|&m| succ[m].iter().copied()).filter(|&t| !temp[t]).collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    bisimilar(ts1, ts2, false, &macro_succ)
}

fn marked(ts: &Ts, c: &str) -> Vec<bool> {
    let f = Fact::new(STATE, &[c]);
    ts.states.iter().map(|s| s.abox.contains(&f)).collect()
}

/// Unmarked states reachable from `starts` through marked states only,
/// counting unmarked `starts` themselves.
fn corridor_exits(succ: &[Vec<usize>], marked: &[bool], starts: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; succ.len()];
    let mut out = Vec::new();
    let mut stack: Vec<usize> = starts.to_vec();
    while let Some(t) = stack.pop() {
        if std::mem::replace(&mut seen[t], true) {
            continue;
        }
        if marked[t] {
            stack.extend(&succ[t]);
        } else {
            out.push(t);
        }
    }
    out.sort_unstable();
    out
}

fn bisimilar(ts1: &Ts, ts2: &Ts, modulo_markers: bool, macro2: &[Vec<usize>]) -> bool {
    if ts1.is_empty() || ts2.is_empty() {
        return false;
    }
    let key = |a: &ABox| if modulo_markers { a.strip_markers() } else { a.clone() };
    let mut groups: HashMap<ABox, Vec<usize>> = HashMap::new();
    for (i, s) in ts2.states.iter().enumerate() {
        groups.entry(key(&s.abox)).or_default().push(i);
    }
    let mut rel: HashSet<(usize, usize)> = HashSet::new();
    for (i, s) in ts1.states.iter().enumerate() {
        if let Some(js) = groups.get(&key(&s.abox)) {
            rel.extend(js.iter().map(|&j| (i, j)));
        }
    }
    let succ1 = ts1.successors();
    loop {
        let dead: Vec<(usize, usize)> = rel
            .iter()
            .copied()
            .filter(|&(s1, s2)| {
                let forth = succ1[s1].iter().all(|&t1| macro2[s2].iter().any(|&t2| rel.contains(&(t1, t2))));
                let back = macro2[s2].iter().all(|&t2| succ1[s1].iter().any(|&t1| rel.contains(&(t1, t2))));
                !(forth && back)
            })
            .collect();
        if dead.is_empty() {
            break;
        }
        for p in dead {
            rel.remove(&p);
        }
    }
    rel.contains(&(ts1.initial, ts2.initial))
}
