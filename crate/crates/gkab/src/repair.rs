//! b-repairs (maximal consistent subsets), the c-repair (their
//! intersection) and bold evolution.

use thiserror::Error;

use crate::kb::{ABox, Constraints, Fact, KbError, TBox};

/// Default cap on the number of b-repairs enumerated.
pub const DEFAULT_REPAIR_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("more than {0} repairs")]
    CombinatorialLimit(usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// All maximal `t`-consistent subsets of `a`, sorted.
pub fn b_repairs(t: &TBox, a: &ABox) -> Result<Vec<ABox>, RepairError> {
    b_repairs_with(&Constraints::new(t)?, a, DEFAULT_REPAIR_CAP)
}

/// Intersection of all b-repairs of `a`.
pub fn c_repair(t: &TBox, a: &ABox) -> Result<ABox, RepairError> {
    c_repair_with(&Constraints::new(t)?, a, DEFAULT_REPAIR_CAP)
}

/// Bold evolution of `a` by the update `(fplus, fminus)`.
pub fn evolve(t: &TBox, a: &ABox, fplus: &ABox, fminus: &ABox) -> Result<ABox, RepairError> {
    evolve_with(&Constraints::new(t)?, a, fplus, fminus)
}

/// Maximal independent sets of the conflict graph, computed as maximal
/// cliques of its complement (Bron-Kerbosch with pivoting).
pub fn b_repairs_with(k: &Constraints, a: &ABox, cap: usize) -> Result<Vec<ABox>, RepairError> {
    let mut free = ABox::new();
    let mut contested: Vec<&Fact> = Vec::new();
    for f in a.iter() {
        if k.conflict(f, f) {
            continue;
        }
        if k.partners(a, f).next().is_some() {
            contested.push(f);
        } else {
            free.insert(f.clone());
        }
    }
    let n = contested.len();
    let compatible: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| i != j && !k.conflict(contested[i], contested[j])).collect()).collect();
    let mut cliques = Vec::new();
    bron_kerbosch(&compatible, &mut Vec::new(), (0..n).collect(), Vec::new(), &mut cliques, cap)?;
    let mut out: Vec<ABox> = cliques
        .into_iter()
        .map(|c| {
            let mut r = free.clone();
            for i in c {
                r.insert(contested[i].clone());
            }
            r
        })
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: &mut Vec<usize>,
    p: Vec<usize>,
    x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<(), RepairError> {
    if p.is_empty() && x.is_empty() {
        if out.len() >= cap {
            return Err(RepairError::CombinatorialLimit(cap));
        }
        out.push(r.clone());
        return Ok(());
    }
    let pivot = p.iter().chain(&x).copied().max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count());
    let candidates: Vec<usize> = match pivot {
        Some(u) => p.iter().copied().filter(|&v| !adj[u][v]).collect(),
        None => p.clone(),
    };
    let (mut p, mut x) = (p, x);
    for v in candidates {
        r.push(v);
        let np = p.iter().copied().filter(|&w| adj[v][w]).collect();
        let nx = x.iter().copied().filter(|&w| adj[v][w]).collect();
        bron_kerbosch(adj, r, np, nx, out, cap)?;
        r.pop();
        p.retain(|&w| w != v);
        x.push(v);
    }
    Ok(())
}

pub fn c_repair_with(k: &Constraints, a: &ABox, cap: usize) -> Result<ABox, RepairError> {
    let reps = b_repairs_with(k, a, cap)?;
    Ok(reps.iter().skip(1).fold(reps[0].clone(), |acc, r| acc.intersection(r)))
}

pub fn evolve_with(k: &Constraints, a: &ABox, fplus: &ABox, fminus: &ABox) -> Result<ABox, RepairError> {
    if !k.is_consistent(a) {
        return Err(RepairError::PreconditionViolated("current ABox is inconsistent".into()));
    }
    if !k.is_consistent(fplus) {
        return Err(RepairError::PreconditionViolated("added facts are inconsistent".into()));
    }
    let mut out = fplus.clone();
    for f in a.difference(fminus).iter() {
        if !fplus.iter().any(|g| k.conflict(f, g)) {
            out.insert(f.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Concept, Role};
    use crate::name;

    fn tbox_ni() -> TBox {
        TBox {
            concepts: ["N", "N1", "N2", "N3"].iter().map(|x| name(x)).collect(),
            roles: [name("P")].into_iter().collect(),
            concept_disj: vec![(Concept::Atomic(name("N1")), Concept::Atomic(name("N2")))],
            ..TBox::default()
        }
    }

    fn tbox_funct() -> TBox {
        TBox {
            concepts: [name("N")].into_iter().collect(),
            roles: [name("P")].into_iter().collect(),
            funct: vec![Role::new(name("P"))],
            ..TBox::default()
        }
    }

    fn ab(facts: &[(&str, &[&str])]) -> ABox {
        facts.iter().map(|(p, a)| Fact::new(p, a)).collect()
    }

    /// All subsets of `a` that are consistent and not strictly contained in
    /// another consistent subset.
    fn oracle_repairs(t: &TBox, a: &ABox) -> Vec<ABox> {
        let k = Constraints::new(t).unwrap();
        let facts: Vec<Fact> = a.iter().cloned().collect();
        let subsets: Vec<ABox> = (0u32..1 << facts.len())
            .map(|m| facts.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, f)| f.clone()).collect())
            .filter(|s| k.is_consistent(s))
            .collect();
        let mut out: Vec<ABox> =
            subsets.iter().filter(|s| !subsets.iter().any(|o| o != *s && s.is_subset(o))).cloned().collect();
        out.sort();
        out
    }

    fn oracle_evolve(t: &TBox, a: &ABox, fp: &ABox, fm: &ABox) -> ABox {
        let k = Constraints::new(t).unwrap();
        let base: Vec<Fact> = a.difference(fm).iter().cloned().collect();
        let mut best: Vec<ABox> = Vec::new();
        for m in 0u32..1 << base.len() {
            let s: ABox = base.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, f)| f.clone()).collect();
            if k.is_consistent(&s.union(fp)) {
                best.push(s);
            }
        }
        let max: Vec<&ABox> = best.iter().filter(|s| !best.iter().any(|o| o != *s && s.is_subset(o))).collect();
        assert_eq!(max.len(), 1, "maximal subset must be unique");
        fp.union(max[0])
    }

    #[test]
    fn b_repair_examples() {
        let a = ab(&[("N1", &["a"]), ("N2", &["a"])]);
        let r = b_repairs(&tbox_ni(), &a).unwrap();
        assert_eq!(r, vec![ab(&[("N1", &["a"])]), ab(&[("N2", &["a"])])]);
        assert_eq!(r, oracle_repairs(&tbox_ni(), &a));
        let ok = ab(&[("N1", &["a"]), ("N2", &["b"])]);
        assert_eq!(b_repairs(&tbox_ni(), &ok).unwrap(), vec![ok.clone()]);
        let f = ab(&[("P", &["a", "b"]), ("P", &["a", "c"]), ("N", &["a"])]);
        let rf = b_repairs(&tbox_funct(), &f).unwrap();
        assert_eq!(rf, vec![ab(&[("P", &["a", "b"]), ("N", &["a"])]), ab(&[("P", &["a", "c"]), ("N", &["a"])])]);
        assert_eq!(rf, oracle_repairs(&tbox_funct(), &f));
    }

    #[test]
    fn repair_cap() {
        let t = tbox_funct();
        let a: ABox = (0..6).map(|i| Fact::new("P", &["a", &format!("b{i}")])).collect();
        assert_eq!(b_repairs_with(&Constraints::new(&t).unwrap(), &a, 4), Err(RepairError::CombinatorialLimit(4)));
    }

    #[test]
    fn c_repair_examples() {
        let a = ab(&[("N1", &["a"]), ("N2", &["a"]), ("N3", &["b"])]);
        assert_eq!(c_repair(&tbox_ni(), &a).unwrap(), ab(&[("N3", &["b"])]));
        let ok = ab(&[("N1", &["a"])]);
        assert_eq!(c_repair(&tbox_ni(), &ok).unwrap(), ok);
        assert_eq!(c_repair(&tbox_ni(), &ab(&[("N1", &["a"]), ("N2", &["a"])])).unwrap(), ABox::new());
    }

    #[test]
    fn evolve_examples() {
        let t = tbox_ni();
        let a = ab(&[("N1", &["a"])]);
        let fp = ab(&[("N2", &["a"])]);
        assert_eq!(evolve(&t, &a, &fp, &ABox::new()).unwrap(), fp);
        assert_eq!(evolve(&t, &a, &fp, &ABox::new()).unwrap(), oracle_evolve(&t, &a, &fp, &ABox::new()));
        assert_eq!(evolve(&t, &a, &ABox::new(), &ABox::new()).unwrap(), a);
        let f = tbox_funct();
        let pa = ab(&[("P", &["a", "b"])]);
        let pc = ab(&[("P", &["a", "c"])]);
        assert_eq!(evolve(&f, &pa, &pc, &ABox::new()).unwrap(), pc);
        let bad = ab(&[("N1", &["a"]), ("N2", &["a"])]);
        assert!(matches!(evolve(&t, &a, &bad, &ABox::new()), Err(RepairError::PreconditionViolated(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_case() -> impl Strategy<Value = (TBox, ABox)> {
            let cn = ["A", "B", "C", "D"];
            let pairs = proptest::collection::vec((0..4usize, 0..4usize), 0..3);
            let functs = proptest::collection::vec(any::<bool>(), 0..2);
            let consts = ["a", "b", "c"];
            let fact = prop_oneof![
                (0..4usize, 0..3usize).prop_map(move |(p, x)| Fact::new(cn[p], &[consts[x]])),
                (0..3usize, 0..3usize).prop_map(move |(x, y)| Fact::new("P", &[consts[x], consts[y]])),
            ];
            (pairs, functs, proptest::collection::vec(fact, 0..7)).prop_filter_map("unsat", move |(pairs, functs, facts)| {
                let t = TBox {
                    concepts: cn.iter().map(|x| name(x)).collect(),
                    roles: [name("P")].into_iter().collect(),
                    concept_disj: pairs
                        .into_iter()
                        .map(|(x, y)| {
                            let b = if y == 3 { Concept::Exists(Role::new(name("P"))) } else { Concept::Atomic(name(cn[y])) };
                            (Concept::Atomic(name(cn[x])), b)
                        })
                        .collect(),
                    funct: functs.into_iter().map(|inv| if inv { Role::new(name("P")).inv() } else { Role::new(name("P")) }).collect(),
                    ..TBox::default()
                };
                Constraints::new(&t).ok().map(|_| (t, facts.into_iter().collect()))
            })
        }

        proptest! {
            #[test]
            fn b_repairs_match_subset_enumeration((t, a) in arb_case()) {
                let got = b_repairs(&t, &a).unwrap();
                prop_assert_eq!(&got, &oracle_repairs(&t, &a));
                let k = Constraints::new(&t).unwrap();
                for r in &got {
                    prop_assert!(k.is_consistent(r) && r.is_subset(&a));
                    for f in a.difference(r).iter() {
                        let mut bigger = r.clone();
                        bigger.insert(f.clone());
                        prop_assert!(!k.is_consistent(&bigger));
                    }
                }
            }

            #[test]
            fn c_repair_is_complement_of_inc((t, a) in arb_case()) {
                let k = Constraints::new(&t).unwrap();
                let c = c_repair(&t, &a).unwrap();
                prop_assert_eq!(&c, &a.difference(&k.inc_set(&a)));
                for r in b_repairs(&t, &a).unwrap() {
                    prop_assert!(c.is_subset(&r));
                }
            }

            #[test]
            fn evolve_matches_enumeration((t, a) in arb_case(), (t2, fp) in arb_case(), fm_mask in 0u32..64) {
                let _ = t2;
                let k = Constraints::new(&t).unwrap();
                let base = c_repair(&t, &a).unwrap();
                if !k.is_consistent(&fp) {
                    prop_assert!(evolve(&t, &base, &fp, &ABox::new()).is_err());
                    return Ok(());
                }
                let fm: ABox = base.iter().enumerate().filter(|(i, _)| fm_mask >> i & 1 == 1).map(|(_, f)| f.clone()).collect();
                let got = evolve(&t, &base, &fp, &fm).unwrap();
                prop_assert!(k.is_consistent(&got));
                prop_assert!(fp.is_subset(&got));
                prop_assert_eq!(got, oracle_evolve(&t, &base, &fp, &fm));
            }
        }
    }
}
