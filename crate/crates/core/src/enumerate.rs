//! GDAGs up to kind-preserving isomorphism, and the census of the C = I
//! sufficient condition over all of them.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{apply_reduction, reduction_instances, sufficient_condition_holds};
use crate::error::{Error, Result};
use crate::graph::{bit, bits, GDag, Mask, NodeKind};

/// Largest size handled without the long-run flag.
pub const DESK_CENSUS_LIMIT: usize = 6;
/// Largest size handled at all (adjacency must fit in 64 bits).
pub const MAX_ENUMERATION_NODES: usize = 7;

/// Kind vector and adjacency matrix of the lexicographically least
/// kind-preserving relabelling.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalForm {
    encoding: Vec<u8>,
}

impl CanonicalForm {
    pub fn encoding(&self) -> &[u8] {
        &self.encoding
    }

    /// The canonically labelled graph this form describes.
    pub fn to_gdag(&self) -> GDag {
        let n = self.encoding[0] as usize;
        let kinds: Vec<NodeKind> = self.encoding[1..=n]
            .iter()
            .map(|&k| if k == 0 { NodeKind::Observed } else { NodeKind::Unobserved })
            .collect();
        let mut code = [0u8; 8];
        code.copy_from_slice(&self.encoding[n + 1..n + 9]);
        let code = u64::from_be_bytes(code);
        let parents: Vec<Mask> = (0..n)
            .map(|c| (0..n).filter(|&p| code & adjacency_bit(n, p, c) != 0).fold(0, |m, p| m | bit(p)))
            .collect();
        GDag::from_kinds_and_parents(&kinds, &parents).expect("canonical forms encode DAGs")
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.encoding {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Bit for the edge `p -> c` in a row-major adjacency code; earlier rows are
/// more significant so that the integer order is the lexicographic order.
fn adjacency_bit(n: usize, p: usize, c: usize) -> u64 {
    1u64 << (n * n - 1 - (p * n + c))
}

/// Kind and in/out degree of a node.
type Signature = (u8, u32, u32);

/// Invariant refinement key of a node: kind, degrees, and the sorted degree
/// signatures of its parents and children.
fn node_keys(
    kinds: &[NodeKind],
    parents: &[Mask],
    children: &[Mask],
) -> Vec<(u8, u32, u32, Vec<Signature>, Vec<Signature>)> {
    let n = kinds.len();
    let base: Vec<Signature> = (0..n)
        .map(|i| (kinds[i] as u8, parents[i].count_ones(), children[i].count_ones()))
        .collect();
    (0..n)
        .map(|i| {
            let mut ps: Vec<_> = bits(parents[i]).map(|p| base[p]).collect();
            let mut cs: Vec<_> = bits(children[i]).map(|c| base[c]).collect();
            ps.sort_unstable();
            cs.sort_unstable();
            (base[i].0, base[i].1, base[i].2, ps, cs)
        })
        .collect()
}

fn canonical_parts(kinds: &[NodeKind], parents: &[Mask]) -> (Vec<u8>, u64) {
    let n = kinds.len();
    let mut children = vec![0 as Mask; n];
    for c in 0..n {
        for p in bits(parents[c]) {
            children[p] |= bit(c);
        }
    }
    let keys = node_keys(kinds, parents, &children);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    // cells: maximal runs of equal keys; positions are filled cell by cell
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && keys[i] == keys[order[k - 1]] {
            cells.last_mut().expect("nonempty").push(i);
        } else {
            cells.push(vec![i]);
        }
    }
    let mut best = u64::MAX;
    let mut pos = vec![usize::MAX; n];
    let mut placed: Vec<usize> = Vec::with_capacity(n);
    search(&cells, 0, 0, parents, &mut pos, &mut placed, 0, &mut best);
    let kinds_sorted: Vec<u8> = order.iter().map(|&i| kinds[i] as u8).collect();
    (kinds_sorted, best)
}

/// Depth-first assignment of positions, cell by cell. Bits only ever get
/// set as nodes are placed, so a partial code above the best leaf is pruned.
#[allow(clippy::too_many_arguments)]
fn search(
    cells: &[Vec<usize>],
    cell: usize,
    used_in_cell: u64,
    parents: &[Mask],
    pos: &mut [usize],
    placed: &mut Vec<usize>,
    code: u64,
    best: &mut u64,
) {
    let n = pos.len();
    let k = placed.len();
    if k == n {
        if code < *best {
            *best = code;
        }
        return;
    }
    if cell >= cells.len() {
        return;
    }
    let members = &cells[cell];
    for (m, &v) in members.iter().enumerate() {
        if used_in_cell & (1 << m) != 0 {
            continue;
        }
        // placing v at position k fixes the entries between v and placed nodes
        let mut c = code;
        for &u in placed.iter() {
            let pu = pos[u];
            if parents[v] & bit(u) != 0 {
                c |= adjacency_bit(n, pu, k);
            }
            if parents[u] & bit(v) != 0 {
                c |= adjacency_bit(n, k, pu);
            }
        }
        if c > *best {
            continue;
        }
        pos[v] = k;
        placed.push(v);
        let used = used_in_cell | (1 << m);
        if used.count_ones() as usize == members.len() {
            search(cells, cell + 1, 0, parents, pos, placed, c, best);
        } else {
            search(cells, cell, used, parents, pos, placed, c, best);
        }
        placed.pop();
        pos[v] = usize::MAX;
    }
}

fn encode(kinds: &[u8], code: u64) -> CanonicalForm {
    let mut encoding = Vec::with_capacity(kinds.len() + 9);
    encoding.push(kinds.len() as u8);
    encoding.extend_from_slice(kinds);
    encoding.extend_from_slice(&code.to_be_bytes());
    CanonicalForm { encoding }
}

pub fn canonical_form(g: &GDag) -> Result<CanonicalForm> {
    if g.len() > 8 {
        return Err(Error::SizeLimit("canonical forms support at most 8 nodes".into()));
    }
    let parents: Vec<Mask> = (0..g.len()).map(|i| g.parents_mask(i)).collect();
    let (kinds, code) = canonical_parts(g.kinds(), &parents);
    Ok(encode(&kinds, code))
}

fn check_n(n: usize, limit: usize) -> Result<()> {
    if n == 0 || n > limit {
        return Err(Error::SizeLimit(format!("node count must be in 1..={limit}, got {n}")));
    }
    Ok(())
}

/// Canonical forms of all labelled upper-triangular DAGs with one kind vector.
fn forms_for_kinds(n: usize, kind_bits: u32) -> HashSet<CanonicalForm> {
    let kinds: Vec<NodeKind> = (0..n)
        .map(|i| if kind_bits & (1 << i) != 0 { NodeKind::Unobserved } else { NodeKind::Observed })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|c| (0..c).map(move |p| (p, c))).collect();
    let mut out = HashSet::new();
    let mut parents = vec![0 as Mask; n];
    for adj in 0u64..(1u64 << pairs.len()) {
        parents.iter_mut().for_each(|m| *m = 0);
        for (k, &(p, c)) in pairs.iter().enumerate() {
            if adj & (1 << k) != 0 {
                parents[c] |= bit(p);
            }
        }
        let (ks, code) = canonical_parts(&kinds, &parents);
        out.insert(encode(&ks, code));
    }
    out
}

/// All canonical forms on `n` nodes, sorted.
pub fn canonical_forms(n: usize) -> Result<Vec<CanonicalForm>> {
    check_n(n, MAX_ENUMERATION_NODES)?;
    // kinds cannot be sorted up front: a topological order fixes positions
    let sets: Vec<HashSet<CanonicalForm>> = (0u32..(1 << n))
        .into_par_iter()
        .map(|k| forms_for_kinds(n, k))
        .collect();
    let all: BTreeSet<CanonicalForm> = sets.into_iter().flatten().collect();
    Ok(all.into_iter().collect())
}

/// One representative per isomorphism class, in canonical-form order.
pub fn enumerate_gdags(n: usize) -> Result<Vec<GDag>> {
    Ok(canonical_forms(n)?.iter().map(CanonicalForm::to_gdag).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusReport {
    pub n: usize,
    pub total: u64,
    pub condition_holds: u64,
    pub survivors_after_reduction: u64,
    /// Canonical representatives of the irreducible failing GDAGs.
    #[serde(skip)]
    pub survivors: Vec<GDag>,
}

impl CensusReport {
    pub const CSV_HEADER: &'static str = "n,total,condition_holds,survivors";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.n, self.total, self.condition_holds, self.survivors_after_reduction
        )
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CensusOptions {
    /// Allows n = 7.
    pub long_run: bool,
}

pub fn classification_census(n: usize) -> Result<CensusReport> {
    classification_census_with(n, CensusOptions::default())
}

/// Runs the sufficient condition on every GDAG of size `n`; failures not
/// reducible to a smaller failure are survivors.
pub fn classification_census_with(n: usize, opts: CensusOptions) -> Result<CensusReport> {
    check_n(n, if opts.long_run { MAX_ENUMERATION_NODES } else { DESK_CENSUS_LIMIT })?;
    let forms = canonical_forms(n)?;
    let failures: Vec<GDag> = forms
        .par_iter()
        .filter_map(|f| {
            let g = f.to_gdag();
            sufficient_condition_holds(&g).is_none().then_some(g)
        })
        .collect();
    let survivors: Vec<GDag> = failures
        .par_iter()
        .filter(|g| !reducible_to_smaller_failure(g))
        .cloned()
        .collect();
    Ok(CensusReport {
        n,
        total: forms.len() as u64,
        condition_holds: (forms.len() - failures.len()) as u64,
        survivors_after_reduction: survivors.len() as u64,
        survivors,
    })
}

/// Can some sequence of reductions take `g` to a GDAG with fewer nodes, or
/// as many nodes and fewer edges, on which the sufficient condition fails?
///
/// Besides every instance of the eight rules (the one-outcome rule on any
/// observed node, any component), an edge into an observed node whose
/// parents are all observed may be dropped outright: the smaller graph
/// implies the child's local independence, so a distribution violating C
/// there is still outside C with the edge present.
pub fn reducible_to_smaller_failure(g: &GDag) -> bool {
    let size = |h: &GDag| (h.len(), h.edge_count());
    let mut seen: HashSet<CanonicalForm> = HashSet::new();
    let mut stack = vec![g.clone()];
    seen.insert(canonical_form(g).expect("small graph"));
    while let Some(h) = stack.pop() {
        let mut next: Vec<GDag> = reduction_instances(&h, true)
            .iter()
            .map(|r| apply_reduction(&h, r).expect("listed rules apply"))
            .collect();
        for b in bits(h.observed_mask()) {
            if h.parents_mask(b) & h.unobserved_mask() == 0 {
                next.extend(bits(h.parents_mask(b)).map(|a| h.with_edge_removed(a, b).expect("edge exists")));
            }
        }
        for k in next {
            if k.is_empty() || !seen.insert(canonical_form(&k).expect("small graph")) {
                continue;
            }
            if size(&k) < size(g) && sufficient_condition_holds(&k).is_none() {
                return true;
            }
            stack.push(k);
        }
    }
    false
}
