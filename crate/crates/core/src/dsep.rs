//! d-separation through pseudo-paths and the equivalent four-set partition.
//!
//! With `W = nodes \ An(X ∪ Y ∪ Z)`, two nodes outside `W` are pseudo-adjacent
//! when they are joined by an edge or share a child outside `W`. `X` and `Y`
//! are d-separated by `Z` exactly when no pseudo-adjacency walk from `X` to `Y`
//! avoids `Z`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bit, bits, GDag, Mask, NodeId, NodeSet};

/// Conditional-independence triple `x ⟂ y | z`, stored with `x <= y`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CIStatement {
    pub x: NodeSet,
    pub y: NodeSet,
    pub z: NodeSet,
}

impl CIStatement {
    /// Validates disjointness and non-emptiness and orients the pair canonically.
    pub fn new(x: NodeSet, y: NodeSet, z: NodeSet) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidQuery("x and y must be nonempty".into()));
        }
        check_disjoint(&x, &y, &z)?;
        Ok(if x <= y {
            CIStatement { x, y, z }
        } else {
            CIStatement { x: y, y: x, z }
        })
    }
}

impl std::fmt::Display for CIStatement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{}}} _|_ {{{}}} | {{{}}}", self.x, self.y, self.z)
    }
}

/// A set of CI statements in canonical orientation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CISet {
    statements: BTreeSet<CIStatement>,
}

impl CISet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, s: CIStatement) -> bool {
        self.statements.insert(s)
    }

    /// Membership up to the x/y symmetry.
    pub fn contains(&self, s: &CIStatement) -> bool {
        self.statements.contains(s)
    }

    pub fn contains_triple(&self, x: &NodeSet, y: &NodeSet, z: &NodeSet) -> bool {
        CIStatement::new(x.clone(), y.clone(), z.clone())
            .map(|s| self.contains(&s))
            .unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CIStatement> {
        self.statements.iter()
    }

    pub fn is_subset(&self, other: &CISet) -> bool {
        self.statements.is_subset(&other.statements)
    }

    /// Byte-stable JSON: statements sorted lexicographically.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("CI set serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<CIStatement> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut set = CISet::new();
        for s in raw {
            set.insert(CIStatement::new(s.x, s.y, s.z)?);
        }
        Ok(set)
    }
}

impl FromIterator<CIStatement> for CISet {
    fn from_iter<T: IntoIterator<Item = CIStatement>>(iter: T) -> Self {
        CISet {
            statements: iter.into_iter().collect(),
        }
    }
}

/// Partition `{u, v, z, w}` certifying a d-separation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsepWitness {
    pub u: NodeSet,
    pub v: NodeSet,
    pub z: NodeSet,
    pub w: NodeSet,
}

fn check_disjoint(x: &NodeSet, y: &NodeSet, z: &NodeSet) -> Result<()> {
    for (a, b) in [(x, y), (x, z), (y, z)] {
        if let Some(id) = a.intersection(b).iter().next() {
            return Err(Error::Overlap(id.to_string()));
        }
    }
    Ok(())
}

fn query_masks(g: &GDag, x: &NodeSet, y: &NodeSet, z: &NodeSet) -> Result<(Mask, Mask, Mask)> {
    let (xm, ym, zm) = (g.mask_of(x)?, g.mask_of(y)?, g.mask_of(z)?);
    check_disjoint(x, y, z)?;
    Ok((xm, ym, zm))
}

/// `W = nodes \ An(x ∪ y ∪ z)` on masks.
pub fn exogenous_mask(g: &GDag, x: Mask, y: Mask, z: Mask) -> Mask {
    g.all_mask() & !g.ancestors_mask(x | y | z)
}

pub fn exogenous_remainder(g: &GDag, x: &NodeSet, y: &NodeSet, z: &NodeSet) -> Result<NodeSet> {
    let (xm, ym, zm) = query_masks(g, x, y, z)?;
    Ok(g.set_of(exogenous_mask(g, xm, ym, zm)))
}

/// Nodes pseudo-adjacent to `a` among those outside `w`.
#[inline]
fn pseudo_neighbours(g: &GDag, a: usize, w: Mask) -> Mask {
    let kids = g.children_mask(a) & !w;
    let mut nb = g.parents_mask(a) | kids;
    for c in bits(kids) {
        nb |= g.parents_mask(c);
    }
    nb & !w & !bit(a)
}

/// All nodes reachable from `start` by pseudo-adjacency steps avoiding `blocked`.
fn pseudo_closure(g: &GDag, start: Mask, blocked: Mask, w: Mask) -> Mask {
    let mut closed = start;
    let mut frontier = start;
    while frontier != 0 {
        let mut next = 0;
        for a in bits(frontier) {
            next |= pseudo_neighbours(g, a, w);
        }
        next &= !blocked;
        frontier = next & !closed;
        closed |= next;
    }
    closed
}

/// Mask-level d-separation; the sets must be pairwise disjoint.
pub fn d_separated_mask(g: &GDag, x: Mask, y: Mask, z: Mask) -> bool {
    if x == 0 || y == 0 {
        return true;
    }
    let w = exogenous_mask(g, x, y, z);
    pseudo_closure(g, x, z | w, w) & y == 0
}

pub fn d_separated(g: &GDag, x: &NodeSet, y: &NodeSet, z: &NodeSet) -> Result<bool> {
    let (xm, ym, zm) = query_masks(g, x, y, z)?;
    Ok(d_separated_mask(g, xm, ym, zm))
}

/// Mask-level partition witness `(u, v, w)`; `z` completes the partition.
pub fn partition_witness_mask(g: &GDag, x: Mask, y: Mask, z: Mask) -> Option<(Mask, Mask, Mask)> {
    let w = exogenous_mask(g, x, y, z);
    let u = pseudo_closure(g, x, z | w, w);
    if u & y != 0 {
        return None;
    }
    let v = g.all_mask() & !(u | z | w);
    Some((u, v, w))
}

pub fn d_separated_via_partition(
    g: &GDag,
    x: &NodeSet,
    y: &NodeSet,
    z: &NodeSet,
) -> Result<Option<DsepWitness>> {
    let (xm, ym, zm) = query_masks(g, x, y, z)?;
    Ok(partition_witness_mask(g, xm, ym, zm).map(|(u, v, w)| DsepWitness {
        u: g.set_of(u),
        v: g.set_of(v),
        z: g.set_of(zm),
        w: g.set_of(w),
    }))
}

/// Checks the partition conditions of a witness against a graph.
pub fn witness_is_valid(g: &GDag, x: &NodeSet, y: &NodeSet, wit: &DsepWitness) -> Result<bool> {
    let (u, v, z, w) = (
        g.mask_of(&wit.u)?,
        g.mask_of(&wit.v)?,
        g.mask_of(&wit.z)?,
        g.mask_of(&wit.w)?,
    );
    let pairwise_disjoint = u & v == 0 && u & z == 0 && u & w == 0 && v & z == 0 && v & w == 0 && z & w == 0;
    let covers = u | v | z | w == g.all_mask();
    let xm = g.mask_of(x)?;
    let ym = g.mask_of(y)?;
    let expected_w = exogenous_mask(g, xm, ym, z);
    let shared = g.children_closure_mask(u) & g.children_closure_mask(v);
    Ok(pairwise_disjoint
        && covers
        && w == expected_w
        && xm & !u == 0
        && ym & !v == 0
        && shared & !w == 0)
}

/// Enumerates triples over `k` positions as base-4 codes: digit 1 = x, 2 = y, 3 = z.
/// Yields `(x, y, z)` position masks with both x and y nonempty and `x < y`.
pub(crate) fn position_triples(k: usize) -> impl Iterator<Item = (u32, u32, u32)> {
    let total = 1u64 << (2 * k);
    (0..total).filter_map(move |code| {
        let (mut x, mut y, mut z) = (0u32, 0u32, 0u32);
        for p in 0..k {
            match (code >> (2 * p)) & 3 {
                1 => x |= 1 << p,
                2 => y |= 1 << p,
                3 => z |= 1 << p,
                _ => {}
            }
        }
        (x != 0 && y != 0 && x < y).then_some((x, y, z))
    })
}

fn spread(positions: u32, nodes: &[usize]) -> Mask {
    let mut m = 0;
    let mut p = positions;
    while p != 0 {
        let i = p.trailing_zeros() as usize;
        p &= p - 1;
        m |= bit(nodes[i]);
    }
    m
}

/// All observable d-separation statements as position-mask triples over
/// `g`'s observed nodes in declaration order.
pub(crate) fn observable_ci_positions(g: &GDag) -> Vec<(u32, u32, u32)> {
    let obs: Vec<usize> = bits(g.observed_mask()).collect();
    position_triples(obs.len())
        .filter(|&(x, y, z)| d_separated_mask(g, spread(x, &obs), spread(y, &obs), spread(z, &obs)))
        .collect()
}

pub fn observable_ci_set(g: &GDag) -> CISet {
    let obs: Vec<usize> = bits(g.observed_mask()).collect();
    observable_ci_positions(g)
        .into_iter()
        .map(|(x, y, z)| {
            CIStatement::new(
                g.set_of(spread(x, &obs)),
                g.set_of(spread(y, &obs)),
                g.set_of(spread(z, &obs)),
            )
            .expect("enumerated triples are disjoint and nonempty")
        })
        .collect()
}

/// Precomputed observable CI set of a reference graph, for repeated
/// "adds no new independences" checks against graphs on the same observed ids.
pub struct CiOracle {
    ids: Vec<NodeId>,
    table: Vec<u64>,
}

impl CiOracle {
    pub fn new(g: &GDag) -> Self {
        let ids = g.observed_ids();
        let k = ids.len();
        let mut table = vec![0u64; (1usize << (2 * k)).div_ceil(64)];
        for (x, y, z) in observable_ci_positions(g) {
            let c = Self::code(x, y, z);
            table[c / 64] |= 1 << (c % 64);
        }
        CiOracle { ids, table }
    }

    fn code(x: u32, y: u32, z: u32) -> usize {
        let mut c = 0usize;
        for (digit, m) in [(1usize, x), (2, y), (3, z)] {
            let mut p = m;
            while p != 0 {
                let i = p.trailing_zeros() as usize;
                p &= p - 1;
                c |= digit << (2 * i);
            }
        }
        c
    }

    fn holds(&self, x: u32, y: u32, z: u32) -> bool {
        let c = Self::code(x, y, z);
        self.table[c / 64] & (1 << (c % 64)) != 0
    }

    /// Positions of `h`'s observed nodes in the reference ordering; `None` if
    /// the observed id sets differ.
    fn align(&self, h: &GDag) -> Option<Vec<usize>> {
        let obs: Vec<usize> = bits(h.observed_mask()).collect();
        if obs.len() != self.ids.len() {
            return None;
        }
        let mut nodes = vec![0usize; obs.len()];
        for &i in &obs {
            let pos = self.ids.iter().position(|id| id == h.id(i))?;
            nodes[pos] = i;
        }
        Some(nodes)
    }

    /// True iff every observable d-separation of `h` also holds in the reference.
    pub fn admits(&self, h: &GDag) -> Result<bool> {
        let nodes = self
            .align(h)
            .ok_or_else(|| Error::InvalidQuery("observed node sets differ".into()))?;
        Ok(position_triples(nodes.len()).all(|(x, y, z)| {
            self.holds(x, y, z)
                || !d_separated_mask(h, spread(x, &nodes), spread(y, &nodes), spread(z, &nodes))
        }))
    }
}

/// `observable_ci_set(g_new) ⊆ observable_ci_set(g_old)`.
pub fn ci_subset(g_new: &GDag, g_old: &GDag) -> Result<bool> {
    CiOracle::new(g_old).admits(g_new)
}
