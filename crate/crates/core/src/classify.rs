//! The C = I sufficient condition: C-preserving transformations, the
//! exhaustive search that builds a certificate, and the reduction rules used
//! to discard GDAGs that are trivial extensions of smaller ones.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dsep::{ci_subset, CiOracle};
use crate::error::{Error, Result};
use crate::graph::{bit, bits, GDag, Mask, NodeId, NodeKind};

/// A transformation that can only shrink the classical set of a GDAG.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transformation {
    RemoveEdge(NodeId, NodeId),
    RemoveIsolatedUnobserved(NodeId),
    /// Adds `a -> b` where `a` reaches `b` through unobserved nodes only.
    AddEdgeUnobservedPath(NodeId, NodeId),
    /// Adds `a -> b` where `Pa(a) ⊆ Pa(b)` and `Pa(a)` has an unobserved node.
    AddEdgeParentSubset(NodeId, NodeId),
}

impl std::fmt::Display for Transformation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transformation::RemoveEdge(a, b) => write!(f, "remove edge {a} -> {b}"),
            Transformation::RemoveIsolatedUnobserved(n) => write!(f, "remove isolated unobserved {n}"),
            Transformation::AddEdgeUnobservedPath(a, b) => write!(f, "add {a} -> {b} (unobserved path)"),
            Transformation::AddEdgeParentSubset(a, b) => write!(f, "add {a} -> {b} (parent subset)"),
        }
    }
}

fn precondition(operation: &'static str, reason: impl Into<String>) -> Error {
    Error::precondition(operation, reason)
}

/// Nodes reachable from `a` by a directed path whose intermediate nodes are
/// all unobserved.
fn unobserved_reach(parents: &[Mask], unobserved: Mask, a: usize) -> Mask {
    let children = |i: usize| -> Mask {
        (0..parents.len())
            .filter(|&c| parents[c] & bit(i) != 0)
            .fold(0, |m, c| m | bit(c))
    };
    let mut reach = children(a);
    let mut frontier = reach & unobserved;
    while frontier != 0 {
        let i = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let new = children(i) & !reach;
        reach |= new;
        frontier |= new & unobserved;
    }
    reach
}

pub fn apply_transformation(g: &GDag, t: &Transformation) -> Result<GDag> {
    match t {
        Transformation::RemoveEdge(a, b) => {
            let (a, b) = (g.index_of_checked(a)?, g.index_of_checked(b)?);
            if !g.has_edge(a, b) {
                return Err(precondition("remove edge", "the edge does not exist"));
            }
            g.with_edge_removed(a, b)
        }
        Transformation::RemoveIsolatedUnobserved(n) => {
            let i = g.index_of_checked(n)?;
            if g.is_observed(i) {
                return Err(precondition("remove isolated unobserved", "the node is observed"));
            }
            if g.parents_mask(i) | g.children_mask(i) != 0 {
                return Err(precondition("remove isolated unobserved", "the node has edges"));
            }
            Ok(g.without_nodes(bit(i)))
        }
        Transformation::AddEdgeUnobservedPath(a, b) => {
            let (a, b) = (g.index_of_checked(a)?, g.index_of_checked(b)?);
            if g.has_edge(a, b) {
                return Err(precondition("add edge along unobserved path", "the edge already exists"));
            }
            let parents: Vec<Mask> = (0..g.len()).map(|i| g.parents_mask(i)).collect();
            if unobserved_reach(&parents, g.unobserved_mask(), a) & bit(b) == 0 {
                return Err(precondition(
                    "add edge along unobserved path",
                    "no directed path with only unobserved intermediate nodes",
                ));
            }
            g.with_edge_added(a, b)
        }
        Transformation::AddEdgeParentSubset(a, b) => {
            let (a, b) = (g.index_of_checked(a)?, g.index_of_checked(b)?);
            if a == b {
                return Err(precondition("add edge by parent subset", "self-loop"));
            }
            if g.has_edge(a, b) {
                return Err(precondition("add edge by parent subset", "the edge already exists"));
            }
            let (pa, pb) = (g.parents_mask(a), g.parents_mask(b));
            if pa & !pb != 0 {
                return Err(precondition("add edge by parent subset", "Pa(a) is not a subset of Pa(b)"));
            }
            if pa & g.unobserved_mask() == 0 {
                return Err(precondition("add edge by parent subset", "Pa(a) has no unobserved node"));
            }
            if g.descendants_mask(bit(b)) & bit(a) != 0 {
                return Err(precondition("add edge by parent subset", "the edge would create a cycle"));
            }
            g.with_edge_added(a, b)
        }
    }
}

/// A transformation sequence from `source` to an all-observed `final_graph`
/// that requires no new observable independences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub source: GDag,
    pub steps: Vec<Transformation>,
    #[serde(rename = "final")]
    pub final_graph: GDag,
}

impl Certificate {
    /// Replays the steps from the source.
    pub fn replay(&self) -> Result<GDag> {
        self.steps
            .iter()
            .try_fold(self.source.clone(), |g, t| apply_transformation(&g, t))
    }

    /// Replay reproduces the final graph, which is all-observed and adds no
    /// observable independences.
    pub fn verify(&self) -> Result<bool> {
        let g = self.replay()?;
        Ok(g == self.final_graph
            && g.unobserved_mask() == 0
            && ci_subset(&self.final_graph, &self.source)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

// -- the search -----------------------------------------------------------

/// Mutable parent-mask state of one search branch, optionally recording steps.
struct Branch<'a> {
    g: &'a GDag,
    parents: Vec<Mask>,
    steps: Option<Vec<Transformation>>,
}

impl Branch<'_> {
    fn add(&mut self, a: usize, b: usize, t: fn(NodeId, NodeId) -> Transformation) {
        self.parents[b] |= bit(a);
        if let Some(s) = &mut self.steps {
            s.push(t(self.g.id(a).clone(), self.g.id(b).clone()));
        }
    }

    fn remove(&mut self, a: usize, b: usize) {
        self.parents[b] &= !bit(a);
        if let Some(s) = &mut self.steps {
            s.push(Transformation::RemoveEdge(self.g.id(a).clone(), self.g.id(b).clone()));
        }
    }

    fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut seen = 0;
        let mut stack = vec![b];
        while let Some(i) = stack.pop() {
            for p in bits(self.parents[i] & !seen) {
                if p == a {
                    return true;
                }
                seen |= bit(p);
                stack.push(p);
            }
        }
        false
    }
}

/// Parent masks after the maximal unobserved-path edge additions, plus the
/// additions themselves in a fixed order.
fn close_unobserved_paths(g: &GDag) -> (Vec<Mask>, Vec<(usize, usize)>) {
    let n = g.len();
    let parents: Vec<Mask> = (0..n).map(|i| g.parents_mask(i)).collect();
    let mut closed = parents.clone();
    let mut added = Vec::new();
    for a in 0..n {
        for b in bits(unobserved_reach(&parents, g.unobserved_mask(), a)) {
            if parents[b] & bit(a) == 0 {
                closed[b] |= bit(a);
                added.push((a, b));
            }
        }
    }
    (closed, added)
}

/// Runs one branch of the search (ordering `t` with roots `r`) from the
/// closed state; returns the final parent masks over all nodes.
fn run_branch(branch: &mut Branch<'_>, t: &[usize], r: &[usize]) {
    let unobs = branch.g.unobserved_mask();
    for i in 0..t.len() {
        let ti = t[i];
        for &tj in &t[i + 1..] {
            if branch.parents[ti] & bit(tj) != 0 {
                branch.remove(tj, ti);
            }
        }
        for u in bits(branch.parents[ti] & unobs & !bit(r[i])) {
            branch.remove(u, ti);
        }
        for &tj in &t[i + 1..] {
            let (pa, pb) = (branch.parents[ti], branch.parents[tj]);
            if pa & !pb == 0 && pa & unobs != 0 && pb & bit(ti) == 0 && !branch.is_ancestor(tj, ti) {
                branch.add(ti, tj, Transformation::AddEdgeParentSubset);
            }
        }
    }
    let n = branch.g.len();
    let mut incident: Vec<(usize, usize)> = Vec::new();
    for c in 0..n {
        for p in bits(branch.parents[c]) {
            if (bit(p) | bit(c)) & unobs != 0 {
                incident.push((p, c));
            }
        }
    }
    incident.sort_unstable();
    for (p, c) in incident {
        branch.remove(p, c);
    }
    if let Some(s) = &mut branch.steps {
        for u in bits(unobs) {
            s.push(Transformation::RemoveIsolatedUnobserved(branch.g.id(u).clone()));
        }
    }
}

/// Lexicographic successor of a permutation, in place; false at the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Searches every ordering of the tricky nodes and every root assignment;
/// returns a certificate for the first branch (in a fixed order) whose final
/// graph adds no observable independences.
pub fn sufficient_condition_holds(g: &GDag) -> Option<Certificate> {
    let n = g.len();
    let unobs = g.unobserved_mask();
    let (closed, added) = close_unobserved_paths(g);
    let tricky: Vec<usize> = bits(g.observed_mask()).filter(|&i| g.parents_mask(i) & unobs != 0).collect();
    let roots: Vec<usize> = bits(unobs).filter(|&i| g.parents_mask(i) & unobs == 0).collect();
    // after the closure, R ⇝ T exactly when the edge R -> T exists
    let options: Vec<Vec<usize>> = (0..n)
        .map(|i| roots.iter().copied().filter(|&r| closed[i] & bit(r) != 0).collect())
        .collect();

    let oracle = CiOracle::new(g);
    let mut seen: HashSet<Vec<Mask>> = HashSet::new();
    let mut order = tricky.clone();
    loop {
        let mut choice = vec![0usize; order.len()];
        'assign: loop {
            let r: Vec<usize> = order.iter().zip(&choice).map(|(&t, &k)| options[t][k]).collect();
            let mut branch = Branch { g, parents: closed.clone(), steps: None };
            run_branch(&mut branch, &order, &r);
            if seen.insert(branch.parents.clone()) {
                let fin = final_graph(g, &branch.parents);
                if oracle.admits(&fin).expect("same observed ids") {
                    return Some(certificate(g, &added, &closed, &order, &r, fin));
                }
            }
            // odometer over root choices
            let mut k = order.len();
            loop {
                if k == 0 {
                    break 'assign;
                }
                k -= 1;
                choice[k] += 1;
                if choice[k] < options[order[k]].len() {
                    break;
                }
                choice[k] = 0;
            }
        }
        if !next_permutation(&mut order) {
            return None;
        }
    }
}

fn final_graph(g: &GDag, parents: &[Mask]) -> GDag {
    let unobs = g.unobserved_mask();
    let kept: Vec<usize> = bits(g.observed_mask()).collect();
    let ids: Vec<NodeId> = kept.iter().map(|&i| g.id(i).clone()).collect();
    let kinds = vec![NodeKind::Observed; kept.len()];
    let edges = g
        .edges()
        .iter()
        .copied()
        .filter(|&(p, c)| parents[c] & bit(p) != 0)
        .chain((0..g.len()).flat_map(|c| {
            bits(parents[c] & !g.parents_mask(c)).map(move |p| (p, c))
        }))
        .filter(|&(p, c)| (bit(p) | bit(c)) & unobs == 0)
        .map(|(p, c)| {
            let pos = |i: usize| kept.iter().position(|&k| k == i).expect("observed node");
            (pos(p), pos(c))
        })
        .collect();
    GDag::from_index_edges(ids, kinds, edges).expect("edge set of a DAG")
}

fn certificate(
    g: &GDag,
    added: &[(usize, usize)],
    closed: &[Mask],
    order: &[usize],
    r: &[usize],
    fin: GDag,
) -> Certificate {
    let mut steps: Vec<Transformation> = added
        .iter()
        .map(|&(a, b)| Transformation::AddEdgeUnobservedPath(g.id(a).clone(), g.id(b).clone()))
        .collect();
    let mut branch = Branch { g, parents: closed.to_vec(), steps: Some(Vec::new()) };
    run_branch(&mut branch, order, r);
    steps.extend(branch.steps.take().unwrap_or_default());
    let cert = Certificate { source: g.clone(), steps, final_graph: fin };
    debug_assert!(cert.verify().unwrap_or(false), "search produced an invalid certificate");
    cert
}

// -- reduction ------------------------------------------------------------

/// A reduction from a GDAG to a smaller or simpler one whose C ≠ I implies
/// the original's. The last two rules assume theories that can carry
/// classical information faithfully.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReductionRule {
    /// Removes the connected component containing the node.
    DropDisconnectedComponent(NodeId),
    DropChildlessUnobserved(NodeId),
    /// Merges an unobserved node into its sole parent, also unobserved.
    MergeUnobservedIntoUnobservedParent(NodeId),
    /// Removes an observed node whose variable has a single outcome; the
    /// caller vouches for the cardinality, which graphs do not record.
    DropOneOutcomeObserved(NodeId),
    /// Removes `parent -> child` into an all-observed-parent observed node
    /// when doing so adds no observable independences.
    DropRedundantObservedEdge(NodeId, NodeId),
    /// Removes `removed`, whose parents and children are subsets of those
    /// of the unobserved node `into`.
    AbsorbDominatedUnobserved { removed: NodeId, into: NodeId },
    /// Merges an unobserved node into its sole child.
    MergeUnobservedIntoSoleChild(NodeId),
    /// Merges an observed node into its parentless unobserved sole parent
    /// that has exactly one other child.
    MergeObservedIntoParentlessUnobservedParent(NodeId),
}

impl ReductionRule {
    /// True for the rules that need classical-information-carrying theories.
    pub fn is_weak(&self) -> bool {
        matches!(
            self,
            ReductionRule::MergeUnobservedIntoSoleChild(_)
                | ReductionRule::MergeObservedIntoParentlessUnobservedParent(_)
        )
    }

    fn priority(&self) -> usize {
        match self {
            ReductionRule::DropDisconnectedComponent(_) => 0,
            ReductionRule::DropChildlessUnobserved(_) => 1,
            ReductionRule::MergeUnobservedIntoUnobservedParent(_) => 2,
            ReductionRule::DropOneOutcomeObserved(_) => 3,
            ReductionRule::DropRedundantObservedEdge(..) => 4,
            ReductionRule::AbsorbDominatedUnobserved { .. } => 5,
            ReductionRule::MergeUnobservedIntoSoleChild(_) => 6,
            ReductionRule::MergeObservedIntoParentlessUnobservedParent(_) => 7,
        }
    }
}

impl std::fmt::Display for ReductionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReductionRule::DropDisconnectedComponent(n) => write!(f, "drop component of {n}"),
            ReductionRule::DropChildlessUnobserved(n) => write!(f, "drop childless unobserved {n}"),
            ReductionRule::MergeUnobservedIntoUnobservedParent(n) => {
                write!(f, "merge unobserved {n} into its unobserved parent")
            }
            ReductionRule::DropOneOutcomeObserved(n) => write!(f, "drop one-outcome observed {n}"),
            ReductionRule::DropRedundantObservedEdge(a, b) => write!(f, "drop redundant edge {a} -> {b}"),
            ReductionRule::AbsorbDominatedUnobserved { removed, into } => {
                write!(f, "absorb unobserved {removed} into {into}")
            }
            ReductionRule::MergeUnobservedIntoSoleChild(n) => write!(f, "merge unobserved {n} into its sole child"),
            ReductionRule::MergeObservedIntoParentlessUnobservedParent(n) => {
                write!(f, "merge observed {n} into its parentless unobserved parent")
            }
        }
    }
}

/// Rebuilds `g` with new parent masks and kinds, dropping the nodes in `remove`.
fn rebuild(g: &GDag, kinds: Vec<NodeKind>, parents: Vec<Mask>, remove: Mask) -> Result<GDag> {
    let kept: Vec<usize> = (0..g.len()).filter(|&i| remove & bit(i) == 0).collect();
    let mut pos = vec![usize::MAX; g.len()];
    for (k, &i) in kept.iter().enumerate() {
        pos[i] = k;
    }
    let mut edges = Vec::new();
    for &c in &kept {
        for p in bits(parents[c] & !remove) {
            edges.push((pos[p], pos[c]));
        }
    }
    edges.sort_unstable();
    GDag::from_index_edges(
        kept.iter().map(|&i| g.id(i).clone()).collect(),
        kept.iter().map(|&i| kinds[i]).collect(),
        edges,
    )
}

fn parents_of(g: &GDag) -> Vec<Mask> {
    (0..g.len()).map(|i| g.parents_mask(i)).collect()
}

pub fn apply_reduction(g: &GDag, r: &ReductionRule) -> Result<GDag> {
    let unobs = g.unobserved_mask();
    match r {
        ReductionRule::DropDisconnectedComponent(n) => {
            let comp = g.component_mask(g.index_of_checked(n)?);
            if comp == g.all_mask() {
                return Err(precondition("drop disconnected component", "the graph is connected"));
            }
            Ok(g.without_nodes(comp))
        }
        ReductionRule::DropChildlessUnobserved(n) => {
            let i = g.index_of_checked(n)?;
            if g.is_observed(i) {
                return Err(precondition("drop childless unobserved", "the node is observed"));
            }
            if g.children_mask(i) != 0 {
                return Err(precondition("drop childless unobserved", "the node has children"));
            }
            Ok(g.without_nodes(bit(i)))
        }
        ReductionRule::MergeUnobservedIntoUnobservedParent(n) => {
            let i = g.index_of_checked(n)?;
            let pa = g.parents_mask(i);
            if g.is_observed(i) {
                return Err(precondition("merge into unobserved parent", "the node is observed"));
            }
            if pa.count_ones() != 1 || pa & unobs == 0 {
                return Err(precondition(
                    "merge into unobserved parent",
                    "the node does not have exactly one parent that is unobserved",
                ));
            }
            let mut parents = parents_of(g);
            for c in bits(g.children_mask(i)) {
                parents[c] |= pa;
            }
            rebuild(g, g.kinds().to_vec(), parents, bit(i))
        }
        ReductionRule::DropOneOutcomeObserved(n) => {
            let i = g.index_of_checked(n)?;
            if !g.is_observed(i) {
                return Err(precondition("drop one-outcome observed", "the node is unobserved"));
            }
            Ok(g.without_nodes(bit(i)))
        }
        ReductionRule::DropRedundantObservedEdge(a, b) => {
            let (a, b) = (g.index_of_checked(a)?, g.index_of_checked(b)?);
            if !g.has_edge(a, b) {
                return Err(precondition("drop redundant edge", "the edge does not exist"));
            }
            if !g.is_observed(b) || g.parents_mask(b) & unobs != 0 {
                return Err(precondition(
                    "drop redundant edge",
                    "the child is not an observed node with only observed parents",
                ));
            }
            let h = g.with_edge_removed(a, b)?;
            if !ci_subset(&h, g)? {
                return Err(precondition("drop redundant edge", "removal adds an observable independence"));
            }
            Ok(h)
        }
        ReductionRule::AbsorbDominatedUnobserved { removed, into } => {
            let (u, v) = (g.index_of_checked(removed)?, g.index_of_checked(into)?);
            if u == v || g.is_observed(u) || g.is_observed(v) {
                return Err(precondition("absorb dominated unobserved", "needs two distinct unobserved nodes"));
            }
            if g.parents_mask(u) & !g.parents_mask(v) != 0 || g.children_mask(u) & !g.children_mask(v) != 0 {
                return Err(precondition(
                    "absorb dominated unobserved",
                    "parents and children are not subsets of the other node's",
                ));
            }
            Ok(g.without_nodes(bit(u)))
        }
        ReductionRule::MergeUnobservedIntoSoleChild(n) => {
            let i = g.index_of_checked(n)?;
            let ch = g.children_mask(i);
            if g.is_observed(i) {
                return Err(precondition("merge into sole child", "the node is observed"));
            }
            if ch.count_ones() != 1 {
                return Err(precondition("merge into sole child", "the node does not have exactly one child"));
            }
            let c = ch.trailing_zeros() as usize;
            let mut parents = parents_of(g);
            parents[c] = (parents[c] | parents[i]) & !bit(i);
            rebuild(g, g.kinds().to_vec(), parents, bit(i))
        }
        ReductionRule::MergeObservedIntoParentlessUnobservedParent(n) => {
            let y = g.index_of_checked(n)?;
            if !g.is_observed(y) {
                return Err(precondition("merge observed into parent", "the node is unobserved"));
            }
            let pa = g.parents_mask(y);
            if pa.count_ones() != 1 || pa & unobs == 0 {
                return Err(precondition(
                    "merge observed into parent",
                    "the node's only parent must be a single unobserved node",
                ));
            }
            let x = pa.trailing_zeros() as usize;
            if g.parents_mask(x) != 0 {
                return Err(precondition("merge observed into parent", "the parent has parents"));
            }
            let siblings = g.children_mask(x) & !bit(y);
            if siblings.count_ones() != 1 {
                return Err(precondition("merge observed into parent", "the parent must have exactly one other child"));
            }
            let z = siblings.trailing_zeros() as usize;
            let mut parents = parents_of(g);
            parents[y] = 0;
            parents[z] |= bit(y);
            rebuild(g, g.kinds().to_vec(), parents, bit(x))
        }
    }
}

/// Every applicable rule instance except the one-outcome rule, in priority
/// order, lowest node index first within a rule.
///
/// Component removal is offered only for components that satisfy the
/// sufficient condition on their own, so the part that fails is kept; when
/// every component fails, only the component of the lowest-index node is
/// offered.
pub fn applicable_reductions(g: &GDag) -> Vec<ReductionRule> {
    let n = g.len();
    let unobs = g.unobserved_mask();
    let id = |i: usize| g.id(i).clone();
    let mut out = Vec::new();

    let mut comps = Vec::new();
    let mut covered = 0;
    for i in 0..n {
        if covered & bit(i) == 0 {
            let c = g.component_mask(i);
            covered |= c;
            comps.push((i, c));
        }
    }
    if comps.len() > 1 {
        let trivial: Vec<usize> = comps
            .iter()
            .filter(|(_, c)| sufficient_condition_holds(&g.without_nodes(g.all_mask() & !c)).is_some())
            .map(|(i, _)| *i)
            .collect();
        if trivial.is_empty() {
            out.push(ReductionRule::DropDisconnectedComponent(id(comps[0].0)));
        } else {
            out.extend(trivial.into_iter().map(|i| ReductionRule::DropDisconnectedComponent(id(i))));
        }
    }
    for i in bits(unobs) {
        if g.children_mask(i) == 0 {
            out.push(ReductionRule::DropChildlessUnobserved(id(i)));
        }
    }
    for i in bits(unobs) {
        let pa = g.parents_mask(i);
        if pa.count_ones() == 1 && pa & unobs != 0 {
            out.push(ReductionRule::MergeUnobservedIntoUnobservedParent(id(i)));
        }
    }
    for b in bits(g.observed_mask()) {
        let pa = g.parents_mask(b);
        if pa == 0 || pa & unobs != 0 {
            continue;
        }
        let oracle = CiOracle::new(g);
        for a in bits(pa) {
            let h = g.with_edge_removed(a, b).expect("edge exists");
            if oracle.admits(&h).expect("same observed ids") {
                out.push(ReductionRule::DropRedundantObservedEdge(id(a), id(b)));
            }
        }
    }
    for u in bits(unobs) {
        for v in bits(unobs & !bit(u)) {
            if g.parents_mask(u) & !g.parents_mask(v) == 0 && g.children_mask(u) & !g.children_mask(v) == 0 {
                out.push(ReductionRule::AbsorbDominatedUnobserved { removed: id(u), into: id(v) });
                break;
            }
        }
    }
    for i in bits(unobs) {
        if g.children_mask(i).count_ones() == 1 {
            out.push(ReductionRule::MergeUnobservedIntoSoleChild(id(i)));
        }
    }
    for y in bits(g.observed_mask()) {
        let pa = g.parents_mask(y);
        if pa.count_ones() != 1 || pa & unobs == 0 {
            continue;
        }
        let x = pa.trailing_zeros() as usize;
        if g.parents_mask(x) == 0 && g.children_mask(x).count_ones() == 2 {
            out.push(ReductionRule::MergeObservedIntoParentlessUnobservedParent(id(y)));
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0].priority() <= w[1].priority()));
    out
}

/// Every applicable instance of every rule. The one-outcome rule is listed
/// for each observed node when `one_outcome` is set, since any observed
/// variable may be given a single outcome.
pub fn reduction_instances(g: &GDag, one_outcome: bool) -> Vec<ReductionRule> {
    let n = g.len();
    let unobs = g.unobserved_mask();
    let id = |i: usize| g.id(i).clone();
    let mut out = Vec::new();
    let mut covered = 0;
    for i in 0..n {
        if covered & bit(i) == 0 {
            let c = g.component_mask(i);
            covered |= c;
            if c != g.all_mask() {
                out.push(ReductionRule::DropDisconnectedComponent(id(i)));
            }
        }
    }
    for r in applicable_reductions(g) {
        match r {
            ReductionRule::DropDisconnectedComponent(_) | ReductionRule::AbsorbDominatedUnobserved { .. } => {}
            _ => out.push(r),
        }
    }
    if one_outcome {
        out.extend(bits(g.observed_mask()).map(|i| ReductionRule::DropOneOutcomeObserved(id(i))));
    }
    for u in bits(unobs) {
        for v in bits(unobs & !bit(u)) {
            if g.parents_mask(u) & !g.parents_mask(v) == 0 && g.children_mask(u) & !g.children_mask(v) == 0 {
                out.push(ReductionRule::AbsorbDominatedUnobserved { removed: id(u), into: id(v) });
            }
        }
    }
    out.sort_by_key(ReductionRule::priority);
    out
}

/// Applies the first applicable rule repeatedly until none applies.
pub fn reduce(g: &GDag) -> GDag {
    reduce_with(g, |rules| rules.first().cloned())
}

/// Reduces with a caller-chosen rule at each step (e.g. random, for
/// confluence checks); stops when the chooser returns `None` or nothing applies.
pub fn reduce_with(g: &GDag, mut choose: impl FnMut(&[ReductionRule]) -> Option<ReductionRule>) -> GDag {
    let mut g = g.clone();
    loop {
        let rules = applicable_reductions(&g);
        if rules.is_empty() {
            return g;
        }
        let Some(r) = choose(&rules) else { return g };
        g = apply_reduction(&g, &r).expect("applicable rules apply");
    }
}

/// The rules applied by [`reduce`], in order.
pub fn reduction_trace(g: &GDag) -> (GDag, Vec<ReductionRule>) {
    let mut trace = Vec::new();
    let out = reduce_with(g, |rules| {
        let r = rules.first().cloned();
        trace.extend(r.clone());
        r
    });
    (out, trace)
}
