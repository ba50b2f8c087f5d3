//! GDAG representation and structural queries.
//!
//! A [`GDag`] is an immutable directed acyclic graph whose nodes carry an
//! observed/unobserved tag. Node declaration order is significant: it fixes
//! serialization order and breaks every tie in the deterministic algorithms
//! built on top of the graph. Internally node sets are `u64` bitmasks over
//! declaration indices, so a graph holds at most [`MAX_NODES`] nodes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bitmask over node declaration indices.
pub type Mask = u64;

pub const MAX_NODES: usize = 64;

/// Iterates the set bits of a mask in ascending order.
pub fn bits(mut m: Mask) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

#[inline]
pub(crate) fn bit(i: usize) -> Mask {
    1u64 << i
}

#[inline]
pub(crate) fn full_mask(n: usize) -> Mask {
    if n >= 64 {
        !0
    } else {
        (1u64 << n) - 1
    }
}

/// Node label: a nonempty token without whitespace.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidGraph("empty node id".into()));
        }
        if name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidGraph(format!(
                "node id `{name}` contains whitespace"
            )));
        }
        Ok(NodeId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NodeId::new(s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NodeId::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Observed,
    Unobserved,
}

/// A set of node ids, ordered by id.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<NodeId>);

impl NodeSet {
    pub fn new() -> Self {
        NodeSet(BTreeSet::new())
    }

    /// Builds a set from string ids, validating each one.
    pub fn parse<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        ids.into_iter()
            .map(|s| NodeId::new(s.as_ref()))
            .collect::<Result<BTreeSet<_>>>()
            .map(NodeSet)
    }

    /// Comma-separated form used on the command line; empty string is the empty set.
    pub fn parse_list(list: &str) -> Result<Self> {
        let list = list.trim();
        if list.is_empty() {
            return Ok(NodeSet::new());
        }
        NodeSet::parse(list.split(',').map(str::trim))
    }

    pub fn insert(&mut self, id: NodeId) -> bool {
        self.0.insert(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeId> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.intersection(&other.0).cloned().collect())
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = &'a NodeId;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            f.write_str(id.as_str())?;
        }
        Ok(())
    }
}

/// Immutable generalised DAG.
#[derive(Clone)]
pub struct GDag {
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Mask>,
    children: Vec<Mask>,
    unobserved: Mask,
}

impl PartialEq for GDag {
    /// Same labelled graph: identical node list and identical edge set.
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.kinds == other.kinds && self.parents == other.parents
    }
}

impl Eq for GDag {}

impl fmt::Debug for GDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GDag {{ nodes: [")?;
        for (i, id) in self.ids.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match self.kinds[i] {
                NodeKind::Observed => write!(f, "{id}")?,
                NodeKind::Unobserved => write!(f, "({id})")?,
            }
        }
        write!(f, "], edges: [")?;
        for (k, &(p, c)) in self.edges.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}->{}", self.ids[p], self.ids[c])?;
        }
        write!(f, "] }}")
    }
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: NodeId,
    kind: NodeKind,
}

#[derive(Serialize, Deserialize)]
struct GDagJson {
    nodes: Vec<NodeJson>,
    edges: Vec<(NodeId, NodeId)>,
}

impl GDag {
    /// Validating constructor from ids.
    pub fn new(nodes: Vec<(NodeId, NodeKind)>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        if nodes.len() > MAX_NODES {
            return Err(Error::SizeLimit(format!(
                "{} nodes exceeds the maximum of {MAX_NODES}",
                nodes.len()
            )));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, (id, _)) in nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node `{id}`")));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (p, c) in &edges {
            let pi = *index
                .get(p)
                .ok_or_else(|| Error::InvalidGraph(format!("edge references unknown node `{p}`")))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| Error::InvalidGraph(format!("edge references unknown node `{c}`")))?;
            idx_edges.push((pi, ci));
        }
        let (ids, kinds) = nodes.into_iter().unzip();
        Self::from_index_edges(ids, kinds, idx_edges)
    }

    /// Validating constructor from index pairs; edges keep the given order.
    pub(crate) fn from_index_edges(
        ids: Vec<NodeId>,
        kinds: Vec<NodeKind>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = ids.len();
        let mut parents = vec![0u64; n];
        let mut children = vec![0u64; n];
        for &(p, c) in &edges {
            if p == c {
                return Err(Error::InvalidGraph(format!("self-loop on `{}`", ids[p])));
            }
            if parents[c] & bit(p) != 0 {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge `{}` -> `{}`",
                    ids[p], ids[c]
                )));
            }
            parents[c] |= bit(p);
            children[p] |= bit(c);
        }
        let unobserved = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == NodeKind::Unobserved)
            .fold(0, |m, (i, _)| m | bit(i));
        let g = GDag {
            ids,
            kinds,
            edges,
            parents,
            children,
            unobserved,
        };
        if g.topo_indices().is_none() {
            return Err(Error::InvalidGraph("graph contains a directed cycle".into()));
        }
        Ok(g)
    }

    /// Builds a graph from parent masks; edges are listed by (parent, child) index order.
    pub(crate) fn from_parent_masks(
        ids: Vec<NodeId>,
        kinds: Vec<NodeKind>,
        parents: &[Mask],
    ) -> Result<Self> {
        let n = ids.len();
        let mut edges = Vec::new();
        for p in 0..n {
            for c in 0..n {
                if parents[c] & bit(p) != 0 {
                    edges.push((p, c));
                }
            }
        }
        Self::from_index_edges(ids, kinds, edges)
    }

    /// Graph on nodes named by their declaration position (`n0`, `n1`, ...) or by
    /// the conventional names used for generated graphs.
    pub fn from_kinds_and_parents(kinds: &[NodeKind], parents: &[Mask]) -> Result<Self> {
        let ids = default_ids(kinds.len());
        Self::from_parent_masks(ids, kinds.to_vec(), parents)
    }

    pub fn empty() -> Self {
        GDag {
            ids: Vec::new(),
            kinds: Vec::new(),
            edges: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
            unobserved: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &NodeId {
        &self.ids[i]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, i: usize) -> NodeKind {
        self.kinds[i]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub(crate) fn index_of_checked(&self, id: &NodeId) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Edges as index pairs in declaration order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, p: usize, c: usize) -> bool {
        self.parents[c] & bit(p) != 0
    }

    pub fn all_mask(&self) -> Mask {
        full_mask(self.len())
    }

    pub fn unobserved_mask(&self) -> Mask {
        self.unobserved
    }

    pub fn observed_mask(&self) -> Mask {
        self.all_mask() & !self.unobserved
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.unobserved & bit(i) == 0
    }

    pub fn parents_mask(&self, i: usize) -> Mask {
        self.parents[i]
    }

    pub fn children_mask(&self, i: usize) -> Mask {
        self.children[i]
    }

    pub fn observed_ids(&self) -> Vec<NodeId> {
        bits(self.observed_mask()).map(|i| self.ids[i].clone()).collect()
    }

    pub fn mask_of(&self, set: &NodeSet) -> Result<Mask> {
        set.iter()
            .try_fold(0, |m, id| Ok(m | bit(self.index_of_checked(id)?)))
    }

    pub fn set_of(&self, m: Mask) -> NodeSet {
        bits(m).map(|i| self.ids[i].clone()).collect()
    }

    /// An(m): m together with all ancestors of its members.
    pub fn ancestors_mask(&self, m: Mask) -> Mask {
        let mut closed = m;
        let mut frontier = m;
        while frontier != 0 {
            let mut next = 0;
            for i in bits(frontier) {
                next |= self.parents[i];
            }
            frontier = next & !closed;
            closed |= next;
        }
        closed
    }

    /// m together with all descendants of its members.
    pub fn descendants_mask(&self, m: Mask) -> Mask {
        let mut closed = m;
        let mut frontier = m;
        while frontier != 0 {
            let mut next = 0;
            for i in bits(frontier) {
                next |= self.children[i];
            }
            frontier = next & !closed;
            closed |= next;
        }
        closed
    }

    /// ch(m): m together with the children of its members.
    pub fn children_closure_mask(&self, m: Mask) -> Mask {
        bits(m).fold(m, |acc, i| acc | self.children[i])
    }

    pub fn inclusive_ancestors(&self, u: &NodeSet) -> Result<NodeSet> {
        Ok(self.set_of(self.ancestors_mask(self.mask_of(u)?)))
    }

    pub fn inclusive_children(&self, u: &NodeSet) -> Result<NodeSet> {
        Ok(self.set_of(self.children_closure_mask(self.mask_of(u)?)))
    }

    /// Kahn's algorithm taking the lowest declaration index among ready nodes.
    fn topo_indices(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut placed: Mask = 0;
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let ready = (0..n).find(|&i| placed & bit(i) == 0 && self.parents[i] & !placed == 0)?;
            placed |= bit(ready);
            order.push(ready);
        }
        Some(order)
    }

    pub fn topological_indices(&self) -> Vec<usize> {
        self.topo_indices()
            .expect("GDag invariant: graphs are acyclic")
    }

    pub fn topological_order(&self) -> Vec<NodeId> {
        self.topological_indices()
            .into_iter()
            .map(|i| self.ids[i].clone())
            .collect()
    }

    /// Weakly connected component containing node `i`.
    pub fn component_mask(&self, i: usize) -> Mask {
        let mut closed = bit(i);
        let mut frontier = closed;
        while frontier != 0 {
            let mut next = 0;
            for j in bits(frontier) {
                next |= self.parents[j] | self.children[j];
            }
            frontier = next & !closed;
            closed |= next;
        }
        closed
    }

    // -- construction of fresh graphs -------------------------------------

    pub fn with_edge_added(&self, p: usize, c: usize) -> Result<GDag> {
        let mut edges = self.edges.clone();
        edges.push((p, c));
        GDag::from_index_edges(self.ids.clone(), self.kinds.clone(), edges)
    }

    pub fn with_edge_removed(&self, p: usize, c: usize) -> Result<GDag> {
        if !self.has_edge(p, c) {
            return Err(Error::InvalidGraph(format!(
                "no edge `{}` -> `{}`",
                self.ids[p], self.ids[c]
            )));
        }
        let edges = self.edges.iter().copied().filter(|&e| e != (p, c)).collect();
        GDag::from_index_edges(self.ids.clone(), self.kinds.clone(), edges)
    }

    /// Induced subgraph on the nodes outside `remove`, preserving relative order.
    pub fn without_nodes(&self, remove: Mask) -> GDag {
        let mut map = vec![usize::MAX; self.len()];
        let mut ids = Vec::new();
        let mut kinds = Vec::new();
        for i in 0..self.len() {
            if remove & bit(i) == 0 {
                map[i] = ids.len();
                ids.push(self.ids[i].clone());
                kinds.push(self.kinds[i]);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(p, c)| remove & (bit(p) | bit(c)) == 0)
            .map(|&(p, c)| (map[p], map[c]))
            .collect();
        GDag::from_index_edges(ids, kinds, edges).expect("subgraph of a DAG is a DAG")
    }

    /// Same graph with every node tagged observed.
    pub fn all_observed(&self) -> GDag {
        let kinds = vec![NodeKind::Observed; self.len()];
        GDag::from_index_edges(self.ids.clone(), kinds, self.edges.clone())
            .expect("retagging keeps acyclicity")
    }

    /// Graph with nodes relabelled by `perm` (node `i` moves to position `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> GDag {
        let n = self.len();
        let mut ids = vec![None; n];
        let mut kinds = vec![NodeKind::Observed; n];
        for i in 0..n {
            ids[perm[i]] = Some(self.ids[i].clone());
            kinds[perm[i]] = self.kinds[i];
        }
        let ids = ids.into_iter().map(|x| x.expect("perm is a bijection")).collect();
        let edges = self.edges.iter().map(|&(p, c)| (perm[p], perm[c])).collect();
        GDag::from_index_edges(ids, kinds, edges).expect("relabelling keeps acyclicity")
    }

    // -- JSON -------------------------------------------------------------

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GDagJson =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        GDag::new(
            raw.nodes.into_iter().map(|n| (n.id, n.kind)).collect(),
            raw.edges,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.json_form()).expect("graph serialization cannot fail")
    }

    fn json_form(&self) -> GDagJson {
        GDagJson {
            nodes: self
                .ids
                .iter()
                .zip(&self.kinds)
                .map(|(id, kind)| NodeJson {
                    id: id.clone(),
                    kind: *kind,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(p, c)| (self.ids[p].clone(), self.ids[c].clone()))
                .collect(),
        }
    }
}

impl Serialize for GDag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.json_form().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GDag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GDagJson::deserialize(d)?;
        GDag::new(raw.nodes.into_iter().map(|n| (n.id, n.kind)).collect(), raw.edges)
            .map_err(serde::de::Error::custom)
    }
}

/// Parses the GDAG JSON format.
pub fn parse_gdag(text: &str) -> Result<GDag> {
    GDag::from_json(text)
}

/// Ids used for generated graphs: `A`..`Z` for up to 26 nodes, `n<i>` beyond.
pub fn default_ids(n: usize) -> Vec<NodeId> {
    (0..n)
        .map(|i| {
            if n <= 26 {
                NodeId(((b'A' + i as u8) as char).to_string())
            } else {
                NodeId(format!("n{i}"))
            }
        })
        .collect()
}

/// Shorthand for building graphs in code and tests:
/// `gdag(&["X", "A", "(L)"], &[("X", "A"), ("L", "A")])`, parenthesised names are unobserved.
pub fn gdag(nodes: &[&str], edges: &[(&str, &str)]) -> Result<GDag> {
    let nodes = nodes
        .iter()
        .map(|s| {
            if let Some(inner) = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
                Ok((NodeId::new(inner)?, NodeKind::Unobserved))
            } else {
                Ok((NodeId::new(*s)?, NodeKind::Observed))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = edges
        .iter()
        .map(|(p, c)| Ok((NodeId::new(*p)?, NodeId::new(*c)?)))
        .collect::<Result<Vec<_>>>()?;
    GDag::new(nodes, edges)
}
