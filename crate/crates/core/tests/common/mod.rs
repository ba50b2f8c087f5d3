//! Shared test support: fixed graphs, an independent d-separation oracle,
//! random GDAGs and classical models, and the property suite itself.

// Each test binary uses a different slice of this module.
#![allow(dead_code)]

pub mod props;

use std::collections::HashMap;

use gdag_core::graph::{bits, Mask};
use gdag_core::models::{ratio, ClassicalGmcModel, ConditionalTable, Distribution, Rational};
use gdag_core::{gdag, GDag, NodeId, NodeKind, NodeSet};
use num_traits::Zero;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn id(s: &str) -> NodeId {
    s.parse().unwrap()
}

pub fn set(ids: &[&str]) -> NodeSet {
    NodeSet::parse(ids.iter().copied()).unwrap()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn bell() -> GDag {
    gdag(&["X", "Y", "A", "B", "(L)"], &[("X", "A"), ("Y", "B"), ("L", "A"), ("L", "B")]).unwrap()
}

pub fn triangle() -> GDag {
    gdag(
        &["A", "B", "C", "(L)", "(M)", "(N)"],
        &[("L", "A"), ("L", "B"), ("M", "B"), ("M", "C"), ("N", "A"), ("N", "C")],
    )
    .unwrap()
}

pub fn instrumental() -> GDag {
    gdag(&["Y", "A", "B", "(L)"], &[("Y", "B"), ("B", "A"), ("L", "A"), ("L", "B")]).unwrap()
}

// -- path-blocking oracle ---------------------------------------------------

/// Textbook d-separation: every simple path in the skeleton between `x` and
/// `y` is blocked by `z`. A path is blocked at a non-collider in `z`, or at a
/// collider none of whose descendants (itself included) is in `z`.
/// Deliberately shares nothing with the library beyond the edge list.
pub fn path_blocking_dsep(g: &GDag, x: Mask, y: Mask, z: Mask) -> bool {
    let n = g.len();
    let mut children = vec![0u64; n];
    let mut parents = vec![0u64; n];
    for &(p, c) in g.edges() {
        children[p] |= 1 << c;
        parents[c] |= 1 << p;
    }
    let mut desc = vec![0u64; n];
    for (i, d) in desc.iter_mut().enumerate() {
        let mut seen = 1u64 << i;
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            for c in 0..n {
                if children[v] >> c & 1 == 1 && seen >> c & 1 == 0 {
                    seen |= 1 << c;
                    stack.push(c);
                }
            }
        }
        *d = seen;
    }
    let neighbours = |v: usize| children[v] | parents[v];
    let blocked_at = |prev: usize, v: usize, next: usize| -> bool {
        let collider = parents[v] >> prev & 1 == 1 && parents[v] >> next & 1 == 1;
        if collider {
            desc[v] & z == 0
        } else {
            z >> v & 1 == 1
        }
    };
    // DFS over simple paths; an open path reaching y refutes separation.
    fn open_path(
        path: &mut Vec<usize>,
        y: Mask,
        n: usize,
        neighbours: &dyn Fn(usize) -> Mask,
        blocked_at: &dyn Fn(usize, usize, usize) -> bool,
    ) -> bool {
        let v = *path.last().unwrap();
        for w in 0..n {
            if neighbours(v) >> w & 1 == 0 || path.contains(&w) {
                continue;
            }
            if path.len() >= 2 && blocked_at(path[path.len() - 2], v, w) {
                continue;
            }
            if y >> w & 1 == 1 {
                return true;
            }
            path.push(w);
            let found = open_path(path, y, n, neighbours, blocked_at);
            path.pop();
            if found {
                return true;
            }
        }
        false
    }
    for s in 0..n {
        if x >> s & 1 == 1 && open_path(&mut vec![s], y, n, &neighbours, &blocked_at) {
            return false;
        }
    }
    true
}

/// Every `(x, y, z)` of disjoint subsets of `within` with `x`, `y` nonempty
/// and the lowest node of `x` below that of `y`.
pub fn disjoint_triples(within: Mask) -> Vec<(Mask, Mask, Mask)> {
    let nodes: Vec<usize> = bits(within).collect();
    let mut out = Vec::new();
    let total = 4usize.pow(nodes.len() as u32);
    for code in 0..total {
        let (mut x, mut y, mut z) = (0u64, 0u64, 0u64);
        let mut c = code;
        for &v in &nodes {
            match c % 4 {
                1 => x |= 1 << v,
                2 => y |= 1 << v,
                3 => z |= 1 << v,
                _ => {}
            }
            c /= 4;
        }
        if x != 0 && y != 0 && x.trailing_zeros() < y.trailing_zeros() {
            out.push((x, y, z));
        }
    }
    out
}

// -- random graphs ------------------------------------------------------------

/// Random GDAG on `n` nodes with shuffled labels.
pub fn random_gdag(rng: &mut impl Rng, n: usize, p_unobserved: f64, p_edge: f64) -> GDag {
    let kinds: Vec<NodeKind> = (0..n)
        .map(|_| if rng.gen_bool(p_unobserved) { NodeKind::Unobserved } else { NodeKind::Observed })
        .collect();
    let parents: Vec<Mask> = (0..n)
        .map(|c| (0..c).filter(|_| rng.gen_bool(p_edge)).fold(0, |m, p| m | 1 << p))
        .collect();
    let g = GDag::from_kinds_and_parents(&kinds, &parents).unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    g.permuted(&perm)
}

/// Strategy over GDAGs with `1..=max_n` nodes.
pub fn arb_gdag(max_n: usize) -> impl Strategy<Value = GDag> {
    (1..=max_n, any::<u64>()).prop_map(|(n, seed)| random_gdag(&mut rng(seed), n, 0.4, 0.5))
}

pub fn arb_gdag_with_observed(max_n: usize) -> impl Strategy<Value = GDag> {
    arb_gdag(max_n).prop_filter("needs an observed node", |g| g.observed_mask() != 0)
}

// -- random models ------------------------------------------------------------

/// Kernel layout of a node: the documented convention, recomputed here.
#[derive(Clone, Debug)]
pub struct Layout {
    pub in_edges: Vec<usize>,
    pub obs_parents: Vec<usize>,
    pub out_edges: Vec<usize>,
    pub in_cards: Vec<usize>,
    pub out_cards: Vec<usize>,
}

impl Layout {
    pub fn rows(&self) -> usize {
        self.in_cards.iter().product()
    }

    pub fn width(&self) -> usize {
        self.out_cards.iter().product()
    }
}

/// `edge_cards[e]` is the message size on edge `e` (ignored for observed sources).
pub fn layout(g: &GDag, edge_cards: &[usize], outcomes: &[usize], i: usize) -> Layout {
    let in_edges: Vec<usize> = (0..g.edge_count())
        .filter(|&e| g.edges()[e].1 == i && !g.is_observed(g.edges()[e].0))
        .collect();
    let obs_parents: Vec<usize> = (0..g.len()).filter(|&p| g.has_edge(p, i) && g.is_observed(p)).collect();
    let out_edges: Vec<usize> = if g.is_observed(i) {
        Vec::new()
    } else {
        (0..g.edge_count()).filter(|&e| g.edges()[e].0 == i).collect()
    };
    let in_cards = in_edges
        .iter()
        .map(|&e| edge_cards[e])
        .chain(obs_parents.iter().map(|&p| outcomes[p]))
        .collect();
    let out_cards = std::iter::once(outcomes[i]).chain(out_edges.iter().map(|&e| edge_cards[e])).collect();
    Layout { in_edges, obs_parents, out_edges, in_cards, out_cards }
}

pub fn encode(values: &[usize], cards: &[usize]) -> usize {
    values.iter().zip(cards).fold(0, |acc, (&v, &c)| acc * c + v)
}

pub fn decode(mut idx: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        out[k] = idx % cards[k];
        idx /= cards[k];
    }
    out
}

/// Random probability vector: sometimes deterministic, otherwise small
/// integer weights (zeros allowed), normalised exactly.
pub fn random_row(rng: &mut (impl Rng + ?Sized), width: usize) -> Vec<Rational> {
    if rng.gen_bool(0.25) {
        let hot = rng.gen_range(0..width);
        return (0..width).map(|k| ratio((k == hot) as i64, 1)).collect();
    }
    positive_row(rng, width, 0)
}

/// Integer weights in `lo..=4`, at least one nonzero, normalised.
pub fn positive_row(rng: &mut (impl Rng + ?Sized), width: usize, lo: i64) -> Vec<Rational> {
    loop {
        let w: Vec<i64> = (0..width).map(|_| rng.gen_range(lo..=4)).collect();
        let total: i64 = w.iter().sum();
        if total > 0 {
            return w.into_iter().map(|v| ratio(v, total)).collect();
        }
    }
}

/// Outcome counts and latent message sizes for a model on `g`.
pub struct Shape {
    pub outcomes: Vec<usize>,
    /// Per edge, in graph edge order; 1 on edges leaving observed nodes.
    pub edge_cards: Vec<usize>,
}

impl Shape {
    pub fn random(rng: &mut impl Rng, g: &GDag, max_outcomes: usize, max_message: usize, budget: usize) -> Self {
        let outcomes = (0..g.len())
            .map(|i| if g.is_observed(i) { rng.gen_range(1..=max_outcomes) } else { 1 })
            .collect();
        let mut edge_cards: Vec<usize> = g
            .edges()
            .iter()
            .map(|&(p, _)| if g.is_observed(p) { 1 } else { rng.gen_range(1..=max_message) })
            .collect();
        // Keep the latent state space small enough to enumerate quickly.
        while edge_cards.iter().product::<usize>() > budget {
            let big = (0..edge_cards.len()).max_by_key(|&e| edge_cards[e]).unwrap();
            edge_cards[big] -= 1;
        }
        Shape { outcomes, edge_cards }
    }

    pub fn card_map(&self, g: &GDag) -> HashMap<(NodeId, NodeId), usize> {
        g.edges()
            .iter()
            .zip(&self.edge_cards)
            .filter(|((p, _), _)| !g.is_observed(*p))
            .map(|(&(p, c), &k)| ((g.id(p).clone(), g.id(c).clone()), k))
            .collect()
    }

    pub fn layout(&self, g: &GDag, i: usize) -> Layout {
        layout(g, &self.edge_cards, &self.outcomes, i)
    }
}

/// A classical model whose kernel rows come from `row(rng, node, width)`.
pub fn model_with(
    rng: &mut impl Rng,
    g: &GDag,
    shape: &Shape,
    mut row: impl FnMut(&mut dyn rand::RngCore, usize, usize) -> Vec<Rational>,
) -> ClassicalGmcModel {
    let widths: Vec<usize> = (0..g.len()).map(|i| shape.layout(g, i).width()).collect();
    ClassicalGmcModel::from_fn(g.clone(), &shape.card_map(g), &shape.outcomes, |i, _| row(&mut *rng, i, widths[i]))
        .unwrap()
}

pub fn random_model(rng: &mut impl Rng, g: &GDag, max_outcomes: usize, max_message: usize) -> ClassicalGmcModel {
    let shape = Shape::random(rng, g, max_outcomes, max_message, 81);
    model_with(rng, g, &shape, |r, _, w| random_row(r, w))
}

/// Random joint over the given variables.
pub fn random_distribution(rng: &mut impl Rng, vars: Vec<(NodeId, usize)>) -> Distribution {
    let size = vars.iter().map(|v| v.1).product();
    Distribution::new(vars, random_row(rng, size)).unwrap()
}

/// `P(a, b | y)` from a joint with `P(y) > 0` everywhere.
pub fn family(p: &Distribution, y: &str, a: &str, b: &str) -> ConditionalTable {
    let pos = |s: &str| p.variables().iter().position(|v| v.as_str() == s).unwrap();
    let (py, pa, pb) = (pos(y), pos(a), pos(b));
    let cards = p.cards();
    let mut t = vec![0; cards.len()];
    let mut probs = Vec::new();
    for yv in 0..cards[py] {
        let mut slice = Vec::new();
        for av in 0..cards[pa] {
            for bv in 0..cards[pb] {
                t[py] = yv;
                t[pa] = av;
                t[pb] = bv;
                slice.push(p.prob(&t).clone());
            }
        }
        let total: Rational = slice.iter().sum();
        assert!(!total.is_zero(), "P(y) must be positive");
        probs.extend(slice.into_iter().map(|v| v / &total));
    }
    ConditionalTable::new(
        vec![(id(y), cards[py])],
        vec![(id(a), cards[pa]), (id(b), cards[pb])],
        probs,
    )
    .unwrap()
}

/// Model where every parentless unobserved node draws one value of size up
/// to `max_latent` and sends it to all its children; observed nodes get
/// random kernels.
pub fn shared_latent_model(rng: &mut impl Rng, g: &GDag, max_outcomes: usize, max_latent: usize) -> ClassicalGmcModel {
    let latent: Vec<usize> = (0..g.len()).map(|i| if g.is_observed(i) { 1 } else { rng.gen_range(1..=max_latent) }).collect();
    let outcomes = (0..g.len())
        .map(|i| if g.is_observed(i) { rng.gen_range(2..=max_outcomes) } else { 1 })
        .collect();
    let edge_cards = g.edges().iter().map(|&(p, _)| latent[p]).collect();
    let shape = Shape { outcomes, edge_cards };
    let fanout: Vec<usize> = (0..g.len()).map(|i| g.children_mask(i).count_ones() as usize).collect();
    model_with(rng, g, &shape, |r, i, w| {
        if g.is_observed(i) {
            return random_row(r, w);
        }
        assert_eq!(g.parents_mask(i), 0, "latent sources only");
        let weights = positive_row(r, latent[i], 0);
        let mut row = vec![Rational::zero(); w];
        for (v, q) in weights.into_iter().enumerate() {
            // the same value on every outgoing edge
            let col = (0..fanout[i]).fold(0, |acc, _| acc * latent[i] + v);
            row[col] = q;
        }
        row
    })
}

/// Random classical triangle distribution over A, B, C.
pub fn triangle_distribution(rng: &mut impl Rng) -> Distribution {
    shared_latent_model(rng, &triangle(), 3, 4).observed_distribution().unwrap()
}

/// Random classical instrumental distribution with every `y` possible.
pub fn instrumental_distribution(rng: &mut impl Rng) -> Distribution {
    loop {
        let p = shared_latent_model(rng, &instrumental(), 3, 4).observed_distribution().unwrap();
        let y = p.marginal(&set(&["Y"])).unwrap();
        if y.probs().iter().all(|q| !q.is_zero()) {
            return p;
        }
    }
}
