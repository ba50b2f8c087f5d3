//! Exact-rational classical models: Markov factorisation on all-observed DAGs,
//! classical generalised-Markov models on GDAGs (latent messages on the edges
//! leaving unobserved nodes), conditional-independence tests and entropies.

use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dsep::{observable_ci_set, CIStatement};
use crate::error::{Error, Result};
use crate::graph::{bit, bits, GDag, Mask, NodeId, NodeSet};

pub type Rational = BigRational;

/// Parses `"num/den"` or `"num"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    s.trim()
        .parse::<Rational>()
        .map_err(|e| Error::Parse(format!("bad rational `{s}`: {e}")))
}

pub fn rational_string(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Row-major strides: the last variable varies fastest.
fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

/// Decodes a row-major index into an outcome tuple.
fn decode(mut idx: usize, cards: &[usize], out: &mut [usize]) {
    for i in (0..cards.len()).rev() {
        out[i] = idx % cards[i];
        idx /= cards[i];
    }
}

fn checked_size(cards: &[usize]) -> Result<usize> {
    cards.iter().try_fold(1usize, |acc, &c| {
        if c == 0 {
            return Err(Error::InvalidDistribution("cardinality must be at least 1".into()));
        }
        acc.checked_mul(c)
            .ok_or_else(|| Error::SizeLimit("outcome table too large".into()))
    })
}

/// Joint distribution over named finite variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    vars: Vec<NodeId>,
    cards: Vec<usize>,
    probs: Vec<Rational>,
}

#[derive(Serialize, Deserialize)]
struct VarJson {
    id: NodeId,
    card: usize,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    variables: Vec<VarJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    given: Vec<VarJson>,
    probs: Vec<String>,
}

impl Distribution {
    pub fn new(vars: Vec<(NodeId, usize)>, probs: Vec<Rational>) -> Result<Self> {
        let (vars, cards): (Vec<_>, Vec<_>) = vars.into_iter().unzip();
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(Error::InvalidDistribution(format!("duplicate variable `{v}`")));
            }
        }
        let size = checked_size(&cards)?;
        if probs.len() != size {
            return Err(Error::InvalidDistribution(format!(
                "expected {size} probabilities, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(Signed::is_negative) {
            return Err(Error::InvalidDistribution("negative probability".into()));
        }
        let total: Rational = probs.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {}",
                rational_string(&total)
            )));
        }
        Ok(Distribution { vars, cards, probs })
    }

    /// Builds a distribution from a weight function over outcome tuples.
    pub fn from_fn(vars: Vec<(NodeId, usize)>, f: impl Fn(&[usize]) -> Rational) -> Result<Self> {
        let cards: Vec<usize> = vars.iter().map(|v| v.1).collect();
        let size = checked_size(&cards)?;
        let mut t = vec![0; cards.len()];
        let probs = (0..size)
            .map(|i| {
                decode(i, &cards, &mut t);
                f(&t)
            })
            .collect();
        Distribution::new(vars, probs)
    }

    pub fn variables(&self) -> &[NodeId] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn card_of(&self, id: &NodeId) -> Option<usize> {
        self.position(id).map(|i| self.cards[i])
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn prob(&self, outcome: &[usize]) -> &Rational {
        let idx = outcome
            .iter()
            .zip(strides(&self.cards))
            .map(|(o, s)| o * s)
            .sum::<usize>();
        &self.probs[idx]
    }

    fn position(&self, id: &NodeId) -> Option<usize> {
        self.vars.iter().position(|v| v == id)
    }

    fn positions(&self, set: &NodeSet) -> Result<Vec<usize>> {
        let mut pos: Vec<usize> = set
            .iter()
            .map(|id| self.position(id).ok_or_else(|| Error::UnknownNode(id.to_string())))
            .collect::<Result<_>>()?;
        pos.sort_unstable();
        Ok(pos)
    }

    /// Marginal table over variable positions `keep` (ascending), as a flat vector.
    fn marginal_table(&self, keep: &[usize]) -> Vec<Rational> {
        let kc: Vec<usize> = keep.iter().map(|&i| self.cards[i]).collect();
        let ks = strides(&kc);
        let mut out = vec![Rational::zero(); kc.iter().product()];
        let mut t = vec![0; self.cards.len()];
        for (i, p) in self.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            decode(i, &self.cards, &mut t);
            let j: usize = keep.iter().zip(&ks).map(|(&v, s)| t[v] * s).sum();
            out[j] += p;
        }
        out
    }

    /// Marginal over a subset, variables kept in declaration order.
    pub fn marginal(&self, set: &NodeSet) -> Result<Distribution> {
        let keep = self.positions(set)?;
        let probs = self.marginal_table(&keep);
        Ok(Distribution {
            vars: keep.iter().map(|&i| self.vars[i].clone()).collect(),
            cards: keep.iter().map(|&i| self.cards[i]).collect(),
            probs,
        })
    }

    /// Shannon entropy in bits of the marginal on `set`.
    pub fn entropy(&self, set: &NodeSet) -> Result<f64> {
        let keep = self.positions(set)?;
        Ok(entropy_of(&self.marginal_table(&keep)))
    }

    pub(crate) fn entropy_of_positions(&self, keep: &[usize]) -> f64 {
        entropy_of(&self.marginal_table(keep))
    }

    pub fn to_json(&self) -> String {
        let raw = TableJson {
            variables: self
                .vars
                .iter()
                .zip(&self.cards)
                .map(|(id, &card)| VarJson { id: id.clone(), card })
                .collect(),
            given: Vec::new(),
            probs: self.probs.iter().map(rational_string).collect(),
        };
        serde_json::to_string(&raw).expect("distribution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TableJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if !raw.given.is_empty() {
            return Err(Error::InvalidDistribution(
                "expected a joint distribution, found a conditional table".into(),
            ));
        }
        let probs = raw.probs.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?;
        Distribution::new(raw.variables.into_iter().map(|v| (v.id, v.card)).collect(), probs)
    }
}

fn entropy_of(table: &[Rational]) -> f64 {
    table
        .iter()
        .filter(|p| !p.is_zero())
        .map(|p| {
            let q = p.to_f64().unwrap_or(0.0);
            -q * q.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Family of distributions over `variables` indexed by the outcomes of `given`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalTable {
    given: Vec<(NodeId, usize)>,
    vars: Vec<(NodeId, usize)>,
    /// Row-major over `given` then `vars`: one contiguous slice per given tuple.
    probs: Vec<Rational>,
}

impl ConditionalTable {
    pub fn new(
        given: Vec<(NodeId, usize)>,
        vars: Vec<(NodeId, usize)>,
        probs: Vec<Rational>,
    ) -> Result<Self> {
        let gc: Vec<usize> = given.iter().map(|v| v.1).collect();
        let vc: Vec<usize> = vars.iter().map(|v| v.1).collect();
        let rows = checked_size(&gc)?;
        let width = checked_size(&vc)?;
        if probs.len() != rows * width {
            return Err(Error::InvalidDistribution(format!(
                "expected {} probabilities, got {}",
                rows * width,
                probs.len()
            )));
        }
        if probs.iter().any(Signed::is_negative) {
            return Err(Error::InvalidDistribution("negative probability".into()));
        }
        for r in 0..rows {
            let s: Rational = probs[r * width..(r + 1) * width].iter().sum();
            if !s.is_one() {
                return Err(Error::InvalidDistribution(format!(
                    "conditional slice {r} sums to {}",
                    rational_string(&s)
                )));
            }
        }
        Ok(ConditionalTable { given, vars, probs })
    }

    pub fn from_fn(
        given: Vec<(NodeId, usize)>,
        vars: Vec<(NodeId, usize)>,
        f: impl Fn(&[usize], &[usize]) -> Rational,
    ) -> Result<Self> {
        let gc: Vec<usize> = given.iter().map(|v| v.1).collect();
        let vc: Vec<usize> = vars.iter().map(|v| v.1).collect();
        let rows = checked_size(&gc)?;
        let width = checked_size(&vc)?;
        let (mut g, mut v) = (vec![0; gc.len()], vec![0; vc.len()]);
        let mut probs = Vec::with_capacity(rows * width);
        for r in 0..rows {
            decode(r, &gc, &mut g);
            for c in 0..width {
                decode(c, &vc, &mut v);
                probs.push(f(&g, &v));
            }
        }
        ConditionalTable::new(given, vars, probs)
    }

    pub fn given(&self) -> &[(NodeId, usize)] {
        &self.given
    }

    pub fn variables(&self) -> &[(NodeId, usize)] {
        &self.vars
    }

    pub fn rows(&self) -> usize {
        self.given.iter().map(|v| v.1).product()
    }

    pub fn width(&self) -> usize {
        self.vars.iter().map(|v| v.1).product()
    }

    /// The conditional slice for the given-tuple with row-major index `row`.
    pub fn slice(&self, row: usize) -> &[Rational] {
        let w = self.width();
        &self.probs[row * w..(row + 1) * w]
    }

    pub fn to_json(&self) -> String {
        let conv = |v: &[(NodeId, usize)]| {
            v.iter()
                .map(|(id, card)| VarJson { id: id.clone(), card: *card })
                .collect()
        };
        let raw = TableJson {
            variables: conv(&self.vars),
            given: conv(&self.given),
            probs: self.probs.iter().map(rational_string).collect(),
        };
        serde_json::to_string(&raw).expect("table serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TableJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let probs = raw.probs.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?;
        ConditionalTable::new(
            raw.given.into_iter().map(|v| (v.id, v.card)).collect(),
            raw.variables.into_iter().map(|v| (v.id, v.card)).collect(),
            probs,
        )
    }
}

/// Conditional probability table `P(node | given)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cpt {
    pub node: NodeId,
    pub card: usize,
    pub table: ConditionalTable,
}

impl Cpt {
    pub fn new(
        node: NodeId,
        card: usize,
        given: Vec<(NodeId, usize)>,
        probs: Vec<Rational>,
    ) -> Result<Self> {
        let table = ConditionalTable::new(given, vec![(node.clone(), card)], probs)?;
        Ok(Cpt { node, card, table })
    }

    pub fn from_fn(
        node: NodeId,
        card: usize,
        given: Vec<(NodeId, usize)>,
        f: impl Fn(&[usize], usize) -> Rational,
    ) -> Result<Self> {
        let table = ConditionalTable::from_fn(given, vec![(node.clone(), card)], |g, v| f(g, v[0]))?;
        Ok(Cpt { node, card, table })
    }
}

/// `P(x1..xn) = Π P(xi | pa(xi))` on an all-observed DAG, exactly.
pub fn joint_from_markov(dag: &GDag, cpts: &[Cpt]) -> Result<Distribution> {
    if dag.unobserved_mask() != 0 {
        return Err(Error::InvalidModel(
            "Markov factorisation needs an all-observed DAG".into(),
        ));
    }
    let n = dag.len();
    let mut by_node: Vec<Option<&Cpt>> = vec![None; n];
    for cpt in cpts {
        let i = dag.index_of_checked(&cpt.node)?;
        if by_node[i].replace(cpt).is_some() {
            return Err(Error::InvalidModel(format!("two CPTs for `{}`", cpt.node)));
        }
    }
    let mut cards = vec![0; n];
    let mut layouts = Vec::with_capacity(n);
    for i in 0..n {
        let cpt = by_node[i].ok_or_else(|| Error::InvalidModel(format!("no CPT for `{}`", dag.id(i))))?;
        cards[i] = cpt.card;
        let mut seen: Mask = 0;
        let mut parent_idx = Vec::new();
        for (id, _) in cpt.table.given() {
            let p = dag.index_of_checked(id)?;
            seen |= bit(p);
            parent_idx.push(p);
        }
        if seen != dag.parents_mask(i) || parent_idx.len() != dag.parents_mask(i).count_ones() as usize {
            return Err(Error::InvalidModel(format!(
                "CPT for `{}` does not condition on exactly its parents",
                dag.id(i)
            )));
        }
        layouts.push(parent_idx);
    }
    for i in 0..n {
        let cpt = by_node[i].expect("checked above");
        for ((_, c), &p) in cpt.table.given().iter().zip(&layouts[i]) {
            if *c != cards[p] {
                return Err(Error::InvalidModel(format!(
                    "CPT for `{}` assumes card {c} for `{}`",
                    dag.id(i),
                    dag.id(p)
                )));
            }
        }
    }
    let vars = dag.ids().iter().cloned().zip(cards.iter().copied()).collect();
    Distribution::from_fn(vars, |t| {
        let mut prod = Rational::one();
        for i in 0..n {
            let cpt = by_node[i].expect("checked above");
            let mut row = 0;
            for &p in &layouts[i] {
                row = row * cards[p] + t[p];
            }
            prod *= &cpt.table.slice(row)[t[i]];
            if prod.is_zero() {
                break;
            }
        }
        prod
    })
}

/// Per-node kernel `p(output, outgoing messages | incoming messages, observed parents)`.
///
/// Row layout: incoming unobserved edges in graph edge order, then observed
/// parents in declaration order. Column layout: the node's output, then its
/// outgoing edges in graph edge order (unobserved nodes only; their output has
/// a single value).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeKernel {
    pub outcomes: usize,
    pub probs: Vec<Rational>,
}

#[derive(Clone, Debug)]
struct KernelLayout {
    in_edges: Vec<usize>,
    obs_parents: Vec<usize>,
    out_edges: Vec<usize>,
    in_cards: Vec<usize>,
    out_cards: Vec<usize>,
}

/// Classical generalised-Markov model on a GDAG with finite latent messages.
#[derive(Clone, Debug)]
pub struct ClassicalGmcModel {
    gdag: GDag,
    /// Cardinality of the message on each edge (1 for edges leaving observed nodes).
    edge_cards: Vec<usize>,
    kernels: Vec<NodeKernel>,
    layouts: Vec<KernelLayout>,
}

impl ClassicalGmcModel {
    /// `edge_cards` maps each edge leaving an unobserved node to its message size.
    pub fn new(
        gdag: GDag,
        edge_cards: &HashMap<(NodeId, NodeId), usize>,
        kernels: Vec<NodeKernel>,
    ) -> Result<Self> {
        let cards = Self::resolve_edge_cards(&gdag, edge_cards)?;
        let outcomes: Vec<usize> = kernels.iter().map(|k| k.outcomes).collect();
        let layouts = Self::layouts(&gdag, &cards, &outcomes)?;
        if kernels.len() != gdag.len() {
            return Err(Error::InvalidModel("one kernel per node is required".into()));
        }
        for (i, (k, l)) in kernels.iter().zip(&layouts).enumerate() {
            let rows: usize = l.in_cards.iter().product();
            let width: usize = l.out_cards.iter().product();
            if k.probs.len() != rows * width {
                return Err(Error::InvalidModel(format!(
                    "kernel of `{}` has {} entries, expected {}",
                    gdag.id(i),
                    k.probs.len(),
                    rows * width
                )));
            }
            if k.probs.iter().any(Signed::is_negative) {
                return Err(Error::InvalidModel(format!("negative entry in kernel of `{}`", gdag.id(i))));
            }
            for r in 0..rows {
                let s: Rational = k.probs[r * width..(r + 1) * width].iter().sum();
                if !s.is_one() {
                    return Err(Error::InvalidModel(format!(
                        "kernel slice {r} of `{}` sums to {}",
                        gdag.id(i),
                        rational_string(&s)
                    )));
                }
            }
        }
        Ok(ClassicalGmcModel {
            gdag,
            edge_cards: cards,
            kernels,
            layouts,
        })
    }

    /// Builds kernels from a function returning the full output row for a node
    /// and an input tuple laid out as documented on [`NodeKernel`].
    pub fn from_fn(
        gdag: GDag,
        edge_cards: &HashMap<(NodeId, NodeId), usize>,
        outcomes: &[usize],
        mut row: impl FnMut(usize, &[usize]) -> Vec<Rational>,
    ) -> Result<Self> {
        let cards = Self::resolve_edge_cards(&gdag, edge_cards)?;
        let layouts = Self::layouts(&gdag, &cards, outcomes)?;
        let mut kernels = Vec::with_capacity(gdag.len());
        for (i, l) in layouts.iter().enumerate() {
            let rows: usize = l.in_cards.iter().product();
            let mut t = vec![0; l.in_cards.len()];
            let mut probs = Vec::new();
            for r in 0..rows {
                decode(r, &l.in_cards, &mut t);
                probs.extend(row(i, &t));
            }
            kernels.push(NodeKernel {
                outcomes: outcomes[i],
                probs,
            });
        }
        Self::new(gdag, edge_cards, kernels)
    }

    fn resolve_edge_cards(g: &GDag, given: &HashMap<(NodeId, NodeId), usize>) -> Result<Vec<usize>> {
        let mut cards = Vec::with_capacity(g.edge_count());
        for &(p, c) in g.edges() {
            if g.is_observed(p) {
                cards.push(1);
                continue;
            }
            let key = (g.id(p).clone(), g.id(c).clone());
            let card = *given.get(&key).ok_or_else(|| {
                Error::InvalidModel(format!("no message cardinality for edge `{}` -> `{}`", key.0, key.1))
            })?;
            if card == 0 {
                return Err(Error::InvalidModel("message cardinality must be at least 1".into()));
            }
            cards.push(card);
        }
        for (p, c) in given.keys() {
            let (pi, ci) = (g.index_of_checked(p)?, g.index_of_checked(c)?);
            if !g.has_edge(pi, ci) || g.is_observed(pi) {
                return Err(Error::InvalidModel(format!(
                    "`{p}` -> `{c}` is not an edge leaving an unobserved node"
                )));
            }
        }
        Ok(cards)
    }

    fn layouts(g: &GDag, edge_cards: &[usize], outcomes: &[usize]) -> Result<Vec<KernelLayout>> {
        if outcomes.len() != g.len() {
            return Err(Error::InvalidModel("one outcome count per node is required".into()));
        }
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let observed = g.is_observed(i);
            if !observed && outcomes[i] != 1 {
                return Err(Error::InvalidModel(format!(
                    "unobserved node `{}` must have a single outcome",
                    g.id(i)
                )));
            }
            if outcomes[i] == 0 {
                return Err(Error::InvalidModel("outcome count must be at least 1".into()));
            }
            let in_edges: Vec<usize> = (0..g.edge_count())
                .filter(|&e| g.edges()[e].1 == i && !g.is_observed(g.edges()[e].0))
                .collect();
            let obs_parents: Vec<usize> = bits(g.parents_mask(i) & g.observed_mask()).collect();
            let out_edges: Vec<usize> = if observed {
                Vec::new()
            } else {
                (0..g.edge_count()).filter(|&e| g.edges()[e].0 == i).collect()
            };
            let in_cards = in_edges
                .iter()
                .map(|&e| edge_cards[e])
                .chain(obs_parents.iter().map(|&p| outcomes[p]))
                .collect();
            let out_cards = std::iter::once(outcomes[i])
                .chain(out_edges.iter().map(|&e| edge_cards[e]))
                .collect();
            out.push(KernelLayout {
                in_edges,
                obs_parents,
                out_edges,
                in_cards,
                out_cards,
            });
        }
        Ok(out)
    }

    pub fn gdag(&self) -> &GDag {
        &self.gdag
    }

    pub fn outcomes(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k.outcomes).collect()
    }

    /// Cardinality of the message carried by edge number `e`.
    pub fn edge_card(&self, e: usize) -> usize {
        self.edge_cards[e]
    }

    /// Input cardinalities of node `i`'s kernel rows.
    pub fn input_cards(&self, i: usize) -> &[usize] {
        &self.layouts[i].in_cards
    }

    /// Output cardinalities of node `i`'s kernel columns.
    pub fn output_cards(&self, i: usize) -> &[usize] {
        &self.layouts[i].out_cards
    }

    /// Sums the product of kernels over every latent message assignment.
    pub fn observed_distribution(&self) -> Result<Distribution> {
        let g = &self.gdag;
        let order = g.topological_indices();
        let obs: Vec<usize> = bits(g.observed_mask()).collect();
        let obs_cards: Vec<usize> = obs.iter().map(|&i| self.kernels[i].outcomes).collect();
        let obs_strides = strides(&obs_cards);
        let mut obs_pos = vec![usize::MAX; g.len()];
        for (k, &i) in obs.iter().enumerate() {
            obs_pos[i] = k;
        }
        let mut acc = vec![Rational::zero(); checked_size(&obs_cards)?];
        let mut outputs = vec![0usize; g.len()];
        let mut messages = vec![0usize; g.edge_count()];
        let mut ctx = Walk {
            model: self,
            order: &order,
            obs_pos: &obs_pos,
            obs_strides: &obs_strides,
            acc: &mut acc,
        };
        ctx.visit(0, Rational::one(), &mut outputs, &mut messages);
        let vars = obs
            .iter()
            .map(|&i| (g.id(i).clone(), self.kernels[i].outcomes))
            .collect();
        Distribution::new(vars, acc)
    }

    /// The underlying classical Bayesian network: every node observed, an
    /// unobserved node's variable being the tuple of its outgoing messages.
    pub fn underlying_network(&self) -> Result<(GDag, Vec<Cpt>)> {
        let g = &self.gdag;
        let dag = g.all_observed();
        let var_card: Vec<usize> = (0..g.len())
            .map(|i| {
                if g.is_observed(i) {
                    self.kernels[i].outcomes
                } else {
                    self.layouts[i].out_cards[1..].iter().product()
                }
            })
            .collect();
        let mut cpts = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let parents: Vec<usize> = bits(g.parents_mask(i)).collect();
            let given = parents.iter().map(|&p| (g.id(p).clone(), var_card[p])).collect();
            let l = &self.layouts[i];
            let kernel = &self.kernels[i];
            let width: usize = l.out_cards.iter().product();
            let cpt = Cpt::from_fn(g.id(i).clone(), var_card[i], given, |pv, v| {
                // kernel row index from parent variable values
                let mut row = 0;
                for (k, &e) in l.in_edges.iter().enumerate() {
                    let (src, _) = g.edges()[e];
                    let slot = self.layouts[src].out_edges.iter().position(|&x| x == e).expect("edge leaves src");
                    let pi = parents.iter().position(|&p| p == src).expect("src is a parent");
                    let mut msg = vec![0; self.layouts[src].out_cards.len() - 1];
                    decode(pv[pi], &self.layouts[src].out_cards[1..], &mut msg);
                    row = row * l.in_cards[k] + msg[slot];
                }
                for (k, &p) in l.obs_parents.iter().enumerate() {
                    let pi = parents.iter().position(|&q| q == p).expect("observed parent");
                    row = row * l.in_cards[l.in_edges.len() + k] + pv[pi];
                }
                // column: observed output alone, or output 0 followed by the message tuple
                kernel.probs[row * width + v].clone()
            })?;
            cpts.push(cpt);
        }
        Ok((dag, cpts))
    }
}

struct Walk<'a> {
    model: &'a ClassicalGmcModel,
    order: &'a [usize],
    obs_pos: &'a [usize],
    obs_strides: &'a [usize],
    acc: &'a mut [Rational],
}

impl Walk<'_> {
    fn visit(&mut self, step: usize, weight: Rational, outputs: &mut [usize], messages: &mut [usize]) {
        if step == self.order.len() {
            let idx: usize = (0..outputs.len())
                .filter(|&i| self.obs_pos[i] != usize::MAX)
                .map(|i| outputs[i] * self.obs_strides[self.obs_pos[i]])
                .sum();
            self.acc[idx] += weight;
            return;
        }
        let i = self.order[step];
        let l = &self.model.layouts[i];
        let mut row = 0;
        for (k, &e) in l.in_edges.iter().enumerate() {
            row = row * l.in_cards[k] + messages[e];
        }
        for (k, &p) in l.obs_parents.iter().enumerate() {
            row = row * l.in_cards[l.in_edges.len() + k] + outputs[p];
        }
        let width: usize = l.out_cards.iter().product();
        let slice = &self.model.kernels[i].probs[row * width..(row + 1) * width];
        let mut cols = vec![0; l.out_cards.len()];
        for (c, p) in slice.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            decode(c, &l.out_cards, &mut cols);
            outputs[i] = cols[0];
            for (k, &e) in l.out_edges.iter().enumerate() {
                messages[e] = cols[k + 1];
            }
            self.visit(step + 1, &weight * p, outputs, messages);
        }
    }
}

pub fn observed_from_classical_gmc(model: &ClassicalGmcModel) -> Result<Distribution> {
    model.observed_distribution()
}

/// Exact test of `P(x,y,z)·P(z) = P(x,z)·P(y,z)` for every outcome.
pub fn is_conditionally_independent(
    p: &Distribution,
    x: &NodeSet,
    y: &NodeSet,
    z: &NodeSet,
) -> Result<bool> {
    for (a, b) in [(x, y), (x, z), (y, z)] {
        if let Some(id) = a.intersection(b).iter().next() {
            return Err(Error::Overlap(id.to_string()));
        }
    }
    let xs = p.positions(x)?;
    let ys = p.positions(y)?;
    let zs = p.positions(z)?;
    let mut all: Vec<usize> = xs.iter().chain(&ys).chain(&zs).copied().collect();
    all.sort_unstable();
    let joint = p.marginal_table(&all);
    let cards: Vec<usize> = all.iter().map(|&i| p.cards[i]).collect();

    let sub = |part: &[usize]| -> (Vec<Rational>, Vec<usize>) {
        // positions within `all` belonging to `part`, in ascending order
        let mut pos: Vec<usize> = part.iter().map(|v| all.iter().position(|a| a == v).expect("member")).collect();
        pos.sort_unstable();
        let table = p.marginal_table(&pos.iter().map(|&k| all[k]).collect::<Vec<_>>());
        (table, pos)
    };
    let xz: Vec<usize> = xs.iter().chain(&zs).copied().collect();
    let yz: Vec<usize> = ys.iter().chain(&zs).copied().collect();
    let (pz, zpos) = sub(&zs);
    let (pxz, xzpos) = sub(&xz);
    let (pyz, yzpos) = sub(&yz);

    let index = |t: &[usize], pos: &[usize]| -> usize {
        pos.iter().fold(0, |acc, &k| acc * cards[k] + t[k])
    };
    let mut t = vec![0; all.len()];
    for (i, pj) in joint.iter().enumerate() {
        decode(i, &cards, &mut t);
        let lhs = pj * &pz[index(&t, &zpos)];
        let rhs = &pxz[index(&t, &xzpos)] * &pyz[index(&t, &yzpos)];
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of checking a distribution against a GDAG's observable independences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IReport {
    pub holds: bool,
    pub violated: Vec<CIStatement>,
}

/// Checks every observable d-separation statement of `g` against `p`.
pub fn satisfies_i(g: &GDag, p: &Distribution) -> Result<IReport> {
    let mut want = g.observed_ids();
    let mut have = p.variables().to_vec();
    want.sort();
    have.sort();
    if want != have {
        return Err(Error::InvalidDistribution(
            "distribution variables must be exactly the observed nodes".into(),
        ));
    }
    let mut violated = Vec::new();
    for s in observable_ci_set(g).iter() {
        if !is_conditionally_independent(p, &s.x, &s.y, &s.z)? {
            violated.push(s.clone());
        }
    }
    Ok(IReport {
        holds: violated.is_empty(),
        violated,
    })
}

/// Entropic query, all in bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InfoQuery {
    Entropy(NodeSet),
    Mutual(NodeSet, NodeSet),
    ConditionalMutual(NodeSet, NodeSet, NodeSet),
}

pub fn information_quantity(p: &Distribution, query: &InfoQuery) -> Result<f64> {
    let disjoint = |sets: &[&NodeSet]| -> Result<()> {
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if let Some(id) = sets[i].intersection(sets[j]).iter().next() {
                    return Err(Error::Overlap(id.to_string()));
                }
            }
        }
        Ok(())
    };
    match query {
        InfoQuery::Entropy(s) => p.entropy(s),
        InfoQuery::Mutual(s, t) => {
            disjoint(&[s, t])?;
            Ok(p.entropy(s)? + p.entropy(t)? - p.entropy(&s.union(t))?)
        }
        InfoQuery::ConditionalMutual(s, t, u) => {
            disjoint(&[s, t, u])?;
            Ok(p.entropy(&s.union(u))? + p.entropy(&t.union(u))?
                - p.entropy(&s.union(t).union(u))?
                - p.entropy(u)?)
        }
    }
}

/// Entropies of every nonempty subset of the variables, keyed by position mask.
pub fn entropy_profile(p: &Distribution) -> BTreeMap<u32, f64> {
    let n = p.variables().len();
    (1u32..(1 << n))
        .map(|m| {
            let keep: Vec<usize> = (0..n).filter(|&i| m & (1 << i) != 0).collect();
            (m, p.entropy_of_positions(&keep))
        })
        .collect()
}
