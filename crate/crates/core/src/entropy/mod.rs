//! Entropic description of a GDAG: the Shannon cone, Markov constraints,
//! exact Fourier–Motzkin projection onto the observed coordinates (giving
//! E_C), the d-separation cone E_I, and Farkas implication between them.

pub mod cone;
pub mod lp;

use num_traits::Zero;
use rayon::prelude::*;

use crate::dsep::observable_ci_positions;
use crate::error::{Error, Result};
use crate::graph::{bit, bits, GDag, NodeId};
use crate::models::Rational;

pub use cone::{Cone, EntropyVector, LinIneq, VarSet};
pub use lp::{lp_feasible, Constraint, Relation};

use cone::{cmi_row, coords, normalize_row, Row};

/// Largest GDAG handled by the entropic pipeline without the long-run flag.
pub const DESK_NODE_LIMIT: usize = 6;
/// Absolute limit on the number of entropy variables.
pub const MAX_VARIABLES: usize = 8;

/// The elemental inequalities: `H(X | rest) >= 0` for each variable and
/// `I(X ; Y | Z) >= 0` for each pair and each `Z` among the others.
pub fn elemental_inequalities(vars: &[NodeId]) -> Result<Cone> {
    if vars.is_empty() {
        return Err(Error::InvalidQuery("no variables".into()));
    }
    if vars.len() > MAX_VARIABLES {
        return Err(Error::SizeLimit(format!(
            "{} variables exceeds the limit of {MAX_VARIABLES}",
            vars.len()
        )));
    }
    Ok(Cone::from_rows(vars.to_vec(), &elemental_rows(vars.len())))
}

pub(crate) fn elemental_rows(n: usize) -> Vec<Row> {
    let all = (1u32 << n) - 1;
    let mut rows = Vec::new();
    for x in 0..n {
        let mut row = vec![0; coords(n)];
        cone::add_h(&mut row, all, 1);
        cone::add_h(&mut row, all & !(1 << x), -1);
        rows.push(row);
    }
    for x in 0..n {
        for y in x + 1..n {
            let rest = all & !(1 << x) & !(1 << y);
            // every subset of rest, including the empty set
            let mut z = rest;
            loop {
                rows.push(cmi_row(n, 1 << x, 1 << y, z, 1));
                if z == 0 {
                    break;
                }
                z = (z - 1) & rest;
            }
        }
    }
    rows
}

/// `-I(X ; ND(X) | Pa(X)) >= 0` for every node with nonempty non-descendants.
/// Coordinates are subsets of all of `g`'s nodes in declaration order.
pub fn markov_constraint_rows(g: &GDag) -> Result<Vec<LinIneq>> {
    check_size(g.len(), MAX_VARIABLES)?;
    Ok(markov_rows(g).iter().filter_map(LinIneq::from_row).collect())
}

fn markov_rows(g: &GDag) -> Vec<Row> {
    let n = g.len();
    let mut rows: Vec<Row> = Vec::new();
    for x in 0..n {
        let pa = g.parents_mask(x);
        let nd = g.all_mask() & !g.descendants_mask(bit(x)) & !pa;
        if nd == 0 {
            continue;
        }
        let mut row = cmi_row(n, 1 << x, nd as u32, pa as u32, -1);
        normalize_row(&mut row);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    rows
}

fn check_size(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::SizeLimit(format!(
            "{n} nodes exceeds the limit of {limit}"
        )));
    }
    Ok(())
}

// -- implication ----------------------------------------------------------

/// Is `target` a nonnegative combination of `rows` plus any combination of `eqs`?
pub(crate) fn row_implied(target: &Row, rows: &[&Row], eqs: &[&Row]) -> bool {
    if target.iter().all(|&v| v == 0) {
        return true;
    }
    let width = target.len();
    // cheap necessary condition on signs, coordinate by coordinate
    for c in 0..width {
        let t = target[c];
        if t == 0 || eqs.iter().any(|e| e[c] != 0) {
            continue;
        }
        let ok = if t > 0 {
            rows.iter().any(|r| r[c] > 0)
        } else {
            rows.iter().any(|r| r[c] < 0)
        };
        if !ok {
            return false;
        }
    }
    // exact match with a single row (rows are primitive)
    let mut t = target.clone();
    normalize_row(&mut t);
    if rows.iter().any(|r| **r == t) {
        return true;
    }
    let used: Vec<usize> = (0..width)
        .filter(|&c| target[c] != 0 || rows.iter().any(|r| r[c] != 0) || eqs.iter().any(|e| e[c] != 0))
        .collect();
    let ncols = rows.len() + 2 * eqs.len();
    let mut a = vec![vec![Rational::zero(); ncols]; used.len()];
    let mut b = Vec::with_capacity(used.len());
    for (k, &c) in used.iter().enumerate() {
        for (j, r) in rows.iter().enumerate() {
            if r[c] != 0 {
                a[k][j] = Rational::from_integer(r[c].into());
            }
        }
        for (j, e) in eqs.iter().enumerate() {
            if e[c] != 0 {
                a[k][rows.len() + 2 * j] = Rational::from_integer(e[c].into());
                a[k][rows.len() + 2 * j + 1] = Rational::from_integer((-e[c]).into());
            }
        }
        b.push(Rational::from_integer(target[c].into()));
    }
    lp::phase_one(a, b).expect("well-formed system").is_some()
}

/// True iff `ineq` is a nonnegative rational combination of the cone's rows.
pub fn implied_by(ineq: &LinIneq, cone: &Cone) -> Result<bool> {
    let n = cone.variables().len();
    let target = ineq.to_row(n)?;
    let rows = cone.rows();
    let refs: Vec<&Row> = rows.iter().collect();
    Ok(row_implied(&target, &refs, &[]))
}

/// Every row of `a` implied by `b`.
pub fn cone_implies(b: &Cone, a: &Cone) -> Result<bool> {
    if a.variables() != b.variables() {
        return Err(Error::InvalidQuery("cones are over different variables".into()));
    }
    for q in a.ineqs() {
        if !implied_by(q, b)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rows of `a` that are not implied by `b`.
pub fn non_implied_rows(a: &Cone, b: &Cone) -> Result<Vec<LinIneq>> {
    if a.variables() != b.variables() {
        return Err(Error::InvalidQuery("cones are over different variables".into()));
    }
    let rows = b.rows();
    let refs: Vec<&Row> = rows.iter().collect();
    let n = a.variables().len();
    let flags: Vec<bool> = a
        .ineqs()
        .par_iter()
        .map(|q| row_implied(&q.to_row(n).expect("same universe"), &refs, &[]))
        .collect();
    Ok(a.ineqs()
        .iter()
        .zip(flags)
        .filter(|(_, implied)| !implied)
        .map(|(q, _)| q.clone())
        .collect())
}

// -- projection -----------------------------------------------------------

/// Inequalities plus explicit equalities; the projection engine.
#[derive(Clone, Debug, Default)]
pub(crate) struct System {
    pub eqs: Vec<Row>,
    pub ineqs: Vec<Row>,
}

impl System {
    /// Splits opposite pairs `r`, `-r` out of the inequalities as equalities.
    pub(crate) fn from_ineqs(mut ineqs: Vec<Row>) -> Self {
        for r in ineqs.iter_mut() {
            normalize_row(r);
        }
        ineqs.retain(|r| r.iter().any(|&v| v != 0));
        ineqs.sort();
        ineqs.dedup();
        let mut sys = System {
            eqs: Vec::new(),
            ineqs,
        };
        sys.extract_equalities();
        sys
    }

    fn extract_equalities(&mut self) {
        let mut taken = vec![false; self.ineqs.len()];
        for i in 0..self.ineqs.len() {
            if taken[i] {
                continue;
            }
            let neg: Row = self.ineqs[i].iter().map(|v| -v).collect();
            if let Ok(j) = self.ineqs.binary_search(&neg) {
                if !taken[j] {
                    taken[i] = true;
                    taken[j] = true;
                    let e = if self.ineqs[i] > neg { self.ineqs[i].clone() } else { neg };
                    self.eqs.push(e);
                }
            }
        }
        let mut k = 0;
        self.ineqs.retain(|_| {
            k += 1;
            !taken[k - 1]
        });
        self.eqs.sort();
        self.eqs.dedup();
    }

    pub(crate) fn to_rows(&self) -> Vec<Row> {
        let mut rows = self.ineqs.clone();
        for e in &self.eqs {
            rows.push(e.clone());
            rows.push(e.iter().map(|v| -v).collect());
        }
        rows
    }

    /// Projects out coordinate `c`.
    pub(crate) fn eliminate(&mut self, c: usize) -> Result<()> {
        if let Some(k) = self.eqs.iter().position(|e| e[c] != 0) {
            let mut e = self.eqs.remove(k);
            if e[c] < 0 {
                e.iter_mut().for_each(|v| *v = -*v);
            }
            let sub = |s: &Row| -> Result<Row> {
                let mut out = Vec::with_capacity(s.len());
                for (a, b) in s.iter().zip(&e) {
                    let v = e[c]
                        .checked_mul(*a)
                        .and_then(|x| s[c].checked_mul(*b).and_then(|y| x.checked_sub(y)))
                        .ok_or(Error::Overflow("equality substitution"))?;
                    out.push(v);
                }
                normalize_row(&mut out);
                Ok(out)
            };
            for s in self.eqs.iter_mut() {
                if s[c] != 0 {
                    *s = sub(s)?;
                    if s.first_nonzero_negative() {
                        s.iter_mut().for_each(|v| *v = -*v);
                    }
                }
            }
            for s in self.ineqs.iter_mut() {
                if s[c] != 0 {
                    *s = sub(s)?;
                }
            }
            self.eqs.retain(|r| r.iter().any(|&v| v != 0));
            self.eqs.sort();
            self.eqs.dedup();
        } else {
            let (mut pos, mut neg, mut zero) = (Vec::new(), Vec::new(), Vec::new());
            for r in self.ineqs.drain(..) {
                match r[c].signum() {
                    1 => pos.push(r),
                    -1 => neg.push(r),
                    _ => zero.push(r),
                }
            }
            let combos: Vec<Result<Option<Row>>> = pos
                .par_iter()
                .flat_map_iter(|p| {
                    neg.iter().map(move |q| {
                        let (a, b) = (-q[c], p[c]);
                        let mut out = Vec::with_capacity(p.len());
                        for (x, y) in p.iter().zip(q) {
                            let v = a
                                .checked_mul(*x)
                                .and_then(|u| b.checked_mul(*y).and_then(|w| u.checked_add(w)))
                                .ok_or(Error::Overflow("Fourier–Motzkin combination"))?;
                            out.push(v);
                        }
                        normalize_row(&mut out);
                        Ok(out.iter().any(|&v| v != 0).then_some(out))
                    })
                })
                .collect();
            for r in combos {
                if let Some(r) = r? {
                    zero.push(r);
                }
            }
            self.ineqs = zero;
        }
        self.ineqs.retain(|r| r.iter().any(|&v| v != 0));
        self.ineqs.sort();
        self.ineqs.dedup();
        self.extract_equalities();
        self.remove_redundant();
        Ok(())
    }

    /// Irredundant form: inequalities forced to equality move to the
    /// equalities, which are reduced to an echelon basis, and inequalities
    /// implied by the rest are dropped. Afterwards no row of `to_rows` is
    /// implied by the others.
    pub(crate) fn canonicalize(&mut self) -> Result<()> {
        let eq_refs: Vec<&Row> = self.eqs.iter().collect();
        let refs: Vec<&Row> = self.ineqs.iter().collect();
        let forced: Vec<bool> = self
            .ineqs
            .par_iter()
            .map(|r| row_implied(&r.iter().map(|v| -v).collect(), &refs, &eq_refs))
            .collect();
        let mut kept = Vec::with_capacity(self.ineqs.len());
        for (r, forced) in self.ineqs.drain(..).zip(forced) {
            if forced {
                self.eqs.push(r);
            } else {
                kept.push(r);
            }
        }
        self.ineqs = kept;
        self.eqs = echelon(std::mem::take(&mut self.eqs))?;
        self.remove_redundant();
        Ok(())
    }

    /// Drops every inequality implied by the remaining rows and the equalities.
    pub(crate) fn remove_redundant(&mut self) {
        let eq_refs: Vec<&Row> = self.eqs.iter().collect();
        let rows = &self.ineqs;
        // rows not implied by all the others are never redundant against a subset
        let candidate: Vec<bool> = (0..rows.len())
            .into_par_iter()
            .map(|i| {
                let others: Vec<&Row> = rows.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r).collect();
                row_implied(&rows[i], &others, &eq_refs)
            })
            .collect();
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            if !candidate[i] {
                continue;
            }
            let others: Vec<&Row> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i && keep[j])
                .map(|(_, r)| r)
                .collect();
            if row_implied(&rows[i], &others, &eq_refs) {
                keep[i] = false;
            }
        }
        let mut k = 0;
        self.ineqs.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }
}

/// Fraction-free reduced echelon basis of the span of `rows`, each row
/// primitive with a positive pivot.
fn echelon(mut rows: Vec<Row>) -> Result<Vec<Row>> {
    let width = rows.first().map_or(0, Vec::len);
    let mut done = 0;
    for c in 0..width {
        let Some(p) = (done..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(done, p);
        if rows[done][c] < 0 {
            rows[done].iter_mut().for_each(|v| *v = -*v);
        }
        let pivot = rows[done].clone();
        for (i, r) in rows.iter_mut().enumerate() {
            if i == done || r[c] == 0 {
                continue;
            }
            let (a, b) = (pivot[c], r[c]);
            for (x, y) in r.iter_mut().zip(&pivot) {
                *x = a
                    .checked_mul(*x)
                    .and_then(|u| b.checked_mul(*y).and_then(|w| u.checked_sub(w)))
                    .ok_or(Error::Overflow("equality basis"))?;
            }
            normalize_row(r);
        }
        done += 1;
    }
    rows.truncate(done);
    Ok(rows)
}

trait FirstNonzero {
    fn first_nonzero_negative(&self) -> bool;
}

impl FirstNonzero for Row {
    fn first_nonzero_negative(&self) -> bool {
        self.iter().find(|&&v| v != 0).is_some_and(|&v| v < 0)
    }
}

/// Projects the cone onto the coordinates other than `coord`, then removes
/// redundant rows.
pub fn fourier_motzkin_eliminate(c: &Cone, coord: VarSet) -> Result<Cone> {
    let n = c.variables().len();
    if coord.is_empty() || coord.0 >> n != 0 {
        return Err(Error::InvalidQuery(format!("unknown coordinate {:#b}", coord.0)));
    }
    let mut sys = System::from_ineqs(c.rows());
    sys.eliminate(coord.coord())?;
    sys.canonicalize()?;
    Ok(Cone::from_rows(c.variables().to_vec(), &sys.to_rows()))
}

/// Removes rows implied by the remaining ones.
pub fn minimize(c: &Cone) -> Result<Cone> {
    let mut sys = System::from_ineqs(c.rows());
    sys.canonicalize()?;
    Ok(Cone::from_rows(c.variables().to_vec(), &sys.to_rows()))
}

// -- the two cones of a GDAG ------------------------------------------------

#[derive(Clone, Copy, Debug, Default)]
pub struct ConeOptions {
    /// Lifts the desk-scale node limit.
    pub long_run: bool,
}

impl ConeOptions {
    fn limit(self) -> usize {
        if self.long_run {
            MAX_VARIABLES
        } else {
            DESK_NODE_LIMIT
        }
    }
}

/// Re-indexes rows over all nodes to rows over the observed nodes only.
/// Rows must not touch coordinates involving unobserved nodes.
fn restrict_to_observed(g: &GDag, rows: &[Row]) -> Vec<Row> {
    let obs: Vec<usize> = bits(g.observed_mask()).collect();
    let k = obs.len();
    rows.iter()
        .map(|r| {
            let mut out = vec![0; coords(k)];
            for m in 1u32..(1 << k) {
                let full = obs
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| m & (1 << p) != 0)
                    .fold(0u32, |acc, (_, &i)| acc | (1 << i));
                out[m as usize - 1] = r[full as usize - 1];
            }
            out
        })
        .collect()
}

/// E_C: the Shannon cone on all nodes with the Markov constraints, projected
/// onto the entropies of observed subsets.
pub fn derive_classical_cone(g: &GDag) -> Result<Cone> {
    derive_classical_cone_with(g, ConeOptions::default())
}

pub fn derive_classical_cone_with(g: &GDag, opts: ConeOptions) -> Result<Cone> {
    check_size(g.len(), opts.limit())?;
    let obs_ids = g.observed_ids();
    if obs_ids.is_empty() {
        return Err(Error::InvalidQuery("GDAG has no observed nodes".into()));
    }
    let n = g.len();
    let mut ineqs = elemental_rows(n);
    // Markov rows are equalities given Shannon positivity; both signs are valid rows.
    for r in markov_rows(g) {
        ineqs.push(r.iter().map(|v| -v).collect());
        ineqs.push(r);
    }
    let mut sys = System::from_ineqs(ineqs);
    sys.remove_redundant();
    let latent = g.unobserved_mask() as u32;
    let mut order: Vec<u32> = (1u32..(1 << n)).filter(|m| m & latent != 0).collect();
    order.sort_by_key(|m| (m.count_ones(), *m));
    for m in order {
        sys.eliminate(VarSet(m).coord())?;
    }
    let rows = restrict_to_observed(g, &sys.to_rows());
    let mut out = System::from_ineqs(rows);
    out.canonicalize()?;
    Ok(Cone::from_rows(obs_ids, &out.to_rows()))
}

/// E_I: the Shannon cone on the observed nodes plus `I(X;Y|Z) <= 0` for
/// every observable d-separation.
pub fn derive_independence_cone(g: &GDag) -> Result<Cone> {
    derive_independence_cone_with(g, ConeOptions::default())
}

pub fn derive_independence_cone_with(g: &GDag, opts: ConeOptions) -> Result<Cone> {
    check_size(g.len(), opts.limit())?;
    let obs_ids = g.observed_ids();
    if obs_ids.is_empty() {
        return Err(Error::InvalidQuery("GDAG has no observed nodes".into()));
    }
    let k = obs_ids.len();
    let mut rows = elemental_rows(k);
    for (x, y, z) in observable_ci_positions(g) {
        rows.push(cmi_row(k, x, y, z, -1));
    }
    let mut sys = System::from_ineqs(rows);
    sys.canonicalize()?;
    Ok(Cone::from_rows(obs_ids, &sys.to_rows()))
}

/// Entropy vector of a distribution, coordinates ordered as in `cone`.
pub fn entropy_vector_for(p: &crate::models::Distribution, cone: &Cone) -> Result<EntropyVector> {
    let ids = crate::graph::NodeSet::parse(cone.variables().iter().map(NodeId::as_str))?;
    let reordered = p.marginal(&ids)?;
    // marginal keeps p's declaration order; permute into the cone's order
    let perm: Vec<usize> = cone
        .variables()
        .iter()
        .map(|v| reordered.variables().iter().position(|w| w == v).expect("marginal keeps ids"))
        .collect();
    let vars: Vec<(NodeId, usize)> = cone
        .variables()
        .iter()
        .map(|v| (v.clone(), reordered.card_of(v).expect("present")))
        .collect();
    let q = crate::models::Distribution::from_fn(vars, |t| {
        let mut src = vec![0; t.len()];
        for (k, &p) in perm.iter().enumerate() {
            src[p] = t[k];
        }
        reordered.prob(&src).clone()
    })?;
    Ok(EntropyVector::from_distribution(&q))
}
