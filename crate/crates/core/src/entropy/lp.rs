//! Exact rational feasibility: phase-one simplex with Bland's rule.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::models::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `a·x >= b`
    Ge,
    /// `a·x <= b`
    Le,
    /// `a·x = b`
    Eq,
}

/// One linear constraint over named, otherwise unrestricted, variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: BTreeMap<String, Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn new(
        coeffs: impl IntoIterator<Item = (String, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in coeffs {
            *map.entry(k).or_insert_with(Rational::zero) += v;
        }
        map.retain(|_, v: &mut Rational| !v.is_zero());
        Constraint {
            coeffs: map,
            relation,
            rhs,
        }
    }

    /// `x >= 0`
    pub fn nonneg(var: impl Into<String>) -> Self {
        Constraint::new([(var.into(), Rational::one())], Relation::Ge, Rational::zero())
    }

    pub fn is_satisfied_by(&self, point: &BTreeMap<String, Rational>) -> bool {
        let lhs: Rational = self
            .coeffs
            .iter()
            .map(|(k, v)| v * point.get(k).cloned().unwrap_or_else(Rational::zero))
            .sum();
        match self.relation {
            Relation::Ge => lhs >= self.rhs,
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
        }
    }
}

/// Finds a rational point satisfying every constraint, or `None` if the
/// system is infeasible. Variables not bounded by an explicit `x >= 0`
/// constraint are free.
pub fn lp_feasible(constraints: &[Constraint]) -> Result<Option<BTreeMap<String, Rational>>> {
    let vars: BTreeSet<&String> = constraints.iter().flat_map(|c| c.coeffs.keys()).collect();
    let vars: Vec<&String> = vars.into_iter().collect();
    if vars.is_empty() {
        let ok = constraints.iter().all(|c| c.is_satisfied_by(&BTreeMap::new()));
        return Ok(ok.then(BTreeMap::new));
    }
    // A constraint `c·x >= 0` with c > 0 is a sign bound rather than a row.
    let mut nonneg = vec![false; vars.len()];
    let mut rows: Vec<&Constraint> = Vec::new();
    for c in constraints {
        if c.coeffs.len() == 1 && c.rhs.is_zero() {
            let (name, coef) = c.coeffs.iter().next().expect("one entry");
            let bound = match c.relation {
                Relation::Ge => coef.is_positive(),
                Relation::Le => coef.is_negative(),
                Relation::Eq => false,
            };
            if bound {
                let k = vars.binary_search(&name).expect("collected");
                nonneg[k] = true;
                continue;
            }
        }
        rows.push(c);
    }
    // Column layout: one column per nonnegative variable, two for free ones,
    // then one slack per inequality row.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(vars.len());
    let mut ncols = 0;
    for &nn in &nonneg {
        if nn {
            col_of.push((ncols, None));
            ncols += 1;
        } else {
            col_of.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let structural = ncols;
    let slacks = rows.iter().filter(|c| c.relation != Relation::Eq).count();
    ncols += slacks;
    let mut a = vec![vec![Rational::zero(); ncols]; rows.len()];
    let mut b = vec![Rational::zero(); rows.len()];
    let mut slack = structural;
    for (r, c) in rows.iter().enumerate() {
        for (name, v) in &c.coeffs {
            let k = vars.binary_search(&name).expect("collected");
            let (pos, neg) = col_of[k];
            a[r][pos] = v.clone();
            if let Some(neg) = neg {
                a[r][neg] = -v;
            }
        }
        match c.relation {
            Relation::Ge => {
                a[r][slack] = -Rational::one();
                slack += 1;
            }
            Relation::Le => {
                a[r][slack] = Rational::one();
                slack += 1;
            }
            Relation::Eq => {}
        }
        b[r] = c.rhs.clone();
    }
    let x = if rows.is_empty() {
        vec![Rational::zero(); ncols]
    } else {
        match phase_one(a, b)? {
            Some(x) => x,
            None => return Ok(None),
        }
    };
    let mut point = BTreeMap::new();
    for (k, name) in vars.iter().enumerate() {
        let (pos, neg) = col_of[k];
        let mut v = x[pos].clone();
        if let Some(neg) = neg {
            v -= &x[neg];
        }
        point.insert((*name).clone(), v);
    }
    debug_assert!(constraints.iter().all(|c| c.is_satisfied_by(&point)));
    Ok(Some(point))
}

/// Solves `A x = b, x >= 0` for a feasible point.
///
/// Dense tableau over the original columns plus one artificial per row,
/// minimising the artificial sum with Bland's anti-cycling rule.
pub fn phase_one(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Result<Option<Vec<Rational>>> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if a.iter().any(|row| row.len() != n) || b.len() != m {
        return Err(Error::InvalidQuery("malformed linear system".into()));
    }
    if m == 0 {
        return Ok(Some(vec![Rational::zero(); n]));
    }
    for r in 0..m {
        if b[r].is_negative() {
            for v in a[r].iter_mut() {
                *v = -&*v;
            }
            b[r] = -&b[r];
        }
    }
    let mut t = Tableau::new(a, b);
    t.run();
    if !t.objective_value().is_zero() {
        return Ok(None);
    }
    Ok(Some(t.primal(n)))
}

struct Tableau {
    m: usize,
    n: usize,
    /// Rows over `n` original columns followed by `m` artificial columns.
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    /// Reduced costs of the phase-one objective.
    cost: Vec<Rational>,
    cost_rhs: Rational,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(a: Vec<Vec<Rational>>, b: Vec<Rational>) -> Self {
        let m = a.len();
        let n = a[0].len();
        let mut rows = Vec::with_capacity(m);
        let mut cost = vec![Rational::zero(); n + m];
        let mut cost_rhs = Rational::zero();
        for (r, mut row) in a.into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_zero() {
                    cost[j] -= v;
                }
            }
            row.resize(n + m, Rational::zero());
            row[n + r] = Rational::one();
            rows.push(row);
            cost_rhs -= &b[r];
        }
        Tableau {
            m,
            n,
            rows,
            rhs: b,
            cost,
            cost_rhs,
            basis: (n..n + m).collect(),
        }
    }

    fn objective_value(&self) -> Rational {
        -&self.cost_rhs
    }

    fn run(&mut self) {
        loop {
            // Bland: lowest-index column with negative reduced cost.
            let Some(enter) = (0..self.n + self.m).find(|&j| self.cost[j].is_negative()) else {
                return;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for r in 0..self.m {
                let a = &self.rows[r][enter];
                if a.is_positive() {
                    let ratio = &self.rhs[r] / a;
                    let better = match &leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            // The phase-one objective is bounded below by zero, so a leaving row exists.
            let (r, _) = leave.expect("phase-one objective is bounded");
            self.pivot(r, enter);
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        if !p.is_one() {
            let inv = p.recip();
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v *= &inv;
                }
            }
            self.rhs[r] *= &inv;
        }
        let nz: Vec<usize> = (0..self.n + self.m)
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f.is_zero() {
                continue;
            }
            let row = &mut self.rows[i];
            for &j in &nz {
                row[j] -= &f * &pivot_row[j];
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        let f = self.cost[c].clone();
        if !f.is_zero() {
            for &j in &nz {
                self.cost[j] -= &f * &pivot_row[j];
            }
            self.cost_rhs -= &f * &pivot_rhs;
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
    }

    fn primal(&self, n: usize) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.rhs[r].clone();
            }
        }
        x
    }
}
