//! Theory-independent tests: triangle monogamy, the triangle marginal
//! feasibility problem, and the instrumental inequality.

use num_traits::{One, Zero};

use crate::entropy::lp::{lp_feasible, Constraint, Relation};
use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::models::{ConditionalTable, Distribution, Rational};

/// Positions of A, B, C in `p`; errors unless those are exactly its variables.
fn triangle_positions(p: &Distribution) -> Result<[usize; 3]> {
    let vars = p.variables();
    let find = |id: &str| vars.iter().position(|v| v.as_str() == id);
    match (vars.len(), find("A"), find("B"), find("C")) {
        (3, Some(a), Some(b), Some(c)) => Ok([a, b, c]),
        _ => Err(Error::InvalidDistribution(format!(
            "expected variables A, B, C; got {}",
            vars.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// `I(A:B) + I(B:C) - H(B)` in bits; positive means no theory can realise
/// `p` on the triangle.
pub fn triangle_monogamy_margin(p: &Distribution) -> Result<f64> {
    triangle_positions(p)?;
    let h = |ids: &[&str]| p.entropy(&NodeSet::parse(ids.iter().copied())?);
    // I(A:B) + I(B:C) - H(B) = H(A) + H(B) + H(C) - H(AB) - H(BC)
    Ok(h(&["A"])? + h(&["B"])? + h(&["C"])? - h(&["A", "B"])? - h(&["B", "C"])?)
}

/// Is there a `P'(a,b,c)` with `P'(a,b) = P(a,b)`, `P'(b,c) = P(b,c)` and
/// `P'(a,c) = P(a)P(c)`? Decided exactly; `false` rules `p` out for every theory.
pub fn triangle_gpt_feasible(p: &Distribution) -> Result<bool> {
    let [ia, ib, ic] = triangle_positions(p)?;
    let cards = p.cards();
    let (na, nb, nc) = (cards[ia], cards[ib], cards[ic]);
    let mut joint = vec![vec![vec![Rational::zero(); nc]; nb]; na];
    let mut t = vec![0; 3];
    for a in 0..na {
        for b in 0..nb {
            for c in 0..nc {
                t[ia] = a;
                t[ib] = b;
                t[ic] = c;
                joint[a][b][c] = p.prob(&t).clone();
            }
        }
    }
    let var = |a: usize, b: usize, c: usize| format!("p{a}_{b}_{c}");
    let mut cons = Vec::new();
    for a in 0..na {
        for b in 0..nb {
            for c in 0..nc {
                cons.push(Constraint::nonneg(var(a, b, c)));
            }
        }
    }
    let one = Rational::one;
    for a in 0..na {
        for b in 0..nb {
            let rhs: Rational = joint[a][b].iter().sum();
            cons.push(Constraint::new((0..nc).map(|c| (var(a, b, c), one())), Relation::Eq, rhs));
        }
    }
    for b in 0..nb {
        for c in 0..nc {
            let rhs: Rational = (0..na).map(|a| &joint[a][b][c]).sum();
            cons.push(Constraint::new((0..na).map(|a| (var(a, b, c), one())), Relation::Eq, rhs));
        }
    }
    let pa: Vec<Rational> = (0..na).map(|a| joint[a].iter().flatten().sum()).collect();
    let pc: Vec<Rational> = (0..nc)
        .map(|c| joint.iter().flat_map(|row| row.iter().map(|v| &v[c])).sum())
        .collect();
    for a in 0..na {
        for c in 0..nc {
            cons.push(Constraint::new(
                (0..nb).map(|b| (var(a, b, c), one())),
                Relation::Eq,
                &pa[a] * &pc[c],
            ));
        }
    }
    Ok(lp_feasible(&cons)?.is_some())
}

/// `max_b Σ_a max_y P(a,b|y)` for a family over two variables `(a, b)` in
/// declaration order, indexed by the given tuple `y`. Values above 1 rule the
/// family out on the instrumental GDAG for every theory.
pub fn instrumental_value(p: &ConditionalTable) -> Result<Rational> {
    let vars = p.variables();
    if vars.len() != 2 {
        return Err(Error::InvalidDistribution(format!(
            "expected a family over two variables (a, b); got {}",
            vars.len()
        )));
    }
    let (na, nb) = (vars[0].1, vars[1].1);
    let rows = p.rows();
    let mut best = None::<Rational>;
    for b in 0..nb {
        let mut total = Rational::zero();
        for a in 0..na {
            let m = (0..rows)
                .map(|y| &p.slice(y)[a * nb + b])
                .max()
                .cloned()
                .unwrap_or_else(Rational::zero);
            total += m;
        }
        if best.as_ref().is_none_or(|v| total > *v) {
            best = Some(total);
        }
    }
    Ok(best.unwrap_or_else(Rational::zero))
}
