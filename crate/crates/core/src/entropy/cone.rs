//! Entropy coordinates, homogeneous inequalities and cones over them.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::models::{parse_rational, rational_string, Distribution, Rational};

/// Nonempty subset of a cone's variables, as a bitmask over their positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarSet(pub u32);

impl VarSet {
    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub(crate) fn coord(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn from_coord(c: usize) -> Self {
        VarSet(c as u32 + 1)
    }
}

/// Dense integer row over the `2^n - 1` entropy coordinates, `row · h >= 0`.
pub(crate) type Row = Vec<i64>;

pub(crate) fn coords(n: usize) -> usize {
    (1usize << n) - 1
}

/// Divides by the gcd of the entries; zero rows stay zero.
pub(crate) fn normalize_row(row: &mut Row) {
    let g = row.iter().fold(0i64, |g, &v| g.gcd(&v));
    if g > 1 {
        for v in row.iter_mut() {
            *v /= g;
        }
    }
}

/// Adds `coef * H(mask)` to a row; the empty set has zero entropy.
pub(crate) fn add_h(row: &mut Row, mask: u32, coef: i64) {
    if mask != 0 {
        row[mask as usize - 1] += coef;
    }
}

/// Row for `sign * I(a ; b | c)` where the sets are masks (a, b nonempty).
pub(crate) fn cmi_row(n: usize, a: u32, b: u32, c: u32, sign: i64) -> Row {
    let mut row = vec![0; coords(n)];
    add_h(&mut row, a | c, sign);
    add_h(&mut row, b | c, sign);
    add_h(&mut row, a | b | c, -sign);
    add_h(&mut row, c, -sign);
    row
}

/// Homogeneous linear inequality `Σ coeffs[S]·H(S) >= 0`, stored as a
/// primitive integer vector (positive scaling removed).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinIneq {
    coeffs: BTreeMap<VarSet, BigInt>,
}

impl LinIneq {
    /// Normalizes by a positive factor; rejects the all-zero inequality.
    pub fn new(coeffs: impl IntoIterator<Item = (VarSet, Rational)>) -> Result<Self> {
        let mut map: BTreeMap<VarSet, Rational> = BTreeMap::new();
        for (k, v) in coeffs {
            if k.is_empty() {
                return Err(Error::InvalidQuery("entropy of the empty set is not a coordinate".into()));
            }
            *map.entry(k).or_insert_with(Rational::zero) += v;
        }
        map.retain(|_, v| !v.is_zero());
        if map.is_empty() {
            return Err(Error::InvalidQuery("inequality has no nonzero coefficient".into()));
        }
        let lcm = map.values().fold(BigInt::from(1), |l, v| l.lcm(v.denom()));
        let ints: BTreeMap<VarSet, BigInt> = map
            .into_iter()
            .map(|(k, v)| (k, (v * Rational::from(lcm.clone())).to_integer()))
            .collect();
        let g = ints.values().fold(BigInt::zero(), |g, v| g.gcd(v));
        Ok(LinIneq {
            coeffs: ints.into_iter().map(|(k, v)| (k, v / &g)).collect(),
        })
    }

    pub(crate) fn from_row(row: &Row) -> Option<Self> {
        let mut row = row.clone();
        normalize_row(&mut row);
        let coeffs: BTreeMap<VarSet, BigInt> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0)
            .map(|(c, &v)| (VarSet::from_coord(c), BigInt::from(v)))
            .collect();
        (!coeffs.is_empty()).then_some(LinIneq { coeffs })
    }

    pub(crate) fn to_row(&self, n: usize) -> Result<Row> {
        let mut row = vec![0i64; coords(n)];
        for (k, v) in &self.coeffs {
            if k.0 >> n != 0 {
                return Err(Error::InvalidQuery("inequality refers to variables outside the cone".into()));
            }
            row[k.coord()] = v.to_i64().ok_or(Error::Overflow("inequality coefficients"))?;
        }
        Ok(row)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (VarSet, &BigInt)> {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    pub fn coeff(&self, s: VarSet) -> BigInt {
        self.coeffs.get(&s).cloned().unwrap_or_default()
    }

    /// Union of all subsets with a nonzero coefficient.
    pub fn support(&self) -> u32 {
        self.coeffs.keys().fold(0, |m, k| m | k.0)
    }

    pub fn negated(&self) -> LinIneq {
        LinIneq {
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, -v)).collect(),
        }
    }

    /// `Σ coeffs·h` for an entropy vector.
    pub fn evaluate(&self, h: &EntropyVector) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| v.to_f64().unwrap_or(f64::NAN) * h.get(*k))
            .sum()
    }
}

/// Finite set of homogeneous inequalities over the entropies of `variables`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cone {
    variables: Vec<NodeId>,
    ineqs: Vec<LinIneq>,
}

impl Cone {
    /// Builds a cone; duplicate inequalities collapse and rows are sorted.
    pub fn new(variables: Vec<NodeId>, ineqs: impl IntoIterator<Item = LinIneq>) -> Result<Self> {
        if variables.len() > 16 {
            return Err(Error::SizeLimit("at most 16 entropy variables".into()));
        }
        let n = variables.len();
        let mut ineqs: Vec<LinIneq> = ineqs.into_iter().collect();
        for q in &ineqs {
            if q.support() >> n != 0 {
                return Err(Error::InvalidQuery("inequality refers to variables outside the cone".into()));
            }
        }
        ineqs.sort();
        ineqs.dedup();
        Ok(Cone { variables, ineqs })
    }

    pub(crate) fn from_rows(variables: Vec<NodeId>, rows: &[Row]) -> Self {
        let ineqs = rows.iter().filter_map(LinIneq::from_row);
        Cone::new(variables, ineqs).expect("rows are sized to the variables")
    }

    pub(crate) fn rows(&self) -> Vec<Row> {
        let n = self.variables.len();
        self.ineqs
            .iter()
            .map(|q| q.to_row(n).expect("cone rows fit their universe"))
            .collect()
    }

    pub fn variables(&self) -> &[NodeId] {
        &self.variables
    }

    pub fn ineqs(&self) -> &[LinIneq] {
        &self.ineqs
    }

    pub fn len(&self) -> usize {
        self.ineqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ineqs.is_empty()
    }

    pub fn contains(&self, q: &LinIneq) -> bool {
        self.ineqs.binary_search(q).is_ok()
    }

    /// Subset mask for a list of variable ids.
    pub fn varset(&self, ids: &[&str]) -> Result<VarSet> {
        let mut m = 0u32;
        for id in ids {
            let k = self
                .variables
                .iter()
                .position(|v| v.as_str() == *id)
                .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
            m |= 1 << k;
        }
        if m == 0 {
            return Err(Error::InvalidQuery("empty subset".into()));
        }
        Ok(VarSet(m))
    }

    /// Comma-joined id list of a subset, ids sorted.
    pub fn subset_label(&self, s: VarSet) -> String {
        let mut ids: Vec<&str> = (0..self.variables.len())
            .filter(|&i| s.0 & (1 << i) != 0)
            .map(|i| self.variables[i].as_str())
            .collect();
        ids.sort_unstable();
        ids.join(",")
    }

    /// Human-readable form of an inequality, e.g. `H(A) + H(B) - H(A,B) >= 0`.
    pub fn format_ineq(&self, q: &LinIneq) -> String {
        let mut out = String::new();
        for (i, (s, v)) in q.coeffs().enumerate() {
            let neg = v.is_negative();
            let mag = v.abs();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if mag != BigInt::from(1) {
                out.push_str(&mag.to_string());
            }
            out.push_str(&format!("H({})", self.subset_label(s)));
        }
        out.push_str(" >= 0");
        out
    }

    pub fn to_json(&self) -> String {
        let raw = ConeJson {
            variables: self.variables.clone(),
            ineqs: self
                .ineqs
                .iter()
                .map(|q| IneqJson {
                    coeffs: q
                        .coeffs()
                        .map(|(s, v)| (self.subset_label(s), rational_string(&Rational::from(v.clone()))))
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("cone serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ConeJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let shell = Cone::new(raw.variables.clone(), [])?;
        let mut ineqs = Vec::with_capacity(raw.ineqs.len());
        for q in raw.ineqs {
            let mut terms = Vec::new();
            for (label, v) in q.coeffs {
                let ids: Vec<&str> = label.split(',').collect();
                terms.push((shell.varset(&ids)?, parse_rational(&v)?));
            }
            ineqs.push(LinIneq::new(terms)?);
        }
        Cone::new(raw.variables, ineqs)
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.ineqs {
            writeln!(f, "{}", self.format_ineq(q))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct IneqJson {
    coeffs: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ConeJson {
    variables: Vec<NodeId>,
    ineqs: Vec<IneqJson>,
}

/// Entropies (bits) of every nonempty subset of a distribution's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyVector {
    values: Vec<f64>,
}

impl EntropyVector {
    pub fn from_distribution(p: &Distribution) -> Self {
        let profile = crate::models::entropy_profile(p);
        EntropyVector {
            values: profile.into_values().collect(),
        }
    }

    pub fn get(&self, s: VarSet) -> f64 {
        self.values[s.coord()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smallest value of any row of the cone at this point.
    pub fn min_slack(&self, cone: &Cone) -> f64 {
        cone.ineqs()
            .iter()
            .map(|q| q.evaluate(self))
            .fold(f64::INFINITY, f64::min)
    }
}
