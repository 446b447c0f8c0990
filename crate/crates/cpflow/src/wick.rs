//! Gaussian expectations of diagrams by Wick contraction.
//!
//! Every pairing of same-colored edges identifies the paired endpoints. A
//! pairing that leaves `q` distinct p-nodes and `n` distinct H-nodes
//! contributes `p^q H^n σ^{2l}` with `2l` the number of edges.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rustc_hash::FxHashMap;

use crate::diagram::{canonicalize, fmt_rational, CanonicalKey, Diagram, DiagramSum, Edge};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Exponent triple `(q, n, l)` of `p^q H^n σ^{2l}`.
pub type Exponent = (u32, u32, u32);

/// Polynomial in `p`, `H`, `σ²` with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MonomialPoly {
    terms: BTreeMap<Exponent, BigRational>,
}

impl MonomialPoly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_term(&mut self, e: Exponent, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn coefficient(&self, e: Exponent) -> BigRational {
        self.terms.get(&e).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &BigRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_poly(&mut self, other: &MonomialPoly, scale: &BigRational) {
        for (&e, c) in &other.terms {
            self.add_term(e, c * scale);
        }
    }

    pub fn evaluate(&self, p: f64, h: f64, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        self.terms
            .iter()
            .map(|(&(q, n, l), c)| {
                rational_to_f64(c) * p.powi(q as i32) * h.powi(n as i32) * s2.powi(l as i32)
            })
            .sum()
    }

    /// One term per line: `q n l num/den`, sorted by exponent.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (&(q, n, l), c) in &self.terms {
            s.push_str(&format!("{q} {n} {l} {}\n", fmt_rational(c)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut poly = MonomialPoly::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 'q n l num/den'", lineno + 1)));
            }
            let int = |s: &str| {
                s.parse::<u32>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let c = parse_rational(parts[3])?;
            poly.add_term((int(parts[0])?, int(parts[1])?, int(parts[2])?), c);
        }
        Ok(poly)
    }
}

impl fmt::Display for MonomialPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let (num, den) = s.split_once('/').unwrap_or((s, "1"));
    let num: BigInt = num.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in '{s}'")))?;
    let den: BigInt = den.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in '{s}'")))?;
    if den.is_zero() {
        return Err(Error::Parse(format!("zero denominator in '{s}'")));
    }
    Ok(BigRational::new(num, den))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Integer polynomial kept sorted by exponent.
type IntPoly = Vec<(Exponent, i128)>;

fn monomial(e: Exponent) -> IntPoly {
    vec![(e, 1)]
}

fn poly_accumulate(acc: &mut BTreeMap<Exponent, i128>, a: &IntPoly, shift: Exponent, scale: i128) {
    for &(e, c) in a {
        let e = (e.0 + shift.0, e.1 + shift.1, e.2 + shift.2);
        *acc.entry(e).or_insert(0) += c.checked_mul(scale).expect("coefficient overflow");
    }
}

/// Memoized Wick expectation. The cache is keyed by canonical diagram and is
/// safe to share across threads. Disconnected diagrams are not factorized:
/// their components still share weights.
pub struct WickEngine {
    cache: Mutex<FxHashMap<CanonicalKey, Arc<IntPoly>>>,
    exec: Execution,
}

impl Default for WickEngine {
    fn default() -> Self {
        Self::new(Execution::default())
    }
}

impl WickEngine {
    pub fn new(exec: Execution) -> Self {
        WickEngine { cache: Mutex::new(FxHashMap::default()), exec }
    }

    pub fn cache_size(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn expectation(&self, d: &Diagram) -> MonomialPoly {
        let mut out = MonomialPoly::new();
        for (e, c) in self.expect_any(d) {
            out.add_term(e, BigRational::from_integer(BigInt::from(c)));
        }
        out
    }

    /// `Σ c_G E[G]`, with the scalar channel added as the `(1, 0, 0)` term.
    pub fn expectation_sum(&self, sum: &DiagramSum) -> MonomialPoly {
        let terms = sum.terms();
        let items: Vec<(&Diagram, &BigRational)> = terms.iter().map(|&(_, d, c)| (d, c)).collect();
        let parts = exec::map(self.exec, &items, |&(d, c)| (self.expect_canonical_or_any(d), c.clone()));
        let mut acc: BTreeMap<Exponent, BigRational> = BTreeMap::new();
        for (poly, c) in parts {
            for &(e, k) in poly.iter() {
                *acc.entry(e).or_insert_with(BigRational::zero) += &c * BigRational::from_integer(BigInt::from(k));
            }
        }
        let mut out = MonomialPoly::new();
        for (e, c) in acc {
            out.add_term(e, c);
        }
        out.add_term((1, 0, 0), sum.scalar.clone());
        out
    }

    fn expect_canonical_or_any(&self, d: &Diagram) -> Arc<IntPoly> {
        Arc::new(self.expect_any(d))
    }

    fn expect_any(&self, d: &Diagram) -> IntPoly {
        let (ip, ih, d) = d.strip_isolated();
        let shift = (ip, ih, 0);
        if d.edges.is_empty() {
            return monomial(shift);
        }
        let (key, canon) = canonicalize(&d);
        let e = self.expect_canonical(key, &canon);
        let mut out = Vec::with_capacity(e.len());
        for &((q, n, l), c) in e.iter() {
            out.push(((q + shift.0, n + shift.1, l), c));
        }
        out
    }

    fn expect_canonical(&self, key: CanonicalKey, d: &Diagram) -> Arc<IntPoly> {
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let value = Arc::new(self.contract_first(d));
        self.cache.lock().unwrap().insert(key, value.clone());
        value
    }

    fn contract_first(&self, d: &Diagram) -> IntPoly {
        let colors = d.edges.iter().map(|e| e.color).max().unwrap_or(0) + 1;
        if d.color_counts(colors).iter().any(|c| c % 2 == 1) {
            return Vec::new();
        }
        let first = d.edges[0];
        let mut acc: BTreeMap<Exponent, i128> = BTreeMap::new();
        for (e, m) in d.edge_runs() {
            if e.color != first.color {
                continue;
            }
            let m = if e == first { m - 1 } else { m };
            if m == 0 {
                continue;
            }
            let reduced = contract(d, first, e);
            let sub = self.expect_any(&reduced);
            poly_accumulate(&mut acc, &sub, (0, 0, 1), m as i128);
        }
        acc.into_iter().filter(|&(_, c)| c != 0).collect()
    }
}

/// Removes `a` and `b`, identifying their H-endpoints and p-endpoints.
fn contract(d: &Diagram, a: Edge, b: Edge) -> Diagram {
    let hm = |h: u16| -> u16 {
        let h = if h == b.h { a.h } else { h };
        if b.h != a.h && h > b.h {
            h - 1
        } else {
            h
        }
    };
    let pm = |p: u16| -> u16 {
        let p = if p == b.p { a.p } else { p };
        if b.p != a.p && p > b.p {
            p - 1
        } else {
            p
        }
    };
    let mut edges = Vec::with_capacity(d.edges.len() - 2);
    let (mut skip_a, mut skip_b) = (false, false);
    for &e in &d.edges {
        if !skip_a && e == a {
            skip_a = true;
            continue;
        }
        if !skip_b && e == b {
            skip_b = true;
            continue;
        }
        edges.push(Edge::new(hm(e.h), pm(e.p), e.color));
    }
    edges.sort_unstable();
    Diagram {
        h_nodes: d.h_nodes - (a.h != b.h) as u16,
        p_nodes: d.p_nodes - (a.p != b.p) as u16,
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{build_d, build_r, Scenario, Setting};
    use num_traits::One;

    fn int(c: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(c))
    }

    #[test]
    fn d4_sym2() {
        let s = Setting::new(2, Scenario::Sym).unwrap();
        let e = WickEngine::default().expectation(&build_d(s));
        let mut want = MonomialPoly::new();
        want.add_term((1, 2, 2), int(1));
        want.add_term((2, 1, 2), int(1));
        want.add_term((1, 1, 2), int(1));
        assert_eq!(e, want);
    }

    #[test]
    fn asym_d_is_single_monomial() {
        for nu in 2..=4 {
            let s = Setting::new(nu, Scenario::Asym).unwrap();
            let e = WickEngine::default().expectation(&build_d(s));
            assert_eq!(e.len(), 1);
            assert_eq!(e.coefficient((nu, 1, nu)), BigRational::one());
            assert!(WickEngine::default().expectation(&build_r(s)).is_empty());
        }
    }

    #[test]
    fn sym_r_counts_pairings() {
        // R_4 under SYM: one p-node, one H-node, 3 pairings
        let s = Setting::new(4, Scenario::Sym).unwrap();
        let e = WickEngine::default().expectation(&build_r(s));
        assert_eq!(e.coefficient((1, 1, 2)), int(3));
    }

    #[test]
    fn dump_parse_roundtrip() {
        let mut p = MonomialPoly::new();
        p.add_term((1, 0, 0), BigRational::new(BigInt::from(1), BigInt::from(2)));
        p.add_term((3, 2, 5), int(-7));
        assert_eq!(MonomialPoly::parse(&p.dump()).unwrap(), p);
    }
}
