//! Brute-force reference for the series coefficients at concrete `p`, `H`.
//!
//! Works directly with the loss as an explicit polynomial in the individual
//! weights. The derivative rule `G ↦ Σ_u ∂G/∂u · ∂L/∂u` is applied `s` times
//! and the Gaussian expectation is taken monomial by monomial. No diagrams
//! are involved.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rustc_hash::FxHashMap;

use crate::diagram::{Scenario, Setting};
use crate::error::{Error, Result};
use crate::wick::MonomialPoly;

const BITS: u32 = 6;
const PER_WORD: usize = 10;
const WORDS: usize = 4;
const MAX_VARS: usize = PER_WORD * WORDS;
const FIELD: u64 = (1 << BITS) - 1;

/// Packed exponent vector, six bits per variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
struct Key([u64; WORDS]);

impl Key {
    fn get(&self, v: usize) -> u32 {
        ((self.0[v / PER_WORD] >> (BITS as usize * (v % PER_WORD))) & FIELD) as u32
    }

    fn bump(&mut self, v: usize) {
        self.0[v / PER_WORD] += 1 << (BITS as usize * (v % PER_WORD));
    }

    fn drop_one(&self, v: usize) -> Key {
        let mut k = *self;
        k.0[v / PER_WORD] -= 1 << (BITS as usize * (v % PER_WORD));
        k
    }

    fn plus(&self, o: &Key) -> Key {
        let mut k = *self;
        for i in 0..WORDS {
            k.0[i] += o.0[i];
        }
        k
    }

    fn parity(&self, vars: usize) -> u64 {
        let mut mask = 0u64;
        for v in 0..vars {
            mask |= ((self.get(v) & 1) as u64) << v;
        }
        mask
    }
}

type Poly = FxHashMap<Key, i128>;

/// Limits on the explicit computation.
#[derive(Clone, Copy, Debug)]
pub struct OracleBudget {
    pub max_terms: usize,
    /// Use the single-orbit shortcut for the last derivative.
    pub orbit_shortcut: bool,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_terms: 40_000_000, orbit_shortcut: true }
    }
}

/// Series coefficients as polynomials in `σ²`: `ys[s][l]` multiplies `σ^{2l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSeries {
    pub ys: Vec<Vec<BigRational>>,
}

struct Model {
    vars: usize,
    p: usize,
    h: usize,
    nu: usize,
    scenario: Scenario,
}

impl Model {
    fn var(&self, m: usize, k: usize, i: usize) -> usize {
        match self.scenario {
            Scenario::Sym => k * self.p + i,
            Scenario::Asym => (m * self.h + k) * self.p + i,
        }
    }

    /// `2L` without its constant `p`: `Σ_I f_I² − 2 Σ_i f_{i…i}`, or only the
    /// first sum for a zero target.
    fn twice_loss(&self, free: bool) -> Poly {
        let mut out = Poly::default();
        let total = self.p.pow(self.nu as u32);
        for flat in 0..total {
            let mut idx = vec![0usize; self.nu];
            let mut r = flat;
            for slot in idx.iter_mut().rev() {
                *slot = r % self.p;
                r /= self.p;
            }
            let f: Vec<Key> = (0..self.h)
                .map(|k| {
                    let mut key = Key::default();
                    for (m, &i) in idx.iter().enumerate() {
                        key.bump(self.var(m, k, i));
                    }
                    key
                })
                .collect();
            for a in &f {
                for b in &f {
                    *out.entry(a.plus(b)).or_insert(0) += 1;
                }
            }
            if !free && idx.iter().all(|&i| i == idx[0]) {
                for a in &f {
                    *out.entry(*a).or_insert(0) -= 2;
                }
            }
        }
        out.retain(|_, c| *c != 0);
        out
    }

    fn derivative(&self, poly: &Poly, v: usize) -> Vec<(Key, i128)> {
        poly.iter()
            .filter_map(|(k, &c)| {
                let e = k.get(v);
                (e > 0).then(|| (k.drop_one(v), c * e as i128))
            })
            .collect()
    }

    fn star(&self, a: &Poly, grads: &[Vec<(Key, i128)>], budget: &OracleBudget) -> Result<Poly> {
        let mut out = Poly::default();
        for (k, &c) in a {
            for (v, grad) in grads.iter().enumerate() {
                let e = k.get(v);
                if e == 0 {
                    continue;
                }
                let da = k.drop_one(v);
                let ca = c * e as i128;
                for (kb, cb) in grad {
                    *out.entry(da.plus(kb)).or_insert(0) += ca * cb;
                }
            }
            if out.len() > budget.max_terms {
                return Err(Error::ResourceLimit(format!(
                    "explicit polynomial exceeded {} terms",
                    budget.max_terms
                )));
            }
        }
        out.retain(|_, c| *c != 0);
        Ok(out)
    }

    /// Gaussian moment `E[Π u^{e}] / σ^{deg}` and the degree.
    fn moment(&self, k: &Key) -> (i128, u32) {
        let mut prod: i128 = 1;
        let mut deg = 0;
        for v in 0..self.vars {
            let e = k.get(v);
            if e % 2 == 1 {
                return (0, 0);
            }
            deg += e;
            let mut df: i128 = 1;
            let mut j = e as i128 - 1;
            while j > 1 {
                df *= j;
                j -= 2;
            }
            prod *= df;
        }
        (prod, deg)
    }

    fn expect(&self, poly: &Poly) -> BTreeMap<u32, i128> {
        let mut acc = BTreeMap::new();
        for (k, &c) in poly {
            let (m, deg) = self.moment(k);
            if m != 0 {
                *acc.entry(deg / 2).or_insert(0) += c * m;
            }
        }
        acc
    }

    /// `E[Σ_u ∂_u A · ∂_u B]` without building the product. Every weight
    /// lies in one orbit of the symmetry group of the model, so the sum
    /// over `u` is `vars` times the term for `u = 0`.
    fn expect_star_at_origin(&self, a: &Poly, grad_b0: &[(Key, i128)]) -> BTreeMap<u32, i128> {
        let mut classes: FxHashMap<u64, Vec<(Key, i128)>> = FxHashMap::default();
        for &(k, c) in grad_b0 {
            classes.entry(k.parity(self.vars)).or_default().push((k, c));
        }
        let mut acc = BTreeMap::new();
        for (k, &c) in a {
            let e = k.get(0);
            if e == 0 {
                continue;
            }
            let da = k.drop_one(0);
            let ca = c * e as i128;
            if let Some(partners) = classes.get(&da.parity(self.vars)) {
                for (kb, cb) in partners {
                    let (m, deg) = self.moment(&da.plus(kb));
                    if m != 0 {
                        *acc.entry(deg / 2).or_insert(0) += ca * cb * m;
                    }
                }
            }
        }
        for c in acc.values_mut() {
            *c *= self.vars as i128;
        }
        acc
    }
}

/// Reference values of the series coefficients at concrete `p`, `H`.
pub fn oracle_series(
    setting: Setting,
    p: usize,
    h: usize,
    s_max: usize,
    free: bool,
    budget: OracleBudget,
) -> Result<OracleSeries> {
    let nu = setting.nu as usize;
    let vars = match setting.scenario {
        Scenario::Sym => h * p,
        Scenario::Asym => nu * h * p,
    };
    if vars > MAX_VARS {
        return Err(Error::ResourceLimit(format!("{vars} weights exceed the oracle limit of {MAX_VARS}")));
    }
    let max_degree = (s_max + 1) * 2 * nu - 2 * s_max;
    if max_degree > FIELD as usize {
        return Err(Error::ResourceLimit(format!("degree {max_degree} exceeds packed exponent width")));
    }
    let model = Model { vars, p, h, nu, scenario: setting.scenario };
    let base = model.twice_loss(free);
    let grads: Vec<Vec<(Key, i128)>> = (0..vars).map(|v| model.derivative(&base, v)).collect();

    let mut ys = Vec::with_capacity(s_max + 1);
    let mut current = base.clone();
    for s in 0..=s_max {
        let raw = if s == 0 {
            model.expect(&base)
        } else {
            if budget.orbit_shortcut {
                let r = model.expect_star_at_origin(&current, &grads[0]);
                if s < s_max {
                    current = model.star(&current, &grads, &budget)?;
                }
                r
            } else {
                current = model.star(&current, &grads, &budget)?;
                model.expect(&current)
            }
        };
        let scale = BigRational::new(BigInt::from(1), BigInt::from(2).pow(s as u32 + 1));
        let top = raw.keys().next_back().copied().unwrap_or(0) as usize;
        let mut row = vec![BigRational::zero(); top + 1];
        for (l, c) in raw {
            row[l as usize] = BigRational::from_integer(BigInt::from(c)) * &scale;
        }
        if s == 0 && !free {
            row[0] += BigRational::new(BigInt::from(p), BigInt::from(2));
        }
        ys.push(row);
    }
    Ok(OracleSeries { ys })
}

/// Collapses `Y(p, H, σ)` at concrete `p`, `H` into coefficients of `σ^{2l}`.
pub fn collapse(poly: &MonomialPoly, p: usize, h: usize) -> Vec<BigRational> {
    let mut row: Vec<BigRational> = Vec::new();
    for (&(q, n, l), c) in poly.terms() {
        if row.len() <= l as usize {
            row.resize(l as usize + 1, BigRational::zero());
        }
        row[l as usize] += c * BigRational::from_integer(BigInt::from(p).pow(q) * BigInt::from(h).pow(n));
    }
    while row.last().is_some_and(|c| c.is_zero()) {
        row.pop();
    }
    row
}

pub fn trim(mut row: Vec<BigRational>) -> Vec<BigRational> {
    while row.last().is_some_and(|c| c.is_zero()) {
        row.pop();
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::series::compute_series;

    #[test]
    fn y0_matches_engine() {
        let s = Setting::new(2, Scenario::Sym).unwrap();
        let t = compute_series(s, 0, false, Execution::Sequential).unwrap();
        let o = oracle_series(s, 2, 2, 0, false, OracleBudget::default()).unwrap();
        assert_eq!(trim(o.ys[0].clone()), collapse(&t.ys[0], 2, 2));
    }

    #[test]
    fn orbit_shortcut_equals_full_sum() {
        let model = Model { vars: 8, p: 2, h: 2, nu: 2, scenario: Scenario::Asym };
        let base = model.twice_loss(false);
        let grads: Vec<_> = (0..8).map(|v| model.derivative(&base, v)).collect();
        let full = model.expect(&model.star(&base, &grads, &OracleBudget::default()).unwrap());
        let short = model.expect_star_at_origin(&base, &grads[0]);
        let clean = |m: BTreeMap<u32, i128>| m.into_iter().filter(|&(_, c)| c != 0).collect::<Vec<_>>();
        assert_eq!(clean(full), clean(short));
    }
}
