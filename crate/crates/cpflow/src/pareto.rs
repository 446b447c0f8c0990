//! Pareto-optimal monomials of the series coefficients and the regimes they
//! induce under power-law scalings `p ∝ a^{α_p}`, `H ∝ a^{α_H}`, `σ ∝ a^{α_σ}`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::diagram::{Scenario, Setting};
use crate::error::{Error, Result};
use crate::wick::MonomialPoly;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParetoTerm {
    pub q: u32,
    pub n: u32,
    pub l: u32,
    pub coeff: BigRational,
}

/// Terms of `y` whose `(q, n)` is not dominated by another term with the
/// same `l`. The pure-target constant (`l = 0`) is not a weight monomial
/// and is skipped.
pub fn pareto_front(y: &MonomialPoly) -> Vec<ParetoTerm> {
    let mut by_l: BTreeMap<u32, Vec<(u32, u32, &BigRational)>> = BTreeMap::new();
    for (&(q, n, l), c) in y.terms() {
        if l > 0 {
            by_l.entry(l).or_default().push((q, n, c));
        }
    }
    let mut out = Vec::new();
    for (l, terms) in by_l {
        for &(q, n, c) in &terms {
            let dominated = terms.iter().any(|&(q2, n2, _)| q2 >= q && n2 >= n && (q2, n2) != (q, n));
            if !dominated {
                out.push(ParetoTerm { q, n, l, coeff: c.clone() });
            }
        }
    }
    out.sort_by_key(|t| (t.l, t.q, t.n));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PredictedTerm {
    pub q: u32,
    pub n: u32,
    pub l: u32,
    pub s_d: u32,
}

fn require_supported(setting: Setting) -> Result<()> {
    if setting.scenario == Scenario::Sym && setting.nu % 2 == 1 {
        return Err(Error::Unsupported("Pareto structure for SYM with odd nu".into()));
    }
    Ok(())
}

/// Exponents of the Pareto-optimal terms of `Y_s`.
pub fn theorem2_prediction(setting: Setting, s: u32) -> Result<Vec<PredictedTerm>> {
    require_supported(setting)?;
    let nu = setting.nu;
    let mut out = Vec::new();
    for s_d in 0..=s + 1 {
        let s_r = s + 1 - s_d;
        let two_l = nu * (s_d + 1) + (nu - 2) * s;
        for n in 1..=s_d + 1 {
            let q = match setting.scenario {
                Scenario::Sym => {
                    let q = 2 + 2 * (nu - 1) * s_d;
                    let sub = nu * (n - 1);
                    if sub > q {
                        continue;
                    }
                    (q - sub) / 2
                }
                Scenario::Asym => {
                    if s_r % 2 == 1 || (n, s_d) == (s + 2, s + 1) {
                        continue;
                    }
                    1 + (nu - 1) * (s_d + 1 - n)
                }
            };
            out.push(PredictedTerm { q, n, l: two_l / 2, s_d });
        }
    }
    out.sort_by_key(|t| (t.l, t.q, t.n));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub normal: [BigRational; 3],
    pub offset: BigRational,
    pub residual: BigRational,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Normal of the plane through the Pareto triples `(q, n, 2l)`.
pub fn plane_normal(setting: Setting) -> Result<[BigRational; 3]> {
    require_supported(setting)?;
    let nu = setting.nu as i64;
    let nh = match setting.scenario {
        Scenario::Sym => rat(nu, 2),
        Scenario::Asym => rat(nu - 1, 1),
    };
    Ok([rat(1, 1), nh, rat(1 - nu, nu)])
}

/// Largest deviation of `N·(q, n, 2l)` from its value on the first term.
pub fn planarity_check(setting: Setting, front: &[ParetoTerm]) -> Result<PlaneFit> {
    let normal = plane_normal(setting)?;
    let dot = |t: &ParetoTerm| {
        &normal[0] * BigInt::from(t.q) + &normal[1] * BigInt::from(t.n) + &normal[2] * BigInt::from(2 * t.l)
    };
    let offset = front.first().map(dot).unwrap_or_else(BigRational::zero);
    let residual = front.iter().map(|t| (dot(t) - &offset).abs()).max().unwrap_or_else(BigRational::zero);
    Ok(PlaneFit { normal, offset, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Face {
    A,
    B,
    C,
    D,
    E,
    AB,
    BC,
    CD,
    DE,
    EA,
    BE,
    Polygon,
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Face::A => "A",
            Face::B => "B",
            Face::C => "C",
            Face::D => "D",
            Face::E => "E",
            Face::AB => "A-B",
            Face::BC => "B-C",
            Face::CD => "C-D",
            Face::DE => "D-E",
            Face::EA => "E-A",
            Face::BE => "B-E",
            Face::Polygon => "whole polygon",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Parameterization {
    Over,
    Under,
    Balanced,
    Agnostic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Learning {
    No,
    Lazy,
    Rich,
}

/// Natural time scale `p^a H^b σ^c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimeScale {
    pub p: i32,
    pub h: i32,
    pub sigma: i32,
}

impl TimeScale {
    pub fn evaluate(&self, p: f64, h: f64, sigma: f64) -> f64 {
        p.powi(self.p) * h.powi(self.h) * sigma.powi(self.sigma)
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (name, e) in [("p", self.p), ("H", self.h), ("sigma", self.sigma)] {
            match e {
                0 => {}
                1 => parts.push(name.to_string()),
                e => parts.push(format!("{name}^{e}")),
            }
        }
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join("*"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regime {
    pub face: Face,
    pub natural_t: TimeScale,
    pub parameterization: Parameterization,
    pub learning: Learning,
    pub interpretation: Option<&'static str>,
    /// The leading vertex set is not a face of the polygon.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Vertex {
    A,
    B,
    C,
    D,
    E,
}

/// Vertex positions as affine functions of `s`: `((n0, n1), (d0, d1))` for
/// `n = n0 + n1 s`, `s_D = d0 + d1 s`. ASYM uses even `s`, where the
/// polygon is a pentagon.
fn vertices(scenario: Scenario) -> Vec<(Vertex, (i64, i64), (i64, i64))> {
    match scenario {
        Scenario::Sym => vec![
            (Vertex::A, (1, 0), (1, 1)),
            (Vertex::B, (2, 1), (1, 1)),
            (Vertex::E, (1, 0), (0, 0)),
        ],
        Scenario::Asym => vec![
            (Vertex::A, (1, 0), (1, 1)),
            (Vertex::B, (1, 1), (1, 1)),
            (Vertex::C, (0, 1), (-1, 1)),
            (Vertex::D, (2, 0), (1, 0)),
            (Vertex::E, (1, 0), (1, 0)),
        ],
    }
}

/// Leading face of the polygon under the scaling `α = (α_p, α_H, α_σ)`.
pub fn classify_regime(setting: Setting, alpha: &[BigRational; 3]) -> Result<Regime> {
    require_supported(setting)?;
    if !alpha[0].is_positive() || !alpha[1].is_positive() {
        return Err(Error::Domain("alpha_p and alpha_H must be positive".into()));
    }
    let nu = BigRational::from_integer(BigInt::from(setting.nu));
    let one = BigRational::from_integer(BigInt::from(1));
    let two = BigRational::from_integer(BigInt::from(2));
    // exponent of the Pareto term at (n, s_D) for a given s
    let exponent = |n: &BigRational, s_d: &BigRational, s: &BigRational| {
        let q = match setting.scenario {
            Scenario::Sym => &one + (&nu - &one) * s_d - &nu / &two * (n - &one),
            Scenario::Asym => &one + (&nu - &one) * (s_d + &one - n),
        };
        let two_l = &nu * (s_d + &one) + (&nu - &two) * s;
        &alpha[0] * q + &alpha[1] * n + &alpha[2] * two_l
    };
    let mut scored: Vec<(Vertex, BigRational, BigRational)> = Vec::new();
    for (v, (n0, n1), (d0, d1)) in vertices(setting.scenario) {
        let at = |s: i64| {
            let s_r = BigRational::from_integer(BigInt::from(s));
            let n = BigRational::from_integer(BigInt::from(n0 + n1 * s));
            let d = BigRational::from_integer(BigInt::from(d0 + d1 * s));
            exponent(&n, &d, &s_r)
        };
        let c = at(0);
        let slope = at(1) - &c;
        scored.push((v, slope, c));
    }
    let best = scored.iter().map(|(_, s, c)| (s.clone(), c.clone())).max().expect("non-empty");
    let mut lead: Vec<Vertex> = scored.iter().filter(|(_, s, c)| (s.clone(), c.clone()) == best).map(|x| x.0).collect();
    lead.sort();
    Ok(describe(setting, &lead))
}

fn describe(setting: Setting, lead: &[Vertex]) -> Regime {
    use Learning as L;
    use Parameterization as P;
    use Vertex as V;
    let nu = setting.nu as i32;
    let has = |v: Vertex| lead.contains(&v);
    let (face, param, learning, interp, degenerate) = match setting.scenario {
        Scenario::Sym => match lead {
            [V::A] => (Face::A, P::Under, L::No, Some("Free evolution"), false),
            [V::B] => (Face::B, P::Over, L::No, Some("Free evolution"), false),
            [V::E] => (Face::E, P::Agnostic, L::Rich, None, false),
            [V::A, V::B] => (Face::AB, P::Balanced, L::No, Some("Free evolution"), false),
            [V::B, V::E] => (Face::BE, P::Over, L::Rich, Some("Mean-field"), false),
            [V::A, V::E] => (Face::EA, P::Under, L::Rich, None, false),
            _ => (Face::Polygon, P::Balanced, L::Rich, None, lead.len() != 3),
        },
        Scenario::Asym => match lead {
            [V::A] => (Face::A, P::Under, L::No, Some("Free evolution"), false),
            [V::B] => (Face::B, P::Over, L::No, Some("Free evolution"), false),
            [V::C] => (Face::C, P::Over, L::Lazy, Some("NTK, f(0) = 0"), false),
            [V::D] => (Face::D, P::Over, L::Rich, None, false),
            [V::E] => (Face::E, P::Under, L::Rich, None, false),
            [V::A, V::B] => (Face::AB, P::Balanced, L::No, Some("Free evolution"), false),
            [V::B, V::C] => (Face::BC, P::Over, L::Lazy, Some("NTK"), false),
            [V::C, V::D] => (Face::CD, P::Over, L::Rich, Some("Mean-field"), false),
            [V::D, V::E] => (Face::DE, P::Balanced, L::Rich, None, false),
            [V::A, V::E] => (Face::EA, P::Under, L::Rich, None, false),
            _ => (Face::Polygon, P::Balanced, L::Rich, None, lead.len() != 5),
        },
    };
    let natural_t = match setting.scenario {
        Scenario::Sym if has(V::E) => TimeScale { p: 0, h: 0, sigma: nu - 2 },
        Scenario::Sym if has(V::A) => TimeScale { p: nu - 1, h: 0, sigma: 2 * nu - 2 },
        Scenario::Sym => TimeScale { p: nu / 2 - 1, h: 1, sigma: 2 * nu - 2 },
        Scenario::Asym if has(V::B) || has(V::C) => TimeScale { p: 0, h: 1, sigma: 2 * nu - 2 },
        Scenario::Asym if has(V::D) || has(V::E) => TimeScale { p: 0, h: 0, sigma: nu - 2 },
        Scenario::Asym => TimeScale { p: nu - 1, h: 0, sigma: 2 * nu - 2 },
    };
    Regime { face, natural_t, parameterization: param, learning, interpretation: interp, degenerate }
}

/// Parses a decimal or fraction (`"-0.75"`, `"3/4"`, `"2"`) exactly.
pub fn parse_exact(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.contains('/') {
        return crate::wick::parse_rational(s);
    }
    let bad = || Error::Parse(format!("not a number: '{s}'"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = BigInt::from(10).pow(frac_part.len() as u32);
    let r = BigRational::new(num, den);
    Ok(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: &str, b: &str, c: &str) -> [BigRational; 3] {
        [parse_exact(a).unwrap(), parse_exact(b).unwrap(), parse_exact(c).unwrap()]
    }

    #[test]
    fn sym_even_prediction_counts() {
        let s = Setting::new(2, Scenario::Sym).unwrap();
        // triangle: Σ_{s_D=0}^{s+1} (s_D+1) points
        for k in 0..4u32 {
            let n = theorem2_prediction(s, k).unwrap().len() as u32;
            assert_eq!(n, (k + 2) * (k + 3) / 2);
        }
    }

    #[test]
    fn asym_exclusions() {
        let s = Setting::new(3, Scenario::Asym).unwrap();
        for k in 0..5u32 {
            for t in theorem2_prediction(s, k).unwrap() {
                assert_eq!((k + 1 - t.s_d) % 2, 0);
                assert_ne!((t.n, t.s_d), (k + 2, k + 1));
            }
        }
    }

    #[test]
    fn odd_sym_unsupported() {
        let s = Setting::new(3, Scenario::Sym).unwrap();
        assert!(matches!(theorem2_prediction(s, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn ntk_face() {
        let s = Setting::new(2, Scenario::Asym).unwrap();
        let r = classify_regime(s, &alpha("1", "2", "-0.75")).unwrap();
        assert_eq!(r.face, Face::BC);
        assert_eq!(r.natural_t, TimeScale { p: 0, h: 1, sigma: 2 });
        assert_eq!(r.learning, Learning::Lazy);
    }

    #[test]
    fn joint_scaling_is_whole_polygon() {
        // p^{ν−1} ≍ H ≍ σ^{−ν}
        let s = Setting::new(2, Scenario::Asym).unwrap();
        assert_eq!(classify_regime(s, &alpha("1", "1", "-0.5")).unwrap().face, Face::Polygon);
        // p^{ν−1} ≍ H^{2(ν−1)/ν} ≍ σ^{−ν} for SYM ν = 4
        let s = Setting::new(4, Scenario::Sym).unwrap();
        assert_eq!(classify_regime(s, &alpha("2", "4", "-1.5")).unwrap().face, Face::Polygon);
    }

    #[test]
    fn sym_mean_field() {
        // ν = 2: H/p → ∞ with Hσ² ≍ 1
        let s = Setting::new(2, Scenario::Sym).unwrap();
        let r = classify_regime(s, &alpha("1", "2", "-1")).unwrap();
        assert_eq!(r.face, Face::BE);
        assert_eq!(r.interpretation, Some("Mean-field"));
    }

    #[test]
    fn exact_decimal_parse() {
        assert_eq!(parse_exact("-0.75").unwrap(), rat(-3, 4));
        assert_eq!(parse_exact("3/6").unwrap(), rat(1, 2));
        assert!(parse_exact("1e3").is_err());
    }
}
