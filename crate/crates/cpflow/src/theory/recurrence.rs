//! Coefficient recurrences along the polygon boundary and the Narayana
//! structure of circular diagrams.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::diagram::{Scenario, Setting};
use crate::error::{Error, Result};
use crate::series::SeriesTable;

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

pub fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `C_s = 2^{s+1} [p^{ν+(ν−1)s} H σ^{2(ν+(ν−1)s)}] Y_s / s!` of a zero-target
/// series, normalized so that `C_0 = 1`.
pub fn flower_coefficients(table: &SeriesTable) -> Result<Vec<BigRational>> {
    if !table.free {
        return Err(Error::InvalidSetting("flower coefficients need a zero-target series".into()));
    }
    let nu = table.setting.nu;
    Ok(table
        .ys
        .iter()
        .enumerate()
        .map(|(s, y)| {
            let e = nu + (nu - 1) * s as u32;
            let scale = BigRational::from_integer(BigInt::from(2).pow(s as u32 + 1));
            y.coefficient((e, 1, e)) * scale / BigRational::from_integer(factorial(s as u32))
        })
        .collect())
}

/// Growth factor `F` in `s C_s = F (1 + (ν−1)s) C_{s−1}`.
pub fn flower_factor(setting: Setting) -> u32 {
    match setting.scenario {
        Scenario::Asym => 4,
        Scenario::Sym => 4 * setting.nu,
    }
}

/// Coefficients implied by the recurrence from `C_0 = 1`.
pub fn flower_recurrence(setting: Setting, s_max: usize) -> Vec<BigRational> {
    let f = flower_factor(setting) as i64;
    let nu = setting.nu as i64;
    let mut out = vec![BigRational::one()];
    for s in 1..=s_max as i64 {
        let prev = out.last().unwrap().clone();
        out.push(prev * int(f * (1 + (nu - 1) * s)) / int(s));
    }
    out
}

pub fn narayana(a: u32, b: u32) -> BigInt {
    if a == 0 || b == 0 || b > a {
        return BigInt::zero();
    }
    binomial(a, b) * binomial(a, b - 1) / BigInt::from(a)
}

/// `M_{s,s_D}` read off the Pareto terms of a SYM ν = 2 series:
/// coefficient of `p^{s_D+2−n} H^n σ^{2(s_D+1)}` divided by `N_{s_D+1,n}`.
/// Fails if the quotient depends on `n`.
pub fn sym2_m_table(table: &SeriesTable) -> Result<Vec<Vec<BigRational>>> {
    if table.setting != Setting::new(2, Scenario::Sym)? || table.free {
        return Err(Error::InvalidSetting("M table needs the SYM nu=2 series with target".into()));
    }
    let mut out = Vec::new();
    for (s, y) in table.ys.iter().enumerate() {
        let mut row = Vec::new();
        for s_d in 0..=s as u32 + 1 {
            let mut m: Option<BigRational> = None;
            for n in 1..=s_d + 1 {
                let c = y.coefficient((s_d + 2 - n, n, s_d + 1));
                let v = c / BigRational::from_integer(narayana(s_d + 1, n));
                match &m {
                    None => m = Some(v),
                    Some(prev) if *prev != v => {
                        return Err(Error::InvalidSetting(format!(
                            "coefficient ratio at s={s}, s_D={s_d} depends on n"
                        )))
                    }
                    _ => {}
                }
            }
            row.push(m.unwrap());
        }
        out.push(row);
    }
    Ok(out)
}

/// `M_{s,s_D} = −4(s_D+1) M_{s−1,s_D} + 4 s_D M_{s−1,s_D−1}` from
/// `M_{0,0} = −1`, `M_{0,1} = 1/2`.
pub fn sym2_m_recurrence(s_max: usize) -> Vec<Vec<BigRational>> {
    let mut rows = vec![vec![int(-1), BigRational::new(BigInt::one(), BigInt::from(2))]];
    for s in 1..=s_max {
        let prev = &rows[s - 1];
        let row: Vec<BigRational> = (0..=s + 1)
            .map(|s_d| {
                let keep = prev.get(s_d).cloned().unwrap_or_else(BigRational::zero) * int(-4 * (s_d as i64 + 1));
                let shift = if s_d > 0 { prev[s_d - 1].clone() * int(4 * s_d as i64) } else { BigRational::zero() };
                keep + shift
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// Counts, by number `n` of H-classes, the pairings of the circular diagram
/// with `s_D + 1` H-nodes that leave `q + n = s_D + 2` node classes.
/// `result[n - 1]` is the count for `n`.
pub fn minimal_contractions(s_d: u32) -> Vec<u64> {
    let k = (s_d + 1) as usize;
    // edge 2j joins H_j–P_j, edge 2j+1 joins P_j–H_{j+1}
    let ends: Vec<(usize, usize)> = (0..2 * k).map(|e| if e % 2 == 0 { (e / 2, e / 2) } else { ((e / 2 + 1) % k, e / 2) }).collect();
    let mut counts = vec![0u64; k];
    let mut partner = vec![usize::MAX; 2 * k];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    fn walk(partner: &mut Vec<usize>, ends: &[(usize, usize)], k: usize, counts: &mut [u64]) {
        let Some(first) = partner.iter().position(|&x| x == usize::MAX) else {
            let mut hp: Vec<usize> = (0..k).collect();
            let mut pp: Vec<usize> = (0..k).collect();
            for (e, &f) in partner.iter().enumerate() {
                if e < f {
                    let (h1, p1) = ends[e];
                    let (h2, p2) = ends[f];
                    let (a, b) = (find(&mut hp, h1), find(&mut hp, h2));
                    hp[a] = b;
                    let (a, b) = (find(&mut pp, p1), find(&mut pp, p2));
                    pp[a] = b;
                }
            }
            let n = (0..k).filter(|&v| find(&mut hp, v) == v).count();
            let q = (0..k).filter(|&v| find(&mut pp, v) == v).count();
            if q + n == k + 1 {
                counts[n - 1] += 1;
            }
            return;
        };
        for other in first + 1..partner.len() {
            if partner[other] == usize::MAX {
                partner[first] = other;
                partner[other] = first;
                walk(partner, ends, k, counts);
                partner[first] = usize::MAX;
                partner[other] = usize::MAX;
            }
        }
    }
    walk(&mut partner, &ends, k, &mut counts);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narayana_small() {
        let row: Vec<BigInt> = (1..=4).map(|b| narayana(4, b)).collect();
        assert_eq!(row, [1, 6, 6, 1].map(BigInt::from));
    }

    #[test]
    fn m_recurrence_first_rows() {
        let m = sym2_m_recurrence(1);
        assert_eq!(m[1], vec![int(4), int(-8), int(4)]);
    }

    #[test]
    fn minimal_contractions_total_is_catalan() {
        for s_d in 0..5u32 {
            let total: u64 = minimal_contractions(s_d).iter().sum();
            let k = s_d + 1;
            let catalan = binomial(2 * k, k) / BigInt::from(k + 1);
            assert_eq!(BigInt::from(total), catalan);
        }
    }
}
