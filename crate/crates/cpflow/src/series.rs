//! Time-derivative coefficients of the expected loss.
//!
//! `Y_s = E[L^{⋆(s+1)}]` with the merge power taken as a left fold, and
//! `E[L(t)] ≈ Σ_s Y_s (−t)^s / (T^s s!)`.

use crate::diagram::{build_loss, merge_sum, DiagramSum, Scenario, Setting};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::wick::{MonomialPoly, WickEngine};

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub setting: Setting,
    pub free: bool,
    pub ys: Vec<MonomialPoly>,
}

pub struct Expansion {
    pub table: SeriesTable,
    /// `powers[s]` is `L^{⋆(s+1)}`.
    pub powers: Vec<DiagramSum>,
}

pub fn expand(setting: Setting, s_max: usize, free: bool, exec: Execution) -> Result<Expansion> {
    let loss = build_loss(setting, free);
    let engine = WickEngine::new(exec);
    let mut powers = Vec::with_capacity(s_max + 1);
    let mut ys = Vec::with_capacity(s_max + 1);
    let mut current = loss.clone();
    for s in 0..=s_max {
        if s > 0 {
            current = merge_sum(&current, &loss, exec);
        }
        ys.push(engine.expectation_sum(&current));
        powers.push(current.clone());
    }
    Ok(Expansion { table: SeriesTable { setting, free, ys }, powers })
}

pub fn compute_series(setting: Setting, s_max: usize, free: bool, exec: Execution) -> Result<SeriesTable> {
    Ok(expand(setting, s_max, free, exec)?.table)
}

impl SeriesTable {
    pub fn s_max(&self) -> usize {
        self.ys.len().saturating_sub(1)
    }

    /// Truncated series `Σ_{s ≤ s_cut} Y_s(p,H,σ) (−t)^s/(T^s s!)`.
    pub fn eval_truncated(&self, t: f64, t_scale: f64, p: f64, h: f64, sigma: f64, s_cut: usize) -> Result<f64> {
        if s_cut > self.s_max() {
            return Err(Error::InvalidSetting(format!("s_cut {s_cut} exceeds s_max {}", self.s_max())));
        }
        let x = -t / t_scale;
        let mut term = 1.0;
        let mut total = 0.0;
        for (s, y) in self.ys.iter().take(s_cut + 1).enumerate() {
            if s > 0 {
                term *= x / s as f64;
            }
            total += y.evaluate(p, h, sigma) * term;
        }
        Ok(total)
    }

    /// Header `nu scenario s_max [free]`, then `s <s> <terms>` blocks.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "{} {} {}{}\n",
            self.setting.nu,
            self.setting.scenario,
            self.s_max(),
            if self.free { " free" } else { "" }
        );
        for (s, y) in self.ys.iter().enumerate() {
            out.push_str(&format!("s {s} {}\n", y.len()));
            out.push_str(&y.dump());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty series dump".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() < 3 {
            return Err(Error::Parse("bad series header".into()));
        }
        let nu: u32 = h[0].parse().map_err(|_| Error::Parse("bad nu".into()))?;
        let scenario: Scenario = h[1].parse()?;
        let s_max: usize = h[2].parse().map_err(|_| Error::Parse("bad s_max".into()))?;
        let free = h.get(3) == Some(&"free");
        let mut ys = Vec::with_capacity(s_max + 1);
        for s in 0..=s_max {
            let block = lines.next().ok_or_else(|| Error::Parse(format!("missing block {s}")))?;
            let b: Vec<&str> = block.split_whitespace().collect();
            if b.len() != 3 || b[0] != "s" || b[1] != s.to_string() {
                return Err(Error::Parse(format!("bad block header '{block}'")));
            }
            let count: usize = b[2].parse().map_err(|_| Error::Parse("bad term count".into()))?;
            let body: Vec<&str> = (0..count)
                .map(|_| lines.next().ok_or_else(|| Error::Parse("truncated block".into())))
                .collect::<Result<_>>()?;
            ys.push(MonomialPoly::parse(&body.join("\n"))?);
        }
        Ok(SeriesTable { setting: Setting::new(nu, scenario)?, free, ys })
    }
}
