//! Zero-target evolution in the two extreme parameterizations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagram::{Scenario, Setting};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeRegime {
    Under,
    Over,
}

impl fmt::Display for FreeRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreeRegime::Under => "under",
            FreeRegime::Over => "over",
        })
    }
}

impl FromStr for FreeRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "under" => Ok(FreeRegime::Under),
            "over" => Ok(FreeRegime::Over),
            _ => Err(Error::Parse(format!("unknown regime '{s}' (expected under or over)"))),
        }
    }
}

/// Shape of `E[L(t)]/E[L(0)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreeShape {
    /// `(1 + c t)^{−exponent}`.
    PowerLaw { c: f64, exponent: f64 },
    /// `e^{−rate t}`.
    Exponential { rate: f64 },
}

impl FreeShape {
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        match *self {
            FreeShape::PowerLaw { c, exponent } => {
                let base = 1.0 + c * t;
                if base <= 0.0 {
                    return Err(Error::Domain(format!("1 + c t = {base} is not positive")));
                }
                Ok(base.powf(-exponent))
            }
            FreeShape::Exponential { rate } => Ok((-rate * t).exp()),
        }
    }
}

fn double_factorial(n: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = n as i64;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

pub fn free_shape(setting: Setting, regime: FreeRegime, p: f64, h: f64, sigma: f64, t_scale: f64) -> Result<FreeShape> {
    let nu = setting.nu;
    let nf = nu as f64;
    let exponent = nf / (nf - 1.0);
    let s = sigma.powf(2.0 * (nf - 1.0)) / t_scale;
    if setting.scenario == Scenario::Sym && nu % 2 == 1 {
        return Err(Error::Unsupported("free evolution for SYM with odd nu".into()));
    }
    Ok(match (regime, setting.scenario) {
        (FreeRegime::Under, Scenario::Asym) => FreeShape::PowerLaw { c: 2.0 * (nf - 1.0) * p.powf(nf - 1.0) * s, exponent },
        (FreeRegime::Under, Scenario::Sym) => {
            FreeShape::PowerLaw { c: 2.0 * nf * (nf - 1.0) * p.powf(nf - 1.0) * s, exponent }
        }
        (FreeRegime::Over, Scenario::Asym) => FreeShape::Exponential { rate: 2.0 * nf * h * s },
        (FreeRegime::Over, Scenario::Sym) => FreeShape::PowerLaw {
            c: 2.0 * nf * double_factorial(nu - 1) * (nf - 1.0) * p.powf(nf / 2.0 - 1.0) * h * s,
            exponent,
        },
    })
}

/// Normalized loss `E[L(t)]/E[L(0)]`.
pub fn free_loss(
    setting: Setting,
    regime: FreeRegime,
    p: f64,
    h: f64,
    sigma: f64,
    t_scale: f64,
    t: f64,
) -> Result<f64> {
    free_shape(setting, regime, p, h, sigma, t_scale)?.evaluate(t)
}

/// Leading `E[L(0)]` under a zero target; exact for ASYM.
pub fn free_initial_loss(setting: Setting, regime: FreeRegime, p: f64, h: f64, sigma: f64) -> f64 {
    let nu = setting.nu;
    let s2nu = (sigma * sigma).powi(nu as i32);
    match (setting.scenario, regime) {
        (Scenario::Asym, _) | (Scenario::Sym, FreeRegime::Under) => 0.5 * h * p.powi(nu as i32) * s2nu,
        (Scenario::Sym, FreeRegime::Over) => 0.5 * h * h * double_factorial(nu - 1) * p.powf(nu as f64 / 2.0) * s2nu,
    }
}
