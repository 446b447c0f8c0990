//! Observables sampled along a run.

use serde::{Deserialize, Serialize};

use super::model::WeightState;
use crate::diagram::Scenario;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Probe {
    /// Model entry `f_I`.
    Entry { index: Vec<usize> },
    /// Tangent kernel entry `Θ_{I;I'}`.
    Ntk { left: Vec<usize>, right: Vec<usize> },
    /// `Θ_{i,j;j,j'} − f_{i,j'}` for SYM `ν = 2`.
    Sym2Identity { i: usize, j: usize, j2: usize },
}

impl Probe {
    pub fn name(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("_");
        match self {
            Probe::Entry { index } => format!("f_{}", join(index)),
            Probe::Ntk { left, right } => format!("ntk_{}__{}", join(left), join(right)),
            Probe::Sym2Identity { i, j, j2 } => format!("sym2id_{i}_{j}_{j2}"),
        }
    }

    pub fn validate(&self, nu: usize, p: usize, scenario: Scenario) -> Result<()> {
        let check = |idx: &[usize]| {
            if idx.len() != nu || idx.iter().any(|&i| i >= p) {
                Err(Error::Domain(format!("probe index {idx:?} outside [0, {p})^{nu}")))
            } else {
                Ok(())
            }
        };
        match self {
            Probe::Entry { index } => check(index),
            Probe::Ntk { left, right } => check(left).and(check(right)),
            Probe::Sym2Identity { i, j, j2 } => {
                if nu != 2 || scenario != Scenario::Sym {
                    return Err(Error::Unsupported("the sym2 identity probe needs SYM with nu = 2".into()));
                }
                check(&[*i, *j]).and(check(&[*j, *j2]))
            }
        }
    }

    pub fn evaluate(&self, state: &WeightState) -> Result<f64> {
        match self {
            Probe::Entry { index } => state.entry(index),
            Probe::Ntk { left, right } => probe_ntk(state, left, right),
            Probe::Sym2Identity { i, j, j2 } => Ok(probe_ntk(state, &[*i, *j], &[*j, *j2])? - state.entry(&[*i, *j2])?),
        }
    }
}

/// `Θ_{I;I'} = Σ_u ∂f_I/∂u ∂f_{I'}/∂u` in closed product form. Under SYM
/// every mode of `I` can meet every mode of `I'` through the shared factor.
pub fn probe_ntk(state: &WeightState, left: &[usize], right: &[usize]) -> Result<f64> {
    state.check_index(left)?;
    state.check_index(right)?;
    let nu = state.nu;
    let mut total = 0.0;
    for k in 0..state.h() {
        let row = |m: usize, i: usize| state.factor(m)[[k, i]];
        match state.scenario {
            Scenario::Asym => {
                for m in 0..nu {
                    if left[m] != right[m] {
                        continue;
                    }
                    let mut prod = 1.0;
                    for a in (0..nu).filter(|&a| a != m) {
                        prod *= row(a, left[a]) * row(a, right[a]);
                    }
                    total += prod;
                }
            }
            Scenario::Sym => {
                for m in 0..nu {
                    for mm in 0..nu {
                        if left[m] != right[mm] {
                            continue;
                        }
                        let mut prod = 1.0;
                        for a in (0..nu).filter(|&a| a != m) {
                            prod *= row(0, left[a]);
                        }
                        for b in (0..nu).filter(|&b| b != mm) {
                            prod *= row(0, right[b]);
                        }
                        total += prod;
                    }
                }
            }
        }
    }
    Ok(total)
}
