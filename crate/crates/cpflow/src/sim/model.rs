//! Weights of the CP model and exact full-batch loss and gradient.

use ndarray::{Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagram::Scenario;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// `F_{i…i} = 1`, zero elsewhere.
    #[default]
    Identity,
    /// `F = 0`.
    Zero,
}

/// How loss and gradient are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Cheapest of `gram` and `dense` for the given sizes.
    #[default]
    Auto,
    /// Hidden-index Gram matrices; `O(H² p ν)` per step.
    Gram,
    /// Full model tensor through Khatri–Rao products; `O(p^ν H ν)`.
    Dense,
    /// Tuple-by-tuple enumeration. Slow; kept as a reference.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nu: u32,
    pub scenario: Scenario,
    pub p: usize,
    pub h: usize,
    pub sigma: f64,
    /// Time scale `T` of the flow `du/dt = −∂L/∂u / T`.
    pub t_scale: f64,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub mode: EvalMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.nu) {
            return Err(Error::InvalidSetting(format!("nu must be in 2..=16, got {}", self.nu)));
        }
        if self.p == 0 || self.h == 0 {
            return Err(Error::InvalidSetting("p and h must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSetting(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.t_scale > 0.0 && self.t_scale.is_finite()) {
            return Err(Error::InvalidSetting(format!("t_scale must be positive, got {}", self.t_scale)));
        }
        let tuples = (self.p as f64).powi(self.nu as i32);
        match self.resolved_mode() {
            EvalMode::Gram if self.h > 2 * GRAM_MAX_H => {
                return Err(Error::ResourceLimit(format!("Gram matrices of size {0} x {0}", self.h)));
            }
            EvalMode::Dense | EvalMode::Direct if tuples > 1e8 => {
                return Err(Error::ResourceLimit(format!("{}^{} index tuples", self.p, self.nu)));
            }
            _ => {}
        }
        Ok(())
    }

    /// Mode actually used for `Auto`.
    pub fn resolved_mode(&self) -> EvalMode {
        if self.mode != EvalMode::Auto {
            return self.mode;
        }
        let (p, h, nu) = (self.p as f64, self.h as f64, self.nu as i32);
        let gram = h * h * p;
        let dense = p.powi(nu) * h;
        if self.h <= GRAM_MAX_H && gram <= dense {
            EvalMode::Gram
        } else {
            EvalMode::Dense
        }
    }

    fn factor_count(&self) -> usize {
        match self.scenario {
            Scenario::Sym => 1,
            Scenario::Asym => self.nu as usize,
        }
    }
}

/// Above this hidden size `auto` never builds `H × H` Gram matrices.
const GRAM_MAX_H: usize = 8192;

/// Weight matrices of shape `H × p`: `ν` of them under ASYM, one under SYM.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightState {
    pub nu: usize,
    pub scenario: Scenario,
    pub factors: Vec<Array2<f64>>,
}

impl WeightState {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        WeightState {
            nu: cfg.nu as usize,
            scenario: cfg.scenario,
            factors: vec![Array2::zeros((cfg.h, cfg.p)); cfg.factor_count()],
        }
    }

    pub fn p(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn h(&self) -> usize {
        self.factors[0].nrows()
    }

    /// Factor multiplying mode `m`.
    pub fn factor(&self, m: usize) -> &Array2<f64> {
        match self.scenario {
            Scenario::Sym => &self.factors[0],
            Scenario::Asym => &self.factors[m],
        }
    }

    /// `f_I = Σ_k Π_m u^{(m)}_{k, i_m}`.
    pub fn entry(&self, index: &[usize]) -> Result<f64> {
        self.check_index(index)?;
        let mut total = 0.0;
        for k in 0..self.h() {
            let mut prod = 1.0;
            for (m, &i) in index.iter().enumerate() {
                prod *= self.factor(m)[[k, i]];
            }
            total += prod;
        }
        Ok(total)
    }

    pub(crate) fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.nu || index.iter().any(|&i| i >= self.p()) {
            return Err(Error::Domain(format!(
                "index {index:?} outside [0, {})^{}",
                self.p(),
                self.nu
            )));
        }
        Ok(())
    }

    /// In-place `u ← u − step · g`.
    pub fn axpy(&mut self, step: f64, grad: &[Array2<f64>]) {
        for (u, g) in self.factors.iter_mut().zip(grad) {
            u.scaled_add(-step, g);
        }
    }
}

/// I.i.d. `N(0, σ²)` weights. Stream `seed` of a ChaCha8 generator keyed by
/// `base_seed`; draws run over factors, then rows, then columns.
pub fn init_weights(cfg: &ModelConfig, base_seed: u64, seed: u64) -> WeightState {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(seed);
    let mut state = WeightState::zeros(cfg);
    for u in state.factors.iter_mut() {
        for v in u.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = cfg.sigma * z;
        }
    }
    state
}

/// Loss and gradient (one matrix per stored factor).
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Vec<Array2<f64>>,
}

pub fn loss_and_grad(state: &WeightState, cfg: &ModelConfig, batch_size: usize) -> Result<Evaluation> {
    let batch_size = batch_size.max(1);
    match cfg.resolved_mode() {
        EvalMode::Gram => Ok(gram(state, cfg.target)),
        EvalMode::Dense | EvalMode::Auto => dense(state, cfg.target, batch_size),
        EvalMode::Direct => Ok(direct(state, cfg.target, batch_size)),
    }
}

fn target_constant(state: &WeightState, target: Target) -> f64 {
    match target {
        Target::Identity => state.p() as f64 / 2.0,
        Target::Zero => 0.0,
    }
}

fn gram(state: &WeightState, target: Target) -> Evaluation {
    let nu = state.nu;
    let constant = target_constant(state, target);
    match state.scenario {
        Scenario::Sym => {
            let u = &state.factors[0];
            let g = u.dot(&u.t());
            let g_pow = g.mapv(|x| x.powi(nu as i32 - 1));
            let mut loss = 0.5 * ndarray::Zip::from(&g_pow).and(&g).fold(0.0, |acc, a, b| acc + a * b);
            let mut grad = g_pow.dot(u) * nu as f64;
            if target == Target::Identity {
                loss -= u.iter().map(|x| x.powi(nu as i32)).sum::<f64>();
                grad.zip_mut_with(u, |g, &x| *g -= nu as f64 * x.powi(nu as i32 - 1));
            }
            Evaluation { loss: loss + constant, grad: vec![grad] }
        }
        Scenario::Asym => {
            let grams: Vec<Array2<f64>> = state.factors.iter().map(|u| u.dot(&u.t())).collect();
            let mut all = grams[0].clone();
            for g in &grams[1..] {
                all *= g;
            }
            let mut loss = 0.5 * all.sum() + constant;
            let mut grad = Vec::with_capacity(nu);
            for m in 0..nu {
                let mut others = Array2::<f64>::ones(grams[0].raw_dim());
                for (mm, g) in grams.iter().enumerate() {
                    if mm != m {
                        others *= g;
                    }
                }
                grad.push(others.dot(&state.factors[m]));
            }
            if target == Target::Identity {
                let (h, p) = (state.h(), state.p());
                for k in 0..h {
                    for i in 0..p {
                        let vals: Vec<f64> = state.factors.iter().map(|u| u[[k, i]]).collect();
                        loss -= vals.iter().product::<f64>();
                        for m in 0..nu {
                            let rest: f64 = vals.iter().enumerate().filter(|&(mm, _)| mm != m).map(|(_, v)| v).product();
                            grad[m][[k, i]] -= rest;
                        }
                    }
                }
            }
            Evaluation { loss, grad }
        }
    }
}

/// Residual tensor `f − F` of shape `[p; ν]`.
pub fn residual(state: &WeightState, target: Target, batch_size: usize) -> ArrayD<f64> {
    let (p, nu) = (state.p(), state.nu);
    let cols = p.pow(nu as u32 - 1);
    let others: Vec<usize> = (1..nu).collect();
    let chunk = (batch_size / p).clamp(1, cols);
    let u0 = state.factor(0);
    let mut f = Array2::<f64>::zeros((p, cols));
    let mut start = 0;
    while start < cols {
        let end = (start + chunk).min(cols);
        let kr = khatri_rao(state, &others, start, end);
        f.slice_mut(ndarray::s![.., start..end]).assign(&u0.t().dot(&kr));
        start = end;
    }
    if target == Target::Identity {
        let diag_stride: usize = (0..nu).map(|a| p.pow(a as u32)).sum();
        let flat = f.as_slice_mut().expect("standard layout");
        for i in 0..p {
            flat[i * diag_stride] -= 1.0;
        }
    }
    f.into_shape_with_order(IxDyn(&vec![p; nu])).expect("shape")
}

/// Columns `start..end` of the row-wise Kronecker product of the factors of
/// `modes`, in row-major order over those modes. Shape `H × (end − start)`.
fn khatri_rao(state: &WeightState, modes: &[usize], start: usize, end: usize) -> Array2<f64> {
    let (h, p) = (state.h(), state.p());
    let width = end - start;
    let full = p.pow(modes.len() as u32);
    let mut out = Array2::<f64>::zeros((h, width));
    let mut row = vec![0.0; full];
    let mut next = vec![0.0; full];
    for (k, mut dst) in out.rows_mut().into_iter().enumerate() {
        row[0] = 1.0;
        let mut len = 1;
        for &m in modes {
            let u = state.factor(m).row(k);
            for a in 0..len {
                let ra = row[a];
                for (b, &ub) in u.iter().enumerate() {
                    next[a * p + b] = ra * ub;
                }
            }
            len *= p;
            std::mem::swap(&mut row, &mut next);
        }
        dst.assign(&ndarray::ArrayView1::from(&row[start..end]));
    }
    out
}

fn dense(state: &WeightState, target: Target, batch_size: usize) -> Result<Evaluation> {
    let (p, nu) = (state.p(), state.nu);
    let e = residual(state, target, batch_size);
    let loss = 0.5 * e.iter().map(|x| x * x).sum::<f64>();
    let cols = p.pow(nu as u32 - 1);
    let chunk = (batch_size / p).clamp(1, cols);
    let modes: Vec<usize> = match state.scenario {
        Scenario::Sym => vec![0],
        Scenario::Asym => (0..nu).collect(),
    };
    let mut grad = Vec::with_capacity(modes.len());
    for &m in &modes {
        let others: Vec<usize> = (0..nu).filter(|&a| a != m).collect();
        let mut order = vec![m];
        order.extend(&others);
        let em = e.view().permuted_axes(IxDyn(&order)).as_standard_layout().into_owned();
        let em = em.into_shape_with_order((p, cols)).expect("shape");
        let mut g = Array2::<f64>::zeros((state.h(), p));
        let mut start = 0;
        while start < cols {
            let end = (start + chunk).min(cols);
            let kr = khatri_rao(state, &others, start, end);
            g += &kr.dot(&em.slice(ndarray::s![.., start..end]).t());
            start = end;
        }
        grad.push(g);
    }
    if state.scenario == Scenario::Sym {
        grad[0] *= nu as f64;
    }
    Ok(Evaluation { loss, grad })
}

fn direct(state: &WeightState, target: Target, batch_size: usize) -> Evaluation {
    let (p, h, nu) = (state.p(), state.h(), state.nu);
    let total = p.pow(nu as u32);
    let mut grad: Vec<Array2<f64>> = state.factors.iter().map(|u| Array2::zeros(u.raw_dim())).collect();
    let mut loss = 0.0;
    let mut idx = vec![0usize; nu];
    let mut start = 0;
    while start < total {
        let end = (start + batch_size).min(total);
        let mut batch_loss = 0.0;
        for flat in start..end {
            let mut rest = flat;
            for slot in idx.iter_mut().rev() {
                *slot = rest % p;
                rest /= p;
            }
            let mut f = 0.0;
            for k in 0..h {
                let mut prod = 1.0;
                for (m, &i) in idx.iter().enumerate() {
                    prod *= state.factor(m)[[k, i]];
                }
                f += prod;
            }
            let diag = idx.iter().all(|&i| i == idx[0]);
            let e = if diag && target == Target::Identity { f - 1.0 } else { f };
            batch_loss += 0.5 * e * e;
            for k in 0..h {
                for m in 0..nu {
                    let mut rest = e;
                    for (mm, &i) in idx.iter().enumerate() {
                        if mm != m {
                            rest *= state.factor(mm)[[k, i]];
                        }
                    }
                    let slot = match state.scenario {
                        Scenario::Sym => 0,
                        Scenario::Asym => m,
                    };
                    grad[slot][[k, idx[m]]] += rest;
                }
            }
        }
        loss += batch_loss;
        start = end;
    }
    Evaluation { loss, grad }
}
