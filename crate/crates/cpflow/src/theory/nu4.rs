//! Gradient ascent (negative time) for the symmetric order-4 model.
//!
//! With `y = H/p²`, `θ = 1 + 3y`, `ρ = p³σ⁴` and `τ = t/T ≤ 0`,
//! `E[L] = p/2 + p² g` where
//! `g = (yθ/2)(pσ²φF(σ²ψ))⁴ − (y/8) pσ⁴ φ² F′(σ²ψ)`, `ψ′ = φ`,
//! and `1/φ² = 1 + 16θρ ∫₀^{σ²ψ} F³ =: R(ψ)` is conserved.

use libm::erfc;

use super::numerics::{bisect, dopri5, integrate, integrate_to_inf, integrate_to_neg_inf, OdeOptions, OdeStop};
use crate::error::{Error, Result};

const SERIES_ZONE: f64 = 0.05;
const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-14;

/// `F(a) = ∫₀^∞ u e^{4au² − u} du` for `a ≤ 0`.
pub fn big_f(a: f64) -> Result<f64> {
    if a > 0.0 {
        return Err(Error::Domain(format!("F needs a <= 0, got {a}")));
    }
    if a == 0.0 {
        return Ok(1.0);
    }
    if -a < SERIES_ZONE {
        return big_f_quadrature(a);
    }
    let w = -a;
    let z = 1.0 / (4.0 * w.sqrt());
    let scaled = (z * z).exp() * erfc(z);
    Ok(1.0 / (8.0 * w) - std::f64::consts::PI.sqrt() / 32.0 * w.powf(-1.5) * scaled)
}

pub fn big_f_quadrature(a: f64) -> Result<f64> {
    integrate_to_inf(|u| u * (4.0 * a * u * u - u).exp(), 0.0, QUAD_ABS, QUAD_REL)
}

/// `F′(a) = 4 ∫₀^∞ u³ e^{4au² − u} du`.
pub fn big_f_prime(a: f64) -> Result<f64> {
    if a > 0.0 {
        return Err(Error::Domain(format!("F' needs a <= 0, got {a}")));
    }
    if -a < SERIES_ZONE {
        return big_f_prime_quadrature(a);
    }
    // moments I_n = ∫ u^n e^{4au²−u} satisfy 8a I_{n+1} − I_n = −n I_{n−1}
    let f = big_f(a)?;
    let i0 = 1.0 + 8.0 * a * f;
    let i2 = (f - i0) / (8.0 * a);
    let i3 = (i2 - 2.0 * f) / (8.0 * a);
    Ok(4.0 * i3)
}

pub fn big_f_prime_quadrature(a: f64) -> Result<f64> {
    integrate_to_inf(|u| 4.0 * u * u * u * (4.0 * a * u * u - u).exp(), 0.0, QUAD_ABS, QUAD_REL)
}

fn f_unchecked(a: f64) -> f64 {
    big_f(a.min(0.0)).unwrap_or(f64::NAN)
}

/// `∫₀^a F³` for `a ≤ 0`.
pub fn f_cubed_integral(a: f64) -> Result<f64> {
    if a >= 0.0 {
        return Ok(0.0);
    }
    Ok(-integrate(|u| f_unchecked(u).powi(3), a, 0.0, QUAD_ABS, QUAD_REL)?)
}

/// `∫_{−∞}^0 F³`.
pub fn f_cubed_total() -> Result<f64> {
    integrate_to_neg_inf(|u| f_unchecked(u).powi(3), 0.0, QUAD_ABS, QUAD_REL)
}

/// Critical `ρ* = 1 / (16 θ ∫_{−∞}^0 F³)`.
pub fn nu4_threshold(theta: f64) -> Result<f64> {
    if theta < 1.0 {
        return Err(Error::Domain(format!("theta = 1 + 3H/p² must be >= 1, got {theta}")));
    }
    Ok(1.0 / (16.0 * theta * f_cubed_total()?))
}

#[derive(Clone, Copy, Debug)]
pub struct Nu4Params {
    pub p: f64,
    pub h: f64,
    pub sigma: f64,
}

impl Nu4Params {
    pub fn y(&self) -> f64 {
        self.h / (self.p * self.p)
    }
    pub fn theta(&self) -> f64 {
        1.0 + 3.0 * self.y()
    }
    pub fn rho(&self) -> f64 {
        self.p.powi(3) * self.sigma.powi(4)
    }
    fn s2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `R(ψ) = 1 + 16θρ ∫₀^{σ²ψ} F³`.
    pub fn radicand(&self, psi: f64) -> Result<f64> {
        Ok(1.0 + 16.0 * self.theta() * self.rho() * f_cubed_integral(self.s2() * psi)?)
    }

    /// `g(ψ, φ)`; the expected loss is `p/2 + p² g`.
    pub fn g(&self, psi: f64, phi: f64) -> Result<f64> {
        let a = self.s2() * psi;
        let f = big_f(a)?;
        let fp = big_f_prime(a)?;
        let (p, s2, y) = (self.p, self.s2(), self.y());
        Ok(0.5 * y * self.theta() * (p * s2 * phi * f).powi(4) - y / 8.0 * p * s2 * s2 * phi * phi * fp)
    }

    pub fn loss(&self, psi: f64, phi: f64) -> Result<f64> {
        Ok(self.p / 2.0 + self.p * self.p * self.g(psi, phi)?)
    }
}

#[derive(Clone, Debug)]
pub struct Nu4Trajectory {
    /// Requested times that were reached, in the order given.
    pub tau: Vec<f64>,
    pub loss: Vec<f64>,
    /// Largest `|1/φ² − R(ψ)|` seen at accepted steps.
    pub max_residual: f64,
    /// Blow-up time if the radicand reaches zero.
    pub tau_crit: Option<f64>,
}

/// Above this `φ` the integration switches to `ψ` as the independent variable.
const PHI_SWITCH: f64 = 1e3;

/// Integrates the ascent to the requested times `τ ≤ 0`. Times beyond a
/// blow-up are dropped from the result.
pub fn nu4_trajectory(params: Nu4Params, taus: &[f64]) -> Result<Nu4Trajectory> {
    if taus.iter().any(|&t| t > 0.0) {
        return Err(Error::Domain("the ascent solution needs tau <= 0".into()));
    }
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[b].total_cmp(&taus[a]));
    let s_out: Vec<f64> = order.iter().map(|&i| -taus[i]).collect();
    let c = 8.0 * params.theta() * params.rho() * params.s2();
    let s2 = params.s2();
    let mut max_residual = 0.0f64;
    let mut residual_err = None;
    let mut last = (0.0, 0.0, 1.0);
    let (states, stop) = dopri5(
        |_, y, d| {
            let f = f_unchecked(s2 * y[0]);
            d[0] = -y[1];
            d[1] = c * y[1].powi(4) * f * f * f;
        },
        0.0,
        &[0.0, 1.0],
        &s_out,
        OdeOptions::default(),
        |s, y| {
            match params.radicand(y[0]) {
                Ok(r) => max_residual = max_residual.max((1.0 / (y[1] * y[1]) - r).abs()),
                Err(e) => residual_err = Some(e),
            }
            last = (s, y[0], y[1]);
            y[1] < PHI_SWITCH
        },
    )?;
    if let Some(e) = residual_err {
        return Err(e);
    }
    let mut tau = Vec::with_capacity(taus.len());
    let mut loss = Vec::with_capacity(taus.len());
    let mut reached = vec![None; taus.len()];
    for (k, st) in states.iter().enumerate() {
        reached[order[k]] = Some(params.loss(st[0], st[1])?);
    }
    let mut tau_crit = None;
    if let OdeStop::Event(_) | OdeStop::StepCollapse(_) = stop {
        let (s_cur, psi_cur, _) = last;
        if let Some(blow) = BlowUp::locate(params, s_cur, psi_cur)? {
            tau_crit = Some(-blow.s_crit);
            for k in states.len()..order.len() {
                let s = s_out[k];
                if s >= blow.s_crit {
                    break;
                }
                let psi = blow.psi_at_distance(blow.s_crit - s)?;
                let r = params.radicand(psi)?;
                reached[order[k]] = Some(params.loss(psi, r.powf(-0.5))?);
            }
        }
    }
    for (i, v) in reached.into_iter().enumerate() {
        if let Some(v) = v {
            tau.push(taus[i]);
            loss.push(v);
        }
    }
    Ok(Nu4Trajectory { tau, loss, max_residual, tau_crit })
}

/// Blow-up location in the `ψ` parameterization, where `dτ/dψ = R(ψ)^{1/2}`.
pub struct BlowUp {
    pub params: Nu4Params,
    pub psi_crit: f64,
    pub s_crit: f64,
}

impl BlowUp {
    /// Finds the zero of the radicand below `psi_cur`, if there is one.
    pub fn locate(params: Nu4Params, s_cur: f64, psi_cur: f64) -> Result<Option<BlowUp>> {
        let r = |psi: f64| params.radicand(psi).unwrap_or(f64::NAN);
        let mut step = psi_cur.abs().max(1.0) * 1e-3;
        let mut lo = psi_cur - step;
        while r(lo) > 0.0 {
            step *= 2.0;
            lo = psi_cur - step;
            if step > 1e12 {
                return Ok(None);
            }
        }
        let psi_crit = bisect(r, lo, psi_cur, 1e-15 * psi_cur.abs().max(1.0))?;
        let blow = BlowUp { params, psi_crit, s_crit: 0.0 };
        let extra = blow.distance(psi_cur)?;
        Ok(Some(BlowUp { s_crit: s_cur + extra, ..blow }))
    }

    /// `|τ(ψ) − τ_crit| = ∫_{ψ_crit}^{ψ} R^{1/2}`.
    pub fn distance(&self, psi: f64) -> Result<f64> {
        integrate(
            |u| self.params.radicand(u).map(|r| r.max(0.0).sqrt()).unwrap_or(f64::NAN),
            self.psi_crit,
            psi,
            1e-16,
            1e-11,
        )
    }

    /// `ψ` at distance `delta` before the blow-up.
    pub fn psi_at_distance(&self, delta: f64) -> Result<f64> {
        let mut hi = self.psi_crit + 1e-6 * self.psi_crit.abs().max(1.0);
        while self.distance(hi)? < delta {
            hi = self.psi_crit + 2.0 * (hi - self.psi_crit);
        }
        bisect(|psi| self.distance(psi).unwrap_or(f64::NAN) - delta, self.psi_crit, hi, 1e-15 * hi.abs().max(1.0))
    }

    /// `(|τ − τ_crit|, g)` at the given distances before the blow-up.
    pub fn profile(&self, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
        deltas
            .iter()
            .map(|&d| {
                let psi = self.psi_at_distance(d)?;
                let r = self.params.radicand(psi)?;
                Ok((d, self.params.g(psi, r.powf(-0.5))?))
            })
            .collect()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Divergence exponent of `g` fitted over the decade `|τ − τ_crit| ∈ [δ, 10δ]`.
pub fn blowup_exponent(params: Nu4Params, delta: f64) -> Result<Option<f64>> {
    let traj = nu4_trajectory(params, &[-1e6])?;
    let Some(tc) = traj.tau_crit else { return Ok(None) };
    let blow = BlowUp::locate(params, 0.0, 0.0)?.map(|b| BlowUp { s_crit: -tc, ..b });
    let Some(blow) = blow else { return Ok(None) };
    let deltas: Vec<f64> = (0..=10).map(|k| delta * 10f64.powf(k as f64 / 10.0)).collect();
    Ok(Some(log_log_slope(&blow.profile(&deltas)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_values() {
        assert_eq!(big_f(0.0).unwrap(), 1.0);
        assert!((big_f_prime(0.0).unwrap() - 24.0).abs() < 1e-12);
        for a in [-0.06, -0.3, -2.0, -40.0] {
            let closed = big_f(a).unwrap();
            let quad = big_f_quadrature(a).unwrap();
            assert!((closed - quad).abs() < 1e-12 * quad, "{a}: {closed} {quad}");
            let dc = big_f_prime(a).unwrap();
            let dq = big_f_prime_quadrature(a).unwrap();
            assert!((dc - dq).abs() < 1e-10 * dq.abs(), "{a}: {dc} {dq}");
        }
    }

    #[test]
    fn loss_at_zero() {
        let pr = Nu4Params { p: 16.0, h: 64.0, sigma: 0.09 };
        let (y, t, p, s4) = (pr.y(), pr.theta(), pr.p, pr.sigma.powi(4));
        let want = y * (t * p.powi(4) * s4 * s4 / 2.0 - 3.0 * p * s4);
        assert!((pr.g(0.0, 1.0).unwrap() - want).abs() < 1e-15);
    }
}
