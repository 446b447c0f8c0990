//! Theory curves against simulated trajectories, and slope fits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{fmt_f64, Trajectory};

/// A point passes when `|sim − theory| ≤ max(rel·|theory|, abs)`. Points
/// outside `[t_min, t_max]` or with `|theory| < min_theory` are not judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub min_theory: f64,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance { rel, abs: 0.0, t_min: f64::NEG_INFINITY, t_max: f64::INFINITY, min_theory: 0.0 }
    }

    pub fn window(self, t_min: f64, t_max: f64) -> Self {
        Tolerance { t_min, t_max, ..self }
    }

    fn judged(&self, t: f64, theory: f64) -> bool {
        t >= self.t_min && t <= self.t_max && theory.abs() >= self.min_theory
    }

    fn accepts(&self, theory: f64, sim: f64) -> bool {
        (sim - theory).abs() <= (self.rel * theory.abs()).max(self.abs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub t: f64,
    pub theory: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub judged: bool,
    pub ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Powerlaw,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: FitKind,
    /// Fitted exponent (power law) or decay rate (exponential).
    pub simulated: f64,
    /// Same quantity read off the theory curve.
    pub theory: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub max_abs_z: f64,
    pub max_rel_dev: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
    pub fit: Option<FitReport>,
}

/// Matches each theory time with the nearest recorded simulation time.
pub fn compare(theory: &[(f64, f64)], sim: &Trajectory, tol: Tolerance) -> Result<CompareReport> {
    if sim.times.is_empty() || theory.is_empty() {
        return Err(Error::Domain("empty theory or simulation grid".into()));
    }
    let (lo, hi) = sim.times.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let step = if sim.times.len() > 1 { (hi - lo) / (sim.times.len() - 1) as f64 } else { 0.0 };
    let mut points = Vec::with_capacity(theory.len());
    let (mut max_z, mut max_rel) = (0.0f64, 0.0f64);
    let mut pass = true;
    for &(t, th) in theory {
        if t < lo - step || t > hi + step {
            return Err(Error::Domain(format!("theory time {t} outside simulated range [{lo}, {hi}]")));
        }
        let r = sim.nearest(t);
        let (mean, se) = (sim.loss.mean[r], sim.loss.stderr[r]);
        let z = if se > 0.0 { (mean - th) / se } else if mean == th { 0.0 } else { f64::INFINITY };
        let judged = tol.judged(t, th);
        let ok = !judged || tol.accepts(th, mean);
        if judged {
            max_z = max_z.max(z.abs());
            max_rel = max_rel.max((mean - th).abs() / th.abs());
            pass &= ok;
        }
        points.push(ComparePoint { t, theory: th, mean, stderr: se, z, judged, ok });
    }
    Ok(CompareReport { points, max_abs_z: max_z, max_rel_dev: max_rel, tolerance: tol, pass, fit: None })
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,theory,mean,stderr,z,judged,ok\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_f64(p.t),
                fmt_f64(p.theory),
                fmt_f64(p.mean),
                fmt_f64(p.stderr),
                fmt_f64(p.z),
                p.judged,
                p.ok
            );
        }
        s
    }
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::Domain("a fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("degenerate fit abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Rate `r` of `y ≈ A e^{−r t}` by least squares on `ln y`.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        times.iter().zip(values).filter(|(_, &v)| v > 0.0 && v.is_finite()).map(|(&t, &v)| (t, v.ln())).unzip();
    Ok(-linear_fit(&xs, &ys)?.0)
}

/// Exponent `−k` of `y ≈ A (t₀ ± t)^{−k}` from the reciprocal log-derivative
/// `1/(d ln y/dt)`, which is linear in `t` with slope `∓1/k` whatever `t₀` is.
/// Uses points with `t` in `[t_min, t_max]`.
pub fn fit_power_law(times: &[f64], values: &[f64], t_min: f64, t_max: f64) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in 1..times.len().saturating_sub(1) {
        let t = times[r];
        if t < t_min || t > t_max {
            continue;
        }
        let (a, b) = (values[r - 1], values[r + 1]);
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            continue;
        }
        let d = (b.ln() - a.ln()) / (times[r + 1] - times[r - 1]);
        if d != 0.0 {
            xs.push(t);
            ys.push(1.0 / d);
        }
    }
    let (slope, _) = linear_fit(&xs, &ys)?;
    Ok(-(1.0 / slope).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Column;

    fn traj(times: Vec<f64>, mean: Vec<f64>) -> Trajectory {
        let n = times.len();
        Trajectory {
            times,
            loss: Column { name: "loss".into(), mean, stderr: vec![0.01; n] },
            probes: vec![],
            config_hash: String::new(),
            seeds: vec![0],
            diverged: vec![],
        }
    }

    #[test]
    fn fits_recover_shapes() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.5).collect();
        let pl: Vec<f64> = t.iter().map(|x| (1.0 + x / 4.0f64).powf(-1.5)).collect();
        assert!((fit_power_law(&t, &pl, 10.0, 100.0).unwrap() + 1.5).abs() < 1e-3);
        let ex: Vec<f64> = t.iter().map(|x| 3.0 * (-0.3 * x).exp()).collect();
        assert!((fit_exponential(&t, &ex).unwrap() - 0.3).abs() < 1e-12);
        let blow: Vec<f64> = t.iter().map(|x| (120.0 - x).powf(-4.0 / 3.0)).collect();
        assert!((fit_power_law(&t, &blow, 50.0, 99.0).unwrap() + 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn compare_window_and_floor() {
        let sim = traj(vec![0.0, 1.0, 2.0], vec![10.0, 5.2, 0.5]);
        let th = [(0.0, 10.0), (1.0, 5.0), (2.0, 0.01)];
        let r = compare(&th, &sim, Tolerance::relative(0.05)).unwrap();
        assert!(!r.pass);
        let r = compare(&th, &sim, Tolerance { min_theory: 0.1, ..Tolerance::relative(0.05) }).unwrap();
        assert!(r.pass);
        assert!(compare(&[(9.0, 1.0)], &sim, Tolerance::relative(0.05)).is_err());
    }
}
