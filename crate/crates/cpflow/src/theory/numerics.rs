//! Adaptive quadrature and an embedded Runge–Kutta integrator.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature on a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut segments = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..4000 {
        let total: f64 = segments.iter().map(|s| s.2 .0).sum();
        let err: f64 = segments.iter().map(|s| s.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        segments.push((lo, mid, gk15(&f, lo, mid)));
        segments.push((mid, hi, gk15(&f, mid, hi)));
    }
    let total: f64 = segments.iter().map(|s| s.2 .0).sum();
    let err: f64 = segments.iter().map(|s| s.2 .1).sum();
    if err <= 1e3 * abs_tol.max(rel_tol * total.abs()) {
        Ok(total)
    } else {
        Err(Error::Integration(format!("quadrature did not converge (error estimate {err:e})")))
    }
}

/// `∫_{−∞}^{b} f` through `x = b − t/(1−t)`.
pub fn integrate_to_neg_inf<F: Fn(f64) -> f64>(f: F, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - t;
            f(b - t / d) / (d * d)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `∫_{a}^{∞} f` through `x = a + t/(1−t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - t;
            f(a + t / d) / (d * d)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Bisection on a bracketing interval.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo.signum() == fhi.signum() {
        return Err(Error::Integration("root is not bracketed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo).abs() < tol {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-12, atol: 1e-14, h_init: 1e-3, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OdeStop {
    Finished,
    /// The step size collapsed at this time.
    StepCollapse(f64),
    /// The event callback asked to stop at this time.
    Event(f64),
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` forward from `t0`, reporting the state at each
/// requested output time (ascending, all `>= t0`). After every accepted step
/// `on_step(t, y)` may return `false` to stop early.
pub fn dopri5<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: OdeOptions,
    mut on_step: S,
) -> Result<(Vec<Vec<f64>>, OdeStop)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = opts.h_init;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] <= t {
        out.push(y.clone());
        next += 1;
    }
    f(t, &y, &mut k[0]);
    let mut steps = 0;
    while next < outputs.len() {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integration("too many steps".into()));
        }
        let target = outputs[next];
        let mut step = h.min(target - t);
        let hit = step >= target - t;
        if hit {
            step = target - t;
        }
        let stage = |k: &Vec<Vec<f64>>, coeffs: &[(usize, f64)], tmp: &mut Vec<f64>, y: &[f64]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(j, a) in coeffs {
                    acc += step * a * k[j][i];
                }
                tmp[i] = acc;
            }
        };
        stage(&k, &[(0, A21)], &mut tmp, &y);
        f(t + C2 * step, &tmp, &mut k[1]);
        stage(&k, &[(0, A31), (1, A32)], &mut tmp, &y);
        f(t + C3 * step, &tmp, &mut k[2]);
        stage(&k, &[(0, A41), (1, A42), (2, A43)], &mut tmp, &y);
        f(t + C4 * step, &tmp, &mut k[3]);
        stage(&k, &[(0, A51), (1, A52), (2, A53), (3, A54)], &mut tmp, &y);
        f(t + C5 * step, &tmp, &mut k[4]);
        stage(&k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &mut tmp, &y);
        f(t + step, &tmp, &mut k[5]);
        stage(&k, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &mut y_new, &y);
        f(t + step, &y_new, &mut k[6]);
        let mut err = 0.0f64;
        for i in 0..n {
            let e = step * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h = step * 0.2;
            if h < opts.h_min {
                return Ok((out, OdeStop::StepCollapse(t)));
            }
            continue;
        }
        if err <= 1.0 {
            t = if hit { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            let (first, last) = k.split_at_mut(6);
            std::mem::swap(&mut first[0], &mut last[0]);
            while next < outputs.len() && outputs[next] <= t {
                out.push(y.clone());
                next += 1;
            }
            if !on_step(t, &y) {
                return Ok((out, OdeStop::Event(t)));
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
        if h < opts.h_min {
            return Ok((out, OdeStop::StepCollapse(t)));
        }
    }
    Ok((out, OdeStop::Finished))
}
