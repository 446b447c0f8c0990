//! Closed-form expected loss for the symmetric order-2 model.
//!
//! `E[L] = p/2 + p²σ² Ψ(−t/T, H/p, pσ²)` with
//! `Ψ(x, y, z) = (z e^{−8x}/2) ∂_z h(z̃, y) − e^{−4x} h(z̃, y)`,
//! `z̃ = z (1 − e^{−4x})`, and `h` the Narayana generating function.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest `4t/T` evaluated directly; later times reuse this value, which
/// is already at the limit to double precision.
const MAX_EXPONENT: f64 = 300.0;

/// `h(z, y) = Σ_{a≥1} z^{a−1} Σ_b N_{a,b} y^b`, in the form
/// `2y / (1 − z(y+1) + S)` that avoids cancellation near `z = 0`.
/// Returns `(h, ∂h/∂z)`.
pub fn narayana_gf(z: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let yp = y + one;
    let ym = y - one;
    let s = (one - 2.0 * z * yp + z * z * ym * ym).sqrt();
    let den = one - z * yp + s;
    let h = 2.0 * y / den;
    let ds = (-yp + z * ym * ym) / s;
    // divide twice: num-complex division squares the divisor norm
    let dh = -2.0 * y * (-yp + ds) / den / den;
    (h, dh)
}

fn discriminant(z: f64, y: f64) -> f64 {
    1.0 - 2.0 * z * (y + 1.0) + z * z * (y - 1.0) * (y - 1.0)
}

pub fn psi_complex(x: Complex64, y: f64, z: f64) -> Complex64 {
    let e4 = (-4.0 * x).exp();
    let zt = z * (1.0 - e4);
    let (h, dh) = narayana_gf(zt, Complex64::new(y, 0.0));
    0.5 * z * e4 * e4 * dh - e4 * h
}

pub fn psi(x: f64, y: f64, z: f64) -> Result<f64> {
    let x = x.max(-MAX_EXPONENT / 4.0);
    let zt = z * (1.0 - (-4.0 * x).exp());
    if discriminant(zt, y) < 0.0 {
        return Err(Error::Domain(format!("square root argument negative at x = {x}")));
    }
    Ok(psi_complex(Complex64::new(x, 0.0), y, z).re)
}

/// Expected loss at time `t`.
pub fn sym2_loss(t: f64, p: f64, h: f64, sigma: f64, t_scale: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    Ok(p / 2.0 + p * p * s2 * psi(-t / t_scale, h / p, p * s2)?)
}

/// `lim_{t→∞} E[L] = max(p − H, 0)/2`.
pub fn sym2_limit(p: f64, h: f64) -> f64 {
    (p - h).max(0.0) / 2.0
}

/// Taylor coefficients `c_k` of `g(w) = Σ c_k w^k` by the trapezoid rule
/// on a circle of radius `r`.
pub fn taylor_coefficients<F: Fn(Complex64) -> Complex64>(g: F, r: f64, count: usize) -> Vec<f64> {
    let n = 128;
    let samples: Vec<Complex64> =
        (0..n).map(|j| g(Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64))).collect();
    (0..count)
        .map(|k| {
            let acc: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64))
                .sum();
            (acc / n as f64).re / r.powi(k as i32)
        })
        .collect()
}

/// `f(x, z) = (2(z−1)e^{4x} − z) / (2(z − (z−1)e^{4x})²)`.
pub fn chain_f(x: f64, z: f64) -> f64 {
    let e = (4.0 * x).exp();
    let d = z - (z - 1.0) * e;
    (2.0 * (z - 1.0) * e - z) / (2.0 * d * d)
}

/// Image of `z0` under the flow that carries `f(x0, ·)` to `f(0, ·)`.
pub fn chain_transport(x0: f64, z0: f64) -> f64 {
    1.0 / ((1.0 - z0) / z0 * (4.0 * x0).exp() + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_at_zero() {
        for &(y, z) in &[(1.0, 1.0), (2.0, 0.5), (0.25, 16.0)] {
            let v = psi(0.0, y, z).unwrap();
            assert!((v - (z * (y + y * y) / 2.0 - y)).abs() < 1e-14);
        }
    }

    #[test]
    fn long_time_limit() {
        for &(p, h) in &[(512.0, 256.0), (512.0, 1024.0), (100.0, 100.0)] {
            let l = sym2_loss(200.0, p, h, (1.0 / p).sqrt(), 1.0).unwrap();
            assert!((l - sym2_limit(p, h)).abs() < 1e-6 * p, "{l}");
        }
    }

    #[test]
    fn h_coefficients_are_narayana() {
        use crate::theory::recurrence::narayana;
        use num_traits::ToPrimitive;
        let y = 0.7;
        let c = taylor_coefficients(|z| narayana_gf(z, Complex64::new(y, 0.0)).0, 0.05, 7);
        for (sd, &ck) in c.iter().enumerate() {
            let a = sd as u32 + 1;
            let want: f64 = (1..=a).map(|b| narayana(a, b).to_f64().unwrap() * y.powi(b as i32)).sum();
            assert!((ck - want).abs() < 1e-10 * want, "{sd}: {ck} {want}");
        }
    }

    #[test]
    fn chain_identities() {
        for z in [0.3, 1.0, 2.5] {
            assert!((chain_f(0.0, z) - (z / 2.0 - 1.0)).abs() < 1e-14);
            for x0 in [-0.3, 0.2] {
                let z1 = chain_transport(x0, z);
                let lhs = chain_f(x0, z);
                let rhs = chain_f(0.0, z1) * z1 / z;
                assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            }
        }
    }
}
