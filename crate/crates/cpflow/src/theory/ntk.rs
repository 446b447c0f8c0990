//! Tangent kernel at initialization and the linearized evolution it implies.

/// `E[Θ_{I;I'}(0)] / (H σ^{2ν−2}) = ν Π_m δ_{i_m i'_m}`.
pub fn ntk_expected(nu: u32, a: &[usize], b: &[usize]) -> f64 {
    if a == b {
        nu as f64
    } else {
        0.0
    }
}

/// Diagonal entry of `f` under `df/dt = −(rate)(f − 1)` from `f(0) = 0`.
pub fn ntk_diag(rate: f64, t: f64) -> f64 {
    1.0 - (-rate * t).exp()
}
