use num_traits::ToPrimitive;
use proptest::prelude::*;

use cpflow::pareto::pareto_front;
use cpflow::series::compute_series;
use cpflow::theory::nu4::{blowup_exponent, nu4_threshold, nu4_trajectory, Nu4Params};
use cpflow::theory::sym2::{psi_complex, sym2_limit, sym2_loss, taylor_coefficients};
use cpflow::{Execution, Scenario, Setting};

fn factorial(s: usize) -> f64 {
    (1..=s).map(|k| k as f64).product()
}

/// The closed form is the large-width limit: its Taylor coefficients are the
/// Pareto-optimal part of the series coefficients.
#[test]
fn sym2_closed_form_matches_series() {
    let st = Setting::new(2, Scenario::Sym).unwrap();
    let table = compute_series(st, 5, false, Execution::Parallel).unwrap();
    for (p, h, s2) in [(4.0f64, 4.0f64, 0.25f64), (4.0, 8.0, 0.125)] {
        let (y, z) = (h / p, p * s2);
        let c = taylor_coefficients(|x| psi_complex(x, y, z), 0.03, 6);
        for (s, ys) in table.ys.iter().enumerate() {
            let series: f64 = pareto_front(ys)
                .iter()
                .map(|t| t.coeff.to_f64().unwrap() * p.powi(t.q as i32) * h.powi(t.n as i32) * s2.powi(t.l as i32))
                .sum::<f64>()
                / factorial(s);
            let closed = p * p * s2 * c[s];
            assert!((series - closed).abs() <= 1e-8 * closed.abs().max(p * p * s2), "p={p} H={h} s={s}: {series} vs {closed}");
        }
    }
}

#[test]
fn nu4_initial_loss_is_the_leading_part_of_the_first_coefficient() {
    let st = Setting::new(4, Scenario::Sym).unwrap();
    let table = compute_series(st, 0, false, Execution::Sequential).unwrap();
    let mut front: Vec<(u32, u32, u32, f64)> =
        pareto_front(&table.ys[0]).iter().map(|t| (t.q, t.n, t.l, t.coeff.to_f64().unwrap())).collect();
    front.sort_by_key(|t| (t.2, t.0, t.1));
    // ½Hp⁴σ⁸ + (3/2)H²p²σ⁸ − 3Hpσ⁴
    assert_eq!(front, vec![(1, 1, 2, -3.0), (2, 2, 4, 1.5), (4, 1, 4, 0.5)]);
    let pr = Nu4Params { p: 16.0, h: 64.0, sigma: 0.09 };
    let (p, h, s4) = (pr.p, pr.h, pr.sigma.powi(4));
    let want = 0.5 * h * p.powi(4) * s4 * s4 + 1.5 * h * h * p * p * s4 * s4 - 3.0 * h * p * s4;
    assert!((p * p * pr.g(0.0, 1.0).unwrap() - want).abs() <= 1e-12 * want.abs());
}

#[test]
fn nu4_blows_up_only_above_threshold() {
    for (p, h) in [(16.0f64, 4.0f64), (32.0, 64.0)] {
        let theta = 1.0 + 3.0 * h / (p * p);
        let rho_star = nu4_threshold(theta).unwrap();
        for ratio in [0.3, 0.8, 1.25, 3.0] {
            let sigma = (ratio * rho_star / p.powi(3)).powf(0.25);
            let pr = Nu4Params { p, h, sigma };
            let traj = nu4_trajectory(pr, &[-0.1, -1.0, -10.0, -1e4]).unwrap();
            assert_eq!(traj.tau_crit.is_some(), ratio > 1.0, "p={p} H={h} ratio={ratio}");
            assert!(traj.max_residual <= 1e-8, "residual {}", traj.max_residual);
            if ratio < 1.0 {
                assert_eq!(traj.loss.len(), 4);
            }
        }
    }
}

#[test]
fn nu4_high_noise_exponent() {
    let (p, h) = (16.0f64, 16.0f64);
    let rho_star = nu4_threshold(1.0 + 3.0 * h / (p * p)).unwrap();
    let sigma = (4.0 * rho_star / p.powi(3)).powf(0.25);
    let k = blowup_exponent(Nu4Params { p, h, sigma }, 1e-6).unwrap().unwrap();
    assert!((k + 4.0 / 3.0).abs() <= 0.05, "{k}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sym2_loss_decreases_to_its_limit(p in 2.0f64..200.0, y in 0.05f64..4.0, z in 0.05f64..3.0) {
        let h = (y * p).max(1.0);
        let sigma = (z / p).sqrt();
        let mut prev = sym2_loss(0.0, p, h, sigma, 1.0).unwrap();
        for k in 1..=60 {
            let cur = sym2_loss(k as f64 * 0.1, p, h, sigma, 1.0).unwrap();
            prop_assert!(cur <= prev + 1e-12 * p, "t={}: {} > {}", k as f64 * 0.1, cur, prev);
            prev = cur;
        }
        let far = sym2_loss(200.0, p, h, sigma, 1.0).unwrap();
        prop_assert!((far - sym2_limit(p, h)).abs() <= 1e-6 * p);
    }
}
