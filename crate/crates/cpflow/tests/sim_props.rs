use proptest::prelude::*;

use cpflow::compare::{compare, Tolerance};
use cpflow::sim::{init_weights, loss_and_grad, monte_carlo, EvalMode, ModelConfig, Probe, SimConfig, Target, Trajectory};
use cpflow::{Execution, Scenario};

fn model(nu: u32, sym: bool, p: usize, h: usize, sigma: f64, zero: bool, mode: EvalMode) -> ModelConfig {
    ModelConfig {
        nu,
        scenario: if sym { Scenario::Sym } else { Scenario::Asym },
        p,
        h,
        sigma,
        t_scale: 1.0,
        target: if zero { Target::Zero } else { Target::Identity },
        mode,
    }
}

fn max_diff(a: &[ndarray::Array2<f64>], b: &[ndarray::Array2<f64>]) -> (f64, f64) {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            diff = diff.max((u - v).abs());
            scale = scale.max(v.abs());
        }
    }
    (diff, scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_and_dense_match_direct(nu in 2u32..=4, sym in any::<bool>(), p in 1usize..=4, h in 1usize..=4,
                                   sigma in 0.2f64..1.0, zero in any::<bool>(), seed in 0u64..1000) {
        let direct = model(nu, sym, p, h, sigma, zero, EvalMode::Direct);
        let st = init_weights(&direct, 7, seed);
        let want = loss_and_grad(&st, &direct, 1 << 16).unwrap();
        for mode in [EvalMode::Gram, EvalMode::Dense] {
            let got = loss_and_grad(&st, &ModelConfig { mode, ..direct.clone() }, 1 << 16).unwrap();
            prop_assert!((got.loss - want.loss).abs() <= 1e-12 * want.loss.abs().max(1e-300));
            let (diff, scale) = max_diff(&got.grad, &want.grad);
            prop_assert!(diff <= 1e-12 * scale.max(1.0), "{mode:?}: {diff} vs {scale}");
        }
    }

    #[test]
    fn batch_size_does_not_change_results(nu in 2u32..=3, sym in any::<bool>(), p in 2usize..=5, h in 1usize..=4, batch in 1usize..40) {
        let dense = model(nu, sym, p, h, 0.6, false, EvalMode::Dense);
        let st = init_weights(&dense, 1, 2);
        let big = loss_and_grad(&st, &dense, 1 << 16).unwrap();
        let small = loss_and_grad(&st, &dense, batch).unwrap();
        prop_assert!((big.loss - small.loss).abs() <= 1e-13 * big.loss.abs());
        let (diff, scale) = max_diff(&small.grad, &big.grad);
        prop_assert!(diff <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn init_is_deterministic(nu in 2u32..=4, sym in any::<bool>(), base in 0u64..100, seed in 0u64..100) {
        let m = model(nu, sym, 3, 2, 0.5, false, EvalMode::Auto);
        let a = init_weights(&m, base, seed);
        prop_assert_eq!(&a, &init_weights(&m, base, seed));
        prop_assert_ne!(&a, &init_weights(&m, base, seed + 1));
        prop_assert_eq!(a.factors.len(), if sym { 1 } else { nu as usize });
        let zero = init_weights(&ModelConfig { sigma: 0.0, ..m }, base, seed);
        prop_assert!(zero.factors.iter().all(|f| f.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn compare_pass_iff_every_judged_point_ok(values in prop::collection::vec((0.1f64..10.0, -0.2f64..0.2), 2..20),
                                              rel in 0.01f64..0.2, floor in 0.0f64..5.0) {
        let times: Vec<f64> = (0..values.len()).map(|k| k as f64).collect();
        let theory: Vec<(f64, f64)> = times.iter().zip(&values).map(|(&t, &(v, _))| (t, v)).collect();
        let sim = Trajectory {
            times: times.clone(),
            loss: cpflow::sim::Column {
                name: "loss".into(),
                mean: values.iter().map(|&(v, e)| v * (1.0 + e)).collect(),
                stderr: vec![0.1; values.len()],
            },
            probes: vec![],
            config_hash: String::new(),
            seeds: vec![],
            diverged: vec![],
        };
        let tol = Tolerance { min_theory: floor, ..Tolerance::relative(rel) };
        let rep = compare(&theory, &sim, tol).unwrap();
        let expect = values.iter().all(|&(v, e)| v < floor || (v * e).abs() <= rel * v);
        prop_assert_eq!(rep.pass, expect);
        prop_assert_eq!(rep.pass, rep.points.iter().all(|q| q.ok));
    }
}

fn small_config() -> SimConfig {
    let mut cfg = SimConfig::new(model(2, true, 12, 6, 0.3, false, EvalMode::Auto), 1.0, 50, 5);
    cfg.probes = vec![Probe::Entry { index: vec![0, 0] }, Probe::Sym2Identity { i: 0, j: 1, j2: 2 }];
    cfg.probe_stride = 7;
    cfg
}

#[test]
fn schedule_does_not_change_output() {
    let cfg = small_config();
    let a = monte_carlo(&cfg, Execution::Parallel).unwrap();
    let b = monte_carlo(&cfg, Execution::Sequential).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.seeds, (0..5).collect::<Vec<u64>>());
    assert_eq!(a.times.len(), 9);
}

#[test]
fn trajectory_csv_round_trips() {
    let traj = monte_carlo(&small_config(), Execution::Sequential).unwrap();
    let csv = traj.to_csv();
    let back = Trajectory::from_csv(&csv).unwrap();
    assert_eq!(back.times, traj.times);
    assert_eq!(back.loss, traj.loss);
    assert_eq!(back.probes, traj.probes);
    assert_eq!(back.to_csv(), csv);
}

#[test]
fn config_json_round_trips() {
    let cfg = small_config();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(SimConfig::from_json(&text).unwrap(), cfg);
    assert!(SimConfig::from_json(&text.replace("\"n_seeds\":5", "\"n_seeds\":0")).is_err());
    assert!(SimConfig::from_json(&text.replace("\"t_max\"", "\"t_end\"")).is_err());
}

#[test]
fn divergence_is_recorded() {
    // gradient ascent from a large initialization blows up quickly
    let mut cfg = SimConfig::new(model(4, true, 4, 2, 1.5, false, EvalMode::Gram), -1.0, 2000, 2);
    cfg.probe_stride = 100;
    let traj = monte_carlo(&cfg, Execution::Sequential).unwrap();
    assert_eq!(traj.diverged.len(), 2);
    assert!(traj.loss.mean.last().unwrap().is_infinite());
}
