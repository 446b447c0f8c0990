use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

use cpflow::diagram::{build_d, build_loss, build_r, merge, merge_sum, CanonicalKey, Diagram, DiagramSum, Edge};
use cpflow::series::compute_series;
use cpflow::wick::WickEngine;
use cpflow::{Execution, Scenario, Setting};

fn permutations(n: usize) -> Vec<Vec<u16>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, (n - 1) as u16);
            out.push(v);
        }
    }
    out
}

fn relabel(d: &Diagram, hp: &[u16], pp: &[u16]) -> Diagram {
    let edges = d.edges.iter().map(|e| Edge::new(hp[e.h as usize], pp[e.p as usize], e.color)).collect();
    Diagram::new(d.h_nodes, d.p_nodes, edges).unwrap()
}

fn isomorphic(a: &Diagram, b: &Diagram) -> bool {
    if (a.h_nodes, a.p_nodes, a.edges.len()) != (b.h_nodes, b.p_nodes, b.edges.len()) {
        return false;
    }
    let target = b.edges.clone();
    permutations(a.h_nodes as usize)
        .iter()
        .any(|hp| permutations(a.p_nodes as usize).iter().any(|pp| relabel(a, hp, pp).edges == target))
}

/// Diagrams without isolated nodes: a spanning set of edges plus extras.
fn diagram(max_h: u16, max_p: u16, colors: u8) -> impl Strategy<Value = Diagram> {
    (1..=max_h, 1..=max_p).prop_flat_map(move |(h, p)| {
        let n = h.max(p) as usize;
        (
            Just((h, p)),
            prop::collection::vec(0..colors, n),
            prop::collection::vec((0..h, 0..p, 0..colors), 0..4),
        )
            .prop_map(|((h, p), base_colors, extra)| {
                let mut edges: Vec<Edge> =
                    base_colors.iter().enumerate().map(|(i, &c)| Edge::new(i as u16 % h, i as u16 % p, c)).collect();
                edges.extend(extra.into_iter().map(|(a, b, c)| Edge::new(a, b, c)));
                Diagram::new(h, p, edges).unwrap()
            })
    })
}

fn single(d: &Diagram, setting: Setting) -> DiagramSum {
    let mut s = DiagramSum::new(setting);
    s.add(d, BigRational::one());
    s
}

fn entries(s: &DiagramSum) -> Vec<(CanonicalKey, BigRational)> {
    s.terms().into_iter().map(|(k, _, c)| (k.clone(), c.clone())).collect()
}

fn merged(a: &Diagram, b: &Diagram, setting: Setting) -> Vec<(CanonicalKey, BigRational)> {
    let mut s = DiagramSum::new(setting);
    for (d, m) in merge(a, b) {
        s.add(&d, BigRational::from_integer(BigInt::from(m)));
    }
    entries(&s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn key_equality_is_isomorphism(a in diagram(3, 3, 2), b in diagram(3, 3, 2), hp in 0usize..6, pp in 0usize..6, copy in any::<bool>()) {
        let b = if copy {
            let hps = permutations(a.h_nodes as usize);
            let pps = permutations(a.p_nodes as usize);
            relabel(&a, &hps[hp % hps.len()], &pps[pp % pps.len()])
        } else {
            b
        };
        prop_assert_eq!(a.key() == b.key(), isomorphic(&a, &b));
    }

    #[test]
    fn merge_is_symmetric(a in diagram(3, 3, 2), b in diagram(3, 3, 2)) {
        let st = Setting::new(2, Scenario::Asym).unwrap();
        prop_assert_eq!(merged(&a, &b, st), merged(&b, &a, st));
    }

    #[test]
    fn merge_is_bilinear(a1 in diagram(2, 2, 2), a2 in diagram(2, 2, 2), b in diagram(2, 2, 2), c1 in -3i64..4, c2 in -3i64..4) {
        let st = Setting::new(2, Scenario::Asym).unwrap();
        let (r1, r2) = (BigRational::from_integer(c1.into()), BigRational::from_integer(c2.into()));
        let mut a = DiagramSum::new(st);
        a.add(&a1, r1.clone());
        a.add(&a2, r2.clone());
        let lhs = merge_sum(&a, &single(&b, st), Execution::Sequential);
        let mut rhs = DiagramSum::new(st);
        for (r, part) in [(r1, &a1), (r2, &a2)] {
            for (_, d, c) in merge_sum(&single(part, st), &single(&b, st), Execution::Sequential).terms() {
                rhs.add(d, c * &r);
            }
        }
        prop_assert_eq!(entries(&lhs), entries(&rhs));
    }

    #[test]
    fn odd_color_class_has_zero_expectation(d in diagram(3, 3, 2)) {
        let engine = WickEngine::new(Execution::Sequential);
        let odd = d.color_counts(2).iter().any(|c| c % 2 == 1);
        let e = engine.expectation(&d);
        if odd {
            prop_assert!(e.is_empty());
        }
    }

    #[test]
    fn edge_count_law(nu in 2u32..=4, sym in any::<bool>(), ops in prop::collection::vec(any::<bool>(), 1..4)) {
        let st = Setting::new(nu, if sym { Scenario::Sym } else { Scenario::Asym }).unwrap();
        let pick = |is_d: bool| single(&if is_d { build_d(st) } else { build_r(st) }, st);
        let mut acc = pick(ops[0]);
        for &is_d in &ops[1..] {
            acc = merge_sum(&acc, &pick(is_d), Execution::Sequential);
        }
        let s = ops.len() - 1;
        let s_d = ops.iter().filter(|&&x| x).count();
        let s_r = ops.len() - s_d;
        let want = 2 * nu as usize * s_d + nu as usize * s_r - 2 * s;
        for (_, d, _) in acc.terms() {
            prop_assert_eq!(d.edge_count(), want);
        }
    }
}

#[test]
fn series_degrees_follow_grading() {
    for nu in 2..=4u32 {
        for sc in [Scenario::Sym, Scenario::Asym] {
            let st = Setting::new(nu, sc).unwrap();
            let table = compute_series(st, 3, false, Execution::Sequential).unwrap();
            for (s, y) in table.ys.iter().enumerate() {
                for (&(q, n, l), c) in y.terms() {
                    assert!(!c.is_zero());
                    if l == 0 {
                        assert_eq!((q, n), (1, 0), "only the target constant has l = 0");
                        continue;
                    }
                    let base = (nu as usize - 2) * s;
                    let two_l = 2 * l as usize;
                    assert!(two_l >= base + nu as usize && (two_l - base) % nu as usize == 0, "nu={nu} {sc} s={s} l={l}");
                    let s_d = (two_l - base) / nu as usize - 1;
                    assert!(s_d <= s + 1);
                    assert!(n >= 1 && n as usize <= s_d + 1, "nu={nu} {sc} s={s} n={n} s_D={s_d}");
                }
            }
        }
    }
}

#[test]
fn sym2_powers_are_circular() {
    let st = Setting::new(2, Scenario::Sym).unwrap();
    let loss = build_loss(st, false);
    let mut acc = loss.clone();
    for _ in 0..3 {
        acc = merge_sum(&acc, &loss, Execution::Sequential);
        for (_, d, _) in acc.terms() {
            assert!(d.degree_h().iter().chain(d.degree_p().iter()).all(|&k| k == 2), "{d}");
            assert_eq!(d.components().len(), 1, "{d}");
            assert_eq!(d.h_nodes, d.p_nodes);
        }
    }
}
