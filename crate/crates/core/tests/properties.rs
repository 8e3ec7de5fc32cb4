use proptest::prelude::*;

use netmorph_core::classify;
use netmorph_core::geometry::{Hypercube, LinearPiece, Simplex};
use netmorph_core::netcore::compose_sum;
use netmorph_core::pwl1d::{self, PwlFunction1D};
use netmorph_core::regress::{self, Mode, TransformParams};
use netmorph_core::verify::{self, Compare, Execution};
use netmorph_core::{Activation, Network, Src};

fn pwl_strategy() -> impl Strategy<Value = PwlFunction1D> {
    (1usize..20, -1.0f64..1.0).prop_flat_map(|(n, anchor)| {
        (
            prop::collection::vec(-1.9f64..1.9, n - 1),
            prop::collection::vec(-3.0f64..3.0, n),
            Just(anchor),
        )
            .prop_filter_map("needs distinct breakpoints and slopes", |(mut xs, slopes, anchor)| {
                xs.sort_by(f64::total_cmp);
                let mut bps = vec![-2.0];
                bps.extend(xs);
                bps.push(2.0);
                if bps.windows(2).any(|w| w[1] - w[0] < 1e-3) {
                    return None;
                }
                PwlFunction1D::new(2.0, bps, slopes, anchor).ok()
            })
    })
}

fn triangle() -> impl Strategy<Value = Simplex> {
    prop::collection::vec(-1.0f64..1.0, 6).prop_filter_map("degenerate", |v| {
        let s = Simplex::new(vec![v[0..2].to_vec(), v[2..4].to_vec(), v[4..6].to_vec()]).ok()?;
        (s.volume() > 0.05).then_some(s)
    })
}

fn relu_net(w: &[f64]) -> Network {
    let mut n = Network::new(2);
    let a = n.push(Activation::Relu, w[0], vec![(Src::Input(0), w[1]), (Src::Input(1), w[2])]);
    let b = n.push(Activation::Relu, w[3], vec![(Src::Input(0), w[4]), (Src::Neuron(a), w[5])]);
    n.set_output(vec![(a, 1.0), (b, -0.5)], 0.1);
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn univariate_builds_are_exact(f in pwl_strategy()) {
        let wide = pwl1d::build_wide(&f).unwrap();
        let deep = pwl1d::build_deep(&f).unwrap();
        for i in 0..=400 {
            let x = -2.0 + i as f64 / 100.0;
            prop_assert!((wide.evaluate(&[x]).unwrap() - f.eval(x)).abs() < 1e-9);
            prop_assert!((deep.evaluate(&[x]).unwrap() - f.eval(x)).abs() < 1e-9);
        }
        prop_assert_eq!(wide.structure_metrics().width, f.n() + 1);
        prop_assert_eq!(deep.structure_metrics().depth, f.n() + 2);
    }

    #[test]
    fn extraction_recovers_the_function(f in pwl_strategy()) {
        let g = pwl1d::extract_pwl(&pwl1d::build_deep(&f).unwrap(), 2.0).unwrap();
        for i in 0..=200 {
            let x = -2.0 + i as f64 / 50.0;
            prop_assert!((g.eval(x) - f.eval(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip(w in prop::collection::vec(-2.0f64..2.0, 6)) {
        let n = relu_net(&w);
        let back = Network::from_json(&n.to_json()).unwrap();
        prop_assert_eq!(back, n);
    }

    #[test]
    fn compose_sum_is_weighted_sum(
        w1 in prop::collection::vec(-2.0f64..2.0, 6),
        w2 in prop::collection::vec(-2.0f64..2.0, 6),
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let (a, b) = (relu_net(&w1), relu_net(&w2));
        let s = compose_sum(&[a.clone(), b.clone()], &[2.0, -1.0], 0.25).unwrap();
        let want = 2.0 * a.evaluate(&x).unwrap() - b.evaluate(&x).unwrap() + 0.25;
        prop_assert!((s.evaluate(&x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn pieces_reproduce_payload(s in triangle(), a in prop::collection::vec(-2.0f64..2.0, 2), b in -1.0f64..1.0) {
        let p = TransformParams::explicit(1e4, 1e-4, 1e-4, 1e-4, 1.0);
        let piece = LinearPiece::new(s.clone(), a, b).unwrap();
        let forms = s.facet_forms().unwrap();
        for mode in [Mode::Wide, Mode::Deep] {
            let built = regress::build_piece(mode, &piece, &p).unwrap();
            prop_assert!(built.max_residual() < 1e-8);
            for i in 0..21 {
                for j in 0..21 {
                    let x = [-1.0 + i as f64 / 10.0, -1.0 + j as f64 / 10.0];
                    let clear = forms.iter().all(|(w, r)| {
                        (w[0] * x[0] + w[1] * x[1] + r).abs() / w[0].hypot(w[1]) > 5e-4
                    });
                    if !clear {
                        continue;
                    }
                    let want = if s.contains(&x, 0.0) { piece.value(&x) } else { 0.0 };
                    prop_assert!((built.network.evaluate(&x).unwrap() - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn step_wide_outputs_are_binary(s in triangle(), x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let net = classify::build_step_wide(2, std::slice::from_ref(&s)).unwrap();
        let v = net.evaluate(&x).unwrap();
        prop_assert!(v == 0.0 || v == 1.0);
        prop_assert_eq!(v == 1.0, s.contains(&x, 0.0));
    }

    #[test]
    fn step_deep_outputs_are_binary(s in triangle(), x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let net = classify::build_step_deep(2, &[s], 1e3).unwrap();
        let v = net.evaluate(&x).unwrap();
        prop_assert!(v == 0.0 || v == 1.0);
    }

    #[test]
    fn mismatch_is_symmetric_and_deterministic(
        w1 in prop::collection::vec(-2.0f64..2.0, 6),
        w2 in prop::collection::vec(-2.0f64..2.0, 6),
        seed in 0u64..1000,
    ) {
        let (a, b) = (relu_net(&w1), relu_net(&w2));
        let dom = Hypercube::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let r1 = verify::mismatch_measure(&a, &b, &dom, 5000, seed, 1e-3).unwrap();
        let r2 = verify::mismatch_measure(&b, &a, &dom, 5000, seed, 1e-3).unwrap();
        let r3 = verify::mismatch_measure_with(&a, &b, &dom, 5000, seed, Compare::Value { tol: 1e-3 }, Execution::Sequential).unwrap();
        prop_assert_eq!(r1.estimate, r2.estimate);
        prop_assert_eq!(&r1, &r3);
        prop_assert_eq!(verify::mismatch_measure(&a, &a, &dom, 5000, seed, 0.0).unwrap().estimate, 0.0);
    }

    #[test]
    fn exact_compare_with_itself_is_zero(f in pwl_strategy()) {
        let n = pwl1d::build_wide(&f).unwrap();
        prop_assert_eq!(verify::exact_compare_1d(&n, &n, 2.0, 500).unwrap(), 0.0);
    }
}

#[test]
fn planted_box_volume_within_hoeffding() {
    let dom = Hypercube::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let planted = Hypercube::new(vec![-0.5, 0.0, -1.0], vec![0.3, 0.9, 0.2]).unwrap();
    let n = 200_000;
    let (_, frac) = verify::sample_fraction(&dom, n, 11, Execution::Parallel, |x, _| planted.contains(x)).unwrap();
    let want = planted.volume() / dom.volume();
    // two-sided Hoeffding at failure probability 1e-6
    let eps = ((2.0f64 / 1e-6).ln() / (2.0 * n as f64)).sqrt();
    assert!((frac - want).abs() < eps, "{frac} vs {want}");
}

#[test]
fn univariate_transform_reports_exact_error() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/pwl5.json")).unwrap();
    let f: PwlFunction1D = serde_json::from_str(&text).unwrap();
    for mode in [Mode::Wide, Mode::Deep] {
        let t = regress::transform_pwl(&f, mode, None).unwrap();
        for i in 0..=1000 {
            let x = -2.0 + i as f64 / 250.0;
            assert!((t.network.evaluate(&[x]).unwrap() - f.eval(x)).abs() < 1e-9);
        }
    }
}

#[test]
fn fixture_transform_stays_within_delta() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/net-2621.json")).unwrap();
    let net = Network::from_json(&text).unwrap();
    let opts = regress::TransformOptions::default();
    let t = regress::transform(&net, Mode::Wide, 0.02, &opts).unwrap();
    let dom = Hypercube::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
    let tol = t.report.noise_floor.max(verify::DEFAULT_TOL);
    let r = verify::mismatch_measure(&t.network, &net, &dom, 200_000, 1, tol).unwrap();
    assert!(r.absolute_measure < 0.02 + 3.0 * r.absolute_stderr(), "{}", r.absolute_measure);
}
