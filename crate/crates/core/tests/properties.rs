use pprobe_core::autodiff::Graph;
use pprobe_core::data::{build_vocab, GrammarConfig, Side};
use pprobe_core::metrics::{bleu, mutual_information};
use pprobe_core::pareto::{dominates, frontier_indices, orient, pareto_frontier, Mode, ObjectivePoint, TaskScore};
use pprobe_core::trainer::window_stats;
use pprobe_core::Tensor;
use proptest::prelude::*;

fn brute_force(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().any(|q| {
                let p = &points[i];
                q.iter().zip(p).all(|(a, b)| a >= b) && q.iter().zip(p).any(|(a, b)| a > b)
            })
        })
        .collect()
}

// Small integer grid so ties and duplicates are common.
fn point_sets(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=3).prop_flat_map(move |k| {
        prop::collection::vec(prop::collection::vec((0i32..12).prop_map(f64::from), k), 0..max)
    })
}

fn slices(points: &[Vec<f64>]) -> Vec<&[f64]> {
    points.iter().map(Vec::as_slice).collect()
}

proptest! {
    #[test]
    fn frontier_matches_pairwise_scan(points in point_sets(60)) {
        prop_assert_eq!(frontier_indices(&slices(&points)).unwrap(), brute_force(&points));
    }

    #[test]
    fn frontier_is_idempotent(points in point_sets(60)) {
        let pts: Vec<ObjectivePoint> = points.iter().cloned().map(ObjectivePoint::new).collect();
        let once = pareto_frontier(&pts).unwrap();
        prop_assert_eq!(pareto_frontier(&once).unwrap(), once);
    }

    #[test]
    fn frontier_is_invariant_to_monotone_rescaling(points in point_sets(60), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let warped: Vec<Vec<f64>> = points
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &x)| if i == 0 { x * scale + shift } else { x.powi(3) }).collect())
            .collect();
        prop_assert_eq!(frontier_indices(&slices(&points)).unwrap(), frontier_indices(&slices(&warped)).unwrap());
    }

    #[test]
    fn dropping_the_reference_keeps_lambda_runs_on_the_frontier(points in point_sets(40)) {
        prop_assume!(!points.is_empty());
        // point 0 plays the reference run
        let with: Vec<usize> = frontier_indices(&slices(&points)).unwrap();
        let without: Vec<usize> = frontier_indices(&slices(&points[1..])).unwrap().into_iter().map(|i| i + 1).collect();
        for i in with.iter().filter(|&&i| i != 0) {
            prop_assert!(without.contains(i));
        }
        for i in &without {
            prop_assert!(with.contains(i) || dominates(&points[0], &points[*i]).unwrap());
        }
    }

    #[test]
    fn off_frontier_points_are_dominated_by_frontier_points(points in point_sets(60)) {
        let front = frontier_indices(&slices(&points)).unwrap();
        for (i, p) in points.iter().enumerate() {
            let covered = front.iter().any(|&j| dominates(&points[j], p).unwrap());
            prop_assert_eq!(front.contains(&i), !covered);
        }
        for &a in &front {
            for &b in &front {
                prop_assert!(!dominates(&points[a], &points[b]).unwrap());
            }
        }
    }

    #[test]
    fn two_objective_frontier_is_a_staircase(points in prop::collection::vec((0i32..50, 0i32..50), 1..80)) {
        let pts: Vec<Vec<f64>> = points.iter().map(|&(a, b)| vec![a.into(), b.into()]).collect();
        let mut front: Vec<&Vec<f64>> = frontier_indices(&slices(&pts)).unwrap().into_iter().map(|i| &pts[i]).collect();
        front.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for w in front.windows(2) {
            // ascending first objective means non-increasing second
            prop_assert!(w[0][1] >= w[1][1]);
            prop_assert!(w[0][0] < w[1][0] || w[0] == w[1]);
        }
    }

    #[test]
    fn orientation_prefers_low_ce_in_add_and_high_ce_in_remove(loss in 0.0f64..5.0, a in 0.0f64..2.0, b in 0.0f64..2.0) {
        prop_assume!(a < b);
        let add = (orient(TaskScore::Loss(loss), a, Mode::Add), orient(TaskScore::Loss(loss), b, Mode::Add));
        prop_assert!(dominates(&add.0.values, &add.1.values).unwrap());
        let rem = (orient(TaskScore::Loss(loss), a, Mode::Remove), orient(TaskScore::Loss(loss), b, Mode::Remove));
        prop_assert!(dominates(&rem.1.values, &rem.0.values).unwrap());
    }

    #[test]
    fn grad_multiply_scales_upstream_exactly(
        values in prop::collection::vec(-3.0f64..3.0, 1..12),
        weights in prop::collection::vec(-3.0f64..3.0, 12),
        factor in -1.0f64..1.0,
    ) {
        let n = values.len();
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(&values));
        let w = g.constant(Tensor::vector(&weights[..n]));
        let y = g.grad_multiply(x, factor);
        prop_assert_eq!(g.value(y).data(), g.value(x).data());
        let prod = g.mul(y, w).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        for (gi, wi) in gx.data().iter().zip(&weights) {
            prop_assert_eq!(*gi, wi * factor);
        }
    }

    #[test]
    fn bleu_is_bounded(
        cands in prop::collection::vec(prop::collection::vec(0u8..5, 0..12), 1..6),
        refs in prop::collection::vec(prop::collection::vec(0u8..5, 1..12), 6),
    ) {
        let words = |s: &Vec<u8>| s.iter().map(|t| format!("w{t}")).collect::<Vec<_>>();
        let c: Vec<Vec<String>> = cands.iter().map(words).collect();
        let r: Vec<Vec<String>> = refs[..cands.len()].iter().map(words).collect();
        let score = bleu(&c, &r).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&score));
    }

    #[test]
    fn bleu_of_identical_long_corpus_is_100(sents in prop::collection::vec(prop::collection::vec(0u8..9, 4..12), 1..6)) {
        let c: Vec<Vec<String>> = sents.iter().map(|s| s.iter().map(|t| t.to_string()).collect()).collect();
        prop_assert!((bleu(&c, &c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn mutual_information_stays_in_bounds(h_s in 0.0f64..3.0, ce in 0.0f64..5.0) {
        let e = mutual_information(h_s, ce).unwrap();
        prop_assert!(e.mi >= 0.0 && e.mi <= h_s);
        prop_assert_eq!(e.clamped, ce > h_s);
    }

    #[test]
    fn window_stats_are_sane(series in prop::collection::vec(-100.0f64..100.0, 1..40), window in 1usize..8, higher in any::<bool>()) {
        prop_assume!(window <= series.len());
        let (mean, var) = window_stats(&series, window, higher).unwrap();
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(mean >= lo - 1e-9 && mean <= hi + 1e-9);
        prop_assert!(var >= 0.0);
        if window == 1 {
            prop_assert_eq!(var, 0.0);
            prop_assert_eq!(mean, if higher { hi } else { lo });
        }
    }

    #[test]
    fn generated_corpora_are_aligned_and_label_deterministic(seed in 0u64..1000, n in 1usize..60) {
        let g = GrammarConfig::default_grammar(seed);
        let corpus = g.generate(n).unwrap();
        prop_assert_eq!(corpus.len(), n);
        for r in &corpus {
            prop_assert_eq!(r.src.len(), r.labels.len());
            prop_assert_eq!(r.src.len(), r.tgt.len());
            for (w, l) in r.src.iter().zip(&r.labels) {
                prop_assert_eq!(g.label_of(w), Some(l.as_str()));
            }
        }
        let v = build_vocab(&corpus, Side::Src);
        for r in &corpus {
            let ids = v.encode(&r.src);
            let back: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
            prop_assert_eq!(back, r.src.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
}
