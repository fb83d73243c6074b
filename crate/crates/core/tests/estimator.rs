use fedcode::coding::{
    client_partials, estimate_by_example, exact_mean_estimate, aggregate_estimate, second_moment_bruteforce,
    second_moment_by_client, second_moment_closed_form, sign_condition_holds, scalar_product_sums,
    variance_gap_exact, variance_reduction_bound, BoundVariant, GradientSet, Participation,
};
use fedcode::harness::validate::single_class_assignment;
use fedcode::sharing::{mark_non_private, share_randomized};
use fedcode::{ClientSet, RngStream, ShareConfig};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (GradientSet<f64>, f64)> {
    (1usize..=10, 1usize..=12, 1usize..=3, 0.05f64..0.95).prop_flat_map(|(n, m, dim, p)| {
        let grads = prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), m);
        let holders = prop::collection::vec(1u64..(1u64 << n), m);
        let labels = prop::collection::vec(0usize..3, m);
        (grads, holders, labels).prop_map(move |(g, h, l)| {
            let holders: Vec<ClientSet> = h.into_iter().map(ClientSet::from_mask).collect();
            let np = holders.iter().map(|s| s.len() > 1).collect();
            (GradientSet::new(g, l, np, holders, n, 3).unwrap(), p)
        })
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimator_is_unbiased((g, p) in instance()) {
        let mean = exact_mean_estimate(&g, p).unwrap();
        for (a, b) in mean.iter().zip(g.full_gradient()) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn second_moment_routes_agree((g, p) in instance()) {
        let closed = second_moment_closed_form(&g, p).unwrap();
        prop_assert!(close(closed, second_moment_bruteforce(&g, p).unwrap(), 1e-9));
        prop_assert!(close(closed, second_moment_by_client(&g, p).unwrap(), 1e-9));
        let full: f64 = g.full_gradient().iter().map(|v| v * v).sum();
        prop_assert!(closed >= full * (1.0 - 1e-12));
    }

    #[test]
    fn partials_match_per_example_form((g, p) in instance(), mask in any::<u64>()) {
        let mask = mask & ((1u64 << g.num_clients) - 1);
        let part = Participation::from_mask(g.num_clients, mask, p);
        let partials = client_partials(&g, p).unwrap();
        let agg = aggregate_estimate(&partials, &part).unwrap().value;
        let direct = estimate_by_example(&g, p, ClientSet::from_mask(mask)).unwrap();
        for (a, b) in agg.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn bound_on_class_aligned_gradients() {
    let (n, k, d, c) = (6, 4, 3, 0.5);
    let a = single_class_assignment(n, k).unwrap();
    let mut rng = RngStream::new(5, 0).rng();
    let a = mark_non_private(a, c, &mut rng).unwrap();
    let before = a.clone();
    let after = share_randomized(a, &ShareConfig::new(c, d), &mut rng).unwrap().assignment;
    let onehot = |l: usize| (0..n).map(|i| if i == l { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let grads: Vec<Vec<f64>> = after.examples.iter().map(|e| onehot(e.label)).collect();
    let g_after = GradientSet::from_assignment(&after, grads.clone()).unwrap();
    let g_before = GradientSet::from_assignment(&before, grads).unwrap();
    let sums = scalar_product_sums(&g_after);
    assert!(sign_condition_holds(&sums));
    for p in [0.2, 0.5, 0.8] {
        let gap = variance_gap_exact(&g_before, &g_after, p).unwrap();
        let bound = variance_reduction_bound(&sums, d, p, BoundVariant::Standard).unwrap();
        let strong = variance_reduction_bound(&sums, d, p, BoundVariant::NegativeCrossClass).unwrap();
        assert!(bound > 0.0);
        assert!(gap >= bound - 1e-12, "p={p}: gap {gap} < bound {bound}");
        // cross-class products vanish, so the sharper factor also applies
        assert!(gap >= strong - 1e-12, "p={p}: gap {gap} < {strong}");
    }
}
