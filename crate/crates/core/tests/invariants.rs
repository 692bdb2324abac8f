use pmjdot::correspondence::{estimate_correspondence, CostParams, MemoryBank, PrototypeBank};
use pmjdot::eval::{evaluate, rank_gallery, LabeledFeature};
use pmjdot::linalg::{dot, normalized, Matrix};
use pmjdot::ot::{exact_ot_oracle, plan_entropy, sinkhorn_max, sinkhorn_min, CostMatrix, SinkhornConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cost(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CostMatrix {
    CostMatrix::new(Matrix::from_fn(r, c, |_, _| rng.random::<f64>())).unwrap()
}

/// Minimum assignment cost by recursive search over unused columns.
fn recursive_min(cost: &CostMatrix, row: usize, used: &mut Vec<bool>) -> f64 {
    if row == cost.rows() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for j in 0..cost.cols() {
        if !used[j] {
            used[j] = true;
            best = best.min(cost.get(row, j) + recursive_min(cost, row + 1, used));
            used[j] = false;
        }
    }
    best
}

#[test]
fn oracle_matches_recursive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for n in 1..=5 {
        for _ in 0..10 {
            let cost = random_cost(&mut rng, n, n);
            let (plan, objective) = exact_ot_oracle(&cost).unwrap();
            let expected = recursive_min(&cost, 0, &mut vec![false; n]) / n as f64;
            assert!((objective - expected).abs() < 1e-12);
            assert!((plan.transport_cost(&cost) - objective).abs() < 1e-12);
        }
    }
}

#[test]
fn small_lambda_squares_converge_near_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..300 {
        let n = 2 + i % 5;
        let cost = random_cost(&mut rng, n, n);
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(1e-3)).unwrap();
        assert!(plan.converged, "instance {i}");
        let best = recursive_min(&cost, 0, &mut vec![false; n]) / n as f64;
        assert!((plan.transport_cost(&cost) - best) / best < 0.01, "instance {i}");
    }
}

#[test]
fn entropy_grows_with_regularization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (r, c) = (rng.random_range(2..8), rng.random_range(2..8));
        let cost = random_cost(&mut rng, r, c);
        let entropies: Vec<f64> = [0.01, 0.1, 1.0]
            .iter()
            .map(|&l| sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(l)).unwrap().entropy())
            .collect();
        assert!(entropies.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{entropies:?}");
        assert!(entropies[2] <= ((r * c) as f64).ln() + 1e-12);
    }
}

#[test]
fn plans_are_bit_identical_across_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cost = random_cost(&mut rng, 7, 30);
    let config = SinkhornConfig::with_entropy_weight(0.02);
    assert_eq!(sinkhorn_min(&cost, &config).unwrap(), sinkhorn_min(&cost, &config).unwrap());
}

#[test]
fn estimate_correspondence_recovers_a_permutation() {
    // bank entries sit exactly on prototypes in a shuffled order
    let protos = PrototypeBank::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ])
    .unwrap();
    let order = [2, 0, 1];
    let mut bank = MemoryBank::new(3, 3).unwrap();
    bank.push(&order.iter().map(|&k| protos.prototype(k).to_vec()).collect::<Vec<_>>()).unwrap();
    let plan = estimate_correspondence(&protos, &bank, &CostParams::default(), &SinkhornConfig::default()).unwrap();
    for (j, &k) in order.iter().enumerate() {
        assert!(plan.get(k, j) > 0.333, "column {j}: {}", plan.get(k, j));
    }
}

fn unit_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| normalized(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>())).collect()
}

fn labeled(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Vec<LabeledFeature> {
    unit_vectors(rng, n, d)
        .into_iter()
        .map(|vector| LabeledFeature { label: rng.random_range(0..classes), vector })
        .collect()
}

#[test]
fn ranking_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let gallery = unit_vectors(&mut rng, 60, 4);
        let query = unit_vectors(&mut rng, 1, 4).remove(0);
        let mut keyed: Vec<(f64, usize)> = gallery.iter().enumerate().map(|(i, g)| (1.0 - dot(&query, g), i)).collect();
        keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
        assert_eq!(rank_gallery(&query, &gallery).unwrap(), expected);
    }
}

#[test]
fn duplicating_relevant_items_never_lowers_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let queries = labeled(&mut rng, 10, 5, 3);
        let gallery = labeled(&mut rng, 40, 5, 3);
        let base = evaluate(&queries, &gallery, 10).unwrap();
        for q in &queries {
            let mut extended = gallery.clone();
            extended.extend(gallery.iter().filter(|g| g.label == q.label).cloned());
            let one = evaluate(std::slice::from_ref(q), &gallery, 10).unwrap().map;
            let more = evaluate(std::slice::from_ref(q), &extended, 10).unwrap().map;
            assert!(more >= one - 1e-12, "{more} < {one}");
        }
        assert!((0.0..=1.0).contains(&base.map));
    }
}

#[test]
fn gallery_order_only_matters_through_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let queries = labeled(&mut rng, 15, 6, 4);
    let gallery = labeled(&mut rng, 80, 6, 4);
    let mut shuffled = gallery.clone();
    shuffled.reverse();
    let a = evaluate(&queries, &gallery, 20).unwrap();
    let b = evaluate(&queries, &shuffled, 20).unwrap();
    assert_eq!(a.map, b.map);
    assert_eq!(a.map_at_k, b.map_at_k);
    assert_eq!(a.prec_at_k, b.prec_at_k);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_are_feasible(seed in any::<u64>(), r in 1usize..12, c in 1usize..40, l in prop::sample::select(vec![0.01, 0.05, 0.5])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = random_cost(&mut rng, r, c);
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(l)).unwrap();
        prop_assert!(plan.converged);
        prop_assert!(plan.max_marginal_violation() <= 1e-6);
        prop_assert!(plan.matrix().min() >= 0.0);
        let h = plan_entropy(plan.matrix());
        prop_assert!(h >= -1e-12 && h <= ((r * c) as f64).ln() + 1e-12);
    }

    #[test]
    fn max_form_is_shifted_min_form(seed in any::<u64>(), r in 1usize..8, c in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let score = Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let config = SinkhornConfig::with_entropy_weight(0.05);
        let top = score.max();
        let shifted = CostMatrix::new(score.map(|s| top - s)).unwrap();
        let a = sinkhorn_max(&score, &config).unwrap();
        let b = sinkhorn_min(&shifted, &config).unwrap();
        for (x, y) in a.matrix().as_slice().iter().zip(b.matrix().as_slice()) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn bank_keeps_newest_batches_first(batch in 1usize..5, batches in 1usize..6, pushes in 0usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bank = MemoryBank::new(batch * batches, batch).unwrap();
        let mut pushed = Vec::new();
        for _ in 0..pushes {
            let b = unit_vectors(&mut rng, batch, 3);
            bank.push(&b).unwrap();
            pushed.push(b);
        }
        let expected: Vec<Vec<f64>> = pushed.iter().rev().flatten().take(batch * batches).cloned().collect();
        prop_assert_eq!(bank.iter().cloned().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn query_order_does_not_change_metrics(seed in any::<u64>(), k in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let queries = labeled(&mut rng, 8, 4, 3);
        let gallery = labeled(&mut rng, 30, 4, 3);
        let mut reversed = queries.clone();
        reversed.reverse();
        let a = evaluate(&queries, &gallery, k).unwrap();
        let b = evaluate(&reversed, &gallery, k).unwrap();
        prop_assert!((a.map - b.map).abs() < 1e-12);
        prop_assert!((a.map_at_k - b.map_at_k).abs() < 1e-12);
        prop_assert!(a.prec_at_k >= 0.0 && a.prec_at_k <= 1.0 && a.map_at_k <= 1.0);
    }
}
