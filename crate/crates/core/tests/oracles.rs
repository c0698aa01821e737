//! Solvers and decoders checked against exhaustive reference implementations
//! written independently here.

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setpred::assignment::{brute_force_assignment, hungarian, lehmer_decode, lehmer_encode, CostMatrix};
use setpred::card_dist::{CardinalityHead, CardinalityKind};
use setpred::inference::{approx_map, brute_force_map, exact_map};
use setpred::network::SlotOutput;

/// Every injection of `rows` into `cols`, lexicographic.
fn injections(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rows: usize, cols: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == rows {
            out.push(prefix.clone());
            return;
        }
        for c in 0..cols {
            if !prefix.contains(&c) {
                prefix.push(c);
                go(prefix, rows, cols, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), rows, cols, &mut out);
    out
}

fn reference_min_cost(rows: &[Vec<f64>]) -> f64 {
    let cols = rows.first().map_or(0, |r| r.len());
    injections(rows.len(), cols)
        .iter()
        .map(|p| p.iter().enumerate().map(|(r, &c)| rows[r][c]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn hungarian_matches_hand_cases() {
    let c = CostMatrix::from_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]).unwrap();
    let r = hungarian(&c);
    assert_eq!((r.perm.as_slice(), r.cost), (&[1, 0, 2][..], 5.0));
    let c = CostMatrix::from_rows(&[vec![5.0, 1.0, 9.0], vec![9.0, 5.0, 1.0]]).unwrap();
    let r = hungarian(&c);
    assert_eq!((r.perm.as_slice(), r.cost), (&[1, 2][..], 2.0));
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert_eq!(hungarian(&c).perm, vec![0, 1]);
}

#[test]
fn brute_force_breaks_ties_lexicographically() {
    let c = CostMatrix::from_rows(&[vec![2.0; 4], vec![2.0; 4], vec![2.0; 4]]).unwrap();
    let r = brute_force_assignment(&c).unwrap();
    assert_eq!((r.perm, r.cost), (vec![0, 1, 2], 6.0));
    let one = CostMatrix::from_rows(&[vec![7.0]]).unwrap();
    assert_eq!(brute_force_assignment(&one).unwrap().perm, vec![0]);
}

#[test]
fn hungarian_equals_exhaustive_search_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let cols = rng.random_range(1..=6);
        let rows = rng.random_range(0..=cols);
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let c = if rows == 0 { CostMatrix::empty(cols) } else { CostMatrix::from_rows(&data).unwrap() };
        let h = hungarian(&c);
        let want = if rows == 0 { 0.0 } else { reference_min_cost(&data) };
        assert!((h.cost - want).abs() < 1e-9, "{} vs {want}", h.cost);
        assert!((c.cost_of(&h.perm) - h.cost).abs() < 1e-9);
    }
}

#[test]
fn lehmer_round_trip_matches_enumeration_order() {
    for n in 1..=6 {
        for (k, p) in injections(n, n).iter().enumerate() {
            assert_eq!(lehmer_encode(p).unwrap(), k);
            assert_eq!(&lehmer_decode(k, n).unwrap(), p);
        }
    }
    assert_eq!(lehmer_encode(&[2, 1, 0]).unwrap(), 5);
    assert_eq!(lehmer_decode(1, 3).unwrap(), vec![0, 2, 1]);
}

fn ln_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

fn random_head(rng: &mut ChaCha8Rng, m: usize) -> CardinalityHead {
    let kind = [
        CardinalityKind::Categorical,
        CardinalityKind::Poisson,
        CardinalityKind::NegativeBinomial,
    ][rng.random_range(0..3)];
    let alpha = (0..kind.param_count(m)).map(|_| rng.random_range(-3.0..3.0)).collect();
    CardinalityHead::new(kind, alpha, m).unwrap()
}

/// Most probable set by enumerating every subset of slots.
fn reference_map(head: &CardinalityHead, slots: &[SlotOutput], u: f64) -> Vec<usize> {
    let n = slots.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = set.len();
        let j = -head.log_pmf(m) - m as f64 * u.ln() - set.iter().map(|&i| ln_sigmoid(slots[i].existence_logit)).sum::<f64>();
        if j < best.0 - 1e-12 {
            best = (j, set);
        }
    }
    best.1
}

fn random_slots(rng: &mut ChaCha8Rng, m: usize) -> Vec<SlotOutput> {
    (0..m)
        .map(|_| SlotOutput {
            state: vec![],
            existence_logit: rng.random_range(-4.0..4.0),
        })
        .collect()
}

#[test]
fn exact_map_equals_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..400 {
        let m = rng.random_range(1..=10);
        let head = random_head(&mut rng, m);
        let slots = random_slots(&mut rng, m);
        let u = [0.5, 1.0, 2.36, 100.0][rng.random_range(0..4)];
        let got = exact_map(&head, &slots, u).unwrap().sorted_slots();
        assert_eq!(got, reference_map(&head, &slots, u));
        assert_eq!(got, brute_force_map(&head, &slots, u).unwrap().sorted_slots());
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn exact_and_approximate_disagree_when_u_is_large() {
    let head = CardinalityHead::categorical_from_probs(&[0.1, 0.8, 0.1]).unwrap();
    let slots: Vec<SlotOutput> = [0.9, 0.2]
        .iter()
        .map(|&p| SlotOutput {
            state: vec![],
            existence_logit: logit(p),
        })
        .collect();
    assert_eq!(exact_map(&head, &slots, 1.0).unwrap().sorted_slots(), vec![0]);
    assert_eq!(exact_map(&head, &slots, 100.0).unwrap().sorted_slots(), vec![0, 1]);
    assert_eq!(approx_map(&head, &slots).unwrap().sorted_slots(), vec![0]);
    assert_eq!(reference_map(&head, &slots, 100.0), vec![0, 1]);
}

proptest! {
    #[test]
    fn assignment_cost_ignores_row_order(seed in any::<u64>(), cols in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(1..=cols);
        let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let mut shuffled = data.clone();
        shuffled.reverse();
        let a = hungarian(&CostMatrix::from_rows(&data).unwrap()).cost;
        let b = hungarian(&CostMatrix::from_rows(&shuffled).unwrap()).cost;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn map_set_scores_dominate_excluded_slots(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..=8);
        let head = random_head(&mut rng, m);
        let slots = random_slots(&mut rng, m);
        let set = exact_map(&head, &slots, 2.0).unwrap().sorted_slots();
        let worst_in = set.iter().map(|&i| slots[i].existence_logit).fold(f64::INFINITY, f64::min);
        for i in (0..m).filter(|i| !set.contains(i)) {
            prop_assert!(slots[i].existence_logit <= worst_in);
        }
    }
}
