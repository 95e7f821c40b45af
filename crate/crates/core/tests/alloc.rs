use ffmimo::alloc::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, w: usize, m: usize, q: usize) -> AllocProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = Array2::from_shape_fn((w, m), |_| rng.random_range(0.0..1.0));
    AllocProblem::new(rates, q).unwrap()
}

fn problem_strategy() -> impl Strategy<Value = AllocProblem> {
    (1usize..5, 1usize..4, 0usize..3).prop_flat_map(|(m, q, extra)| {
        let w = (q * m + extra).max(1);
        proptest::collection::vec(0.0f64..10.0, w * m).prop_map(move |v| {
            AllocProblem::new(Array2::from_shape_vec((w, m), v).unwrap(), q).unwrap()
        })
    })
}

#[test]
fn round_robin_cycles() {
    let p = AllocProblem::new(Array2::ones((4, 2)), 1).unwrap();
    let rr = round_robin(&p);
    assert_eq!(rr.served(0), vec![0, 2]);
    assert_eq!(rr.served(1), vec![1, 3]);
    let sq = AllocProblem::new(Array2::ones((3, 3)), 1).unwrap();
    assert_eq!(round_robin(&sq).owner, vec![0, 1, 2]);
}

#[test]
fn best_cqi_repairs_one_rb() {
    // UE 0 dominates every RB; UE 1 needs one RB and RB 2 is the cheapest to give up.
    let p = AllocProblem::new(array![[5.0, 1.0], [4.0, 0.5], [3.0, 2.9]], 1).unwrap();
    assert_eq!(best_cqi(&p).owner, vec![0, 0, 1]);
    let free = AllocProblem::new(array![[5.0, 1.0], [0.0, 2.0]], 1).unwrap();
    assert_eq!(best_cqi(&free).owner, vec![0, 1]);
}

#[test]
fn single_improving_swap_is_taken() {
    // Init gives RB0 to UE0 (10 > 9) and leaves RB1 to UE1: 10. Swapping yields 9 + 5.
    let p = AllocProblem::new(array![[10.0, 9.0], [5.0, 0.0]], 1).unwrap();
    assert_eq!(init_matching(&p).owner, vec![0, 1]);
    let r = m3_mama(&p).unwrap();
    assert_eq!(r.matching.owner, vec![1, 0]);
    assert_eq!(r.trace, vec![14.0]);
    assert_eq!(r.sweeps, 2);
}

#[test]
fn optimal_init_is_kept() {
    let p = AllocProblem::new(array![[3.0, 1.0], [1.0, 3.0], [2.0, 0.0]], 1).unwrap();
    let r = m3_mama(&p).unwrap();
    assert!(r.trace.is_empty());
    assert_eq!(r.matching, init_matching(&p));
}

#[test]
fn brute_force_small_cases() {
    // 2 UEs x 3 RBs, Q = 1: 8 assignments, 6 feasible.
    let p = AllocProblem::new(array![[3.0, 1.0], [2.0, 2.5], [4.0, 0.5]], 1).unwrap();
    let mut feasible = 0;
    let mut best = f64::MIN;
    for code in 0..8usize {
        let m = Matching {
            owner: (0..3).map(|w| (code >> (2 - w)) & 1).collect(),
        };
        if m.is_feasible(&p) {
            feasible += 1;
            best = best.max(m.sum_rate(&p));
        }
    }
    assert_eq!(feasible, 6);
    let opt = brute_force_optimal(&p).unwrap();
    assert_eq!(opt.sum_rate(&p), best);
    assert_eq!(opt.owner, vec![0, 1, 0]);
    let one = AllocProblem::new(array![[1.0], [2.0]], 2).unwrap();
    assert_eq!(brute_force_optimal(&one).unwrap().owner, vec![0, 0]);
    assert!(brute_force_optimal(&random_problem(0, 30, 3, 1)).is_err());
}

#[test]
fn mama_dominates_init_and_round_robin() {
    for seed in 0..50 {
        let p = random_problem(seed, 6, 3, 1);
        let r = m3_mama(&p).unwrap();
        let s = r.matching.sum_rate(&p);
        assert!(r.matching.is_feasible(&p));
        assert!(s >= r.init_sum_rate);
        assert!(s >= round_robin(&p).sum_rate(&p), "seed {seed}");
        assert!(is_pairwise_stable(&r.matching, &p));
        assert!(brute_force_optimal(&p).unwrap().sum_rate(&p) >= s - 1e-12);
    }
}

#[test]
fn perturbed_matching_has_a_witness() {
    let p = AllocProblem::new(array![[10.0, 0.0], [0.0, 10.0]], 1).unwrap();
    let bad = Matching { owner: vec![1, 0] };
    let w = blocking_pair(&bad, &p).unwrap();
    assert_eq!((w.rb, w.ue, w.partner_rb, w.exchange), (0, 0, 1, Exchange::Swap));
    assert!(is_pairwise_stable(&Matching { owner: vec![0, 1] }, &p));
    let single = AllocProblem::new(array![[1.0], [5.0]], 1).unwrap();
    assert!(is_pairwise_stable(&Matching { owner: vec![0, 0] }, &single));
}

#[test]
fn pair_evaluations_grow_quadratically() {
    for w in [6usize, 12, 24] {
        let p = random_problem(w as u64, w, 3, 1);
        let r = m3_mama(&p).unwrap();
        assert_eq!(r.pair_evaluations, r.sweeps * w * (w - 1) / 2);
    }
}

#[test]
fn cdf_points() {
    let p = AllocProblem::new(array![[2.0, 1.0], [1.0, 3.0], [0.5, 0.0]], 1).unwrap();
    let m = Matching { owner: vec![0, 1, 0] };
    let cdf = per_rb_cdf(&m, &p);
    assert_eq!(cdf, vec![(0.5, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    let flat = AllocProblem::new(Array2::ones((4, 2)), 1).unwrap();
    let c = per_rb_cdf(&round_robin(&flat), &flat);
    assert!(c.iter().all(|&(r, _)| r == 1.0));
    assert_eq!(c.last().unwrap().1, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_allocator_is_feasible(p in problem_strategy()) {
        prop_assert!(init_matching(&p).is_feasible(&p));
        prop_assert!(round_robin(&p).is_feasible(&p));
        prop_assert!(best_cqi(&p).is_feasible(&p));
        let r = m3_mama(&p).unwrap();
        prop_assert!(r.matching.is_feasible(&p));
        prop_assert!(r.trace.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(is_pairwise_stable(&r.matching, &p));
    }

    #[test]
    fn scaling_rates_keeps_the_matching(p in problem_strategy(), alpha in 0.01f64..100.0) {
        let scaled = AllocProblem::new(p.rates.mapv(|r| r * alpha), p.quota).unwrap();
        prop_assert_eq!(init_matching(&p), init_matching(&scaled));
        prop_assert_eq!(m3_mama(&p).unwrap().matching, m3_mama(&scaled).unwrap().matching);
    }
}
