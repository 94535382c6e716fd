use maze_core::archive::{distance, kmeans_cluster, select_partner_population, Archive, InsertOutcome, Threshold};
use maze_core::env::{Role, NUM_ACTIONS};
use maze_core::policy::{init_policy, Architecture, InitScheme};
use maze_core::rl::Learner;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn learner(seed: u64) -> Learner {
    let arch = Architecture { input: 2, hidden: vec![], actions: NUM_ACTIONS };
    Learner::new(init_policy(&arch, Role::Partner, seed, InitScheme::Scaled).unwrap())
}

fn threshold() -> impl Strategy<Value = Threshold> {
    prop_oneof![(0.0f64..0.5).prop_map(Threshold::Relative), (0.0f64..20.0).prop_map(Threshold::Absolute)]
}

fn behaviors(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // Coarse grid values make exact duplicates and near misses common.
    prop::collection::vec(prop::collection::vec((0u8..8).prop_map(|x| x as f64 * 5.0), dim), 1..40)
}

proptest! {
    #[test]
    fn insertion_invariants(cap in 1usize..7, th in threshold(), seed in any::<u64>(), bs in behaviors(3)) {
        let mut a = Archive::new(cap, th).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, b) in bs.into_iter().enumerate() {
            let before: Vec<(u64, u64, Vec<f64>)> =
                a.entries().iter().map(|e| (e.id, e.inserted_at, e.behavior.clone())).collect();
            let t = a.threshold_value();
            let outcome = a.insert(learner(k as u64), b.clone(), &mut rng).unwrap();
            prop_assert!(a.len() <= cap);
            let after_ids: Vec<u64> = a.entries().iter().map(|e| e.id).collect();
            let newest = a.entries().iter().max_by_key(|e| e.inserted_at).unwrap();
            match outcome {
                InsertOutcome::Added => {
                    prop_assert_eq!(&newest.behavior, &b);
                    for e in a.entries().iter().filter(|e| e.id != newest.id) {
                        prop_assert!(distance(&e.behavior, &b) > t);
                    }
                    if before.len() == cap {
                        // The oldest entry, and only it, went.
                        let oldest = before.iter().min_by_key(|e| e.1).unwrap().0;
                        prop_assert!(!after_ids.contains(&oldest));
                        prop_assert_eq!(after_ids.len(), cap);
                    } else {
                        prop_assert_eq!(after_ids.len(), before.len() + 1);
                    }
                }
                InsertOutcome::ReplacedOld => {
                    prop_assert_eq!(after_ids.len(), before.len());
                    prop_assert_eq!(&newest.behavior, &b);
                    let nearest = before.iter().map(|e| distance(&e.2, &b)).fold(f64::INFINITY, f64::min);
                    prop_assert!(nearest <= t);
                }
                InsertOutcome::RejectedKeptOld => {
                    let ids: Vec<u64> = before.iter().map(|e| e.0).collect();
                    prop_assert_eq!(after_ids, ids);
                }
            }
        }
    }

    #[test]
    fn selection_takes_one_member_per_cluster(bs in behaviors(2), k in 1usize..6, seed in any::<u64>()) {
        prop_assume!(bs.len() >= k);
        let mut a = Archive::new(bs.len(), Threshold::Absolute(0.0)).unwrap();
        for (i, b) in bs.iter().enumerate() {
            a.seed_entry(learner(i as u64), b.clone()).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (learners, picks) = select_partner_population(&a, k, &mut rng).unwrap();
        prop_assert_eq!(learners.len(), k);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assign = kmeans_cluster(&bs, k, &mut rng, 50).unwrap();
        for c in 0..k {
            prop_assert!(assign.contains(&c));
        }
        let clusters: Vec<usize> = picks.iter().map(|&i| assign[i]).collect();
        let mut distinct = clusters.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), k);
    }
}
