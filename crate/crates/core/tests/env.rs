use maze_core::bench::scripted_partner_action;
use maze_core::env::{
    reset, step, Action, Archetype, GameState, JointAction, Layout, ObservationGrid, RewardConfig, Role, StateKey,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::Arc;

fn layout(kind: Archetype, horizon: u32) -> Arc<Layout> {
    Arc::new(Layout::archetype(kind, 20, horizon).unwrap())
}

/// Scripted play with random actions mixed in, so walks reach busy states.
fn noisy_action(s: &GameState, role: Role, eps: f64, rng: &mut ChaCha8Rng) -> Action {
    if rng.gen_bool(eps) {
        Action::ALL[rng.gen_range(0..Action::ALL.len())]
    } else {
        scripted_partner_action(s, role)
    }
}

fn archetype() -> impl Strategy<Value = Archetype> {
    prop::sample::select(Archetype::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn onions_are_conserved(kind in archetype(), seed in any::<u64>(), eps in 0.0f64..1.0) {
        let rw = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = reset(&layout(kind, 150));
        while !s.is_done() {
            let joint = JointAction::new(noisy_action(&s, Role::Agent, eps, &mut rng), noisy_action(&s, Role::Partner, eps, &mut rng));
            s = step(&s, joint, &rw).unwrap().next_state;
            prop_assert_eq!(s.onions_accounted(), s.tally.onions_dispensed);
        }
    }

    #[test]
    fn sparse_reward_is_one_shared_payment_per_delivery(kind in archetype(), seed in any::<u64>(), eps in 0.0f64..0.5) {
        let rw = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = reset(&layout(kind, 200));
        let mut total = 0.0;
        while !s.is_done() {
            let joint = JointAction::new(noisy_action(&s, Role::Agent, eps, &mut rng), noisy_action(&s, Role::Partner, eps, &mut rng));
            let before = s.tally.soups_delivered;
            let out = step(&s, joint, &rw).unwrap();
            let delivered = out.next_state.tally.soups_delivered - before;
            prop_assert_eq!(out.sparse_reward, rw.deliver * delivered as f64);
            total += out.sparse_reward;
            s = out.next_state;
        }
        prop_assert_eq!(total, rw.deliver * s.tally.soups_delivered as f64);
    }

    #[test]
    fn step_is_deterministic(kind in archetype(), seed in any::<u64>(), walk in 0usize..120) {
        let rw = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = reset(&layout(kind, 400));
        for _ in 0..walk {
            let joint = JointAction::new(noisy_action(&s, Role::Agent, 0.3, &mut rng), noisy_action(&s, Role::Partner, 0.3, &mut rng));
            s = step(&s, joint, &rw).unwrap().next_state;
        }
        for a in Action::ALL {
            for b in Action::ALL {
                let j = JointAction::new(a, b);
                let x = step(&s, j, &rw).unwrap();
                let y = step(&s.clone(), j, &rw).unwrap();
                prop_assert_eq!(x.next_state.key(), y.next_state.key());
                prop_assert_eq!(x.sparse_reward.to_bits(), y.sparse_reward.to_bits());
                prop_assert_eq!(x.shaped_events, y.shaped_events);
                prop_assert_eq!(x.done, y.done);
            }
        }
    }

    #[test]
    fn episodes_last_exactly_the_horizon(kind in archetype(), horizon in 1u32..300, seed in any::<u64>()) {
        let rw = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = reset(&layout(kind, horizon));
        let mut steps = 0;
        loop {
            let joint = JointAction::new(noisy_action(&s, Role::Agent, 0.5, &mut rng), noisy_action(&s, Role::Partner, 0.5, &mut rng));
            let out = step(&s, joint, &rw).unwrap();
            steps += 1;
            s = out.next_state;
            if out.done {
                break;
            }
        }
        prop_assert_eq!(steps, horizon);
        prop_assert!(step(&s, JointAction::new(Action::Stay, Action::Stay), &rw).is_err());
    }

    /// On forced coordination neither player can finish a soup alone, however it acts.
    #[test]
    fn forced_coordination_needs_both_players(seed in any::<u64>(), solo in prop::sample::select(vec![Role::Agent, Role::Partner])) {
        let rw = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = reset(&layout(Archetype::ForcedCoordination, 400));
        while !s.is_done() {
            let mine = noisy_action(&s, solo, 0.2, &mut rng);
            let joint = match solo {
                Role::Agent => JointAction::new(mine, Action::Stay),
                Role::Partner => JointAction::new(Action::Stay, mine),
            };
            let out = step(&s, joint, &rw).unwrap();
            prop_assert_eq!(out.sparse_reward, 0.0);
            s = out.next_state;
        }
        prop_assert_eq!(s.tally.soups_delivered, 0);
    }
}

#[test]
fn encoding_is_injective_along_long_walks() {
    let rw = RewardConfig::default();
    for kind in Archetype::ALL {
        let l = layout(kind, 400);
        let mut rng = ChaCha8Rng::seed_from_u64(kind as u64);
        let mut seen: [HashMap<Vec<u64>, StateKey>; 2] = [HashMap::new(), HashMap::new()];
        let mut s = reset(&l);
        let mut busy = 0;
        for _ in 0..10_000 {
            for role in [Role::Agent, Role::Partner] {
                let bits: Vec<u64> = ObservationGrid::encode(&s, role).as_slice().iter().map(|x| x.to_bits()).collect();
                let key = s.key();
                if let Some(prev) = seen[role.index()].insert(bits, key.clone()) {
                    assert_eq!(prev, key, "{kind}: two states share an encoding");
                }
            }
            if s.pots.iter().any(|p| p.onions > 0) {
                busy += 1;
            }
            let joint = JointAction::new(noisy_action(&s, Role::Agent, 0.3, &mut rng), noisy_action(&s, Role::Partner, 0.3, &mut rng));
            s = step(&s, joint, &rw).unwrap().next_state;
            if s.is_done() {
                s = reset(&l);
            }
        }
        assert!(busy > 1000, "{kind}: walk rarely filled a pot");
        assert!(seen[0].len() > 5000);
    }
}
