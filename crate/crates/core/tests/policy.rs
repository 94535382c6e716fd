use maze_core::env::{Action, Role, NUM_ACTIONS};
use maze_core::policy::{init_policy, Architecture, InitScheme, PolicyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `||a - b|| / (||a|| + ||b||)`, zero when both vanish.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a) + norm(b);
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central_difference(p: &PolicyParams, f: impl Fn(&PolicyParams) -> f64, h: f64) -> Vec<f64> {
    let mut q = p.clone();
    (0..p.weights.len())
        .map(|i| {
            let w = p.weights[i];
            q.weights[i] = w + h;
            let up = f(&q);
            q.weights[i] = w - h;
            let down = f(&q);
            q.weights[i] = w;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let depth = rng.gen_range(0..=3);
        let arch = Architecture {
            input: rng.gen_range(1..=8),
            hidden: (0..depth).map(|_| rng.gen_range(1..=6)).collect(),
            actions: NUM_ACTIONS,
        };
        let mut p = init_policy(&arch, Role::Agent, case, InitScheme::Scaled).unwrap();
        for w in &mut p.weights {
            *w = 0.7 * rng.sample::<f64, _>(StandardNormal);
        }
        let obs: Vec<f64> = (0..arch.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let action = Action::ALL[rng.gen_range(0..NUM_ACTIONS)];

        let (g_logp, g_value) = p.log_prob_and_value_grads(&obs, action);
        let n_logp = central_difference(&p, |q| q.forward(&obs).unwrap().log_prob(action), h);
        let n_value = central_difference(&p, |q| q.forward(&obs).unwrap().value, h);
        let e1 = relative_error(&g_logp, &n_logp);
        let e2 = relative_error(&g_value, &n_value);
        assert!(e1 < 1e-4, "case {case} {arch:?}: log-prob gradient error {e1}");
        assert!(e2 < 1e-4, "case {case} {arch:?}: value gradient error {e2}");
    }
}

#[test]
fn forward_is_pure() {
    let arch = Architecture { input: 5, hidden: vec![4, 3], actions: NUM_ACTIONS };
    let p = init_policy(&arch, Role::Partner, 3, InitScheme::Scaled).unwrap();
    let obs = [0.5, -1.0, 0.0, 2.0, 0.25];
    let a = p.forward(&obs).unwrap();
    let _ = p.forward(&[0.0; 5]).unwrap();
    assert_eq!(a, p.forward(&obs).unwrap());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let arch = Architecture { input: 6, hidden: vec![5], actions: NUM_ACTIONS };
    let mut p = init_policy(&arch, Role::Partner, 9, InitScheme::Scaled).unwrap();
    p.lineage = 42;
    p.train_steps = 123_456;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    maze_core::checkpoint::save(&path, "policy", &p).unwrap();
    let back: PolicyParams = maze_core::checkpoint::load(&path, "policy").unwrap();
    assert_eq!(back, p);
    assert!(back.weights.iter().zip(&p.weights).all(|(a, b)| a.to_bits() == b.to_bits()));
}
