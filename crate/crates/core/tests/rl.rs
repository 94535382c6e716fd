use maze_core::rl::{compute_gae, population_entropy, population_jsd};
use proptest::prelude::*;

/// Double loop in log-ratio form; the mean is rebuilt inside the loop.
fn jsd_brute_force(pop: &[Vec<f64>]) -> f64 {
    let n = pop.len();
    let mut total = 0.0;
    for p in pop {
        for a in 0..p.len() {
            if p[a] == 0.0 {
                continue;
            }
            let mut m = 0.0;
            for q in pop {
                m += q[a];
            }
            m /= n as f64;
            total += p[a] * (p[a].ln() - m.ln());
        }
    }
    total / n as f64
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn population() -> impl Strategy<Value = Vec<Vec<f64>>> {
    let member = prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], 6).prop_filter_map("nonzero", |w| {
        let s: f64 = w.iter().sum();
        (s > 0.0).then(|| w.into_iter().map(|x| x / s).collect::<Vec<f64>>())
    });
    prop::collection::vec(member, 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jsd_matches_brute_force(pop in population()) {
        let got = population_jsd(&pop).unwrap();
        let want = jsd_brute_force(&pop);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs() + 1e-15, "{got} vs {want}");
        prop_assert!(got >= 0.0 && got <= (pop.len() as f64).ln() + 1e-12);
        // Entropy form: H(mean) - mean of H(member).
        let n = pop.len() as f64;
        let mean: Vec<f64> = (0..6).map(|a| pop.iter().map(|p| p[a]).sum::<f64>() / n).collect();
        let h = entropy(&mean) - pop.iter().map(|p| entropy(p)).sum::<f64>() / n;
        prop_assert!((got - h).abs() <= 1e-9);
        prop_assert!((population_entropy(&pop).unwrap() - entropy(&mean)).abs() <= 1e-12);
    }
}

fn episode() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, f64)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop::bool::weighted(0.15), n),
            0.5f64..1.0,
        )
    })
}

proptest! {
    #[test]
    fn gae_lambda_one_is_monte_carlo((r, v, d, gamma) in episode()) {
        let (adv, ret) = compute_gae(&r, &v, &d, gamma, 1.0).unwrap();
        let n = r.len();
        for t in 0..n {
            let mut g = 0.0;
            let mut disc = 1.0;
            for k in t..n {
                g += disc * r[k];
                if d[k] {
                    break;
                }
                disc *= gamma;
            }
            prop_assert!((adv[t] - (g - v[t])).abs() < 1e-9);
            prop_assert!((ret[t] - g).abs() < 1e-9);
        }
    }

    #[test]
    fn gae_lambda_zero_is_td_residual((r, v, d, gamma) in episode()) {
        let (adv, _) = compute_gae(&r, &v, &d, gamma, 0.0).unwrap();
        let n = r.len();
        for t in 0..n {
            let next = if d[t] || t + 1 == n { 0.0 } else { v[t + 1] };
            prop_assert!((adv[t] - (r[t] + gamma * next - v[t])).abs() < 1e-12);
        }
    }
}
