mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajdrift::cartpole::{
    compare_episode_sets, epsilon_greedy_action, generate_cartpole_episodes, is_terminal, step_dynamics,
    train_q_policy, CartPoleParams, ContinuousState, Discretizer, LearningConfig, Push, QPolicy,
};
use trajdrift::seqmeasure::MeasureKind;

#[test]
fn every_bin_tuple_packs_by_mixed_radix() {
    let d = Discretizer::default();
    let mut seen = vec![false; d.n_states()];
    for b0 in 0..10 {
        for b1 in 0..10 {
            for b2 in 0..10 {
                for b3 in 0..10 {
                    let bins = [b0, b1, b2, b3];
                    let token = d.encode_bins(bins);
                    assert_eq!(u64::from(token), common::mixed_radix(bins, 10));
                    assert!(!seen[token as usize]);
                    seen[token as usize] = true;
                }
            }
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn bin_centres_encode_to_their_tuple() {
    let d = Discretizer::default();
    let centre = |dim: usize, b: usize| {
        let (lo, hi) = d.ranges[dim];
        lo + (b as f64 + 0.5) * (hi - lo) / 10.0
    };
    for bins in [[0, 0, 0, 0], [9, 9, 9, 9], [3, 7, 1, 4], [5, 5, 5, 5]] {
        let s = ContinuousState {
            x: centre(0, bins[0]),
            x_dot: centre(1, bins[1]),
            theta: centre(2, bins[2]),
            theta_dot: centre(3, bins[3]),
        };
        assert_eq!(d.bins_of(&s), bins);
    }
}

#[test]
fn uncontrolled_pole_falls() {
    let p = CartPoleParams::default();
    let mut s = ContinuousState {
        theta: 0.05,
        ..Default::default()
    };
    let mut steps = 0;
    while !is_terminal(&s, &p) {
        s = step_dynamics(&s, Push::Right, &p);
        steps += 1;
        assert!(steps < 200, "pole never fell");
    }
}

#[test]
fn full_exploration_is_uniform() {
    let q = QPolicy::new(1, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let right = (0..n).filter(|_| epsilon_greedy_action(&q, 0, &mut rng) == Push::Right).count() as f64;
    let sd = (n as f64 * 0.25).sqrt();
    assert!((right - n as f64 / 2.0).abs() < 3.0 * sd, "{right} right pushes");
}

#[test]
fn greedy_without_exploration() {
    let mut q = QPolicy::new(3, 0.0, 0.0);
    q.q[1] = [0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(epsilon_greedy_action(&q, 0, &mut rng), Push::Left);
    assert_eq!(epsilon_greedy_action(&q, 1, &mut rng), Push::Right);
}

#[test]
fn q_table_json_round_trip() {
    let mut q = QPolicy::new(10_000, 0.0, 0.05);
    q.q[42] = [1.5, -2.0];
    q.q[9999] = [0.0, 3.0];
    let mut buf = Vec::new();
    q.write_json(0.0, &mut buf).unwrap();
    assert_eq!(QPolicy::read_json(&buf[..], 10_000).unwrap(), q);
    assert!(QPolicy::read_json(&buf[..], 16).is_err());
}

#[test]
fn training_balances_the_default_pole() {
    let trained = train_q_policy(
        &CartPoleParams::default(),
        &Discretizer::default(),
        &LearningConfig::default(),
        1,
    )
    .unwrap();
    assert!(trained.converged, "rolling mean {}", trained.rolling_mean);
    assert!(trained.rolling_mean >= 195.0);
    assert_eq!(trained.policy.epsilon, LearningConfig::default().rollout_epsilon);
}

#[test]
fn rollouts_respect_the_step_limit() {
    let p = CartPoleParams::default();
    let d = Discretizer::default();
    let q = QPolicy::new(d.n_states(), 0.0, 1.0);
    let set = generate_cartpole_episodes(&q, &p, &d, 50, 3, "random").unwrap();
    for ep in &set.episodes {
        assert!(ep.states.len() <= p.max_steps + 1);
        assert_eq!(ep.completed, ep.states.len() == p.max_steps + 1);
    }
    let again = generate_cartpole_episodes(&q, &p, &d, 50, 3, "random").unwrap();
    assert_eq!(set, again);
}

#[test]
fn a_set_compared_with_itself_shows_no_drift() {
    let p = CartPoleParams::default();
    let d = Discretizer::default();
    let q = QPolicy::new(d.n_states(), 0.0, 1.0);
    let set = generate_cartpole_episodes(&q, &p, &d, 12, 8, "same").unwrap();
    let cmp = compare_episode_sets(&set, &set, MeasureKind::DamerauSimilarity, Some(16), 0.05).unwrap();
    assert!(cmp.result.p > 0.999, "p = {}", cmp.result.p);
    assert!(!cmp.result.drift);
    assert!((cmp.within.mean - cmp.inter.mean).abs() < 1e-12);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(CartPoleParams::default().with_gravity(-1.0).validate().is_err());
    assert!(CartPoleParams::default().with_half_length(0.0).validate().is_err());
    assert!(Discretizer::new(1, Discretizer::default().ranges).is_err());
}

#[test]
fn swapping_sides_keeps_large_drift_flags() {
    use trajdrift::cartpole::{detect_drift_cartpole, CartPoleDriftConfig, ComparisonSeeds};
    let cfg = CartPoleDriftConfig {
        episodes_per_set: 12,
        window: Some(16),
        ..Default::default()
    };
    let (a, b) = (CartPoleParams::default(), CartPoleParams::default().with_gravity(19.6));
    let seeds = 10;
    let agree = (0..seeds)
        .filter(|&seed| {
            let s = ComparisonSeeds::derived(seed);
            let swapped = ComparisonSeeds {
                train_a: s.train_b,
                train_b: s.train_a,
                episodes_a: s.episodes_b,
                episodes_b: s.episodes_a,
            };
            let fwd = detect_drift_cartpole(&a, &b, MeasureKind::DtwSimilarity, &cfg, s).unwrap();
            let back = detect_drift_cartpole(&b, &a, MeasureKind::DtwSimilarity, &cfg, swapped).unwrap();
            fwd.comparison.result.drift == back.comparison.result.drift
        })
        .count();
    assert!(agree * 10 >= seeds as usize * 9, "{agree}/{seeds} agree");
}
