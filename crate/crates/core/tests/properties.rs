use adviser_ddpg::adviser::{advise_policy_targets, confidence, mix_probability};
use adviser_ddpg::agent::{policy_targets, ActionValue, NetworkCritic};
use adviser_ddpg::convergence::{iterate_policy, make_axis_quadratic, make_log_bump, verify_monotone};
use adviser_ddpg::envs::{
    mountaincar, pendulum, pendulum_step, EnvKind, Environment, MountainCar, Pendulum,
    PendulumState,
};
use adviser_ddpg::nn::{DenseNetwork, OutputKind};
use adviser_ddpg::replay::{ReplayBuffer, Transition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn arch() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_matches_central_differences(sizes in arch(), seed in any::<u64>(), bounded in any::<bool>()) {
        let out_dim = *sizes.last().unwrap();
        let output = if bounded { OutputKind::unit_bounded(out_dim) } else { OutputKind::Identity };
        let net = DenseNetwork::new(&sizes, seed, output).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (grads, input_grad) = net.backward(&x, &g).unwrap();
        let h = 1e-5;
        let objective = |n: &DenseNetwork, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(&g).map(|(o, gi)| o * gi).sum()
        };
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            prop_assert!(rel_err(fd, input_grad[i]) < 1e-4 || (fd - input_grad[i]).abs() < 1e-9,
                "input {i}: fd {fd} analytic {}", input_grad[i]);
        }
        let analytic: Vec<f64> = grads.values().collect();
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
            prop_assert!(rel_err(fd, *a) < 1e-4 || (fd - a).abs() < 1e-9,
                "param {k}: fd {fd} analytic {a}");
        }
    }

    #[test]
    fn forward_is_pure_and_seeded(sizes in arch(), seed in any::<u64>()) {
        let a = DenseNetwork::new(&sizes, seed, OutputKind::Identity).unwrap();
        let b = DenseNetwork::new(&sizes, seed, OutputKind::Identity).unwrap();
        prop_assert_eq!(&a, &b);
        let x = vec![0.3; sizes[0]];
        prop_assert_eq!(a.forward(&x).unwrap(), a.forward(&x).unwrap());
    }

    #[test]
    fn soft_update_contracts(sizes in arch(), s1 in any::<u64>(), s2 in any::<u64>(), tau in 0.01f64..1.0, k in 1usize..30) {
        let online = DenseNetwork::new(&sizes, s1, OutputKind::Identity).unwrap();
        let mut target = DenseNetwork::new(&sizes, s2, OutputKind::Identity).unwrap();
        let initial = target.max_abs_diff(&online).unwrap();
        for _ in 0..k {
            target.soft_update(&online, tau).unwrap();
        }
        let bound = (1.0 - tau).powi(k as i32) * initial;
        prop_assert!(target.max_abs_diff(&online).unwrap() <= bound + 1e-15);
    }

    #[test]
    fn pendulum_bounds_and_reward(seed in any::<u64>(), actions in prop::collection::vec(-5.0f64..5.0, 1..300)) {
        let mut env = Pendulum::new();
        let mut obs = env.reset(seed);
        for u in actions {
            let before = PendulumState::from_observation(&obs);
            let r = env.step(&[u]).unwrap();
            obs = r.next_state;
            prop_assert!((obs[0] * obs[0] + obs[1] * obs[1] - 1.0).abs() < 1e-12);
            prop_assert!(obs[2].abs() <= pendulum::MAX_SPEED);
            prop_assert!(r.reward <= 0.0);
            if r.reward == 0.0 {
                prop_assert!(before.theta_dot == 0.0 && u.clamp(-2.0, 2.0) == 0.0);
            }
            if r.truncated { break; }
        }
    }

    #[test]
    fn mountaincar_bounds(seed in any::<u64>(), actions in prop::collection::vec(-3.0f64..3.0, 1..400)) {
        let mut env = MountainCar::new();
        env.reset(seed);
        for a in actions {
            let r = env.step(&[a]).unwrap();
            let (p, v) = (r.next_state[0], r.next_state[1]);
            prop_assert!((mountaincar::MIN_POSITION..=mountaincar::MAX_POSITION).contains(&p));
            prop_assert!(v.abs() <= mountaincar::MAX_SPEED);
            if p == mountaincar::MIN_POSITION {
                prop_assert!(v >= 0.0);
            }
            prop_assert!(r.reward.is_finite());
            if r.done || r.truncated { break; }
        }
    }

    #[test]
    fn environments_are_deterministic(seed in any::<u64>(), actions in prop::collection::vec(-2.0f64..2.0, 1..100)) {
        for kind in EnvKind::ALL {
            let mut a = kind.make();
            let mut b = kind.make();
            prop_assert_eq!(a.reset(seed), b.reset(seed));
            for u in &actions {
                let ra = a.step(&[*u]).unwrap();
                let rb = b.step(&[*u]).unwrap();
                prop_assert_eq!(ra, rb);
            }
        }
    }

    #[test]
    fn replay_keeps_newest_in_order(capacity in 1usize..40, pushes in 0usize..120) {
        let mut buf = ReplayBuffer::new(capacity, 1, 1).unwrap();
        for i in 0..pushes {
            buf.push(Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 0.0,
                next_state: vec![0.0],
                done: false,
            }).unwrap();
        }
        prop_assert!(buf.len() <= capacity);
        let tags: Vec<usize> = buf.iter_oldest_first().map(|t| t.state[0] as usize).collect();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(tags, expected);
    }

    #[test]
    fn epsilon_is_a_probability(q_adv in -30.0f64..30.0, q_act in -30.0f64..30.0, c in 0.0f64..1.0, t in 0.5f64..10.0) {
        let e = mix_probability(q_adv, q_act, c, t).unwrap();
        prop_assert!(e > 0.0 && e < 1.0);
        prop_assert_eq!(mix_probability(c * q_act, q_act, c, t).unwrap(), 0.5);
        let higher = mix_probability(q_adv + 0.5, q_act, c, t).unwrap();
        prop_assert!(higher <= e);
        let more_conf = mix_probability(q_adv, q_act.abs() + 0.1, (c + 0.1).min(1.0), t).unwrap();
        let less_conf = mix_probability(q_adv, q_act.abs() + 0.1, c, t).unwrap();
        prop_assert!(more_conf >= less_conf);
    }

    #[test]
    fn confidence_is_monotone(n in 0i64..10_000, lambda in 1e-4f64..1.0) {
        let c0 = confidence(n, lambda).unwrap();
        let c1 = confidence(n + 1, lambda).unwrap();
        prop_assert!((0.0..1.0).contains(&c0) || c0 == 1.0 && n as f64 * lambda > 36.0);
        prop_assert!(c1 >= c0);
    }

    #[test]
    fn advised_targets_never_score_lower(seed in any::<u64>()) {
        let critic_net = DenseNetwork::new(&[4, 8, 1], seed, OutputKind::Identity).unwrap();
        let critic = NetworkCritic { net: &critic_net, state_dim: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<Vec<f64>> = (0..16).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let adviser = |s: &[f64]| vec![2.0 * s[0]];
        let out = advise_policy_targets(&states, targets.clone(), &adviser, &critic).unwrap();
        for ((s, before), after) in states.iter().zip(&targets).zip(&out.targets) {
            prop_assert!(critic.q_value(s, after).unwrap() >= critic.q_value(s, before).unwrap());
        }
    }

    #[test]
    fn analytic_policy_targets_improve(seed in any::<u64>(), beta_frac in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curv: Vec<f64> = (0..2).map(|_| rng.random_range(0.1..3.0)).collect();
        let center: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = make_axis_quadratic(curv, center).unwrap();
        let beta = beta_frac * 2.0 / q.lipschitz();
        let actor = DenseNetwork::new(&[3, 6, 2], seed, OutputKind::unit_bounded(2)).unwrap();
        let states: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let targets = policy_targets(&actor, &q, &states, beta).unwrap();
        for (s, t) in states.iter().zip(&targets) {
            let a = actor.forward(s).unwrap();
            prop_assert!(q.value(t) >= q.value(&a) - 1e-12);
        }
    }

    #[test]
    fn analytic_q_gradients_match(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let curv: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..3.0)).collect();
        let a: Vec<f64> = center.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect();
        for q in [make_axis_quadratic(curv, center.clone()).unwrap(), make_log_bump(center.clone()).unwrap()] {
            let g = q.gradient(&a);
            let h = 1e-5;
            for i in 0..3 {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (q.value(&p) - q.value(&m)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-8, "fd {fd} analytic {}", g[i]);
            }
        }
    }

    #[test]
    fn random_quadratics_improve_monotonically(seed in any::<u64>(), beta_frac in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..5);
        let curv: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..3.0)).collect();
        let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a0: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = make_axis_quadratic(curv, center).unwrap();
        let beta = beta_frac * 2.0 / q.lipschitz();
        let trace = iterate_policy(&q, &[], &a0, beta, 200).unwrap();
        let report = verify_monotone(&trace, &q, beta).unwrap();
        prop_assert!(report.monotone(), "{:?}", report.violations.first());
        prop_assert!(report.within_sum_bound());
    }
}

#[test]
fn analytic_families_are_concave_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let quad = make_axis_quadratic(vec![1.0, 0.3], vec![0.5, -1.0]).unwrap();
    let bump = make_log_bump(vec![0.5, -1.0]).unwrap();
    for _ in 0..10_000 {
        // the bump is concave only within unit distance of its center
        let mut draw = || -> Vec<f64> {
            let r: f64 = rng.random_range(0.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            vec![0.5 + r * phi.cos(), -1.0 + r * phi.sin()]
        };
        let a = draw();
        let b = draw();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        for q in [&quad, &bump] {
            assert!(q.value(&mid) >= 0.5 * (q.value(&a) + q.value(&b)) - 1e-12);
        }
    }
}

#[test]
fn pendulum_energy_drift_is_small() {
    // starting at rest at theta = pi - 1 the speed stays below 4, so the clip never engages
    let mut s = PendulumState {
        theta: std::f64::consts::PI - 1.0,
        theta_dot: 0.0,
    };
    let e0 = s.energy();
    let dt2 = pendulum::DT * pendulum::DT;
    let steps = 1000;
    for _ in 0..steps {
        let (next, _) = pendulum_step(&s, 0.0).unwrap();
        assert!(next.theta_dot.abs() < 4.0);
        // one semi-implicit Euler step moves the energy by at most ~(15^2 + 15 * 16) dt^2 / 2
        assert!((next.energy() - s.energy()).abs() < 250.0 * dt2);
        s = next;
    }
    let drift_per_step = (s.energy() - e0).abs() / steps as f64;
    assert!(drift_per_step < 1e-3, "drift {drift_per_step}");
}
