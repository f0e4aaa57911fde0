mod common;

use common::shaped_day;
use hems_core::maddpg::*;
use hems_core::milp::optimize_day;
use hems_core::nn::{grad_check, stack, Activation, Arch, Mlp, Network};
use hems_core::{slot_cost, DayProfile, Error, SignedEssAction, SlotDispatch, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat_day(e_ec: f64, ghi: f64, price: f64) -> DayProfile {
    DayProfile::new(vec![e_ec; 24], vec![ghi; 24], vec![price; 24]).unwrap()
}

fn state(e_ec: f64, ghi: f64, price: f64) -> DrState {
    DrState { e_ec, ghi, level: 5.0, price, t: 1 }
}

fn tiny(episodes: usize) -> MaddpgConfig {
    MaddpgConfig {
        actor_res_hidden: vec![8],
        actor_ess_hidden: vec![8],
        critic_hidden: vec![16, 16],
        episodes,
        batch: 16,
        ..MaddpgConfig::default()
    }
}

#[test]
fn reward_examples() {
    let p = SystemParams::default();
    let ghi = 1.0 / 0.9;
    let tr = env_step(&state(1.0, ghi, 0.1), 0.5, 0.4, &flat_day(1.0, ghi, 0.1), &p, 1.0).unwrap();
    assert!((tr.reward + 0.05).abs() < 1e-12, "{}", tr.reward);
    let ghi = 0.2 / 0.9;
    let tr = env_step(&state(1.0, ghi, 0.1), 0.0, -0.5, &flat_day(1.0, ghi, 0.1), &p, 1.0).unwrap();
    assert!((tr.reward + 0.03).abs() < 1e-12, "{}", tr.reward);
    let tr = env_step(&state(2.0, 0.0, 0.1), 0.0, 0.0, &flat_day(2.0, 0.0, 0.1), &p, 1.0).unwrap();
    assert!((tr.reward + 0.2).abs() < 1e-12, "{}", tr.reward);
    assert_eq!(tr.next.unwrap().t, 2);
}

#[test]
fn level_overshoot_is_projected_and_penalized() {
    let p = SystemParams::default();
    let day = flat_day(1.0, 0.0, 0.1);
    let s = DrState { level: p.level_min, ..state(1.0, 0.0, 0.1) };
    let tr = env_step(&s, 0.0, -1.0, &day, &p, 1.0).unwrap();
    assert_eq!(tr.applied_ess, 0.0);
    assert!((tr.overshoot - 1.0).abs() < 1e-12);
    assert!((tr.reward + 0.1 + 1.0).abs() < 1e-12);
    assert_eq!(tr.next.unwrap().level, p.level_min);
}

#[test]
fn episodes_end_after_the_last_slot() {
    let p = SystemParams::default();
    let day = flat_day(1.0, 0.0, 0.1);
    let last = DrState { t: 24, ..state(1.0, 0.0, 0.1) };
    assert!(env_step(&last, 0.0, 0.0, &day, &p, 1.0).unwrap().next.is_none());
    let beyond = DrState { t: 25, ..last };
    assert!(matches!(env_step(&beyond, 0.0, 0.0, &day, &p, 1.0), Err(Error::Domain(_))));
}

#[test]
fn reward_is_minus_the_flow_cost() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let day = shaped_day(&mut rng);
        let t = rng.gen_range(1..=24);
        let s = DrState::at(&day, t, rng.gen_range(p.level_min..=p.level_max));
        let e_res = hems_core::res_energy(s.ghi, &p).unwrap();
        let (lo, hi) = feasible_ess_range(s.level, &p);
        let a_ess = rng.gen_range(lo..=hi);
        let a_res = rng.gen_range(0.0..=1.0) * e_res.min(s.e_ec);
        let tr = env_step(&s, a_res, a_ess, &day, &p, 1.0).unwrap();
        assert_eq!(tr.overshoot, 0.0);
        let d = SlotDispatch::from_signed(SignedEssAction(a_ess), a_res, s.e_ec, e_res);
        let cost = slot_cost(&d, s.e_ec, s.price, &p).unwrap();
        assert!((tr.reward + cost).abs() <= 1e-9, "reward {} cost {cost}", tr.reward);
    }
}

#[test]
fn actions_stay_in_bounds() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let days: Vec<_> = (0..3).map(|_| shaped_day(&mut rng)).collect();
    let (agents, log) = train_agents(&days, &MaddpgConfig { episodes: 0, ..MaddpgConfig::default() }, &p, 3).unwrap();
    assert!(log.episode_returns.is_empty());
    for i in 0..100_000 {
        let s = DrState {
            e_ec: rng.gen_range(0.0..5.0),
            ghi: rng.gen_range(0.0..1.2),
            level: rng.gen_range(p.level_min..=p.level_max),
            price: rng.gen_range(0.0..1.0),
            t: rng.gen_range(1..=24),
        };
        let (a_res, a_ess) = agents.act(&s).unwrap();
        let e_res = hems_core::res_energy(s.ghi, &p).unwrap();
        assert!((0.0..=e_res).contains(&a_res));
        assert!((-p.max_discharge()..=p.max_charge()).contains(&a_ess));
        if i < 1000 {
            assert_eq!((a_res, a_ess), agents.act(&s).unwrap());
        }
    }
}

#[test]
fn squashing_covers_the_action_interval() {
    let p = SystemParams::default();
    assert_eq!(to_actions(0.0, -1.0, 0.8, &p), (0.0, -p.max_discharge()));
    assert_eq!(to_actions(1.0, 1.0, 0.8, &p), (0.8, p.max_charge()));
    assert_eq!(to_actions(0.5, 0.0, 0.8, &p).1, 0.0);
}

#[test]
fn same_seed_same_training() {
    let p = SystemParams::default();
    let day = shaped_day(&mut ChaCha8Rng::seed_from_u64(3));
    let (a, la) = train_agents(&[day.clone()], &tiny(6), &p, 9).unwrap();
    let (b, lb) = train_agents(&[day.clone()], &tiny(6), &p, 9).unwrap();
    assert_eq!(la.episode_returns, lb.episode_returns);
    assert_eq!(a.ess_actor.params, b.ess_actor.params);
    let (_, lc) = train_agents(&[day], &tiny(6), &p, 10).unwrap();
    assert_ne!(la.episode_returns, lc.episode_returns);
}

#[test]
fn free_energy_does_not_diverge() {
    let p = SystemParams::default();
    let day = flat_day(1.0, 0.5, 0.0);
    let (_, log) = train_agents(&[day], &tiny(40), &p, 4).unwrap();
    // Only the level penalty can cost anything.
    assert_eq!(log.episode_returns.len(), 40);
    assert!(log.episode_returns.iter().all(|r| r.is_finite() && *r <= 0.0));
}

#[test]
fn critic_gradients_on_the_joint_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..5u64 {
        let critic = Mlp::new(STATE_WIDTH + 2, stack(&[6, 5], Activation::Tanh, 1), &mut rng);
        let x: Vec<f64> = (0..(STATE_WIDTH + 2) * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let net = Network::from_arch(Arch::Dense(critic.clone()), seed);
        let err = grad_check(&net, &x, &[0.3, -0.2, 0.1], 1e-6);
        assert!(err < 1e-4, "parameter gradient error {err}");

        // Input gradient, which drives the actor update.
        let xs = &x[..STATE_WIDTH + 2];
        let trace = critic.forward_trace(xs, 1);
        let mut scratch = vec![0.0; critic.params.len()];
        let dx = critic.backward(&trace, &[1.0], &mut scratch);
        for i in 0..xs.len() {
            let mut up = xs.to_vec();
            let mut down = xs.to_vec();
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let fd = (critic.forward(&up)[0] - critic.forward(&down)[0]) / 2e-6;
            assert!((fd - dx[i]).abs() <= 1e-6 * fd.abs().max(1.0), "input {i}: {fd} vs {}", dx[i]);
        }
    }
}

#[test]
fn replay_buffer_is_fifo() {
    let mut b = ReplayBuffer::new(3);
    for i in 0..5 {
        let mut row = [0.0; 14];
        row[0] = i as f64;
        b.push(row);
    }
    assert_eq!(b.len(), 3);
    assert_eq!(b.oldest().unwrap()[0], 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(b.sample(50, &mut rng).iter().all(|r| r[0] >= 2.0));
}

#[test]
fn noise_decays_then_holds() {
    let cfg = MaddpgConfig { episodes: 100, ..MaddpgConfig::default() };
    assert_eq!(cfg.noise_at(0), 0.3);
    assert!((cfg.noise_at(40) - (0.3 - 0.29 * 0.5)).abs() < 1e-12);
    assert!((cfg.noise_at(80) - 0.01).abs() < 1e-12);
    assert!((cfg.noise_at(99) - 0.01).abs() < 1e-12);
}

#[test]
fn agents_save_and_load() {
    let p = SystemParams::default();
    let day = shaped_day(&mut ChaCha8Rng::seed_from_u64(6));
    let (agents, log) = train_agents(&[day.clone()], &tiny(2), &p, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    agents.save(dir.path()).unwrap();
    let back = MaddpgAgents::load(dir.path()).unwrap();
    let s = DrState::at(&day, 12, 3.0);
    assert_eq!(agents.act(&s).unwrap(), back.act(&s).unwrap());
    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    // The rollout on the training day is a valid, costed day.
    let cost = rollout(&agents, &day, &p).unwrap();
    assert!(cost >= optimize_day(&day, &p).unwrap().objective - 1e-6 || cost.is_finite());
}

#[test]
fn no_days_is_a_data_error() {
    let p = SystemParams::default();
    assert!(matches!(train_agents(&[], &tiny(1), &p, 0), Err(Error::Data(_))));
}
