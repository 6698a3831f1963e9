mod common;

use clawgui_core::credit::{discounted_returns, gigpo_advantages, grpo_advantages, CreditConfig};
use common::group;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

/// Straight from the definitions, with no shared code: returns by direct
/// power sums, buckets by linear scan, two-pass population moments.
fn oracle(trajs: &[Vec<(u8, f64)>], gamma: f64, omega: f64) -> Vec<Vec<f64>> {
    let floor = 1e-8;
    let norm = |xs: &[f64], x: f64| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd < floor {
            0.0
        } else {
            (x - m) / sd
        }
    };
    let ret: Vec<f64> = trajs.iter().map(|t| t.iter().map(|s| s.1).sum()).collect();
    let g = |i: usize, t: usize| -> f64 {
        (t..trajs[i].len()).map(|k| gamma.powi((k - t) as i32) * trajs[i][k].1).sum()
    };
    let mut out = Vec::new();
    for (i, tr) in trajs.iter().enumerate() {
        let ep = norm(&ret, ret[i]);
        let mut row = Vec::new();
        for t in 0..tr.len() {
            let mut peers = Vec::new();
            for (j, other) in trajs.iter().enumerate() {
                for s in 0..other.len() {
                    if other[s].0 == tr[t].0 {
                        peers.push(g(j, s));
                    }
                }
            }
            let st = if peers.len() < 2 { 0.0 } else { norm(&peers, g(i, t)) };
            row.push(ep + omega * st);
        }
        out.push(row);
    }
    out
}

fn arb_group() -> impl Strategy<Value = Vec<Vec<(u8, f64)>>> {
    let step = (0u8..5, prop_oneof![Just(0.0), Just(0.01), Just(1.0), 0.0..1.5f64]);
    prop::collection::vec(prop::collection::vec(step, 1..10), 2..9)
}

fn combined(trajs: &[Vec<(u8, f64)>], cfg: &CreditConfig) -> Vec<Vec<f64>> {
    gigpo_advantages(&group(trajs), cfg).unwrap().trajectories.into_iter().map(|t| t.combined_adv).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gigpo_matches_brute_force(trajs in arb_group(), gamma in 0.5..=1.0f64, omega in 0.0..2.0f64) {
        let cfg = CreditConfig { gamma, omega, ..CreditConfig::default() };
        let got = combined(&trajs, &cfg);
        let want = oracle(&trajs, gamma, omega);
        for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
            prop_assert!((g - w).abs() <= TOL, "got {g} want {w}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn omega_zero_is_grpo_bit_for_bit(trajs in arb_group(), gamma in 0.5..=1.0f64) {
        let g = group(&trajs);
        let cfg = CreditConfig { gamma, omega: 0.0, ..CreditConfig::default() };
        prop_assert_eq!(gigpo_advantages(&g, &cfg).unwrap(), grpo_advantages(&g, &cfg).unwrap());
    }

    #[test]
    fn episode_advantages_have_zero_mean(trajs in arb_group()) {
        let a = grpo_advantages(&group(&trajs), &CreditConfig::default()).unwrap();
        let mean = a.trajectories.iter().map(|t| t.episode_adv).sum::<f64>() / trajs.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn step_advantages_sum_to_zero_per_bucket(trajs in arb_group()) {
        let a = gigpo_advantages(&group(&trajs), &CreditConfig::default()).unwrap();
        for anchor in 0u8..5 {
            let s: f64 = trajs
                .iter()
                .zip(&a.trajectories)
                .flat_map(|(t, adv)| t.iter().zip(&adv.step_adv).filter(|(st, _)| st.0 == anchor).map(|(_, v)| *v))
                .sum();
            prop_assert!(s.abs() < 1e-9, "anchor {anchor}: {s}");
        }
    }

    #[test]
    fn invariant_to_positive_reward_scale(trajs in arb_group(), c in 0.1..10.0f64) {
        let cfg = CreditConfig::default();
        let scaled: Vec<Vec<(u8, f64)>> =
            trajs.iter().map(|t| t.iter().map(|&(a, r)| (a, r * c)).collect()).collect();
        let a = combined(&trajs, &cfg);
        let b = combined(&scaled, &cfg);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn permuting_trajectories_permutes_advantages(trajs in arb_group(), rot in 0usize..8) {
        let cfg = CreditConfig::default();
        let k = rot % trajs.len();
        let mut rotated = trajs.clone();
        rotated.rotate_left(k);
        let mut a = combined(&trajs, &cfg);
        a.rotate_left(k);
        let b = combined(&rotated, &cfg);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn two_returns_normalize_to_plus_minus_one() {
    let a = grpo_advantages(&group(&[vec![(0, 1.0)], vec![(0, 0.0)]]), &CreditConfig::default()).unwrap();
    assert!((a.trajectories[0].episode_adv - 1.0).abs() < 1e-12);
    assert!((a.trajectories[1].episode_adv + 1.0).abs() < 1e-12);
}

#[test]
fn one_success_in_four() {
    let g = group(&[vec![(0, 1.0)], vec![(0, 0.0)], vec![(0, 0.0)], vec![(0, 0.0)]]);
    let a = grpo_advantages(&g, &CreditConfig::default()).unwrap();
    // 0.75 / sqrt(0.1875) and -0.25 / sqrt(0.1875)
    assert!((a.trajectories[0].episode_adv - 1.7320508).abs() < 1e-6);
    for t in &a.trajectories[1..] {
        assert!((t.episode_adv + 0.5773503).abs() < 1e-6);
    }
}

#[test]
fn identical_returns_give_zero() {
    let g = group(&[vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]]);
    let a = gigpo_advantages(&g, &CreditConfig::default()).unwrap();
    assert!(a.trajectories.iter().flat_map(|t| &t.combined_adv).all(|&x| x == 0.0));
}

#[test]
fn discounted_return_example() {
    assert_eq!(discounted_returns(&[0.0, 0.0, 1.0], 0.5), vec![0.25, 0.5, 1.0]);
}

#[test]
fn singleton_buckets_get_no_step_credit() {
    let g = group(&[vec![(0, 0.0), (1, 1.0)], vec![(0, 0.0), (2, 0.0)]]);
    let a = gigpo_advantages(&g, &CreditConfig::default()).unwrap();
    assert_eq!(a.trajectories[0].step_adv[1], 0.0);
    assert_eq!(a.trajectories[1].step_adv[1], 0.0);
    assert!(a.trajectories[0].step_adv[0] > 0.0);
}

#[test]
fn shorter_success_wins_the_shared_reset_state() {
    // Both succeed, so the episode level is silent; the reset state is
    // shared and the 4-step path reaches the reward sooner.
    let short: Vec<(u8, f64)> = [(0, 0.0), (1, 0.0), (2, 0.0), (3, 1.0)].to_vec();
    let long: Vec<(u8, f64)> = [(0, 0.0), (4, 0.0), (5, 0.0), (6, 0.0), (7, 0.0), (8, 0.0), (9, 0.0), (3, 1.0)].to_vec();
    let g = group(&[short, long]);
    let cfg = CreditConfig { gamma: 0.95, ..CreditConfig::default() };
    let grpo = grpo_advantages(&g, &cfg).unwrap();
    assert!(grpo.trajectories.iter().flat_map(|t| &t.combined_adv).all(|&x| x == 0.0));
    let gi = gigpo_advantages(&g, &cfg).unwrap();
    assert!((gi.trajectories[0].combined_adv[0] - 1.0).abs() < 1e-12);
    assert!((gi.trajectories[1].combined_adv[0] + 1.0).abs() < 1e-12);
}

#[test]
fn groups_of_one_are_rejected() {
    assert!(gigpo_advantages(&group(&[vec![(0, 1.0)]]), &CreditConfig::default()).is_err());
    let bad = CreditConfig { gamma: 0.0, ..CreditConfig::default() };
    assert!(gigpo_advantages(&group(&[vec![(0, 1.0)], vec![(0, 0.0)]]), &bad).is_err());
}
