use clawgui_core::reward::{compose, RewardError, RewardSignal, DEFAULT_LAMBDA_STEP};
use proptest::prelude::*;

proptest! {
    #[test]
    fn composed_rewards_sum_to_the_aggregate(
        outcome in 0u8..=1,
        scores in prop::collection::vec(0.0..=1.0f64, 1..60),
        lambda in 0.0..2.0f64,
    ) {
        let sig = RewardSignal::new(outcome, scores.clone(), lambda).unwrap();
        let r = compose(&sig, scores.len()).unwrap();
        let want = f64::from(outcome) + lambda * scores.iter().sum::<f64>();
        prop_assert!((r.iter().sum::<f64>() - want).abs() <= 1e-12 * (1.0 + want.abs()));
        prop_assert!((sig.aggregate() - want).abs() <= 1e-12 * (1.0 + want.abs()));
        // Only the last step carries the outcome.
        for (t, (&rt, &s)) in r.iter().zip(&scores).enumerate() {
            let extra = if t + 1 == scores.len() { f64::from(outcome) } else { 0.0 };
            prop_assert_eq!(rt, lambda * s + extra);
        }
    }
}

#[test]
fn single_step_success() {
    let sig = RewardSignal::new(1, vec![0.5], 1.0).unwrap();
    assert_eq!(compose(&sig, 1).unwrap(), vec![1.5]);
}

#[test]
fn outcome_lands_on_the_last_step() {
    let sig = RewardSignal::new(1, vec![1.0, 0.0, 1.0], 0.1).unwrap();
    let r = compose(&sig, 3).unwrap();
    let want = [0.1, 0.0, 1.1];
    for (a, b) in r.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn default_lambda_is_small() {
    assert_eq!(DEFAULT_LAMBDA_STEP, 0.01);
}

#[test]
fn bad_inputs_are_rejected() {
    assert_eq!(RewardSignal::new(2, vec![0.0], 0.1), Err(RewardError::BadOutcome(2)));
    assert_eq!(RewardSignal::new(0, vec![1.5], 0.1), Err(RewardError::BadScore(1.5)));
    assert!(matches!(RewardSignal::new(0, vec![0.0], -1.0), Err(RewardError::BadLambda(_))));
    assert!(matches!(RewardSignal::new(0, vec![0.0], f64::NAN), Err(RewardError::BadLambda(_))));
    let sig = RewardSignal::new(1, vec![0.0, 0.0], 0.1).unwrap();
    assert_eq!(compose(&sig, 3), Err(RewardError::LengthMismatch { scores: 2, steps: 3 }));
    let empty = RewardSignal::new(1, vec![], 0.1).unwrap();
    assert!(compose(&empty, 0).is_err());
}
