mod common;

use toolrl_core::rollout::{collect_batch, BatchOptions};
use toolrl_core::tools::Gateway;
use toolrl_core::{LengthBudget, RolloutLimits};

#[test]
fn discards_track_the_forced_rate() {
    common::dynamic_sampling().unwrap();
}

#[test]
fn stops_once_the_batch_is_full() {
    let (items, degenerate) = common::degenerate_fixture(200, 5);
    let policy = common::degenerate_policy(degenerate);
    let budget = LengthBudget::new(16, 2).unwrap();
    let out = collect_batch(
        items,
        &policy,
        &Gateway::new(),
        &RolloutLimits::new(2, 16, 4, 10),
        budget,
        BatchOptions::seeded(1),
    )
    .unwrap();
    assert_eq!(out.groups.len(), 10);
    assert!(!out.underfilled);
    assert_eq!(out.drawn, out.groups.len() + out.discarded);
    assert_eq!(out.sampled.len(), out.drawn);
}

#[test]
fn draw_cap_reports_underfill() {
    let (items, degenerate) = common::degenerate_fixture(40, 5);
    let policy = common::degenerate_policy(degenerate);
    let budget = LengthBudget::new(16, 2).unwrap();
    let options = BatchOptions { max_draws: Some(8), ..BatchOptions::seeded(1) };
    let out =
        collect_batch(items, &policy, &Gateway::new(), &RolloutLimits::new(2, 16, 4, 20), budget, options).unwrap();
    assert_eq!(out.drawn, 8);
    assert!(out.underfilled);
}
