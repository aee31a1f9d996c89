mod common;

use std::time::Instant;

#[test]
fn committed_vectors_pass() {
    let started = Instant::now();
    common::reward_conformance().unwrap();
    assert!(started.elapsed().as_secs_f64() < 1.0);
}
