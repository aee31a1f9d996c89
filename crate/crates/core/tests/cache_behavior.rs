mod common;

use std::sync::Arc;

use toolrl_core::tools::{FixtureSearch, SearchClient, Tier};

#[test]
fn one_backend_call_per_cluster() {
    common::cache_behavior().unwrap();
}

#[test]
fn near_duplicates_hit_the_fuzzy_tier() {
    let backend = Arc::new(FixtureSearch::new());
    let client = SearchClient::in_memory(Box::new(backend.clone()));
    assert_eq!(client.lookup("who painted the mona lisa portrait").unwrap().1, Tier::Backend);
    assert_eq!(client.lookup("Who  painted the Mona Lisa portrait").unwrap().1, Tier::Exact);
    assert_eq!(client.lookup("who painted the mona lisa portraits").unwrap().1, Tier::Fuzzy);
    assert_eq!(client.lookup("who painted the sistine chapel").unwrap().1, Tier::Backend);
    assert_eq!(backend.calls(), 2);
}
