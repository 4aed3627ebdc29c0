mod common;

use common::*;
use ia_core::actions::FeedbackEffect;
use ia_core::controller::Tier;
use ia_gateway::api::FeedbackRequest;
use ia_gateway::InteractRequest;

fn ask(h: &Harness, q: &str) -> ia_gateway::InteractResponse {
    h.gateway.handle_interact(&InteractRequest::text("s", "u", q)).unwrap()
}

fn rate(h: &Harness, id: u64, rating: i64) -> Result<FeedbackEffect, ia_gateway::GatewayError> {
    h.gateway.handle_feedback(&FeedbackRequest {
        interaction_id: id,
        rating,
    })
}

#[test]
fn feedback_status_rules() {
    let h = harness();
    h.transport.as_ref().unwrap().push(Ok(text_reply("Paris.")));
    let r = ask(&h, "what is the capital of France?");
    assert_eq!(r.source_tier, Tier::EdgeModel);
    assert_eq!(h.gateway.handle_stats().cache.size, 0);

    assert!(matches!(rate(&h, r.interaction_id, 1).unwrap(), FeedbackEffect::Inserted(_)));
    assert_eq!(h.gateway.handle_stats().cache.size, 1);

    assert_eq!(rate(&h, 999, 1).unwrap_err().status(), 404);
    assert_eq!(rate(&h, r.interaction_id, 5).unwrap_err().status(), 400);
    assert_eq!(h.gateway.handle_stats().cache.size, 1);

    // negative feedback on the cached answer removes it from service
    let hit = ask(&h, "What is the capital of France");
    assert_eq!(hit.source_tier, Tier::Cache);
    assert!(matches!(rate(&h, hit.interaction_id, -1).unwrap(), FeedbackEffect::Invalidated(_)));
    assert_ne!(ask(&h, "what is the capital of France?").source_tier, Tier::Cache);
}

#[test]
fn stats_count_hits_and_never_decrease() {
    let h = harness();
    let fresh = h.gateway.handle_stats();
    assert_eq!(fresh.cache.hits, 0);
    assert_eq!(fresh.cache.misses, 0);
    assert_eq!(fresh.requests, Default::default());
    assert_eq!(fresh.uptime_s, 0);

    let r = ask(&h, "what is the capital of France?");
    rate(&h, r.interaction_id, 1).unwrap();
    let mut prev = h.gateway.handle_stats();
    for _ in 0..3 {
        assert_eq!(ask(&h, "what is the capital of France?").source_tier, Tier::Cache);
        let now = h.gateway.handle_stats();
        assert!(now.cache.hits >= prev.cache.hits);
        assert!(now.cache.misses >= prev.cache.misses);
        assert!(now.requests.cache >= prev.requests.cache);
        prev = now;
    }
    assert_eq!(prev.cache.hits, 3);
    assert_eq!(prev.requests.cache, 3);
    assert_eq!(prev.requests.edge_model, 1);
    h.clock.advance_ms(5_000);
    assert_eq!(h.gateway.handle_stats().uptime_s, 5);
}

#[test]
fn feedback_survives_a_restart() {
    let h = harness();
    let r = ask(&h, "what is the capital of France?");
    rate(&h, r.interaction_id, 1).unwrap();
    let cfg = h.gateway.config().clone();
    drop(h.gateway);

    let reopened = ia_gateway::Gateway::with_parts(
        cfg,
        ia_gateway::GatewayParts {
            clock: Some(h.clock.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    let again = reopened
        .handle_interact(&InteractRequest::text("s", "u", "what is the capital of France?"))
        .unwrap();
    assert_eq!(again.source_tier, Tier::Cache);
    assert_eq!(again.interaction_id, r.interaction_id + 1);
    // the earlier interaction is still rateable after the restart
    assert!(reopened
        .handle_feedback(&FeedbackRequest {
            interaction_id: r.interaction_id,
            rating: 0
        })
        .is_ok());
}
