use std::collections::{BTreeMap, HashMap};

use ia_core::actions::{ActionError, FeedbackConfig, FeedbackEffect, MockDevice};
use ia_core::*;
use proptest::prelude::*;
use serde_json::{json, Value};

struct Log(HashMap<u64, InteractionSummary>);

impl InteractionLookup for Log {
    fn find_interaction(&self, id: u64) -> Option<InteractionSummary> {
        self.0.get(&id).cloned()
    }
}

fn summary(id: u64, tier: Tier, entry: Option<u64>) -> InteractionSummary {
    InteractionSummary {
        interaction_id: id,
        query: "turn on the lamp".into(),
        tier,
        reply: "The lamp is on.".into(),
        cache_entry_id: entry,
        actions: vec![Action::set("lamp", "power", json!("on"), ActionOrigin::CloudTool)],
    }
}

fn fb(id: u64, rating: i64, t: u64) -> FeedbackRecord {
    FeedbackRecord {
        interaction_id: id,
        rating: Rating::try_from(rating).unwrap(),
        timestamp_ms: t,
    }
}

#[test]
fn executes_valid_and_reports_invalid_actions() {
    let ex = ActionExecutor::with_mock_devices();
    let ok = ex.execute(&Action::set("lamp", "brightness", json!(40), ActionOrigin::EdgeModel));
    assert!(ok.ok, "{}", ok.detail);
    assert_eq!(ex.state_dump()["lamp"]["brightness"], json!(40));

    let out_of_range = ex.execute(&Action::set("lamp", "brightness", json!(140), ActionOrigin::EdgeModel));
    assert!(!out_of_range.ok);
    let unknown = ex.execute(&Action::set("garage", "power", json!("on"), ActionOrigin::EdgeModel));
    assert!(!unknown.ok);
    assert_eq!(unknown.detail, "unknown device");
    let bad_choice = ex.execute(&Action::set("switch", "power", json!("dim"), ActionOrigin::EdgeModel));
    assert!(!bad_choice.ok);
    assert_eq!(ex.state_dump()["lamp"]["brightness"], json!(40));
    assert_eq!(ex.state_dump()["switch"]["power"], json!("off"));

    assert!(matches!(
        ex.register_device("lamp", Box::new(MockDevice::lamp())),
        Err(ActionError::DuplicateDevice(_))
    ));
    assert!(matches!(Rating::try_from(2), Err(ActionError::InvalidRating(2))));
}

fn action_strategy() -> impl Strategy<Value = Action> {
    let device = prop::sample::select(vec!["lamp", "thermostat", "switch", "garage"]);
    let cap = prop::sample::select(vec!["power", "brightness", "set_target", "volume"]);
    let value = prop_oneof![
        prop::sample::select(vec!["on", "off", "dim"]).prop_map(Value::from),
        (-20i64..140).prop_map(Value::from),
        (0.0f64..40.0).prop_map(Value::from),
    ];
    (device, cap, value).prop_map(|(d, c, v)| Action::set(d, c, v, ActionOrigin::CloudTool))
}

proptest! {
    #[test]
    fn state_is_a_fold_of_successful_actions(actions in prop::collection::vec(action_strategy(), 0..40)) {
        let ex = ActionExecutor::with_mock_devices();
        let mut expected: BTreeMap<String, BTreeMap<String, Value>> = serde_json::from_value(ex.state_dump()).unwrap();
        for a in &actions {
            let r = ex.execute(a);
            if r.ok {
                let raw = &a.parameters["value"];
                // the executor canonicalizes numbers to the capability's type
                let v = match (a.device_id.as_str(), raw) {
                    ("thermostat", n) => Value::from(n.as_f64().unwrap()),
                    ("lamp", n) if n.is_number() => Value::from(n.as_f64().unwrap() as i64),
                    (_, v) => v.clone(),
                };
                expected.get_mut(&a.device_id).unwrap().insert(a.capability.clone(), v);
            }
        }
        let got: BTreeMap<String, BTreeMap<String, Value>> = serde_json::from_value(ex.state_dump()).unwrap();
        prop_assert_eq!(got, expected);

        // replaying the same actions on a fresh registry lands in the same state
        let replay = ActionExecutor::with_mock_devices();
        for a in &actions {
            replay.execute(a);
        }
        prop_assert_eq!(replay.state_dump(), ex.state_dump());
    }
}

#[test]
fn feedback_rules() {
    let mut cache = SemanticCache::new(CacheConfig::default()).unwrap();
    let cfg = FeedbackConfig::default();
    let mut log = Log(HashMap::new());
    log.0.insert(1, summary(1, Tier::CloudLLM, None));

    // positive feedback on a cloud answer admits it
    let eff = apply_feedback(&fb(1, 1, 1_000), &log, &mut cache, &cfg).unwrap();
    let FeedbackEffect::Inserted(id) = eff else { panic!("{eff:?}") };
    let entry = cache.get(id).unwrap().clone();
    assert_eq!(entry.source_tier, SourceTier::Cloud);
    assert_eq!(entry.action.as_ref().unwrap().origin, ActionOrigin::Cache);
    let hit = cache.lookup("Turn on the lamp!", 2_000).unwrap();
    assert_eq!(hit.entry.id, id);
    let hits_before = cache.get(id).unwrap().hit_count;

    // positive feedback on a cache answer reinforces
    log.0.insert(2, summary(2, Tier::Cache, Some(id)));
    assert_eq!(apply_feedback(&fb(2, 1, 3_000), &log, &mut cache, &cfg).unwrap(), FeedbackEffect::Reinforced(id));
    assert_eq!(cache.get(id).unwrap().hit_count, hits_before + cfg.reinforce_hits);

    // negative feedback invalidates, and repeating it changes nothing further
    log.0.insert(3, summary(3, Tier::Cache, Some(id)));
    assert_eq!(apply_feedback(&fb(3, -1, 4_000), &log, &mut cache, &cfg).unwrap(), FeedbackEffect::Invalidated(id));
    assert!(cache.lookup("turn on the lamp", 5_000).is_none());
    let snapshot = cache.to_json();
    apply_feedback(&fb(3, -1, 6_000), &log, &mut cache, &cfg).unwrap();
    assert_eq!(cache.to_json(), snapshot);

    // neutral and edge-negative ratings are only logged
    log.0.insert(4, summary(4, Tier::EdgeModel, None));
    assert_eq!(apply_feedback(&fb(4, 0, 7_000), &log, &mut cache, &cfg).unwrap(), FeedbackEffect::LoggedOnly);
    assert_eq!(apply_feedback(&fb(4, -1, 7_000), &log, &mut cache, &cfg).unwrap(), FeedbackEffect::LoggedOnly);
    assert_eq!(cache.to_json(), snapshot);

    assert!(matches!(
        apply_feedback(&fb(99, 1, 8_000), &log, &mut cache, &cfg),
        Err(ActionError::UnknownInteraction(99))
    ));
}
