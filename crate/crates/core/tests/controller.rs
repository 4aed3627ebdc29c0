use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ia_core::context::ContextSnapshot;
use ia_core::controller::cloud::initial_request;
use ia_core::controller::plan::load_templates;
use ia_core::controller::tools::FnTool;
use ia_core::controller::wire::{ChatRequest, ChatResponse};
use ia_core::controller::*;
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

fn fixture(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wire").join(name);
    std::fs::read_to_string(p).unwrap().trim_end().to_string()
}

fn round_trip<T: Serialize + DeserializeOwned>(name: &str) -> T {
    let text = fixture(name);
    let value: T = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&value).unwrap(), text, "{name}");
    value
}

#[test]
fn wire_fixtures_round_trip_byte_exactly() {
    round_trip::<ChatRequest>("plain_request.json");
    round_trip::<ChatResponse>("plain_response.json");
    round_trip::<ChatRequest>("tool_call_request.json");
    round_trip::<ChatResponse>("tool_call_response.json");
    round_trip::<ChatRequest>("tool_loop_request.json");
    round_trip::<ChatResponse>("tool_loop_response.json");
}

fn empty_snapshot() -> ContextSnapshot {
    ContextSnapshot {
        session_id: "s".into(),
        wall_time_ms: 0,
        sensors: BTreeMap::new(),
    }
}

fn weather_registry() -> ToolRegistry {
    let mut r = ToolRegistry::new();
    r.register(
        ToolSchema {
            name: "get_weather".into(),
            description: "Current weather for a city.".into(),
            parameters: json!({
                "type": "object",
                "properties": {"city": {"type": "string"}},
                "required": ["city"],
                "additionalProperties": false
            }),
            trigger_keywords: vec!["weather".into()],
        },
        Arc::new(FnTool(|args: &serde_json::Map<String, serde_json::Value>| {
            Ok(format!("{}: 4C, light rain", args["city"].as_str().unwrap()))
        })),
    );
    r
}

fn prompt_config() -> PromptConfig {
    PromptConfig {
        system_text: "You are a helpful home assistant.".into(),
        ..Default::default()
    }
}

#[test]
fn client_emits_recorded_requests() {
    let plain = build_prompt(
        "What is the capital of France?",
        &empty_snapshot(),
        None,
        &[],
        None,
        &[],
        &prompt_config(),
    );
    assert_eq!(serde_json::to_string(&initial_request(&plain, "gpt-4o-mini")).unwrap(), fixture("plain_request.json"));

    let reg = weather_registry();
    let bundle = build_prompt(
        "What's the weather in Oslo?",
        &empty_snapshot(),
        None,
        &[],
        None,
        &reg.schemas(),
        &prompt_config(),
    );
    let transport = Arc::new(ScriptedTransport::new(vec![
        Ok(serde_json::from_str(&fixture("tool_call_response.json")).unwrap()),
        Ok(serde_json::from_str(&fixture("tool_loop_response.json")).unwrap()),
    ]));
    let reply = call_cloud(&bundle, &CloudClient::new(transport.clone(), "gpt-4o-mini"), &reg).unwrap();
    assert_eq!(reply.text, "It is 4C with light rain in Oslo.");
    assert_eq!(reply.tool_calls.len(), 1);
    assert_eq!(reply.usage.total_tokens, 76 + 101);
    let sent = transport.requests();
    assert_eq!(serde_json::to_string(&sent[0]).unwrap(), fixture("tool_call_request.json"));
    assert_eq!(serde_json::to_string(&sent[1]).unwrap(), fixture("tool_loop_request.json"));
}

#[test]
fn shipped_templates_load_and_select() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../templates");
    let lib = load_templates(&dir).unwrap();
    assert!(lib.len() >= 3);
    assert_eq!(select_plan_template("Good morning!", &lib).unwrap().name, "good_morning");
    assert_eq!(select_plan_template("good night then", &lib).unwrap().name, "good_night");
    assert_eq!(select_plan_template("what's the temperature", &lib).unwrap().name, "climate_check");
    assert!(select_plan_template("tell me a joke", &lib).is_none());
}

fn keyword_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["lamp", "good", "morning", "night", "weather", "rain", "music", "door"])
        .prop_map(String::from)
}

proptest! {
    #[test]
    fn offline_never_reaches_the_cloud(
        words in prop::collection::vec("[a-z]{1,7}", 0..40),
        low in any::<bool>(),
        sim in prop::option::of(0.0f64..=1.0),
        triggers in prop::collection::vec("[a-z]{1,7}", 0..5),
        threshold in 0usize..40,
    ) {
        let text = words.join(" ");
        let cfg = RoutingConfig { complexity_threshold: threshold, ..Default::default() };
        let d = route(&RouteInput {
            text: &text,
            low_confidence: low,
            cache_similarity: sim,
            connectivity: Connectivity::Offline,
            tool_triggers: &triggers,
        }, &cfg);
        prop_assert_ne!(d.tier, Tier::CloudLLM);
    }

    #[test]
    fn qualifying_cache_hits_always_route_to_cache(
        words in prop::collection::vec("[a-z]{1,7}", 0..40),
        sim in 0.85f64..=1.0,
        online in any::<bool>(),
        triggers in prop::collection::vec("[a-z]{1,7}", 0..5),
    ) {
        let text = words.join(" ");
        let d = route(&RouteInput {
            text: &text,
            low_confidence: false,
            cache_similarity: Some(sim),
            connectivity: if online { Connectivity::Online } else { Connectivity::Offline },
            tool_triggers: &triggers,
        }, &RoutingConfig::default());
        prop_assert_eq!(d, RoutingDecision { tier: Tier::Cache, reason: RouteReason::CacheHit });
    }

    #[test]
    fn prompts_fit_the_budget(
        turns in prop::collection::vec(("[ -~]{0,200}", any::<bool>()), 0..30),
        budget in 60usize..400,
        query in "[ -~]{0,80}",
    ) {
        let history: Vec<Turn> = turns
            .into_iter()
            .map(|(content, user)| Turn { role: if user { Role::User } else { Role::Assistant }, content })
            .collect();
        let cfg = PromptConfig { system_text: "sys".into(), token_budget: budget, max_history_turns: 30 };
        let b = build_prompt(&query, &empty_snapshot(), None, &history, None, &[], &cfg);
        prop_assert!(b.token_estimate() <= budget);
        // whatever history survives is the newest suffix
        prop_assert_eq!(&history[history.len() - b.history.len()..], b.history.as_slice());
    }

    #[test]
    fn template_choice_matches_brute_force(
        lib in prop::collection::vec(("[a-d]{1,3}", prop::collection::vec(keyword_strategy(), 1..4)), 1..8),
        query_words in prop::collection::vec(keyword_strategy(), 0..6),
    ) {
        let library: Vec<PlanTemplate> = lib
            .into_iter()
            .map(|(name, keys)| PlanTemplate { name, trigger_keywords: keys, steps: vec![], response_template: "ok".into() })
            .collect();
        let query = query_words.join(" ");
        let mut best: Option<(usize, &str)> = None;
        for t in &library {
            let mut keys = t.trigger_keywords.clone();
            keys.sort();
            keys.dedup();
            let score = keys.iter().filter(|k| query_words.contains(k)).count();
            if score == 0 {
                continue;
            }
            best = match best {
                Some((s, n)) if s > score || (s == score && n <= t.name.as_str()) => Some((s, n)),
                _ => Some((score, t.name.as_str())),
            };
        }
        let got = select_plan_template(&query, &library).map(|t| t.name.as_str());
        prop_assert_eq!(got, best.map(|b| b.1));
    }
}
