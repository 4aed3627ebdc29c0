//! Recognition bridge, semantic cache, context hub, controller and device
//! actions for the edge assistant gateway.

pub mod actions;
pub mod asr;
pub mod cache;
pub mod clock;
pub mod context;
pub mod controller;
pub mod hash;

pub use actions::{
    apply_feedback, Action, ActionExecutor, ActionOrigin, ActionResult, FeedbackRecord, InteractionLookup,
    InteractionSummary, Rating,
};
pub use asr::{AsrBridge, AsrEngineSpec, AsrError, AsrKind, MockRegistry, Transcript, WordSpan};
pub use cache::{normalize_query, CacheConfig, CacheEntry, CacheError, CacheHit, CacheStats, SemanticCache, SourceTier};
pub use clock::{Clock, ManualClock, SystemClock};
pub use context::{format_context_for_prompt, ContextSnapshot, SensorHub, SensorReading, SensorSpec, UserProfile};
pub use controller::{route, Connectivity, ControllerError, RouteReason, RoutingConfig, RoutingDecision, Tier};
