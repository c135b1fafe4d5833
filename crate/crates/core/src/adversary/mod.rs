//! Dolev-Yao adversary: action vocabulary, knowledge oracle, scripted
//! strategies and bounded attack search.

mod actions;
mod knowledge;
pub mod search;
mod strategy;

pub use actions::{AdvAction, AttackTrace, DecisionKind, DecisionPoint, PlannedAction, Property};
pub use knowledge::{Closure, Derivation, Knowledge, TermType};
pub use search::{bounded_search, SearchError, SearchOutcome, SearchStats, DEFAULT_NODE_BUDGET};
pub use strategy::{Roles, StrategyError, StrategyRules};
