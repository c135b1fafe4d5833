//! Breadth-first search over adversary action sequences.
//!
//! Level `k` holds every simulator state reachable with exactly `k`
//! non-default actions, paused at a decision point. Each state is expanded
//! by taking every non-default action there and then letting the run
//! continue with default delivery, recording every decision point passed
//! on the way as a state of level `k + 1`. States are deduplicated by
//! fingerprint across all levels.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::crypto::ProviderRef;
use crate::sim::engine::{Controller, Engine};
use crate::sim::scenario::Scenario;
use crate::sim::verdict::{evaluate, Verdict};

use super::actions::{AdvAction, AttackTrace, DecisionPoint};

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;
pub const MAX_ACTIONS_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Simulator states visited: decision points plus completed runs.
    pub nodes: u64,
    pub runs: u64,
    pub duplicates: u64,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Attack { trace: AttackTrace, verdict: Box<Verdict>, stats: SearchStats },
    NoAttack { stats: SearchStats },
}

impl SearchOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Attack { stats, .. } | SearchOutcome::NoAttack { stats } => stats,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("max_actions {0} exceeds the limit of {MAX_ACTIONS_LIMIT}")]
    TooManyActions(usize),
    #[error("node budget of {budget} exhausted at level {} after {} nodes", .stats.levels, .stats.nodes)]
    Budget { budget: u64, stats: SearchStats },
    #[error("{0}")]
    Setup(String),
}

struct Node {
    engine: Engine,
    point: DecisionPoint,
}

#[derive(Default)]
struct Expansion {
    nodes: Vec<(Node, [u8; 32])>,
    attack: Option<Verdict>,
    runs: u64,
}

/// Continues `engine` with default delivery until the run ends.
fn walk(mut engine: Engine, out: &mut Expansion, branch: bool) {
    loop {
        match engine.advance() {
            Some(point) => {
                if branch && (engine.honest_live() || engine.directives_pending()) {
                    let fp = engine.fingerprint();
                    out.nodes.push((Node { engine: engine.clone(), point }, fp));
                }
                engine.decide(AdvAction::Deliver);
            }
            None => {
                out.runs += 1;
                if out.attack.is_none() {
                    let v = evaluate(&engine);
                    if v.is_attack() {
                        out.attack = Some(v);
                    }
                }
                return;
            }
        }
    }
}

fn expand(node: &Node, branch: bool) -> Expansion {
    let mut out = Expansion::default();
    for action in node.engine.alphabet(&node.point) {
        let mut e = node.engine.clone();
        e.decide(action);
        walk(e, &mut out, branch);
        if out.attack.is_some() {
            break;
        }
    }
    out
}

pub fn bounded_search(
    scenario: &Scenario,
    provider: ProviderRef,
    max_actions: usize,
    budget: u64,
) -> Result<SearchOutcome, SearchError> {
    if max_actions > MAX_ACTIONS_LIMIT {
        return Err(SearchError::TooManyActions(max_actions));
    }
    let engine = Engine::new(scenario.clone(), provider, Controller::Manual).map_err(SearchError::Setup)?;
    let mut stats = SearchStats::default();
    let mut seen: HashSet<[u8; 32]> = HashSet::new();

    let mut root = Expansion::default();
    walk(engine, &mut root, max_actions > 0);
    let mut level = 0;
    let mut exp = vec![root];
    loop {
        let mut frontier = Vec::new();
        for e in exp {
            stats.runs += e.runs;
            stats.nodes += e.runs;
            if let Some(verdict) = e.attack {
                stats.levels = level;
                let trace = verdict.attack.clone().expect("attack verdicts carry a trace");
                return Ok(SearchOutcome::Attack { trace, verdict: Box::new(verdict), stats });
            }
            for (node, fp) in e.nodes {
                if seen.insert(fp) {
                    stats.nodes += 1;
                    frontier.push(node);
                } else {
                    stats.duplicates += 1;
                }
            }
        }
        stats.levels = level;
        if stats.nodes > budget {
            return Err(SearchError::Budget { budget, stats });
        }
        if level == max_actions || frontier.is_empty() {
            return Ok(SearchOutcome::NoAttack { stats });
        }
        level += 1;
        let branch = level < max_actions;
        exp = frontier.par_iter().map(|n| expand(n, branch)).collect();
    }
}
