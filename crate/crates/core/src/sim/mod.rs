//! Discrete-event engine, scenario files, traces and verdicts.

pub mod demos;
pub mod engine;
pub mod scenario;
pub mod trace;
pub mod verdict;

use crate::adversary::{Roles, StrategyError, StrategyRules};
use crate::crypto::ProviderRef;

pub use engine::{Controller, Engine};
pub use scenario::{load_scenario, Scenario, ScenarioError, StrategyKind};
pub use trace::{Category, Trace, TraceRecord};
pub use verdict::{evaluate, AbortCause, Binding, Outcome, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub verdict: Verdict,
    pub trace: Trace,
    pub events: u64,
}

/// The controller a scenario's adversary section asks for. Search
/// scenarios run with default delivery.
pub fn scripted_controller(sc: &Scenario) -> Result<Controller, SimError> {
    let Some(adv) = &sc.adversary else { return Ok(Controller::Passive) };
    Ok(match adv.strategy {
        StrategyKind::None | StrategyKind::Search => Controller::Passive,
        k => Controller::Rules(StrategyRules::new(k, Roles::resolve(sc, k)?)),
    })
}

pub fn run(sc: &Scenario, provider: ProviderRef) -> Result<RunReport, SimError> {
    let controller = scripted_controller(sc)?;
    run_with(sc, provider, controller)
}

pub fn run_with(sc: &Scenario, provider: ProviderRef, controller: Controller) -> Result<RunReport, SimError> {
    let mut engine = Engine::new(sc.clone(), provider, controller).map_err(SimError::Setup)?;
    engine.run_to_end();
    Ok(finish(engine))
}

/// Evaluates a finished engine and closes its trace with the verdict.
pub fn finish(mut engine: Engine) -> RunReport {
    let verdict = evaluate(&engine);
    let now = engine.now();
    for o in &verdict.oracle {
        engine.trace.push(now, Category::Adv, "adversary", &[
            ("event", "oracle".into()),
            ("session", o.session.to_string()),
            ("term", o.term.into()),
            ("result", o.result.as_str().into()),
        ]);
    }
    for b in &verdict.bindings {
        let id = |v: &Option<crate::world::VehicleId>| v.as_ref().map_or("-".to_string(), |v| v.to_string());
        engine.trace.push(now, Category::Proto, engine.sessions[b.session].host.as_str(), &[
            ("event", "binding".into()),
            ("session", b.session.to_string()),
            ("peer", b.peer.to_string()),
            ("cert", id(&b.cert_owner)),
            ("pose", id(&b.pose_occupant)),
            ("radio", id(&b.radio_endpoint)),
        ]);
    }
    let mut detail = vec![("outcome", verdict.outcome.kind().to_string())];
    match &verdict.outcome {
        Outcome::AttackFound(p) => detail.push(("property", p.as_str().into())),
        Outcome::HandshakeAborted(c) => detail.push(("reason", c.as_str().into())),
        Outcome::Error(e) => detail.push(("error", e.clone())),
        Outcome::SecureRun => {}
    }
    let aborts: Vec<String> = engine
        .sessions
        .iter()
        .filter(|s| !s.adversarial)
        .filter_map(|s| s.state.abort_reason().map(|r| format!("{}:{}", s.host, r.as_str())))
        .collect();
    if !aborts.is_empty() {
        detail.push(("aborts", aborts.join(",")));
    }
    detail.push(("events", engine.events.to_string()));
    engine.trace.push(now, Category::Verdict, "sim", &detail);
    RunReport { verdict, trace: engine.trace, events: engine.events }
}
