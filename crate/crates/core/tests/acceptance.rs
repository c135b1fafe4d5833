//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use v2vsim::adversary::{bounded_search, Derivation, Property, SearchOutcome, DEFAULT_NODE_BUDGET};
use v2vsim::adversary::AdvAction;
use v2vsim::crypto::{default_provider, Algorithm, Provider, StdProvider};
use v2vsim::protocol::{AbortReason, HandshakeMessage};
use v2vsim::puf::{fractional_hamming, Challenge, PufDevice, DEFAULT_RESPONSE_LATENCY};
use v2vsim::sim::demos::{self, honest_counterpart};
use v2vsim::sim::scenario::AdversarySpec;
use v2vsim::sim::{finish, load_scenario, run, AbortCause, Category, Controller, Engine, Outcome, RunReport, Scenario, Trace};
use v2vsim::world::{Pose, SensorConfig, VehicleId, WorldState};

type Check = Result<String, String>;

fn demo_scenario(name: &str) -> Scenario {
    demos::find(name).expect("built-in demo").scenario()
}

fn run_sc(sc: &Scenario) -> RunReport {
    run(sc, default_provider()).expect("scenario runs")
}

fn vid(s: &str) -> VehicleId {
    VehicleId(s.into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pose_of(sc: &Scenario, id: &str) -> Pose {
    sc.vehicle(&vid(id)).expect("vehicle").pose
}

fn established_sessions<'a>(t: &'a Trace, actor: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
    t.find(Category::Proto, "established")
        .filter(move |r| r.actor == actor)
        .map(|r| (r.get("session").unwrap_or(""), r.get("peer").unwrap_or("")))
}

fn aborted_with(outcome: &Outcome, allowed: &[AbortReason]) -> bool {
    matches!(outcome, Outcome::HandshakeAborted(AbortCause::Reason(r)) if allowed.contains(r))
}

fn criterion_1() -> Check {
    let base = demo_scenario("ps-baseline");
    let mut slowest = Duration::ZERO;
    let mut first: Option<String> = None;
    for seed in 1..=20u64 {
        let mut sc = base.clone();
        sc.seed = seed;
        let started = Instant::now();
        let report = run_sc(&sc);
        slowest = slowest.max(started.elapsed());
        let v = &report.verdict;
        ensure(v.outcome == Outcome::AttackFound(Property::Secrecy), || format!("seed {seed}: {}", v.outcome))?;
        let t = &report.trace;
        let with_v1 = established_sessions(t, "v3").any(|(_, p)| p == "v1");
        let with_v2 = established_sessions(t, "v3").any(|(_, p)| p == "v2");
        ensure(with_v1 && with_v2, || format!("seed {seed}: v3 lacks a session with v1 or v2"))?;
        let v3_sessions: Vec<&str> = established_sessions(t, "v3").map(|(s, _)| s).collect();
        ensure(v3_sessions.len() == 2 && v3_sessions[0] != v3_sessions[1], || format!("seed {seed}: v3 sessions {v3_sessions:?}"))?;
        let decrypted = t.find(Category::Adv, "decrypt").any(|r| r.actor == "v3");
        let attack = v.attack.as_ref().ok_or("no attack trace")?;
        ensure(decrypted && attack.witness.contains("brake warning"), || format!("seed {seed}: witness {}", attack.witness))?;
        ensure(t.render().lines().filter(|l| l.contains("\tVERDICT\t")).count() == 1, || "verdict count".into())?;
        let summary = format!("{}|{}", v.outcome, attack);
        match &first {
            None => first = Some(summary),
            Some(f) => ensure(*f == summary, || format!("seed {seed} differs"))?,
        }
    }
    ensure(slowest < Duration::from_secs(1), || format!("slowest run {slowest:?}"))?;
    Ok(format!("SECRECY on 20 seeds, v3 holds keys with v1 and v2, slowest run {slowest:.2?}"))
}

fn criterion_2() -> Check {
    let base = demo_scenario("basic-defense");
    for seed in 1..=20u64 {
        let mut sc = base.clone();
        sc.seed = seed;
        let report = run_sc(&sc);
        let v = &report.verdict;
        ensure(aborted_with(&v.outcome, &[AbortReason::CertAttrMismatch, AbortReason::BadSignature]), || {
            format!("seed {seed}: {}", v.outcome)
        })?;
        let at_v1 = report.trace.find(Category::Proto, "abort").find(|r| r.actor == "v1");
        ensure(
            at_v1.is_some_and(|r| matches!(r.get("reason"), Some("CERT_ATTR_MISMATCH" | "BAD_SIGNATURE"))),
            || format!("seed {seed}: no matching abort at v1"),
        )?;
        let keys: Vec<_> = v.oracle.iter().filter(|o| o.term == "key").collect();
        ensure(!keys.is_empty(), || format!("seed {seed}: no honest session key to query"))?;
        ensure(keys.iter().all(|o| o.result == Derivation::NotDerivableWithinBound), || format!("seed {seed}: {keys:?}"))?;
    }
    Ok("aborted at v1 on 20 seeds, honest key not derivable within bound 6".into())
}

fn criterion_3() -> Check {
    let twin = run_sc(&demo_scenario("twin-attack")).verdict.outcome;
    ensure(twin == Outcome::AttackFound(Property::Authentication), || format!("twin-attack: {twin}"))?;
    let laser = run_sc(&demo_scenario("laser-defense")).verdict.outcome;
    ensure(aborted_with(&laser, &[AbortReason::DynamicCouplingFailed, AbortReason::BeaconTimeout]), || {
        format!("laser-defense: {laser}")
    })?;
    Ok(format!("twin-attack {twin}, laser-defense {laser}"))
}

fn criterion_4() -> Check {
    let relay = run_sc(&demo_scenario("relay-attack")).verdict.outcome;
    ensure(relay == Outcome::AttackFound(Property::Authentication), || format!("relay-attack: {relay}"))?;
    let sc = demo_scenario("puf-defense");
    let report = run_sc(&sc);
    let outcome = &report.verdict.outcome;
    ensure(aborted_with(outcome, &[AbortReason::TimingViolation]), || format!("puf-defense: {outcome}"))?;

    let t = &report.trace;
    let deadline = t
        .find(Category::Proto, "deadline")
        .find(|r| r.actor == "v1" && r.get("kind") == Some("puf"))
        .ok_or("no PUF deadline at v1")?;
    let tau = deadline.get_f64("deadline").ok_or("deadline value")?;
    let predicted = deadline.get_f64("predicted").ok_or("predicted value")?;
    let lidar = t
        .records
        .iter()
        .filter(|r| r.category == Category::Sense && r.actor == "v1" && r.get("event") == Some("lidar"))
        .take_while(|r| r.time <= deadline.time)
        .last()
        .ok_or("no LIDAR fix before the challenge")?;
    let d_est: f64 = lidar.get("result").and_then(|s| s.split('@').next()).and_then(|s| s.parse().ok()).ok_or("lidar range")?;
    let arrival = t
        .records
        .iter()
        .find(|r| {
            r.category == Category::Radio
                && r.actor == "v1"
                && r.get("event") == Some("recv")
                && r.get("msg") == Some("PufResponse")
                && r.time >= deadline.time
        })
        .map(|r| r.time)
        .ok_or("no PUF response reached v1")?;
    ensure(arrival > tau, || format!("arrival {arrival:.9} not after tau {tau:.9}"))?;

    let (v1, relay_car, remote) = (pose_of(&sc, "v1"), pose_of(&sc, "v2"), pose_of(&sc, "v3"));
    ensure(relay_car.distance(&remote) >= 600.0, || "remote PUF closer than 600 m".into())?;
    let path = v1.distance(&relay_car) + relay_car.distance(&remote) + remote.distance(&v1);
    let c = &sc.constants;
    let expected = (path - 2.0 * d_est) / c.c_sim + c.relay_processing;
    let margin = arrival - predicted;
    ensure((margin - expected).abs() <= 1e-6, || format!("margin {margin:.9} vs expected {expected:.9}"))?;
    Ok(format!(
        "relay-attack {relay}; arrival {arrival:.9} > tau {tau:.9}; margin {:.3} us vs {:.3} us",
        margin * 1e6,
        expected * 1e6
    ))
}

fn criterion_5() -> Check {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let mut parts = Vec::new();
    for (file, want_attack) in [("search-v0.scn", true), ("search-v1.scn", false), ("search-v2.scn", false), ("search-v3.scn", false)] {
        let text = std::fs::read_to_string(format!("{dir}/{file}")).map_err(|e| format!("{file}: {e}"))?;
        let sc = load_scenario(&text).map_err(|e| format!("{file}: {e}"))?;
        let started = Instant::now();
        let result = bounded_search(&sc, default_provider(), 6, DEFAULT_NODE_BUDGET).map_err(|e| format!("{file}: {e}"))?;
        let elapsed = started.elapsed();
        let nodes = result.stats().nodes;
        let found = matches!(result, SearchOutcome::Attack { .. });
        ensure(found == want_attack, || format!("{file}: attack found = {found}"))?;
        ensure(elapsed < Duration::from_secs(60), || format!("{file}: {elapsed:?}"))?;
        ensure(nodes <= 1_000_000, || format!("{file}: {nodes} nodes"))?;
        parts.push(format!("{}={} ({nodes} nodes, {elapsed:.1?})", &file[7..9], if found { "attack" } else { "none" }));
    }
    Ok(parts.join(", "))
}

/// Honest V3 run with an active adversary that only watches, so every
/// radio frame passes a decision point.
fn honest_v3_with_observer() -> Scenario {
    let mut sc = honest_counterpart(&demo_scenario("puf-defense"));
    sc.adversary = Some(AdversarySpec::default());
    sc
}

fn criterion_6() -> Check {
    let sc = honest_v3_with_observer();
    let provider = default_provider();

    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut e = Engine::new(sc.clone(), provider.clone(), Controller::Manual)?;
    while let Some(point) = e.advance() {
        let payload = e.pending_payload().ok_or("decision without payload")?;
        let handshake = HandshakeMessage::decode(payload).map(|m| m.name() != "AppData").unwrap_or(false);
        if handshake {
            frames.push((point.index, payload.len() * 8));
        }
        e.decide(AdvAction::Deliver);
    }
    let baseline = finish(e);
    ensure(baseline.verdict.outcome == Outcome::SecureRun, || format!("honest baseline: {}", baseline.verdict.outcome))?;
    let total: usize = frames.iter().map(|f| f.1).sum();
    ensure(total > 2048, || format!("only {total} handshake bits"))?;

    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let positions: Vec<usize> = (0..1024).chain((0..1024).map(|_| rng.gen_range(1024..total))).collect();
    let mut finished_mismatch = 0;
    for &bit in &positions {
        let mut offset = bit;
        let (decision, local) = frames
            .iter()
            .find_map(|&(d, n)| if offset < n { Some((d, offset)) } else { offset -= n; None })
            .expect("position within handshake bits");
        let plan = BTreeMap::from([(decision, AdvAction::FlipBit(local))]);
        let mut e = Engine::new(sc.clone(), provider.clone(), Controller::Plan(plan))?;
        e.run_to_end();
        let honest: Vec<_> = e.sessions.iter().filter(|s| !s.adversarial).collect();
        for s in &honest {
            if s.established_at.is_none() {
                continue;
            }
            let diverged = honest
                .iter()
                .filter(|p| p.host == *s.state.peer() && p.state.peer() == &s.host)
                .any(|p| p.state.finished_digest() != s.state.finished_digest());
            ensure(!diverged, || format!("bit {bit}: session {} established with a divergent transcript", s.index))?;
        }
        let report = finish(e);
        match &report.verdict.outcome {
            Outcome::HandshakeAborted(AbortCause::Reason(r)) => {
                if *r == AbortReason::FinishedMismatch {
                    finished_mismatch += 1;
                }
            }
            other => return Err(format!("bit {bit} (decision {decision}, offset {local}): {other}")),
        }
    }
    Ok(format!("{} flips over {total} handshake bits all aborted ({finished_mismatch} at Finished)", positions.len()))
}

fn criterion_7() -> Check {
    let p = StdProvider;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for i in 0..100 {
        let a = p.gen_keypair(Algorithm::X25519, &rng.gen());
        let b = p.gen_keypair(Algorithm::X25519, &rng.gen());
        let ab = p.dh_shared(&a.secret, &b.public).map_err(|e| e.to_string())?;
        let ba = p.dh_shared(&b.secret, &a.public).map_err(|e| e.to_string())?;
        ensure(ab == ba, || format!("DH pair {i} disagrees"))?;
    }

    let mut hd_sum = 0.0;
    for _ in 0..1000 {
        let a = PufDevice::manufacture(rng.gen(), DEFAULT_RESPONSE_LATENCY);
        let b = PufDevice::manufacture(rng.gen(), DEFAULT_RESPONSE_LATENCY);
        let ch = Challenge { challenge_id: rng.gen(), challenge_bits: rng.gen() };
        hd_sum += fractional_hamming(&a.respond(&p, &ch), &b.respond(&p, &ch));
    }
    let hd = hd_sum / 1000.0;
    ensure((hd - 0.5).abs() <= 0.05, || format!("mean Hamming distance {hd:.4}"))?;

    let cfg = SensorConfig::default();
    let mut world = WorldState::new();
    world.poses.insert(vid("a"), Pose::at(0.0, 0.0));
    world.poses.insert(vid("b"), Pose::at(25.0, 10.0));
    let truth = Pose::at(0.0, 0.0).distance(&Pose::at(25.0, 10.0));
    let n = 10_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| world.lidar_measure(&cfg, &vid("a"), &Pose::at(25.0, 10.0), &mut rng).expect("in view").range - truth)
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    ensure((sd / cfg.sigma_range - 1.0).abs() <= 0.05, || format!("range sigma {sd:.5} vs {}", cfg.sigma_range))?;

    for d in &demos::DEMOS {
        let sc = d.scenario();
        let (a, b) = (run_sc(&sc).trace.render(), run_sc(&sc).trace.render());
        ensure(a == b, || format!("{} trace not reproducible", d.name))?;
    }
    Ok(format!("100 DH pairs agree, PUF distance {hd:.4}, range sigma {sd:.5}, traces reproducible"))
}

fn criterion_8() -> Check {
    let mut checked = 0;
    for d in &demos::DEMOS {
        let sc = honest_counterpart(&d.scenario());
        let report = run_sc(&sc);
        let t = &report.trace;
        ensure(report.verdict.outcome == Outcome::SecureRun, || format!("{}: {}", d.name, report.verdict.outcome))?;
        for dir in sc.script.iter().filter_map(|s| match &s.kind {
            v2vsim::sim::scenario::DirectiveKind::Initiate { peer } => Some((s.actor.as_str(), peer.as_str())),
            _ => None,
        }) {
            let fwd = established_sessions(t, dir.0).any(|(_, p)| p == dir.1);
            let back = established_sessions(t, dir.1).any(|(_, p)| p == dir.0);
            ensure(fwd && back, || format!("{}: {} <-> {} not established on both sides", d.name, dir.0, dir.1))?;
        }
        for rec in t.find(Category::Proto, "deadline") {
            let (session, kind) = (rec.get("session"), rec.get("kind"));
            let met = t
                .find(Category::Proto, "deadline_met")
                .find(|m| m.get("session") == session && m.get("kind") == kind)
                .and_then(|m| m.get_f64("met"))
                .ok_or_else(|| format!("{}: session {session:?} {kind:?} deadline not met", d.name))?;
            let start = rec.get_f64("start").ok_or("start")?;
            let deadline = rec.get_f64("deadline").ok_or("deadline")?;
            let margin = match rec.get_f64("predicted") {
                Some(p) => (deadline - met) / (met - p).abs().max(1e-12),
                None => (deadline - start) / (met - start).max(1e-12),
            };
            ensure(margin >= 5.0, || format!("{}: session {session:?} {kind:?} margin {margin:.2}", d.name))?;
            checked += 1;
        }
    }
    Ok(format!("6 honest scenarios established both ways, {checked} deadlines met with margin >= 5"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("baseline man-in-the-middle", criterion_1),
        ("basic-scheme defense", criterion_2),
        ("twin attack and laser defense", criterion_3),
        ("relay attack and PUF timing", criterion_4),
        ("bounded search", criterion_5),
        ("handshake bit flips", criterion_6),
        ("primitive suites", criterion_7),
        ("completeness margins", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        match result {
            Ok(detail) => println!("criterion {} PASS {name}: {detail} [{elapsed:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why} [{elapsed:.1?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
