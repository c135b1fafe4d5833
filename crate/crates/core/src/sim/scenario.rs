//! Scenario files.
//!
//! ```text
//! name = ps-baseline
//! seed = 7
//! variant = V0
//!
//! [constants]
//! radio_range = 300
//!
//! [vehicles]
//! v1.pose = 0,0,0,10          # x,y,heading,speed
//! v1.plate = AB-123
//! v1.brand = toyota
//! v1.color = white
//! v1.cert = valid             # valid | forged | expired | none
//! v1.puf = 8                  # enrolled CRPs
//! v2.clone_of = v3            # wear v3's plate, brand and color
//! obstruction = 10,-5,10,5
//!
//! [adversary]
//! power = active              # passive | active
//! owns = v3
//! strategy = mitm_relay       # none | mitm_relay | twin | optical_relay | optical_relay_self | search
//! max_actions = 6
//! initiator = v1
//! target = v2
//! host = v3
//! relay = v2
//!
//! [script]
//! at 0.0 v1 initiate v2
//! at 0.5 v1 send brake warning
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::identity::{Brand, Color};
use crate::protocol::Variant;
use crate::world::{Pose, Segment, VehicleId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: unknown vehicle id `{id}`")]
    UnknownId { line: usize, id: String },
    #[error("line {line}: duplicate vehicle id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: value {value} out of range for `{key}`")]
    OutOfRange { line: usize, key: String, value: String },
    #[error("scenario is missing {0}")]
    Missing(String),
}

impl ScenarioError {
    /// Stable numeric code, shared with the C interface.
    pub fn code(&self) -> i32 {
        match self {
            ScenarioError::Syntax { .. } => 10,
            ScenarioError::UnknownId { .. } => 11,
            ScenarioError::DuplicateId { .. } => 12,
            ScenarioError::OutOfRange { .. } => 13,
            ScenarioError::Missing(_) => 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    pub c_sim: f64,
    pub radio_range: f64,
    pub radio_latency: f64,
    pub beam_radius: f64,
    pub camera_max_range: f64,
    pub p_confuse: f64,
    pub capture_radius: f64,
    pub sigma_range: f64,
    pub sigma_bearing: f64,
    pub theta_tol: f64,
    pub beacon_window: f64,
    pub puf_slack: f64,
    pub puf_response_latency: f64,
    /// Store-and-forward delay of an adversary vehicle re-emitting a pulse.
    pub relay_processing: f64,
    pub adversary_delay: f64,
    pub cert_valid_from: f64,
    pub cert_valid_to: f64,
    pub oracle_depth: u32,
    pub end_time: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_sim: crate::channel::DEFAULT_C_SIM,
            radio_range: 300.0,
            radio_latency: 1e-3,
            beam_radius: 1.0,
            camera_max_range: 80.0,
            p_confuse: 0.0,
            capture_radius: 2.0,
            sigma_range: 0.1,
            sigma_bearing: 0.005,
            theta_tol: 0.01,
            beacon_window: 50e-3,
            puf_slack: 50e-6,
            puf_response_latency: crate::puf::DEFAULT_RESPONSE_LATENCY,
            relay_processing: 100e-6,
            adversary_delay: 100e-3,
            cert_valid_from: 0.0,
            cert_valid_to: 3600.0,
            oracle_depth: 6,
            end_time: 30.0,
        }
    }
}

impl Constants {
    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
        let out_of_range = || ScenarioError::OutOfRange { line, key: key.into(), value: value.into() };
        if key == "oracle_depth" {
            let d: u32 = value.parse().map_err(|_| syntax(line, 1, format!("`{value}` is not an integer")))?;
            if !(1..=16).contains(&d) {
                return Err(out_of_range());
            }
            self.oracle_depth = d;
            return Ok(());
        }
        let v = parse_f64(value, line)?;
        let (slot, ok): (&mut f64, bool) = match key {
            "c_sim" => (&mut self.c_sim, v > 0.0),
            "radio_range" => (&mut self.radio_range, v > 0.0),
            "radio_latency" => (&mut self.radio_latency, v >= 0.0),
            "beam_radius" => (&mut self.beam_radius, v > 0.0),
            "camera_max_range" => (&mut self.camera_max_range, v > 0.0),
            "p_confuse" => (&mut self.p_confuse, (0.0..=1.0).contains(&v)),
            "capture_radius" => (&mut self.capture_radius, v > 0.0),
            "sigma_range" => (&mut self.sigma_range, v >= 0.0),
            "sigma_bearing" => (&mut self.sigma_bearing, v >= 0.0),
            "theta_tol" => (&mut self.theta_tol, v > 0.0 && v < std::f64::consts::PI),
            "beacon_window" => (&mut self.beacon_window, v > 0.0),
            "puf_slack" => (&mut self.puf_slack, v >= 0.0),
            "puf_response_latency" => (&mut self.puf_response_latency, v >= 0.0),
            "relay_processing" => (&mut self.relay_processing, v >= 0.0),
            "adversary_delay" => (&mut self.adversary_delay, v > 0.0),
            "cert_valid_from" => (&mut self.cert_valid_from, true),
            "cert_valid_to" => (&mut self.cert_valid_to, true),
            "end_time" => (&mut self.end_time, v > 0.0),
            _ => return Err(syntax(line, 1, format!("unknown constant `{key}`"))),
        };
        if !ok {
            return Err(out_of_range());
        }
        *slot = v;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertKind {
    Valid,
    Forged,
    Expired,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub pose: Pose,
    pub vin: String,
    pub plate: String,
    pub brand: Brand,
    pub color: Color,
    pub cert: CertKind,
    pub puf_crps: u32,
    pub clone_of: Option<VehicleId>,
}

impl VehicleSpec {
    fn new(id: VehicleId, index: usize) -> Self {
        Self {
            plate: format!("{}-{:03}", id.as_str().to_ascii_uppercase(), index + 1),
            vin: default_vin(index),
            id,
            pose: Pose::at(0.0, 0.0),
            brand: Brand::ALL[index % Brand::ALL.len()],
            color: Color::ALL[index % Color::ALL.len()],
            cert: CertKind::Valid,
            puf_crps: 8,
            clone_of: None,
        }
    }
}

fn default_vin(index: usize) -> String {
    format!("1V2VSVM00{:08}", index + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Power {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    None,
    MitmRelay,
    Twin,
    OpticalRelay,
    OpticalRelaySelf,
    Search,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::MitmRelay => "mitm_relay",
            StrategyKind::Twin => "twin",
            StrategyKind::OpticalRelay => "optical_relay",
            StrategyKind::OpticalRelaySelf => "optical_relay_self",
            StrategyKind::Search => "search",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        [
            StrategyKind::None,
            StrategyKind::MitmRelay,
            StrategyKind::Twin,
            StrategyKind::OpticalRelay,
            StrategyKind::OpticalRelaySelf,
            StrategyKind::Search,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub power: Power,
    pub owns: Vec<VehicleId>,
    pub strategy: StrategyKind,
    pub max_actions: usize,
    pub initiator: Option<VehicleId>,
    pub target: Option<VehicleId>,
    pub host: Option<VehicleId>,
    pub relay: Option<VehicleId>,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            power: Power::Active,
            owns: Vec::new(),
            strategy: StrategyKind::None,
            max_actions: 6,
            initiator: None,
            target: None,
            host: None,
            relay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectiveKind {
    Initiate { peer: VehicleId },
    Send { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub at: f64,
    pub actor: VehicleId,
    pub kind: DirectiveKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub variant: Variant,
    pub constants: Constants,
    pub vehicles: Vec<VehicleSpec>,
    pub obstructions: Vec<Segment>,
    pub adversary: Option<AdversarySpec>,
    pub script: Vec<Directive>,
}

impl Scenario {
    pub fn vehicle(&self, id: &VehicleId) -> Option<&VehicleSpec> {
        self.vehicles.iter().find(|v| &v.id == id)
    }

    pub fn owned(&self, id: &VehicleId) -> bool {
        self.adversary.as_ref().is_some_and(|a| a.owns.contains(id))
    }

    /// Applies `V2VSIM_SEED` if set.
    pub fn with_env_seed(mut self) -> Result<Self, ScenarioError> {
        if let Ok(s) = std::env::var("V2VSIM_SEED") {
            self.seed = s.trim().parse().map_err(|_| ScenarioError::OutOfRange {
                line: 0,
                key: "V2VSIM_SEED".into(),
                value: s.clone(),
            })?;
        }
        Ok(self)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (seed {}, {}, {} vehicles)", self.name, self.seed, self.variant, self.vehicles.len())
    }
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Syntax { line, col, msg: msg.into() }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, ScenarioError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(line, 1, format!("`{s}` is not a finite number"))),
    }
}

fn parse_list(s: &str, n: usize, line: usize) -> Result<Vec<f64>, ScenarioError> {
    let v: Vec<f64> = s.split(',').map(|p| parse_f64(p, line)).collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(syntax(line, 1, format!("expected {n} comma-separated numbers")));
    }
    Ok(v)
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Constants,
    Vehicles,
    Adversary,
    Script,
}

struct Pending {
    line: usize,
    id: String,
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario {
        name: "unnamed".into(),
        seed: 0,
        variant: Variant::Baseline,
        constants: Constants::default(),
        vehicles: Vec::new(),
        obstructions: Vec::new(),
        adversary: None,
        script: Vec::new(),
    };
    let mut section = Section::Preamble;
    let mut refs: Vec<Pending> = Vec::new();
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let mut saw_variant = false;
    let mut content = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        content = true;
        let col = body.len() - body.trim_start().len() + 1;
        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') {
                return Err(syntax(line, col, "unterminated section header"));
            }
            section = match &trimmed[1..trimmed.len() - 1] {
                "constants" => Section::Constants,
                "vehicles" => Section::Vehicles,
                "adversary" => {
                    sc.adversary.get_or_insert_with(AdversarySpec::default);
                    Section::Adversary
                }
                "script" => Section::Script,
                other => return Err(syntax(line, col + 1, format!("unknown section `{other}`"))),
            };
            continue;
        }
        if section == Section::Script {
            sc.script.push(parse_directive(trimmed, line, col, &mut refs)?);
            continue;
        }
        let Some(eq) = trimmed.find('=') else {
            return Err(syntax(line, col, "expected `key = value`"));
        };
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        if key.is_empty() {
            return Err(syntax(line, col, "empty key"));
        }
        if value.is_empty() {
            return Err(syntax(line, col + eq + 1, "empty value"));
        }
        match section {
            Section::Preamble => match key {
                "name" => sc.name = value.to_string(),
                "seed" => sc.seed = value.parse().map_err(|_| syntax(line, col + eq + 1, "seed must be a u64"))?,
                "variant" => {
                    sc.variant = Variant::parse(value).ok_or_else(|| syntax(line, col + eq + 1, "unknown variant"))?;
                    saw_variant = true;
                }
                _ => return Err(syntax(line, col, format!("unknown key `{key}`"))),
            },
            Section::Constants => sc.constants.set(key, value, line)?,
            Section::Vehicles => {
                if key == "obstruction" {
                    let v = parse_list(value, 4, line)?;
                    sc.obstructions.push(Segment { a: (v[0], v[1]), b: (v[2], v[3]) });
                    continue;
                }
                let Some((id, field)) = key.split_once('.') else {
                    return Err(syntax(line, col, "expected `<vehicle>.<field>`"));
                };
                if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(syntax(line, col, format!("invalid vehicle id `{id}`")));
                }
                if field == "pose" {
                    if !declared.insert(id.to_string()) {
                        return Err(ScenarioError::DuplicateId { line, id: id.into() });
                    }
                    let v = parse_list(value, 4, line)?;
                    if v[3] < 0.0 {
                        return Err(ScenarioError::OutOfRange { line, key: key.into(), value: value.into() });
                    }
                    let mut spec = VehicleSpec::new(VehicleId(id.into()), sc.vehicles.len());
                    spec.pose = Pose::new(v[0], v[1], v[2], v[3]);
                    sc.vehicles.push(spec);
                    continue;
                }
                let Some(spec) = sc.vehicles.iter_mut().find(|v| v.id.as_str() == id) else {
                    return Err(ScenarioError::UnknownId { line, id: id.into() });
                };
                let bad = || ScenarioError::OutOfRange { line, key: key.into(), value: value.into() };
                match field {
                    "vin" => {
                        if !crate::identity::is_valid_vin(value) {
                            return Err(bad());
                        }
                        spec.vin = value.to_string()
                    }
                    "plate" => spec.plate = value.to_string(),
                    "brand" => spec.brand = value.parse().map_err(|_| bad())?,
                    "color" => spec.color = value.parse().map_err(|_| bad())?,
                    "cert" => {
                        spec.cert = match value {
                            "valid" => CertKind::Valid,
                            "forged" => CertKind::Forged,
                            "expired" => CertKind::Expired,
                            "none" => CertKind::None,
                            _ => return Err(bad()),
                        }
                    }
                    "puf" => {
                        spec.puf_crps = value.parse().map_err(|_| bad())?;
                        if !(1..=4096).contains(&spec.puf_crps) {
                            return Err(bad());
                        }
                    }
                    "clone_of" => {
                        spec.clone_of = Some(VehicleId(value.into()));
                        refs.push(Pending { line, id: value.into() });
                    }
                    _ => return Err(syntax(line, col + id.len() + 1, format!("unknown vehicle field `{field}`"))),
                }
            }
            Section::Adversary => {
                let adv = sc.adversary.as_mut().expect("section header creates the spec");
                let mut id_ref = |v: &str| {
                    refs.push(Pending { line, id: v.into() });
                    Some(VehicleId(v.into()))
                };
                match key {
                    "power" => {
                        adv.power = match value {
                            "passive" => Power::Passive,
                            "active" => Power::Active,
                            _ => return Err(ScenarioError::OutOfRange { line, key: key.into(), value: value.into() }),
                        }
                    }
                    "owns" => {
                        for v in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                            adv.owns.push(id_ref(v).unwrap());
                        }
                    }
                    "strategy" => {
                        adv.strategy = value
                            .parse()
                            .map_err(|_| ScenarioError::OutOfRange { line, key: key.into(), value: value.into() })?
                    }
                    "max_actions" => {
                        let n: usize = value.parse().map_err(|_| syntax(line, col + eq + 1, "expected an integer"))?;
                        if n > 8 {
                            return Err(ScenarioError::OutOfRange { line, key: key.into(), value: value.into() });
                        }
                        adv.max_actions = n;
                    }
                    "initiator" => adv.initiator = id_ref(value),
                    "target" => adv.target = id_ref(value),
                    "host" => adv.host = id_ref(value),
                    "relay" => adv.relay = id_ref(value),
                    _ => return Err(syntax(line, col, format!("unknown adversary key `{key}`"))),
                }
            }
            Section::Script => unreachable!(),
        }
    }

    if !content {
        return Err(syntax(1, 1, "empty scenario"));
    }
    if !saw_variant {
        return Err(ScenarioError::Missing("`variant`".into()));
    }
    if sc.vehicles.is_empty() {
        return Err(ScenarioError::Missing("vehicles".into()));
    }
    for r in &refs {
        if !declared.contains(&r.id) {
            return Err(ScenarioError::UnknownId { line: r.line, id: r.id.clone() });
        }
    }
    let c = &sc.constants;
    if c.cert_valid_from > c.cert_valid_to {
        return Err(ScenarioError::OutOfRange {
            line: 0,
            key: "cert_valid_to".into(),
            value: c.cert_valid_to.to_string(),
        });
    }
    sc.script.sort_by(|a, b| a.at.total_cmp(&b.at));
    Ok(sc)
}

fn parse_directive(s: &str, line: usize, col: usize, refs: &mut Vec<Pending>) -> Result<Directive, ScenarioError> {
    let mut words = s.splitn(4, char::is_whitespace).filter(|w| !w.is_empty());
    if words.next() != Some("at") {
        return Err(syntax(line, col, "directive must start with `at`"));
    }
    let at = parse_f64(words.next().ok_or_else(|| syntax(line, col, "missing time"))?, line)?;
    if at < 0.0 {
        return Err(ScenarioError::OutOfRange { line, key: "at".into(), value: at.to_string() });
    }
    let actor = words.next().ok_or_else(|| syntax(line, col, "missing actor"))?;
    refs.push(Pending { line, id: actor.into() });
    let rest = words.next().unwrap_or("").trim();
    let (verb, arg) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    let arg = arg.trim();
    let kind = match verb {
        "initiate" if !arg.is_empty() && !arg.contains(char::is_whitespace) => {
            refs.push(Pending { line, id: arg.into() });
            DirectiveKind::Initiate { peer: VehicleId(arg.into()) }
        }
        "send" if !arg.is_empty() => DirectiveKind::Send { text: arg.trim_matches('\'').trim_matches('"').to_string() },
        _ => return Err(syntax(line, col, format!("expected `initiate <id>` or `send <text>`, found `{rest}`"))),
    };
    Ok(Directive { at, actor: VehicleId(actor.into()), kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "variant = V1\nseed = 3\n[vehicles]\na.pose = 0,0,0,0\nb.pose = 10,0,3.14,0\nb.color = red\n[script]\nat 0 a initiate b\nat 1 a send 'hi there'\n";

    #[test]
    fn parses_minimal_file() {
        let s = load_scenario(MINI).unwrap();
        assert_eq!(s.variant, Variant::Basic);
        assert_eq!(s.vehicles.len(), 2);
        assert_eq!(s.vehicles[1].color, Color::Red);
        assert_eq!(s.script[1].kind, DirectiveKind::Send { text: "hi there".into() });
    }

    #[test]
    fn distinct_error_codes() {
        let empty = load_scenario("").unwrap_err();
        assert!(matches!(empty, ScenarioError::Syntax { .. }));
        let dup = load_scenario("variant=V0\n[vehicles]\na.pose=0,0,0,0\na.pose=1,0,0,0\n").unwrap_err();
        assert_eq!(dup, ScenarioError::DuplicateId { line: 4, id: "a".into() });
        let unknown = load_scenario("variant=V0\n[vehicles]\na.pose=0,0,0,0\n[script]\nat 0 a initiate zz\n").unwrap_err();
        assert!(matches!(unknown, ScenarioError::UnknownId { ref id, .. } if id == "zz"));
        let range = load_scenario("variant=V0\n[constants]\np_confuse = 2\n[vehicles]\na.pose=0,0,0,0\n").unwrap_err();
        assert!(matches!(range, ScenarioError::OutOfRange { .. }));
        let codes: BTreeSet<i32> = [empty, dup, unknown, range].iter().map(|e| e.code()).collect();
        assert_eq!(codes.len(), 4);
    }

    #[test]
    fn syntax_error_reports_column() {
        let e = load_scenario("variant = V0\n[vehicles]\n   garbage\n").unwrap_err();
        assert_eq!(e, ScenarioError::Syntax { line: 3, col: 4, msg: "expected `key = value`".into() });
    }
}
