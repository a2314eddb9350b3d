//! Scenario documents: JSON parsing, defaults and cross-reference validation.
//!
//! | setting                | default                                  |
//! |------------------------|------------------------------------------|
//! | masters                | 6 idle cores `core0`..`core5`            |
//! | arbitration            | round robin                              |
//! | beat width / beat      | 4 bytes / 4 cycles                       |
//! | burst table            | 16 B: 7, 32 B: 11, 64 B: 19 cycles       |
//! | integration            | coupled; coupled (1, 1), loose (20, 20)  |
//! | policy                 | stall offender 100 / safe state / safe state |
//! | trace buffer capacity  | 1024 events                              |
//! | diversity window       | 32 instructions                          |
//! | stagger poll period    | 1 cycle                                  |
//! | ftti budget            | 1000 cycles                              |
//! | seed                   | 0                                        |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{FaultSpec, FaultTarget};
use crate::hpc::{ArbitrationPolicy, LatencyTable, Master, MasterId, MasterKind, Op, Target};
use crate::injector::{InjectionProgram, TrafficDescriptor};
use crate::interference::QuotaMode;
use crate::kernel::Cycle;
use crate::observability::{TraceFilter, TraceKind, DEFAULT_CAPACITY};
use crate::redundancy::{default_grace, Instruction, PairParams, Replica, DEFAULT_WINDOW};
use crate::safety::{IntegrationKind, IntegrationMode, Latencies, ReactionPolicy};
use crate::watchdog::WatchdogTarget;

pub const DEFAULT_CORES: usize = 6;
pub const DEFAULT_FTTI_BUDGET: Cycle = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    /// JSON pointer to the offending value.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} validation error(s): {}", .0.len(), join(.0))]
    Invalid(Vec<ValidationError>),
}

fn join(errs: &[ValidationError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ParseError {
    pub fn errors(&self) -> Vec<ValidationError> {
        match self {
            ParseError::Syntax { .. } => vec![ValidationError {
                path: String::new(),
                message: self.to_string(),
            }],
            ParseError::Invalid(errs) => errs.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Document shape
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    horizon: Cycle,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    interconnect: RawInterconnect,
    masters: Option<Vec<RawMaster>>,
    #[serde(default)]
    injectors: Vec<RawInjector>,
    #[serde(default)]
    quotas: Vec<RawQuota>,
    #[serde(default)]
    redundant_pairs: Vec<RawPair>,
    #[serde(default)]
    watchdogs: Vec<RawWatchdog>,
    #[serde(default)]
    observers: Vec<RawObserver>,
    #[serde(default)]
    faults: Vec<RawFault>,
    #[serde(default)]
    integration: RawIntegration,
    #[serde(default)]
    policy: RawPolicy,
    #[serde(default)]
    ftti_budget: Option<Cycle>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterconnect {
    #[serde(default = "default_arbitration")]
    arbitration: ArbitrationPolicy,
    #[serde(default)]
    beat_width: Option<u64>,
    #[serde(default)]
    single_beat: Option<Cycle>,
    #[serde(default)]
    latency_table: Option<BTreeMap<u64, Cycle>>,
    #[serde(default)]
    devices: Vec<RawDevice>,
}

fn default_arbitration() -> ArbitrationPolicy {
    ArbitrationPolicy::RoundRobin
}

impl Default for RawInterconnect {
    fn default() -> Self {
        Self {
            arbitration: default_arbitration(),
            beat_width: None,
            single_beat: None,
            latency_table: None,
            devices: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    label: String,
    latency: Cycle,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaster {
    name: String,
    #[serde(default = "default_kind")]
    kind: MasterKind,
    #[serde(default)]
    workload: Option<RawWorkload>,
}

fn default_kind() -> MasterKind {
    MasterKind::Core
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawWorkload {
    Explicit(Vec<RawTxn>),
    Synthetic(SyntheticWorkload),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTxn {
    at: Cycle,
    op: Op,
    size_bytes: u64,
    #[serde(default)]
    burst: bool,
    #[serde(default = "memory")]
    target: Target,
    #[serde(default)]
    address: Option<u64>,
}

fn memory() -> Target {
    Target::Memory
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjector {
    name: String,
    #[serde(default)]
    start: Cycle,
    #[serde(default)]
    sequence: Vec<TrafficDescriptor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuota {
    subject: String,
    limit: u64,
    #[serde(default = "default_mode")]
    mode: QuotaMode,
    #[serde(default)]
    rearm: bool,
}

fn default_mode() -> QuotaMode {
    QuotaMode::Caused
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    id: String,
    head: String,
    trail: String,
    threshold: u64,
    #[serde(default = "one")]
    poll_period: u64,
    #[serde(default = "default_window")]
    window: usize,
    #[serde(default)]
    grace: Option<Cycle>,
    #[serde(default = "yes")]
    comparator: bool,
    #[serde(default = "yes")]
    bus_stores: bool,
    #[serde(default = "four")]
    store_size: u64,
    stream: RawStream,
}

fn one() -> u64 {
    1
}

fn four() -> u64 {
    4
}

fn yes() -> bool {
    true
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawStream {
    Explicit(Vec<Instruction>),
    Synthetic(SyntheticStream),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWatchdog {
    id: String,
    deadline: Cycle,
    target: RawWatchdogTarget,
    #[serde(default)]
    arm_at: Cycle,
    #[serde(default)]
    rearm_period: Option<Cycle>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawWatchdogTarget {
    Heartbeat(String),
    ChallengeResponse { device: String, via: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    name: String,
    #[serde(default = "default_capacity")]
    capacity: usize,
    #[serde(default)]
    filter: RawFilter,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    #[serde(default)]
    kinds: BTreeSet<TraceKind>,
    #[serde(default)]
    masters: Vec<String>,
    #[serde(default)]
    address_range: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawFault {
    at: Cycle,
    target: RawFaultTarget,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawFaultTarget {
    StoreValue {
        pair: String,
        replica: Replica,
        index: u64,
        #[serde(default)]
        bit: Option<u32>,
    },
    Crash(String),
    DeviceMute(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    #[serde(default = "coupled")]
    mode: IntegrationKind,
    #[serde(default)]
    coupled: Option<Latencies>,
    #[serde(default)]
    loose: Option<Latencies>,
}

fn coupled() -> IntegrationKind {
    IntegrationKind::Coupled
}

impl Default for RawIntegration {
    fn default() -> Self {
        Self {
            mode: coupled(),
            coupled: None,
            loose: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    #[serde(default)]
    on_quota: Option<crate::safety::QuotaReaction>,
    #[serde(default)]
    on_watchdog: Option<crate::safety::WatchdogReaction>,
    #[serde(default)]
    on_mismatch: Option<crate::safety::MismatchReaction>,
}

// ---------------------------------------------------------------------------
// Validated configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorkload {
    pub period: Cycle,
    pub op: Op,
    pub size_bytes: u64,
    #[serde(default)]
    pub burst: bool,
    #[serde(default)]
    pub jitter: Cycle,
    #[serde(default)]
    pub start: Cycle,
    #[serde(default = "memory")]
    pub target: Target,
    #[serde(default)]
    pub base_address: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub at: Cycle,
    pub op: Op,
    pub size_bytes: u64,
    pub burst: bool,
    pub target: Target,
    pub address: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Workload {
    Idle,
    Explicit(Vec<WorkItem>),
    Synthetic(SyntheticWorkload),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterSpec {
    pub master: Master,
    pub workload: Workload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectorSpec {
    pub master: MasterId,
    pub program: InjectionProgram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotaSpec {
    pub subject: MasterId,
    pub limit: u64,
    pub mode: QuotaMode,
    /// Re-arm (measuring from the aggregate at that moment) once the reaction lands.
    pub rearm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticStream {
    pub length: usize,
    pub store_rate_percent: u8,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamSpec {
    Explicit(Vec<Instruction>),
    Synthetic(SyntheticStream),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub id: String,
    pub head: MasterId,
    pub trail: MasterId,
    pub params: PairParams,
    pub stream: StreamSpec,
    /// Retired stores are also written to memory over the bus.
    pub bus_stores: bool,
    pub store_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchdogSpec {
    pub id: String,
    pub deadline: Cycle,
    pub target: WatchdogTarget,
    pub arm_at: Cycle,
    pub rearm_period: Option<Cycle>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserverSpec {
    pub name: String,
    pub filter: TraceFilter,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub horizon: Cycle,
    pub seed: u64,
    pub arbitration: ArbitrationPolicy,
    pub latency: LatencyTable,
    pub masters: Vec<MasterSpec>,
    pub injectors: Vec<InjectorSpec>,
    pub quotas: Vec<QuotaSpec>,
    pub pairs: Vec<PairSpec>,
    pub watchdogs: Vec<WatchdogSpec>,
    pub observers: Vec<ObserverSpec>,
    pub faults: Vec<FaultSpec>,
    pub integration: IntegrationMode,
    pub policy: ReactionPolicy,
    pub ftti_budget: Cycle,
}

impl ScenarioConfig {
    pub fn master_names(&self) -> Vec<String> {
        self.masters.iter().map(|m| m.master.name.clone()).collect()
    }

    pub fn master_id(&self, name: &str) -> Option<MasterId> {
        self.masters
            .iter()
            .find(|m| m.master.name == name)
            .map(|m| m.master.id)
    }

    pub fn master(&self, id: MasterId) -> &Master {
        &self.masters[id.0].master
    }

    pub fn pair_index(&self, id: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p.id == id)
    }

    /// Parses a fault list (the campaign file format) against this scenario.
    pub fn parse_faults(&self, text: &str) -> Result<Vec<FaultSpec>, ParseError> {
        let raw: Vec<RawFault> = from_json(text)?;
        let names = self.name_index();
        let mut errs = Errors::default();
        let faults = resolve_faults(&raw, "", self, &names, &mut errs);
        errs.finish(faults)
    }

    fn name_index(&self) -> HashMap<String, MasterId> {
        self.masters
            .iter()
            .map(|m| (m.master.name.clone(), m.master.id))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Errors(Vec<ValidationError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn finish<T>(self, value: T) -> Result<T, ParseError> {
        if self.0.is_empty() {
            Ok(value)
        } else {
            Err(ParseError::Invalid(self.0))
        }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .filter_map(|seg| match seg {
            Segment::Seq { index } => Some(index.to_string()),
            Segment::Map { key } => Some(key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => Some(variant.clone()),
            Segment::Unknown => None,
        })
        .map(|s| format!("/{s}"))
        .collect()
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = pointer(e.path());
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                ParseError::Syntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            }
            _ => ParseError::Invalid(vec![ValidationError {
                path,
                message: strip_position(&inner.to_string()),
            }]),
        }
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Parses and validates a scenario document, reporting every problem found.
pub fn parse(text: &str) -> Result<ScenarioConfig, ParseError> {
    let raw: RawScenario = from_json(text)?;
    let mut errs = Errors::default();

    let latency = resolve_latency(&raw.interconnect, &mut errs);

    // Masters first, injectors appended after them.
    let raw_masters = raw.masters.unwrap_or_else(|| {
        (0..DEFAULT_CORES)
            .map(|i| RawMaster {
                name: format!("core{i}"),
                kind: MasterKind::Core,
                workload: None,
            })
            .collect()
    });
    if raw_masters.is_empty() && raw.injectors.is_empty() {
        errs.push("/masters", "at least one master is required");
    }
    let mut names: HashMap<String, MasterId> = HashMap::new();
    let mut masters = Vec::new();
    for (i, m) in raw_masters.into_iter().enumerate() {
        let path = format!("/masters/{i}");
        if m.kind == MasterKind::Injector {
            errs.push(format!("{path}/kind"), "injector masters are declared under /injectors");
        }
        let id = MasterId(masters.len());
        if names.insert(m.name.clone(), id).is_some() {
            errs.push(format!("{path}/name"), format!("duplicate master name `{}`", m.name));
        }
        let workload = match m.workload {
            None => Workload::Idle,
            Some(RawWorkload::Explicit(items)) => Workload::Explicit(
                items
                    .into_iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let p = format!("{path}/workload/explicit/{j}");
                        check_access(&latency, &t.target, t.size_bytes, t.burst, &p, &mut errs);
                        WorkItem {
                            at: t.at,
                            op: t.op,
                            size_bytes: t.size_bytes,
                            burst: t.burst,
                            target: t.target,
                            address: t.address,
                        }
                    })
                    .collect(),
            ),
            Some(RawWorkload::Synthetic(s)) => {
                let p = format!("{path}/workload/synthetic");
                if s.period == 0 {
                    errs.push(format!("{p}/period"), "period must be at least 1");
                } else if s.jitter >= s.period {
                    errs.push(format!("{p}/jitter"), "jitter must be smaller than the period");
                }
                check_access(&latency, &s.target, s.size_bytes, s.burst, &p, &mut errs);
                Workload::Synthetic(s)
            }
        };
        masters.push(MasterSpec {
            master: Master {
                id,
                name: m.name,
                kind: m.kind,
            },
            workload,
        });
    }

    let mut injectors = Vec::new();
    for (i, inj) in raw.injectors.into_iter().enumerate() {
        let path = format!("/injectors/{i}");
        let id = MasterId(masters.len());
        if names.insert(inj.name.clone(), id).is_some() {
            errs.push(format!("{path}/name"), format!("duplicate master name `{}`", inj.name));
        }
        let program = InjectionProgram {
            sequence: inj.sequence,
            start: inj.start,
        };
        if let Err(e) = program.validate(&latency) {
            use crate::injector::InjectorError::*;
            let (idx, field) = match &e {
                InfiniteNotLast { index } | ZeroRepeat { index } => (*index, "/repeat"),
                ZeroPeriod { index } => (*index, "/delay_after"),
                Latency { index, .. } => (*index, ""),
            };
            errs.push(format!("{path}/sequence/{idx}{field}"), e.to_string());
        }
        masters.push(MasterSpec {
            master: Master {
                id,
                name: inj.name,
                kind: MasterKind::Injector,
            },
            workload: Workload::Idle,
        });
        injectors.push(InjectorSpec {
            master: id,
            program,
        });
    }

    let lookup = |name: &str, path: String, errs: &mut Errors| -> Option<MasterId> {
        let found = names.get(name).copied();
        if found.is_none() {
            errs.push(path, format!("unknown master `{name}`"));
        }
        found
    };

    let mut quotas: Vec<QuotaSpec> = Vec::new();
    for (i, q) in raw.quotas.iter().enumerate() {
        let path = format!("/quotas/{i}");
        if let Some(subject) = lookup(&q.subject, format!("{path}/subject"), &mut errs) {
            if quotas.iter().any(|o| o.subject == subject && o.mode == q.mode) {
                errs.push(
                    format!("{path}/subject"),
                    format!("a {:?} quota for `{}` already exists", q.mode, q.subject),
                );
            }
            quotas.push(QuotaSpec {
                subject,
                limit: q.limit,
                mode: q.mode,
                rearm: q.rearm,
            });
        }
    }

    let mut pairs: Vec<PairSpec> = Vec::new();
    let mut paired: HashMap<MasterId, usize> = HashMap::new();
    for (i, p) in raw.redundant_pairs.into_iter().enumerate() {
        let path = format!("/redundant_pairs/{i}");
        if pairs.iter().any(|o| o.id == p.id) {
            errs.push(format!("{path}/id"), format!("duplicate pair id `{}`", p.id));
        }
        let head = lookup(&p.head, format!("{path}/head"), &mut errs);
        let trail = lookup(&p.trail, format!("{path}/trail"), &mut errs);
        if head.is_some() && head == trail {
            errs.push(format!("{path}/trail"), "head and trail must be different masters");
        }
        for (field, m) in [("head", head), ("trail", trail)] {
            if let Some(m) = m {
                if paired.insert(m, i).is_some() {
                    errs.push(format!("{path}/{field}"), "master already belongs to another pair");
                }
            }
        }
        if p.threshold == 0 {
            errs.push(format!("{path}/threshold"), "threshold must be at least 1");
        }
        if p.poll_period == 0 {
            errs.push(format!("{path}/poll_period"), "poll period must be at least 1");
        }
        if p.window == 0 {
            errs.push(format!("{path}/window"), "window must be at least 1");
        }
        if p.bus_stores {
            check_access(&latency, &Target::Memory, p.store_size, false, &format!("{path}/store_size"), &mut errs);
        }
        let stream = match p.stream {
            RawStream::Explicit(body) => {
                if body.is_empty() {
                    errs.push(format!("{path}/stream/explicit"), "instruction stream is empty");
                }
                StreamSpec::Explicit(body)
            }
            RawStream::Synthetic(s) => {
                if s.length == 0 {
                    errs.push(format!("{path}/stream/synthetic/length"), "length must be at least 1");
                }
                if s.store_rate_percent > 100 {
                    errs.push(
                        format!("{path}/stream/synthetic/store_rate_percent"),
                        "store rate is a percentage",
                    );
                }
                StreamSpec::Synthetic(s)
            }
        };
        if let (Some(head), Some(trail)) = (head, trail) {
            pairs.push(PairSpec {
                id: p.id,
                head,
                trail,
                params: PairParams {
                    threshold: p.threshold,
                    poll_period: p.poll_period,
                    window: p.window,
                    grace: p
                        .grace
                        .unwrap_or_else(|| default_grace(p.threshold, p.poll_period.max(1))),
                    comparator_enabled: p.comparator,
                },
                stream,
                bus_stores: p.bus_stores,
                store_size: p.store_size,
            });
        }
    }

    let mut watchdogs: Vec<WatchdogSpec> = Vec::new();
    for (i, w) in raw.watchdogs.into_iter().enumerate() {
        let path = format!("/watchdogs/{i}");
        if watchdogs.iter().any(|o| o.id == w.id) {
            errs.push(format!("{path}/id"), format!("duplicate watchdog id `{}`", w.id));
        }
        if w.deadline == 0 {
            errs.push(format!("{path}/deadline"), "deadline must be at least 1");
        }
        if let Some(period) = w.rearm_period {
            if period < w.deadline {
                errs.push(
                    format!("{path}/rearm_period"),
                    "re-arm period must not be shorter than the deadline",
                );
            }
        }
        let target = match w.target {
            RawWatchdogTarget::Heartbeat(name) => {
                lookup(&name, format!("{path}/target/heartbeat"), &mut errs).map(WatchdogTarget::Heartbeat)
            }
            RawWatchdogTarget::ChallengeResponse { device, via } => {
                if !latency.devices.contains_key(&device) {
                    errs.push(
                        format!("{path}/target/challenge_response/device"),
                        format!("unknown device `{device}`"),
                    );
                }
                let via_path = format!("{path}/target/challenge_response/via");
                let via_id = lookup(&via, via_path.clone(), &mut errs);
                if let Some(v) = via_id {
                    if masters[v.0].master.kind != MasterKind::Injector {
                        errs.push(via_path, format!("`{via}` is not a traffic injector"));
                    }
                }
                via_id.map(|via| WatchdogTarget::ChallengeResponse { device, via })
            }
        };
        if let Some(target) = target {
            watchdogs.push(WatchdogSpec {
                id: w.id,
                deadline: w.deadline,
                target,
                arm_at: w.arm_at,
                rearm_period: w.rearm_period,
            });
        }
    }

    let mut observers: Vec<ObserverSpec> = Vec::new();
    for (i, o) in raw.observers.into_iter().enumerate() {
        let path = format!("/observers/{i}");
        if observers.iter().any(|x| x.name == o.name) {
            errs.push(format!("{path}/name"), format!("duplicate observer `{}`", o.name));
        }
        if o.capacity == 0 {
            errs.push(format!("{path}/capacity"), "capacity must be at least 1");
        }
        if let Some((lo, hi)) = o.filter.address_range {
            if lo > hi {
                errs.push(format!("{path}/filter/address_range"), "empty address range");
            }
        }
        let masters_filter = o
            .filter
            .masters
            .iter()
            .enumerate()
            .filter_map(|(j, n)| lookup(n, format!("{path}/filter/masters/{j}"), &mut errs))
            .collect();
        observers.push(ObserverSpec {
            name: o.name,
            filter: TraceFilter {
                kinds: o.filter.kinds,
                masters: masters_filter,
                address_range: o.filter.address_range,
            },
            capacity: o.capacity,
        });
    }

    let defaults = IntegrationMode::default();
    let integration = IntegrationMode {
        mode: raw.integration.mode,
        coupled: raw.integration.coupled.unwrap_or(defaults.coupled),
        loose: raw.integration.loose.unwrap_or(defaults.loose),
    };
    if let Err(e) = integration.validate() {
        let crate::safety::SafetyError::LatencyOrdering { which, .. } = e;
        errs.push(format!("/integration/loose/{which}_latency"), e.to_string());
    }

    let default_policy = ReactionPolicy::default();
    let policy = ReactionPolicy {
        on_quota: raw.policy.on_quota.unwrap_or(default_policy.on_quota),
        on_watchdog: raw.policy.on_watchdog.unwrap_or(default_policy.on_watchdog),
        on_mismatch: raw.policy.on_mismatch.unwrap_or(default_policy.on_mismatch),
    };

    let mut config = ScenarioConfig {
        horizon: raw.horizon,
        seed: raw.seed,
        arbitration: raw.interconnect.arbitration,
        latency,
        masters,
        injectors,
        quotas,
        pairs,
        watchdogs,
        observers,
        faults: Vec::new(),
        integration,
        policy,
        ftti_budget: raw.ftti_budget.unwrap_or(DEFAULT_FTTI_BUDGET),
    };
    config.faults = resolve_faults(&raw.faults, "/faults", &config, &names, &mut errs);
    errs.finish(config)
}

fn resolve_latency(raw: &RawInterconnect, errs: &mut Errors) -> LatencyTable {
    let mut table = LatencyTable::default();
    if let Some(w) = raw.beat_width {
        if w == 0 {
            errs.push("/interconnect/beat_width", "beat width must be at least 1 byte");
        }
        table.beat_width = w.max(1);
    }
    if let Some(b) = raw.single_beat {
        if b == 0 {
            errs.push("/interconnect/single_beat", "beat latency must be at least 1 cycle");
        }
        table.single_beat = b.max(1);
    }
    if let Some(burst) = &raw.latency_table {
        for (size, cycles) in burst {
            if *size == 0 || *cycles == 0 {
                errs.push(
                    format!("/interconnect/latency_table/{size}"),
                    "burst sizes and latencies must be positive",
                );
            }
        }
        table.burst = burst.clone();
    }
    for (i, d) in raw.devices.iter().enumerate() {
        if d.latency == 0 {
            errs.push(format!("/interconnect/devices/{i}/latency"), "device latency must be at least 1");
        }
        if table.devices.insert(d.label.clone(), d.latency).is_some() {
            errs.push(format!("/interconnect/devices/{i}/label"), format!("duplicate device `{}`", d.label));
        }
    }
    table
}

fn check_access(table: &LatencyTable, target: &Target, size: u64, burst: bool, path: &str, errs: &mut Errors) {
    if let Err(e) = table.lookup(target, size, burst) {
        errs.push(path.to_string(), e.to_string());
    }
}

fn resolve_faults(
    raw: &[RawFault],
    base: &str,
    config: &ScenarioConfig,
    names: &HashMap<String, MasterId>,
    errs: &mut Errors,
) -> Vec<FaultSpec> {
    let mut out = Vec::new();
    for (i, f) in raw.iter().enumerate() {
        let path = format!("{base}/{i}/target");
        let target = match &f.target {
            RawFaultTarget::StoreValue {
                pair,
                replica,
                index,
                bit,
            } => match config.pair_index(pair) {
                Some(p) => {
                    if let Some(b) = bit {
                        if *b >= 64 {
                            errs.push(format!("{path}/store_value/bit"), "bit must be below 64");
                        }
                    }
                    Some(FaultTarget::StoreValue {
                        pair: p,
                        replica: *replica,
                        index: *index,
                        bit: *bit,
                    })
                }
                None => {
                    errs.push(format!("{path}/store_value/pair"), format!("unknown pair `{pair}`"));
                    None
                }
            },
            RawFaultTarget::Crash(name) => match names.get(name) {
                Some(&m) => Some(FaultTarget::Crash(m)),
                None => {
                    errs.push(format!("{path}/crash"), format!("unknown master `{name}`"));
                    None
                }
            },
            RawFaultTarget::DeviceMute(label) => {
                if config.latency.devices.contains_key(label) {
                    Some(FaultTarget::DeviceMute(label.clone()))
                } else {
                    errs.push(format!("{path}/device_mute"), format!("unknown device `{label}`"));
                    None
                }
            }
        };
        if let Some(target) = target {
            out.push(FaultSpec {
                at: f.at,
                target,
                seed: f.seed,
            });
        }
    }
    out
}
