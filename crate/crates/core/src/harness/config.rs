//! Scenario files: a TOML schema, its validation, and the translation into
//! a topology plus scripted events.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

use crate::forwarder::{RouterConfig, DEFAULT_CS_CAPACITY, DEFAULT_PIT_LIFETIME};
use crate::fib::DEFAULT_FAB_CAPACITY;
use crate::mpccp::{FlowConfig, RttScaling, Strategy};
use crate::names::FlowName;
use crate::netsim::{FlowSpec, LinkSpec, NodeKind, NodeSpec, Route, ScriptAction, Topology};
use crate::time::SimTime;

pub const DEFAULT_PAYLOAD: u32 = 1024;
pub const DEFAULT_INTERVAL: f64 = 0.1;
/// Fraction of the run discarded as warm-up when none is given.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

/// A configuration problem, located by line (when known) and field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: ")?,
            None => {}
        }
        if !self.field.is_empty() {
            write!(f, "{}: ", self.field)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum Count {
    Finite(u64),
    Named(Unbounded),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Unbounded {
    Unbounded,
}

impl Count {
    fn get(self) -> u64 {
        match self {
            Count::Finite(n) => n,
            Count::Named(_) => u64::MAX,
        }
    }
}

impl Default for Count {
    fn default() -> Self {
        Count::Named(Unbounded::Unbounded)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOverrides {
    pub max_paths: Option<usize>,
    pub switch_period: Option<f64>,
    pub probe_rate: Option<f64>,
    pub probe_timeout: Option<f64>,
    pub beta: Option<f64>,
    pub strategy: Option<Strategy>,
    pub variance_window: Option<usize>,
    pub two_packet_loss: Option<bool>,
    pub rtt_scaling: Option<RttScaling>,
    pub rtt_reference: Option<f64>,
    pub bw_gain: Option<f64>,
    pub bw_interval: Option<f64>,
    pub cwnd_min: Option<f64>,
    pub cwnd_init: Option<f64>,
    pub ssthresh_init: Option<f64>,
}

impl FlowOverrides {
    fn apply(&self, c: &mut FlowConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(max_paths, switch_period, probe_rate, probe_timeout, beta, strategy, variance_window,
             two_packet_loss, rtt_scaling, bw_gain, bw_interval);
        if self.rtt_reference.is_some() {
            c.rtt_reference = self.rtt_reference;
        }
        if let Some(v) = self.cwnd_min {
            c.window.cwnd_min = v;
        }
        if let Some(v) = self.cwnd_init {
            c.window.cwnd_init = v;
        }
        if let Some(v) = self.ssthresh_init {
            c.window.ssthresh_init = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDefaults {
    bandwidth_kbps: Option<f64>,
    latency_ms: Option<f64>,
    queue_pkts: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreseedFile {
    flow: String,
    count: u64,
    /// Sequences are drawn without replacement from `0..range`.
    range: u64,
    #[serde(default)]
    at: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowFile {
    name: String,
    #[serde(default)]
    packets: Count,
    #[serde(default)]
    start: f64,
    stop: Option<f64>,
    #[serde(flatten)]
    overrides: FlowOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindFile {
    Router,
    Consumer,
    Producer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: Spanned<String>,
    kind: KindFile,
    #[serde(default)]
    routes: BTreeMap<String, Vec<Spanned<String>>>,
    fab_capacity: Option<usize>,
    cs_capacity: Option<usize>,
    pit_lifetime: Option<f64>,
    preseed: Option<PreseedFile>,
    #[serde(default)]
    catalog: BTreeMap<String, Count>,
    #[serde(default)]
    flow: Vec<FlowFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    a: Spanned<String>,
    b: Spanned<String>,
    bandwidth_kbps: Option<f64>,
    latency_ms: Option<f64>,
    queue_pkts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActionFile {
    LinkDown,
    LinkUp,
    Start,
    Stop,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    at: f64,
    action: Spanned<ActionFile>,
    link: Option<[Spanned<String>; 2]>,
    node: Option<Spanned<String>>,
    #[serde(default)]
    flow: usize,
}

/// Consumer flow reference: node label and flow index within the node.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FlowRef {
    pub node: String,
    #[serde(default)]
    pub flow: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkExpect {
    pub from: String,
    pub to: String,
    pub min_pct: Option<f64>,
    pub max_pct: Option<f64>,
    pub min_kbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessExpect {
    pub a: FlowRef,
    pub b: FlowRef,
    /// Start of the measured window; the second half of the run when unset.
    pub from: Option<f64>,
    pub min_pct: f64,
    pub max_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxFlowExpect {
    pub consumer: FlowRef,
    pub min_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodputExpect {
    pub consumer: FlowRef,
    pub from: f64,
    pub to: f64,
    pub min_kbps: Option<f64>,
    pub max_kbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheExpect {
    pub router: String,
    pub consumer: FlowRef,
    /// Seconds after the consumer starts before the cached plateau is measured.
    pub ramp: f64,
    /// Seconds after exhaustion by which the lower plateau must hold.
    pub settle: f64,
    pub high_min_kbps: f64,
    pub low_min_kbps: f64,
    pub low_max_kbps: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub link: Vec<LinkExpect>,
    pub fairness: Option<FairnessExpect>,
    #[serde(default)]
    pub max_flow: Vec<MaxFlowExpect>,
    #[serde(default)]
    pub goodput: Vec<GoodputExpect>,
    pub cache: Option<CacheExpect>,
    pub max_wall_secs: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    duration: f64,
    #[serde(default)]
    seed: u64,
    warmup: Option<f64>,
    metrics_interval: Option<f64>,
    payload_bytes: Option<u32>,
    #[serde(default)]
    defaults: LinkDefaults,
    #[serde(default)]
    flow_defaults: FlowOverrides,
    #[serde(default)]
    node: Vec<NodeFile>,
    #[serde(default)]
    link: Vec<LinkFile>,
    #[serde(default)]
    script: Vec<ScriptFile>,
    #[serde(default)]
    expect: Expectations,
}

/// A parsed scenario. Randomised parts (cache preseed, flow seeds) are
/// drawn when the topology is built for a given seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub duration: f64,
    pub seed: u64,
    pub warmup: f64,
    pub metrics_interval: f64,
    pub payload_bytes: u32,
    pub labels: Vec<String>,
    nodes: Vec<NodeDraft>,
    pub links: Vec<LinkSpec>,
    pub scripts: Vec<(f64, ScriptAction)>,
    pub expect: Expectations,
}

#[derive(Debug, Clone)]
enum NodeDraft {
    Router {
        config: RouterConfig,
        routes: Vec<Route>,
        preseed: Option<(FlowName, u64, u64, SimTime)>,
    },
    Consumer(Vec<(FlowConfig, SimTime, Option<SimTime>)>),
    Producer(Vec<(FlowName, u64)>),
}

struct Ctx<'a> {
    text: Option<&'a str>,
    ids: HashMap<String, usize>,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> Option<usize> {
        self.text.map(|t| t[..offset.min(t.len())].matches('\n').count() + 1)
    }

    fn err<T>(&self, span: Option<std::ops::Range<usize>>, field: impl Into<String>, msg: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            line: span.and_then(|s| self.line(s.start)),
            field: field.into(),
            message: msg.into(),
        })
    }

    fn node(&self, s: &Spanned<String>, field: String) -> Result<usize, ConfigError> {
        match self.ids.get(s.get_ref()) {
            Some(&i) => Ok(i),
            None => self.err(Some(s.span()), field, format!("unknown node {:?}", s.get_ref())),
        }
    }

    fn flow_name(&self, s: &str, span: Option<std::ops::Range<usize>>, field: String) -> Result<FlowName, ConfigError> {
        s.parse::<FlowName>()
            .or_else(|e| self.err(span, field, format!("bad flow name {s:?}: {e}")))
    }
}

fn positive(ctx: &Ctx, v: f64, field: String) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        ctx.err(None, field, format!("must be positive, got {v}"))
    }
}

fn non_negative(ctx: &Ctx, v: f64, field: String) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        ctx.err(None, field, format!("must be non-negative, got {v}"))
    }
}

/// Sets a dotted key path (`flow_defaults.probe_rate`, `link.3.queue_pkts`)
/// in a parsed document. The value is read as TOML, or as a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let fail = |m: String| ConfigError {
        line: None,
        field: format!("--override {assignment}"),
        message: m,
    };
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| fail("expected key=value".into()))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut root = toml::Value::Table(std::mem::take(doc));
    let result = set_path(&mut root, &parts, value).map_err(fail);
    if let toml::Value::Table(t) = root {
        *doc = t;
    }
    result
}

fn set_path(cur: &mut toml::Value, parts: &[&str], value: toml::Value) -> Result<(), String> {
    let Some((p, rest)) = parts.split_first() else {
        return Err("empty key".into());
    };
    let slot = match cur {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                t.insert((*p).to_string(), value);
                return Ok(());
            }
            t.entry((*p).to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        }
        toml::Value::Array(a) => {
            let idx: usize = p.parse().map_err(|_| format!("{p:?} is not an array index"))?;
            let len = a.len();
            a.get_mut(idx)
                .ok_or_else(|| format!("index {idx} out of range ({len} entries)"))?
        }
        _ => return Err(format!("{p:?} is below a scalar")),
    };
    if rest.is_empty() {
        *slot = value;
        Ok(())
    } else {
        set_path(slot, rest, value)
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides to it.
    pub fn parse_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let syntax = |e: toml::de::Error, text: &str| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            ConfigError {
                line,
                field: String::new(),
                message: e.message().trim().to_string(),
            }
        };
        if overrides.is_empty() {
            let file: ScenarioFile = toml::from_str(text).map_err(|e| syntax(e, text))?;
            return Self::build(file, Some(text));
        }
        let mut doc: toml::Table = text.parse().map_err(|e| syntax(e, text))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let rewritten = toml::to_string(&doc).map_err(|e| ConfigError {
            line: None,
            field: String::new(),
            message: e.to_string(),
        })?;
        let file: ScenarioFile = toml::from_str(&rewritten).map_err(|e| {
            let mut err = syntax(e, &rewritten);
            err.line = None;
            err
        })?;
        Self::build(file, None)
    }

    fn build(f: ScenarioFile, text: Option<&str>) -> Result<Self, ConfigError> {
        let mut ctx = Ctx {
            text,
            ids: HashMap::new(),
        };
        let duration = positive(&ctx, f.duration, "duration".into())?;
        let warmup = match f.warmup {
            Some(w) => non_negative(&ctx, w, "warmup".into())?,
            None => DEFAULT_WARMUP_FRACTION * duration,
        };
        if warmup >= duration {
            return ctx.err(None, "warmup", format!("warm-up {warmup} s is not shorter than the run ({duration} s)"));
        }
        let metrics_interval = positive(&ctx, f.metrics_interval.unwrap_or(DEFAULT_INTERVAL), "metrics_interval".into())?;
        let payload_bytes = f.payload_bytes.unwrap_or(DEFAULT_PAYLOAD);

        let mut labels = Vec::new();
        for (i, n) in f.node.iter().enumerate() {
            let id = n.id.get_ref().clone();
            if ctx.ids.insert(id.clone(), i).is_some() {
                return ctx.err(Some(n.id.span()), format!("node[{i}].id"), format!("duplicate node id {id:?}"));
            }
            labels.push(id);
        }

        let mut nodes = Vec::new();
        for (i, n) in f.node.iter().enumerate() {
            let at = |k: &str| format!("node[{i}].{k}");
            let misplaced = |ctx: &Ctx, field: &str| {
                ctx.err(Some(n.id.span()), at(field), format!("not allowed on a {:?} node", n.kind))
            };
            if n.kind != KindFile::Router
                && (!n.routes.is_empty() || n.preseed.is_some() || n.fab_capacity.is_some() || n.cs_capacity.is_some() || n.pit_lifetime.is_some())
            {
                return misplaced(&ctx, "routes");
            }
            if n.kind != KindFile::Producer && !n.catalog.is_empty() {
                return misplaced(&ctx, "catalog");
            }
            if n.kind != KindFile::Consumer && !n.flow.is_empty() {
                return misplaced(&ctx, "flow");
            }
            nodes.push(match n.kind {
                KindFile::Router => {
                    let mut routes = Vec::new();
                    for (prefix, hops) in &n.routes {
                        let field = at(&format!("routes.{prefix:?}"));
                        let prefix = ctx.flow_name(prefix, Some(n.id.span()), field.clone())?;
                        let next_hops = hops
                            .iter()
                            .map(|h| ctx.node(h, field.clone()))
                            .collect::<Result<Vec<_>, _>>()?;
                        routes.push(Route { prefix, next_hops });
                    }
                    let preseed = match &n.preseed {
                        Some(p) => {
                            let flow = ctx.flow_name(&p.flow, Some(n.id.span()), at("preseed.flow"))?;
                            if p.count > p.range {
                                return ctx.err(Some(n.id.span()), at("preseed"), "count exceeds range");
                            }
                            let at = non_negative(&ctx, p.at, at("preseed.at"))?;
                            Some((flow, p.count, p.range, SimTime::from_secs_f64(at)))
                        }
                        None => None,
                    };
                    let pit = positive(&ctx, n.pit_lifetime.unwrap_or(DEFAULT_PIT_LIFETIME.as_secs_f64()), at("pit_lifetime"))?;
                    NodeDraft::Router {
                        config: RouterConfig {
                            fab_capacity: n.fab_capacity.unwrap_or(DEFAULT_FAB_CAPACITY),
                            cs_capacity: n.cs_capacity.unwrap_or(DEFAULT_CS_CAPACITY),
                            pit_lifetime: SimTime::from_secs_f64(pit),
                        },
                        routes,
                        preseed,
                    }
                }
                KindFile::Producer => {
                    let mut catalog = Vec::new();
                    for (name, count) in &n.catalog {
                        catalog.push((ctx.flow_name(name, Some(n.id.span()), at("catalog"))?, count.get()));
                    }
                    NodeDraft::Producer(catalog)
                }
                KindFile::Consumer => {
                    let mut flows = Vec::new();
                    for (k, fl) in n.flow.iter().enumerate() {
                        let field = |x: &str| format!("node[{i}].flow[{k}].{x}");
                        let name = ctx.flow_name(&fl.name, Some(n.id.span()), field("name"))?;
                        let mut cfg = FlowConfig::new(name, fl.packets.get());
                        f.flow_defaults.apply(&mut cfg);
                        fl.overrides.apply(&mut cfg);
                        check_flow(&ctx, &cfg, &field)?;
                        let start = non_negative(&ctx, fl.start, field("start"))?;
                        let stop = match fl.stop {
                            Some(s) if s < start => return ctx.err(Some(n.id.span()), field("stop"), "stop precedes start"),
                            Some(s) => Some(SimTime::from_secs_f64(s)),
                            None => None,
                        };
                        flows.push((cfg, SimTime::from_secs_f64(start), stop));
                    }
                    NodeDraft::Consumer(flows)
                }
            });
        }

        let d = &f.defaults;
        let mut links = Vec::new();
        for (i, l) in f.link.iter().enumerate() {
            let at = |k: &str| format!("link[{i}].{k}");
            let a = ctx.node(&l.a, at("a"))?;
            let b = ctx.node(&l.b, at("b"))?;
            if a == b {
                return ctx.err(Some(l.a.span()), at("b"), "link connects a node to itself");
            }
            let Some(kbps) = l.bandwidth_kbps.or(d.bandwidth_kbps) else {
                return ctx.err(Some(l.a.span()), at("bandwidth_kbps"), "missing, and no default given");
            };
            let kbps = positive(&ctx, kbps, at("bandwidth_kbps"))?;
            let latency = non_negative(&ctx, l.latency_ms.or(d.latency_ms).unwrap_or(0.0), at("latency_ms"))?;
            let mut spec = LinkSpec::new(a, b, kbps * 1e3, SimTime::from_secs_f64(latency / 1e3));
            if let Some(q) = l.queue_pkts.or(d.queue_pkts) {
                if q == 0 {
                    return ctx.err(Some(l.a.span()), at("queue_pkts"), "must be at least 1");
                }
                spec.queue_pkts = q;
            }
            links.push(spec);
        }

        let mut scripts = Vec::new();
        for (i, s) in f.script.iter().enumerate() {
            let at = |k: &str| format!("script[{i}].{k}");
            let span = Some(s.action.span());
            let t = non_negative(&ctx, s.at, at("at"))?;
            let action = match s.action.get_ref() {
                ActionFile::LinkDown | ActionFile::LinkUp => {
                    let Some([x, y]) = &s.link else {
                        return ctx.err(span, at("link"), "link actions need link = [a, b]");
                    };
                    let (x, y) = (ctx.node(x, at("link"))?, ctx.node(y, at("link"))?);
                    let Some(l) = links.iter().position(|l| (l.a, l.b) == (x, y) || (l.a, l.b) == (y, x)) else {
                        return ctx.err(span, at("link"), "no such link");
                    };
                    if *s.action.get_ref() == ActionFile::LinkDown {
                        ScriptAction::LinkDown(l)
                    } else {
                        ScriptAction::LinkUp(l)
                    }
                }
                ActionFile::Start | ActionFile::Stop => {
                    let Some(n) = &s.node else {
                        return ctx.err(span, at("node"), "flow actions need a node");
                    };
                    let node = ctx.node(n, at("node"))?;
                    match &nodes[node] {
                        NodeDraft::Consumer(fl) if s.flow < fl.len() => {}
                        _ => return ctx.err(span, at("flow"), format!("node {:?} has no flow {}", n.get_ref(), s.flow)),
                    }
                    if *s.action.get_ref() == ActionFile::Start {
                        ScriptAction::StartFlow { node, flow: s.flow }
                    } else {
                        ScriptAction::StopFlow { node, flow: s.flow }
                    }
                }
            };
            scripts.push((t, action));
        }

        ctx.text = None;
        let scenario = Scenario {
            name: f.name,
            description: f.description,
            duration,
            seed: f.seed,
            warmup,
            metrics_interval,
            payload_bytes,
            labels,
            nodes,
            links,
            scripts,
            expect: f.expect,
        };
        scenario.check_expectations(&ctx)?;
        scenario
            .topology(scenario.seed)
            .validate()
            .map_err(|e| ConfigError {
                line: None,
                field: "topology".into(),
                message: e.to_string(),
            })?;
        Ok(scenario)
    }

    fn check_expectations(&self, ctx: &Ctx) -> Result<(), ConfigError> {
        let known = |label: &str, field: String| {
            if self.node_index(label).is_some() {
                Ok(())
            } else {
                ctx.err(None, field, format!("unknown node {label:?}"))
            }
        };
        let flow = |r: &FlowRef, field: String| {
            if self.flow_index(r).is_some() {
                Ok(())
            } else {
                ctx.err(None, field, format!("no flow {} at node {:?}", r.flow, r.node))
            }
        };
        let e = &self.expect;
        for (i, l) in e.link.iter().enumerate() {
            known(&l.from, format!("expect.link[{i}].from"))?;
            known(&l.to, format!("expect.link[{i}].to"))?;
            let (a, b) = (self.node_index(&l.from).unwrap(), self.node_index(&l.to).unwrap());
            if !self.links.iter().any(|x| (x.a, x.b) == (a, b) || (x.a, x.b) == (b, a)) {
                return ctx.err(None, format!("expect.link[{i}]"), "no such link");
            }
        }
        if let Some(fx) = &e.fairness {
            flow(&fx.a, "expect.fairness.a".into())?;
            flow(&fx.b, "expect.fairness.b".into())?;
        }
        for (i, m) in e.max_flow.iter().enumerate() {
            flow(&m.consumer, format!("expect.max_flow[{i}].consumer"))?;
        }
        for (i, g) in e.goodput.iter().enumerate() {
            flow(&g.consumer, format!("expect.goodput[{i}].consumer"))?;
        }
        if let Some(c) = &e.cache {
            known(&c.router, "expect.cache.router".into())?;
            flow(&c.consumer, "expect.cache.consumer".into())?;
            if !matches!(self.nodes[self.node_index(&c.router).unwrap()], NodeDraft::Router { .. }) {
                return ctx.err(None, "expect.cache.router", "not a router");
            }
        }
        Ok(())
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Index of a flow in the report's flow list.
    pub fn flow_index(&self, r: &FlowRef) -> Option<usize> {
        let node = self.node_index(&r.node)?;
        let mut idx = 0;
        for (n, d) in self.nodes.iter().enumerate() {
            if let NodeDraft::Consumer(flows) = d {
                if n == node {
                    return (r.flow < flows.len()).then_some(idx + r.flow);
                }
                idx += flows.len();
            }
        }
        None
    }

    pub fn flow_config(&self, r: &FlowRef) -> Option<&FlowConfig> {
        match &self.nodes[self.node_index(&r.node)?] {
            NodeDraft::Consumer(flows) => flows.get(r.flow).map(|f| &f.0),
            _ => None,
        }
    }

    pub fn flow_start(&self, r: &FlowRef) -> Option<f64> {
        match &self.nodes[self.node_index(&r.node)?] {
            NodeDraft::Consumer(flows) => flows.get(r.flow).map(|f| f.1.as_secs_f64()),
            _ => None,
        }
    }

    /// The simulated network for one run. All randomness comes from one
    /// generator seeded with `seed`: first the cache preseeds in node
    /// order, then one seed per consumer flow.
    pub fn topology(&self, seed: u64) -> Topology {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut preseeds: Vec<Vec<_>> = Vec::new();
        for d in &self.nodes {
            let mut names = Vec::new();
            if let NodeDraft::Router {
                preseed: Some((flow, count, range, _)),
                ..
            } = d
            {
                let mut seqs: Vec<u64> = index::sample(&mut rng, *range as usize, *count as usize)
                    .into_iter()
                    .map(|s| s as u64)
                    .collect();
                seqs.sort_unstable();
                names = seqs.into_iter().map(|s| flow.packet(s)).collect();
            }
            preseeds.push(names);
        }
        let nodes = self
            .nodes
            .iter()
            .zip(preseeds)
            .zip(&self.labels)
            .map(|((d, preseed), label)| NodeSpec {
                label: label.clone(),
                kind: match d {
                    NodeDraft::Router { config, routes, preseed: draft } => NodeKind::Router {
                        config: config.clone(),
                        routes: routes.clone(),
                        preseed,
                        preseed_at: draft.as_ref().map_or(SimTime::ZERO, |p| p.3),
                    },
                    NodeDraft::Producer(catalog) => NodeKind::Producer {
                        catalog: catalog.clone(),
                    },
                    NodeDraft::Consumer(flows) => NodeKind::Consumer {
                        flows: flows
                            .iter()
                            .map(|(config, start, stop)| FlowSpec {
                                config: config.clone(),
                                seed: rng.random(),
                                start: *start,
                                stop: *stop,
                            })
                            .collect(),
                    },
                },
            })
            .collect();
        Topology {
            nodes,
            links: self.links.clone(),
            payload_bytes: self.payload_bytes,
        }
    }
}

fn check_flow(ctx: &Ctx, c: &FlowConfig, field: &dyn Fn(&str) -> String) -> Result<(), ConfigError> {
    if c.max_paths == 0 {
        return ctx.err(None, field("max_paths"), "must be at least 1");
    }
    positive(ctx, c.switch_period, field("switch_period"))?;
    positive(ctx, c.probe_rate, field("probe_rate"))?;
    positive(ctx, c.probe_timeout, field("probe_timeout"))?;
    positive(ctx, c.bw_interval, field("bw_interval"))?;
    positive(ctx, c.window.cwnd_min, field("cwnd_min"))?;
    if !(c.beta > 0.0 && c.beta < 1.0) {
        return ctx.err(None, field("beta"), "must lie in (0, 1)");
    }
    if !(c.bw_gain > 0.0 && c.bw_gain <= 1.0) {
        return ctx.err(None, field("bw_gain"), "must lie in (0, 1]");
    }
    if c.variance_window == 0 {
        return ctx.err(None, field("variance_window"), "must be at least 1");
    }
    if c.window.cwnd_init < c.window.cwnd_min {
        return ctx.err(None, field("cwnd_init"), "below cwnd_min");
    }
    if let Some(r) = c.rtt_reference {
        positive(ctx, r, field("rtt_reference"))?;
    }
    Ok(())
}
