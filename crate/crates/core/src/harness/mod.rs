//! Scenario loading, runs, derived metrics and assertion checks.

mod config;
mod maxflow;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::mpccp::Phase;
use crate::netsim::{SimError, Simulation, Topology};
use crate::time::SimTime;

pub use config::{
    apply_override, CacheExpect, ConfigError, Expectations, FairnessExpect, FlowOverrides, FlowRef, GoodputExpect,
    LinkExpect, MaxFlowExpect, Scenario, DEFAULT_INTERVAL, DEFAULT_PAYLOAD, DEFAULT_WARMUP_FRACTION,
};
pub use maxflow::{max_flow, MaxFlow};

pub const BUILTINS: &[(&str, &str)] = &[
    ("scenario1_case1", include_str!("../../scenarios/scenario1_case1.toml")),
    ("scenario1_case2", include_str!("../../scenarios/scenario1_case2.toml")),
    ("scenario2_case1", include_str!("../../scenarios/scenario2_case1.toml")),
    ("scenario2_case2", include_str!("../../scenarios/scenario2_case2.toml")),
    ("scenario3", include_str!("../../scenarios/scenario3.toml")),
    ("scenario4", include_str!("../../scenarios/scenario4.toml")),
    ("scenario5", include_str!("../../scenarios/scenario5.toml")),
];

/// Congestion phase changes a path may make.
pub const PHASE_EDGES: [(Phase, Phase); 6] = [
    (Phase::SlowStart, Phase::CongestionAvoidance),
    (Phase::SlowStart, Phase::FastRecovery),
    (Phase::CongestionAvoidance, Phase::FastRecovery),
    (Phase::FastRecovery, Phase::CongestionAvoidance),
    (Phase::CongestionAvoidance, Phase::SlowStart),
    (Phase::FastRecovery, Phase::SlowStart),
];

/// Length of the windows the post-cache plateau is checked over.
const PLATEAU_WINDOW: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("unknown scenario {name:?}; built-in scenarios: {}", builtin_names().collect::<Vec<_>>().join(", "))]
    UnknownScenario { name: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no traffic in the measured window")]
    ZeroTraffic,
}

impl HarnessError {
    /// Whether the error stems from bad input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::UnknownScenario { .. } | HarnessError::Io { .. } | HarnessError::Sim(_))
    }
}

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Loads a built-in scenario by name, or a scenario file by path.
pub fn load(name_or_path: &str, overrides: &[String]) -> Result<Scenario, HarnessError> {
    let text = match builtin(name_or_path) {
        Some(t) => t.to_string(),
        None => {
            let path = Path::new(name_or_path);
            if !path.is_file() {
                return Err(HarnessError::UnknownScenario {
                    name: name_or_path.to_string(),
                });
            }
            std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.to_path_buf(),
                source,
            })?
        }
    };
    Ok(Scenario::parse_with(&text, overrides)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub scenario: Scenario,
    pub topology: Topology,
    pub report: MetricsReport,
    pub checks: Vec<Check>,
    /// Wall-clock budget check, kept apart so report files stay reproducible.
    pub wall_check: Option<Check>,
    pub wall: Duration,
    pub events: u64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().chain(&self.wall_check).all(|c| c.passed)
    }

    pub fn report_text(&self) -> String {
        let sc = &self.scenario;
        let mut s = String::new();
        writeln!(s, "scenario {} (seed {}, {} s)", sc.name, sc.seed, sc.duration).unwrap();
        if !sc.description.is_empty() {
            writeln!(s, "{}", sc.description).unwrap();
        }
        s.push_str(&self.report.summary());
        writeln!(s, "checks:").unwrap();
        for c in &self.checks {
            writeln!(s, "  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail).unwrap();
        }
        s
    }

    /// Writes report.txt and the CSV series into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let files = [
            ("report.txt", self.report_text()),
            ("links.csv", self.report.links_csv()),
            ("flows.csv", self.report.flows_csv()),
            ("paths.csv", self.report.paths_csv()),
            ("routers.csv", self.report.routers_csv()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| HarnessError::Io { path, source })?;
        }
        Ok(())
    }
}

/// Runs a parsed scenario and evaluates its expectations.
pub fn run(sc: &Scenario) -> Result<Outcome, HarnessError> {
    let topology = sc.topology(sc.seed);
    let mut sim = Simulation::new(&topology, SimTime::from_secs_f64(sc.metrics_interval))?;
    for (at, action) in &sc.scripts {
        sim.schedule(SimTime::from_secs_f64(*at), action.clone())?;
    }
    let t0 = Instant::now();
    sim.run(SimTime::from_secs_f64(sc.duration));
    let wall = t0.elapsed();
    let report = sim.report(sc.warmup);
    let checks = evaluate(sc, &topology, &report);
    let wall_check = sc.expect.max_wall_secs.map(|limit| {
        let secs = wall.as_secs_f64();
        Check::new("wall clock", secs < limit, format!("{secs:.2} s (limit {limit} s)"))
    });
    Ok(Outcome {
        scenario: sc.clone(),
        topology,
        report,
        checks,
        wall_check,
        wall,
        events: sim.events_processed(),
    })
}

pub fn run_scenario(name_or_path: &str, overrides: &[String]) -> Result<Outcome, HarnessError> {
    run(&load(name_or_path, overrides)?)
}

/// Percentage shares of two flows' combined goodput over `[from, to)`.
pub fn fairness_ratio(report: &MetricsReport, a: usize, b: usize, from: f64, to: f64) -> Result<(f64, f64), HarnessError> {
    let ga = report.flow_goodput(a, from, to);
    let gb = report.flow_goodput(b, from, to);
    let total = ga + gb;
    if total <= 0.0 {
        return Err(HarnessError::ZeroTraffic);
    }
    Ok((100.0 * ga / total, 100.0 * gb / total))
}

/// Utilization of the Data direction `from → to` over the measurement window.
pub fn utilization(report: &MetricsReport, from: usize, to: usize) -> Option<f64> {
    let (link, dir) = report.link_by_nodes(from, to)?;
    let (a, b) = report.window();
    Some(report.utilization(link, dir, a, b))
}

fn band(v: f64, min: Option<f64>, max: Option<f64>) -> bool {
    min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m)
}

fn evaluate(sc: &Scenario, topo: &Topology, rep: &MetricsReport) -> Vec<Check> {
    let (w0, w1) = rep.window();
    let mut checks = Vec::new();
    let e = &sc.expect;
    let idx = |label: &str| sc.node_index(label).unwrap();

    for l in &e.link {
        let (link, dir) = rep.link_by_nodes(idx(&l.from), idx(&l.to)).unwrap();
        let util = rep.utilization(link, dir, w0, w1);
        let kbps = rep.link_throughput(link, dir, w0, w1) / 1e3;
        let ok = band(util, l.min_pct, l.max_pct) && band(kbps, l.min_kbps, None);
        checks.push(Check::new(
            format!("link {}->{}", l.from, l.to),
            ok,
            format!(
                "{kbps:.1} Kbps, {util:.2}% (want pct in [{}, {}], Kbps >= {})",
                l.min_pct.map_or("-".into(), |v| v.to_string()),
                l.max_pct.map_or("-".into(), |v| v.to_string()),
                l.min_kbps.map_or("-".into(), |v| v.to_string())
            ),
        ));
    }

    if let Some(f) = &e.fairness {
        let from = f.from.unwrap_or(sc.duration / 2.0);
        let (a, b) = (sc.flow_index(&f.a).unwrap(), sc.flow_index(&f.b).unwrap());
        checks.push(match fairness_ratio(rep, a, b, from, sc.duration) {
            Ok((sa, sb)) => Check::new(
                "fairness",
                band(sa, Some(f.min_pct), Some(f.max_pct)) && band(sb, Some(f.min_pct), Some(f.max_pct)),
                format!("{sa:.1}:{sb:.1} over {from}..{} s (want each in [{}, {}])", sc.duration, f.min_pct, f.max_pct),
            ),
            Err(err) => Check::new("fairness", false, err.to_string()),
        });
    }

    for m in &e.max_flow {
        let node = idx(&m.consumer.node);
        let flow = &sc.flow_config(&m.consumer).unwrap().flow;
        let mf = max_flow(topo, node, flow);
        let carried: f64 = mf.cut.iter().map(|&(l, d)| rep.link_throughput(l, d, w0, w1)).sum();
        let ratio = if mf.value_bps > 0.0 { carried / mf.value_bps } else { 0.0 };
        let cut: Vec<String> = mf
            .cut
            .iter()
            .map(|&(l, d)| {
                let s = &rep.links[l].dirs[d];
                format!("{}->{}", sc.labels[s.from], sc.labels[s.to])
            })
            .collect();
        checks.push(Check::new(
            format!("max-flow {}", m.consumer.node),
            ratio >= m.min_ratio,
            format!(
                "{:.1} of {:.1} Kbps over cut [{}] = {:.2}% (want >= {}%)",
                carried / 1e3,
                mf.value_bps / 1e3,
                cut.join(" "),
                100.0 * ratio,
                100.0 * m.min_ratio
            ),
        ));
    }

    for g in &e.goodput {
        let f = sc.flow_index(&g.consumer).unwrap();
        let kbps = rep.flow_goodput(f, g.from, g.to) / 1e3;
        checks.push(Check::new(
            format!("goodput {} {}..{} s", g.consumer.node, g.from, g.to),
            band(kbps, g.min_kbps, g.max_kbps),
            format!("{kbps:.1} Kbps"),
        ));
    }

    if let Some(c) = &e.cache {
        checks.extend(cache_checks(sc, rep, c));
    }

    let mut bad = Vec::new();
    for f in &rep.flows {
        for p in &f.phase_log {
            if !PHASE_EDGES.contains(&(p.from, p.to)) {
                bad.push(format!("{}->{} at {:.3}", p.from, p.to, p.time));
            }
        }
    }
    let changes: usize = rep.flows.iter().map(|f| f.phase_log.len()).sum();
    checks.push(Check::new(
        "phase edges",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{changes} transitions, all allowed")
        } else {
            format!("disallowed: {}", bad.join(", "))
        },
    ));

    let mut worst: f64 = 0.0;
    for l in &rep.links {
        if l.bandwidth_bps.is_infinite() {
            continue;
        }
        for d in &l.dirs {
            for bits in &d.bits {
                worst = worst.max(100.0 * bits / (l.bandwidth_bps * rep.interval));
            }
        }
    }
    checks.push(Check::new(
        "link capacity",
        worst <= 100.0 + 1e-6,
        format!("busiest bucket {worst:.2}%"),
    ));
    checks
}

fn cache_checks(sc: &Scenario, rep: &MetricsReport, c: &CacheExpect) -> Vec<Check> {
    let router = sc.node_index(&c.router).unwrap();
    let r = rep.routers.iter().find(|r| r.node == router).unwrap();
    let flow = sc.flow_index(&c.consumer).unwrap();
    let start = sc.flow_start(&c.consumer).unwrap();
    let Some(exhausted) = r.last_preseed_hit else {
        return vec![Check::new("cache exhausted", false, "no cached packet was ever served")];
    };
    let high = rep.flow_goodput(flow, start + c.ramp, exhausted) / 1e3;
    let mut checks = vec![Check::new(
        "cached plateau",
        high >= c.high_min_kbps,
        format!(
            "{high:.1} Kbps over {:.1}..{exhausted:.1} s, {} of {} cached packets served (want >= {})",
            start + c.ramp,
            r.preseeded_served,
            r.preseeded_total,
            c.high_min_kbps
        ),
    )];
    let mut t = exhausted + c.settle;
    let mut worst: Option<(f64, f64)> = None;
    let mut windows = 0;
    while t + PLATEAU_WINDOW <= sc.duration + 1e-9 {
        let kbps = rep.flow_goodput(flow, t, t + PLATEAU_WINDOW) / 1e3;
        windows += 1;
        if !band(kbps, Some(c.low_min_kbps), Some(c.low_max_kbps)) && worst.is_none() {
            worst = Some((t, kbps));
        }
        t += PLATEAU_WINDOW;
    }
    let low = rep.flow_goodput(flow, exhausted + c.settle, sc.duration) / 1e3;
    checks.push(Check::new(
        "uncached plateau",
        windows > 0 && worst.is_none(),
        match worst {
            None => format!(
                "{low:.1} Kbps mean from {:.1} s, all {windows} one-second windows in [{}, {}]",
                exhausted + c.settle,
                c.low_min_kbps,
                c.low_max_kbps
            ),
            Some((t, k)) => format!("{k:.1} Kbps in window at {t:.1} s (want [{}, {}])", c.low_min_kbps, c.low_max_kbps),
        },
    ));
    checks
}

#[cfg(test)]
mod tests;
