use super::*;

const CHAIN: &str = r#"
name = "chain"
duration = 4.0
seed = 3

[defaults]
latency_ms = 5.0

[[node]]
id = "c"
kind = "consumer"
[[node.flow]]
name = "/f"
packets = 200

[[node]]
id = "r"
kind = "router"
routes = { "/f" = ["p"] }

[[node]]
id = "p"
kind = "producer"
catalog = { "/f" = "unbounded" }

[[link]]
a = "c"
b = "r"
bandwidth_kbps = 5000.0

[[link]]
a = "r"
b = "p"
bandwidth_kbps = 1000.0
"#;

#[test]
fn builtins_parse() {
    assert_eq!(builtin_names().count(), 7);
    for (name, text) in BUILTINS {
        let sc = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&sc.name, name);
        assert!(sc.warmup < sc.duration);
    }
}

#[test]
fn unknown_field_reports_line() {
    let text = CHAIN.replace("bandwidth_kbps = 1000.0", "bandwidth_kbps = 1000.0\nbandwith = 3");
    let e = Scenario::parse(&text).unwrap_err();
    let line = text.lines().position(|l| l.starts_with("bandwith")).unwrap() + 1;
    assert_eq!(e.line, Some(line), "{e}");
    assert!(e.message.contains("bandwith"), "{e}");
}

#[test]
fn unknown_node_reference_names_field() {
    let text = CHAIN.replace(r#"["p"]"#, r#"["q"]"#);
    let e = Scenario::parse(&text).unwrap_err();
    assert!(e.field.contains("routes"), "{e}");
    assert!(e.message.contains("\"q\""), "{e}");
    assert!(e.line.is_some());
}

#[test]
fn bad_values_rejected() {
    for (from, to) in [
        ("duration = 4.0", "duration = -1.0"),
        ("bandwidth_kbps = 1000.0", "bandwidth_kbps = 0.0"),
        ("duration = 4.0", "duration = 4.0\nwarmup = 9.0"),
        (r#"kind = "router""#, r#"kind = "switch""#),
    ] {
        assert!(Scenario::parse(&CHAIN.replace(from, to)).is_err(), "{to}");
    }
}

#[test]
fn overrides_apply() {
    let sc = Scenario::parse_with(CHAIN, &["seed=11".into(), "link.1.bandwidth_kbps=250".into()]).unwrap();
    assert_eq!(sc.seed, 11);
    assert_eq!(sc.links[1].bandwidth_bps, 250e3);
    let e = Scenario::parse_with(CHAIN, &["link.7.a=x".into()]).unwrap_err();
    assert!(e.field.contains("link.7.a"), "{e}");
    assert!(Scenario::parse_with(CHAIN, &["novalue".into()]).is_err());
}

#[test]
fn unknown_scenario_lists_builtins() {
    let e = load("no-such-scenario", &[]).unwrap_err();
    assert!(e.is_config());
    assert!(e.to_string().contains("scenario1_case1"), "{e}");
}

#[test]
fn chain_saturates_and_writes_files() {
    let text = CHAIN.replace("packets = 200", "packets = \"unbounded\"");
    let out = run(&Scenario::parse(&text).unwrap()).unwrap();
    assert_eq!(out.topology.nodes.len(), 3);
    let u = utilization(&out.report, 2, 1).unwrap();
    assert!(u > 90.0 && u <= 100.0 + 1e-9, "{u}");
    assert_eq!(utilization(&out.report, 0, 1), Some(0.0));
    assert!(utilization(&out.report, 0, 2).is_none());
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    for f in ["report.txt", "links.csv", "flows.csv", "paths.csv", "routers.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn idle_scenario_has_zero_utilization() {
    let text = CHAIN.replace("packets = 200", "packets = 200\nstart = 100.0");
    let out = run(&Scenario::parse(&text).unwrap()).unwrap();
    for l in 0..out.topology.links.len() {
        for d in 0..2 {
            assert_eq!(out.report.utilization(l, d, 0.0, 4.0), 0.0);
        }
    }
    assert!(matches!(
        fairness_ratio(&out.report, 0, 0, 0.0, 4.0),
        Err(HarnessError::ZeroTraffic)
    ));
}

#[test]
fn fairness_ratio_sums_to_hundred() {
    let out = run_scenario("scenario3", &["duration=20".into(), "warmup=2".into()]).unwrap();
    let (a, b) = fairness_ratio(&out.report, 0, 1, 5.0, 20.0).unwrap();
    assert!((a + b - 100.0).abs() < 1e-9);
    assert!(a > 0.0 && b > 0.0);
}
