use std::cmp::Reverse;
use std::collections::BinaryHeap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::names::{Data, FlowName, Interest, Nack, NackReason, Tag};
use crate::time::SimTime;

fn flow() -> FlowName {
    "/f".parse().unwrap()
}

fn t(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

fn interests(out: &[Output]) -> Vec<Interest> {
    out.iter()
        .filter_map(|o| match o {
            Output::Interest(i) => Some(i.clone()),
            _ => None,
        })
        .collect()
}

fn seqs_on(out: &[Output], tag: &Tag) -> Vec<u64> {
    interests(out)
        .into_iter()
        .filter(|i| !i.probe && i.tag.as_ref() == Some(tag))
        .map(|i| i.name.sequence().unwrap())
        .collect()
}

fn producer_data(seq: u64) -> Data {
    Data::new(flow().packet(seq), 1024)
}

fn cache_data(seq: u64) -> Data {
    let mut d = producer_data(seq);
    d.from_intermediate = true;
    d
}

fn tag(faces: &[u32]) -> Tag {
    Tag::from_stack(faces.to_vec())
}

/// One path, fresh consumer started at 0 with `cwnd` windows in CA.
fn single_path(cwnd: f64) -> (Consumer, Vec<Output>) {
    let mut c = Consumer::new(FlowConfig::new(flow(), 10_000), 7);
    c.add_path(tag(&[1]));
    c.path_mut(0).cwnd = cwnd;
    c.path_mut(0).phase = Phase::CongestionAvoidance;
    let out = c.start(t(0.0));
    (c, out)
}

#[test]
fn fresh_windows_split_by_path() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 100), 1);
    let a = tag(&[1]);
    let b = tag(&[2]);
    c.add_path(a.clone());
    c.add_path(b.clone());
    c.path_mut(0).cwnd = 3.0;
    c.path_mut(1).cwnd = 2.0;
    let out = c.start(t(0.0));
    assert_eq!(seqs_on(&out, &a), vec![0, 1, 2]);
    assert_eq!(seqs_on(&out, &b), vec![3, 4]);
    c.check_invariants().unwrap();
}

#[test]
fn retransmissions_go_first() {
    let (mut c, out) = single_path(3.0);
    assert_eq!(seqs_on(&out, &tag(&[1])), vec![0, 1, 2]);
    // Data for 2 reveals 0 and 1 lost and leaves a window of 2.5; the
    // start-up probe already took 3
    let out = c.on_data(t(0.1), &producer_data(2));
    let sent = seqs_on(&out, &tag(&[1]));
    assert_eq!(sent, vec![0, 1, 4]);
    assert_eq!(c.paths()[0].phase, Phase::FastRecovery);
    c.check_invariants().unwrap();
}

#[test]
fn full_window_sends_nothing() {
    let (mut c, out) = single_path(1.0);
    assert_eq!(seqs_on(&out, &tag(&[1])), vec![0]);
    let out = c.on_timer(t(0.1), Timer::Bandwidth { epoch: 1 });
    assert!(seqs_on(&out, &tag(&[1])).is_empty());
}

#[test]
fn in_order_ca_grows_by_eq_increment() {
    let (mut c, _) = single_path(10.0);
    c.on_data(t(0.1), &producer_data(0));
    assert!((c.paths()[0].cwnd - 10.1).abs() < 1e-12);
    assert_eq!(c.paths()[0].phase, Phase::CongestionAvoidance);
}

#[test]
fn gap_triggers_loss() {
    let (mut c, _) = single_path(20.0);
    c.on_data(t(0.1), &producer_data(0));
    let before = c.paths()[0].cwnd;
    c.on_data(t(0.1), &producer_data(2));
    let p = &c.paths()[0];
    let grown = before + 1.0 / before;
    assert!((p.cwnd - 0.75 * grown).abs() < 1e-12);
    assert_eq!(p.phase, Phase::FastRecovery);
    assert_eq!(p.cwnd_bk, p.cwnd);
    assert_eq!(p.losses, 1);
    assert_eq!(c.stats().loss_events, 1);
    c.check_invariants().unwrap();
}

#[test]
fn cache_data_out_of_order_is_not_loss() {
    let (mut c, _) = single_path(20.0);
    c.on_data(t(0.01), &cache_data(5));
    c.on_data(t(0.01), &cache_data(7));
    assert_eq!(c.paths()[0].phase, Phase::CongestionAvoidance);
    assert_eq!(c.stats().loss_events, 0);
    assert_eq!(c.stats().cache_data, 2);
}

#[test]
fn cache_data_never_moves_rto() {
    let (mut c, _) = single_path(20.0);
    c.on_data(t(0.1), &producer_data(0));
    let rto = c.paths()[0].rtt.rto;
    for s in 1..15 {
        c.on_data(t(3.0 + s as f64), &cache_data(s));
    }
    assert_eq!(c.paths()[0].rtt.rto, rto);
}

#[test]
fn slow_start_counts_cache_additively() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 100), 1);
    c.add_path(tag(&[1]));
    c.start(t(0.0));
    c.on_data(t(0.01), &cache_data(0));
    assert!((c.paths()[0].cwnd - 2.5).abs() < 1e-12);
    c.on_data(t(0.1), &producer_data(1));
    assert!((c.paths()[0].cwnd - 3.5).abs() < 1e-12);
    assert_eq!(c.paths()[0].phase, Phase::SlowStart);
}

#[test]
fn slow_start_exits_at_threshold() {
    let mut cfg = FlowConfig::new(flow(), 100);
    cfg.window.ssthresh_init = 4.0;
    let mut c = Consumer::new(cfg, 1);
    c.add_path(tag(&[1]));
    c.start(t(0.0));
    c.on_data(t(0.1), &producer_data(0));
    assert_eq!(c.paths()[0].phase, Phase::SlowStart);
    c.on_data(t(0.1), &producer_data(1));
    assert_eq!(c.paths()[0].phase, Phase::CongestionAvoidance);
    let edges: Vec<_> = c.phase_log().iter().map(|e| (e.from, e.to)).collect();
    assert_eq!(edges, vec![(Phase::SlowStart, Phase::CongestionAvoidance)]);
}

#[test]
fn recovery_exits_after_backup_window() {
    let (mut c, out) = single_path(4.0);
    let mut wire: std::collections::VecDeque<u64> = seqs_on(&out, &tag(&[1])).into();
    wire.pop_front();
    let mut delivered = 0;
    while c.paths()[0].phase != Phase::CongestionAvoidance || delivered == 0 {
        let seq = wire.pop_front().unwrap();
        let out = c.on_data(t(0.1), &producer_data(seq));
        wire.extend(seqs_on(&out, &tag(&[1])));
        delivered += 1;
        if delivered == 1 {
            assert_eq!(c.paths()[0].phase, Phase::FastRecovery);
        }
    }
    // the loss-revealing Data, then ceil(cwnd_bk) = 4 clean ones
    assert_eq!(delivered, 5);
    assert_eq!(c.stats().loss_events, 1);
}

#[test]
fn second_loss_in_recovery_restores_backup() {
    let (mut c, _) = single_path(8.0);
    c.on_data(t(0.1), &producer_data(1));
    let bk = c.paths()[0].cwnd_bk;
    c.on_data(t(0.1), &producer_data(3));
    let p = &c.paths()[0];
    assert_eq!(p.cwnd, bk);
    assert_eq!(p.phase, Phase::FastRecovery);
    assert_eq!(c.stats().loss_events, 2);
}

#[test]
fn timeout_forces_slow_start() {
    for phase in [Phase::CongestionAvoidance, Phase::FastRecovery] {
        let (mut c, out) = single_path(12.0);
        c.path_mut(0).phase = phase;
        let rto = out
            .iter()
            .find_map(|o| match o {
                Output::Timer {
                    timer: timer @ Timer::Rto { seq: 0, .. },
                    ..
                } => Some(*timer),
                _ => None,
            })
            .unwrap();
        c.on_timer(t(1.0), rto);
        let p = &c.paths()[0];
        assert_eq!(p.phase, Phase::SlowStart);
        assert_eq!(p.cwnd, 1.0);
        assert_eq!(p.ssthresh, 6.0);
        assert_eq!(p.rtt.rto, 2.0);
        c.check_invariants().unwrap();
    }
}

#[test]
fn burst_of_timeouts_reacts_once() {
    let (mut c, out) = single_path(12.0);
    let timers: Vec<Timer> = out
        .iter()
        .filter_map(|o| match o {
            Output::Timer {
                timer: timer @ Timer::Rto { .. },
                ..
            } => Some(*timer),
            _ => None,
        })
        .collect();
    assert_eq!(timers.len(), 12);
    for tm in timers {
        c.on_timer(t(1.0), tm);
    }
    assert_eq!(c.paths()[0].ssthresh, 6.0);
    assert_eq!(c.stats().timeouts, 12);
}

#[test]
fn stale_rto_is_ignored() {
    let (mut c, _) = single_path(4.0);
    c.on_data(t(0.1), &producer_data(0));
    c.on_timer(t(1.0), Timer::Rto { seq: 0, send_id: 1 });
    assert_eq!(c.stats().timeouts, 0);
}

#[test]
fn nack_disables_and_promotes() {
    let mut cfg = FlowConfig::new(flow(), 1000);
    cfg.max_paths = 2;
    let mut c = Consumer::new(cfg, 3);
    for f in 1..=3 {
        c.add_path(tag(&[f]));
    }
    assert_eq!(c.paths()[2].status, PathStatus::Unused);
    c.start(t(0.0));
    let nack = Nack {
        name: flow().packet(0),
        reason: NackReason::PathFailure,
    };
    let out = c.on_nack(t(0.05), &nack);
    assert_eq!(c.paths()[0].status, PathStatus::Disabled);
    assert_eq!(c.paths()[2].status, PathStatus::InUse);
    assert_eq!(c.in_use().count(), 2);
    assert_eq!(seqs_on(&out, &tag(&[3]))[0], 0);
    c.check_invariants().unwrap();
}

#[test]
fn nack_without_spare_keeps_going() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 1000), 3);
    c.add_path(tag(&[1]));
    c.add_path(tag(&[2]));
    c.start(t(0.0));
    c.on_nack(
        t(0.05),
        &Nack {
            name: flow().packet(0),
            reason: NackReason::NoRoute,
        },
    );
    assert_eq!(c.in_use().collect::<Vec<_>>(), vec![1]);
    // path 1 carries 2 and 3; once 2 returns the orphaned 0 and 1 follow
    let out = c.on_data(t(0.1), &producer_data(2));
    assert_eq!(seqs_on(&out, &tag(&[2])), vec![0, 1]);
}

#[test]
fn all_paths_down_then_reprobe_resets() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 1000), 3);
    c.add_path(tag(&[1]));
    c.path_mut(0).cwnd = 30.0;
    c.start(t(0.0));
    c.on_nack(
        t(0.05),
        &Nack {
            name: flow().packet(0),
            reason: NackReason::PathFailure,
        },
    );
    assert_eq!(c.in_use().count(), 0);
    // probes keep running and collect the orphaned sequences first
    let out = c.on_timer(t(0.1), Timer::Probe { epoch: 1 });
    let probe = interests(&out).into_iter().find(|i| i.probe).unwrap();
    let seq = probe.name.sequence().unwrap();
    assert_eq!(seq, 0);
    let mut reply = producer_data(seq);
    reply.tag = Some(tag(&[1]));
    let out = c.on_data(t(0.2), &reply);
    assert_eq!(c.paths()[0].status, PathStatus::InUse);
    assert_eq!(c.paths()[0].cwnd, 2.0);
    assert_eq!(c.reset_log(), &[(0.2, 0)]);
    assert_eq!(seqs_on(&out, &tag(&[1])).len(), 2);
    c.check_invariants().unwrap();
}

#[test]
fn probes_register_paths_once() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 1000), 3);
    let out = c.start(t(0.0));
    let probe = interests(&out).into_iter().find(|i| i.probe).unwrap();
    assert_eq!(probe.tag, Some(Tag::new()));
    let mut reply = producer_data(0);
    reply.tag = Some(tag(&[4, 2]));
    c.on_data(t(0.1), &reply);
    assert_eq!(c.paths().len(), 1);
    assert_eq!(c.paths()[0].hops(), 2);
    assert!(c.is_received(0));
    let out = c.on_timer(t(0.1), Timer::Probe { epoch: 1 });
    let probe = interests(&out).into_iter().find(|i| i.probe).unwrap();
    let mut reply = producer_data(probe.name.sequence().unwrap());
    reply.tag = Some(tag(&[4, 2]));
    c.on_data(t(0.2), &reply);
    assert_eq!(c.paths().len(), 1);
}

#[test]
fn ten_probes_per_second() {
    let mut c = Consumer::new(FlowConfig::new(flow(), 1_000_000), 3);
    let mut queue: Vec<(SimTime, Timer)> = Vec::new();
    let mut probes = 0;
    let push = |out: Vec<Output>, probes: &mut usize, q: &mut Vec<(SimTime, Timer)>| {
        for o in out {
            match o {
                Output::Interest(i) if i.probe => *probes += 1,
                Output::Timer {
                    at,
                    timer: timer @ Timer::Probe { .. },
                } => q.push((at, timer)),
                _ => {}
            }
        }
    };
    push(c.start(t(0.0)), &mut probes, &mut queue);
    while let Some((at, timer)) = queue.pop() {
        if at >= t(1.0) {
            break;
        }
        push(c.on_timer(at, timer), &mut probes, &mut queue);
    }
    assert_eq!(probes, 10);
}

#[test]
fn two_packet_mode_needs_two_arrivals() {
    let mut cfg = FlowConfig::new(flow(), 1000);
    cfg.two_packet_loss = true;
    let mut c = Consumer::new(cfg, 1);
    c.add_path(tag(&[1]));
    c.path_mut(0).cwnd = 10.0;
    c.path_mut(0).phase = Phase::CongestionAvoidance;
    c.start(t(0.0));
    c.on_data(t(0.1), &producer_data(3));
    assert_eq!(c.stats().loss_events, 0);
    c.on_data(t(0.1), &producer_data(0));
    assert_eq!(c.stats().loss_events, 0);
    c.on_data(t(0.1), &producer_data(5));
    // arrivals at 0 then 5: only records before 0 are judged
    assert_eq!(c.stats().loss_events, 0);
    c.on_data(t(0.1), &producer_data(6));
    // arrivals at 5 then 6: 1, 2 and 4 are still missing
    assert_eq!(c.stats().loss_events, 1);
    assert_eq!(c.paths()[0].losses, 3);
}

#[test]
fn one_packet_mode_is_default() {
    let (mut c, _) = single_path(10.0);
    c.on_data(t(0.1), &producer_data(3));
    assert_eq!(c.stats().loss_events, 1);
}

#[test]
fn duplicates_and_strangers_counted() {
    let (mut c, _) = single_path(4.0);
    c.on_data(t(0.1), &producer_data(0));
    c.on_data(t(0.1), &producer_data(0));
    assert_eq!(c.stats().duplicates, 1);
    c.on_data(t(0.1), &Data::new("/g/1".parse().unwrap(), 10));
    c.on_data(t(0.1), &producer_data(9999));
    assert_eq!(c.stats().stale, 2);
}

#[test]
fn selection_replaces_slowest() {
    let mut cfg = FlowConfig::new(flow(), 1000);
    cfg.max_paths = 2;
    let mut c = Consumer::new(cfg, 1);
    for f in 1..=3 {
        c.add_path(tag(&[f]));
    }
    c.path_mut(0).bandwidth = 5.0;
    c.path_mut(1).bandwidth = 1.0;
    c.start(t(0.0));
    c.on_timer(t(10.0), Timer::Select { epoch: 1 });
    let statuses: Vec<_> = c.paths().iter().map(|p| p.status).collect();
    assert_eq!(statuses, vec![PathStatus::InUse, PathStatus::Unused, PathStatus::InUse]);
    assert_eq!(c.snapshots().len(), 3);
    c.check_invariants().unwrap();
}

enum Ev {
    Data(Data),
    Timer(Timer),
}

/// Toy network: each Interest is lost with probability `drop`, else its
/// Data returns after a random delay. Probes come back on one of `tags`.
fn run_lossy(seed: u64, total: u64, drop: f64, tags: u32, two_packet: bool) -> Consumer {
    let mut cfg = FlowConfig::new(flow(), total);
    cfg.two_packet_loss = two_packet;
    let mut c = Consumer::new(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut heap: BinaryHeap<Reverse<(SimTime, usize)>> = BinaryHeap::new();
    let mut events: Vec<Option<Ev>> = Vec::new();
    let mut pending = c.start(SimTime::ZERO);
    let mut now = SimTime::ZERO;
    loop {
        for o in pending.drain(..) {
            let (at, ev) = match o {
                Output::Timer { at, timer } => (at, Ev::Timer(timer)),
                Output::Interest(i) => {
                    if rng.random_bool(drop) {
                        continue;
                    }
                    let mut d = Data::new(i.name.clone(), 1024);
                    if i.probe {
                        d.tag = Some(tag(&[rng.random_range(0..tags)]));
                    }
                    (now + SimTime::from_secs_f64(rng.random_range(0.01..0.05)), Ev::Data(d))
                }
            };
            events.push(Some(ev));
            heap.push(Reverse((at, events.len() - 1)));
        }
        c.check_invariants().unwrap();
        if c.is_complete() || now > t(900.0) {
            break;
        }
        let Some(Reverse((at, id))) = heap.pop() else {
            break;
        };
        now = at;
        pending = match events[id].take().unwrap() {
            Ev::Data(d) => c.on_data(now, &d),
            Ev::Timer(tm) => c.on_timer(now, tm),
        };
    }
    c
}

const EDGES: [(Phase, Phase); 6] = [
    (Phase::SlowStart, Phase::CongestionAvoidance),
    (Phase::SlowStart, Phase::FastRecovery),
    (Phase::CongestionAvoidance, Phase::FastRecovery),
    (Phase::FastRecovery, Phase::CongestionAvoidance),
    (Phase::CongestionAvoidance, Phase::SlowStart),
    (Phase::FastRecovery, Phase::SlowStart),
];

#[test]
fn lossless_run_completes_without_losses() {
    let c = run_lossy(1, 500, 0.0, 2, false);
    assert!(c.is_complete());
    assert_eq!(c.paths().len(), 2);
    assert_eq!(c.stats().timeouts, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_sequence_arrives_once(seed in any::<u64>(), drop in 0.0f64..0.3, tags in 1u32..4, two in any::<bool>()) {
        let total = 300;
        let c = run_lossy(seed, total, drop, tags, two);
        prop_assert!(c.is_complete());
        prop_assert!((0..total).all(|s| c.is_received(s)));
        prop_assert_eq!(c.stats().received, total);
        for e in c.phase_log() {
            prop_assert!(EDGES.contains(&(e.from, e.to)), "edge {:?}", e);
        }
    }
}
