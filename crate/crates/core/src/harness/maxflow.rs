use std::collections::VecDeque;

use petgraph::algo::ford_fulkerson;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use petgraph::Direction::{Incoming, Outgoing};

use crate::names::FlowName;
use crate::netsim::{NodeKind, Topology};

const UNBOUNDED: f64 = 1e18;
const EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub value_bps: f64,
    /// Saturated links separating the producers from the consumer, as
    /// (link, direction) in the Data direction.
    pub cut: Vec<(usize, usize)>,
}

/// Max-flow of Data towards `consumer` over the links its Interests can
/// be routed on.
pub fn max_flow(topo: &Topology, consumer: usize, flow: &FlowName) -> MaxFlow {
    let n = topo.nodes.len();
    let mut g: DiGraph<(), f64> = DiGraph::new();
    let idx: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    let source = g.add_node(());
    // edge index -> (link, direction)
    let mut edge_link: Vec<Option<(usize, usize)>> = Vec::new();
    let cap = |bw: f64| if bw.is_finite() { bw } else { UNBOUNDED };
    let add = |g: &mut DiGraph<(), f64>, edge_link: &mut Vec<_>, from: usize, to: usize, link: usize| {
        let l = &topo.links[link];
        let dir = if l.a == from { 0 } else { 1 };
        g.add_edge(idx[from], idx[to], cap(l.bandwidth_bps));
        edge_link.push(Some((link, dir)));
    };

    for (node, spec) in topo.nodes.iter().enumerate() {
        match &spec.kind {
            NodeKind::Router { routes, .. } => {
                let best = routes
                    .iter()
                    .filter(|r| r.prefix.is_prefix_of(flow))
                    .max_by_key(|r| r.prefix.len());
                if let Some(r) = best {
                    for &hop in &r.next_hops {
                        for (link, far) in topo.faces(node) {
                            if far == hop {
                                add(&mut g, &mut edge_link, hop, node, link);
                            }
                        }
                    }
                }
            }
            NodeKind::Producer { catalog } => {
                if catalog.iter().any(|(f, _)| f == flow) {
                    g.add_edge(source, idx[node], UNBOUNDED);
                    edge_link.push(None);
                }
            }
            NodeKind::Consumer { .. } => {}
        }
    }
    for (link, far) in topo.faces(consumer) {
        add(&mut g, &mut edge_link, far, consumer, link);
    }

    let (value, flows) = ford_fulkerson(&g, source, idx[consumer]);

    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([source]);
    seen[source.index()] = true;
    while let Some(u) = queue.pop_front() {
        let forward = g
            .edges_directed(u, Outgoing)
            .filter(|e| flows[e.id().index()] < *e.weight() - EPS)
            .map(|e| e.target());
        let backward = g
            .edges_directed(u, Incoming)
            .filter(|e| flows[e.id().index()] > EPS)
            .map(|e| e.source());
        let next: Vec<NodeIndex> = forward.chain(backward).collect();
        for v in next {
            if !seen[v.index()] {
                seen[v.index()] = true;
                queue.push_back(v);
            }
        }
    }
    let mut cut: Vec<(usize, usize)> = g
        .edge_indices()
        .filter(|&e| {
            let (a, b) = g.edge_endpoints(e).unwrap();
            seen[a.index()] && !seen[b.index()]
        })
        .filter_map(|e| edge_link[e.index()])
        .collect();
    cut.sort_unstable();
    cut.dedup();
    MaxFlow {
        value_bps: value.min(UNBOUNDED),
        cut,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forwarder::RouterConfig;
    use crate::netsim::{LinkSpec, NodeSpec, Route};
    use crate::time::SimTime;

    fn diamond(bw: [f64; 4]) -> Topology {
        let f: FlowName = "/x".parse().unwrap();
        let router = |hops: Vec<usize>| NodeKind::Router {
            config: RouterConfig::default(),
            routes: vec![Route {
                prefix: "/".parse().unwrap(),
                next_hops: hops,
            }],
            preseed: vec![],
            preseed_at: SimTime::ZERO,
        };
        let node = |k| NodeSpec {
            label: String::new(),
            kind: k,
        };
        Topology {
            nodes: vec![
                node(NodeKind::Consumer { flows: vec![] }),
                node(router(vec![2, 3])),
                node(router(vec![4])),
                node(router(vec![4])),
                node(NodeKind::Producer {
                    catalog: vec![(f, 10)],
                }),
            ],
            links: vec![
                LinkSpec::new(0, 1, 100.0, SimTime::ZERO),
                LinkSpec::new(1, 2, bw[0], SimTime::ZERO),
                LinkSpec::new(1, 3, bw[1], SimTime::ZERO),
                LinkSpec::new(2, 4, bw[2], SimTime::ZERO),
                LinkSpec::new(4, 3, bw[3], SimTime::ZERO),
            ],
            payload_bytes: 1,
        }
    }

    #[test]
    fn two_branches() {
        let m = max_flow(&diamond([5.0, 7.0, 3.0, 9.0]), 0, &"/x".parse().unwrap());
        assert!((m.value_bps - 10.0).abs() < 1e-9);
        // 4->2 (3) is the tight link on the upper branch, 3->1 (7) on the lower
        assert_eq!(m.cut, vec![(2, 1), (3, 1)]);
    }

    #[test]
    fn access_link_bounds() {
        let mut t = diamond([50.0; 4]);
        t.links[0].bandwidth_bps = 20.0;
        let m = max_flow(&t, 0, &"/x".parse().unwrap());
        assert!((m.value_bps - 20.0).abs() < 1e-9);
        assert_eq!(m.cut, vec![(0, 1)]);
    }

    #[test]
    fn unknown_flow_is_zero() {
        let m = max_flow(&diamond([1.0; 4]), 0, &"/y".parse().unwrap());
        assert_eq!(m.value_bps, 0.0);
    }
}
