use thiserror::Error;

use crate::forwarder::RouterConfig;
use crate::mpccp::FlowConfig;
use crate::names::{ContentName, FaceId, FlowName};
use crate::time::SimTime;

use super::link::LinkSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub prefix: FlowName,
    /// Neighbour nodes; every link to such a neighbour becomes a next hop.
    pub next_hops: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub config: FlowConfig,
    pub seed: u64,
    pub start: SimTime,
    pub stop: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Router {
        config: RouterConfig,
        routes: Vec<Route>,
        preseed: Vec<ContentName>,
        /// When the preseeded packets appear in the content store.
        preseed_at: SimTime,
    },
    Consumer {
        flows: Vec<FlowSpec>,
    },
    Producer {
        catalog: Vec<(FlowName, u64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub label: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub payload_bytes: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("link {link} references missing node {node}")]
    MissingNode { link: usize, node: usize },
    #[error("link {0} connects a node to itself")]
    SelfLoop(usize),
    #[error("link {0} has non-positive bandwidth")]
    BadBandwidth(usize),
    #[error("node {node}: route {prefix} names {hop}, which is not a neighbour")]
    NotNeighbour { node: String, prefix: String, hop: usize },
    #[error("node {node}: route {prefix} has no next hop")]
    EmptyRoute { node: String, prefix: String },
    #[error("consumer {0} must have exactly one link")]
    ConsumerFaces(String),
}

impl Topology {
    /// Faces of `node` in link declaration order: (link index, far end).
    pub fn faces(&self, node: usize) -> Vec<(usize, usize)> {
        self.links
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                if l.a == node {
                    Some((i, l.b))
                } else if l.b == node {
                    Some((i, l.a))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn faces_toward(&self, node: usize, neighbour: usize) -> Vec<FaceId> {
        self.faces(node)
            .iter()
            .enumerate()
            .filter(|(_, &(_, far))| far == neighbour)
            .map(|(f, _)| f as FaceId)
            .collect()
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for (i, l) in self.links.iter().enumerate() {
            for node in [l.a, l.b] {
                if node >= self.nodes.len() {
                    return Err(TopologyError::MissingNode { link: i, node });
                }
            }
            if l.a == l.b {
                return Err(TopologyError::SelfLoop(i));
            }
            if l.bandwidth_bps.is_nan() || l.bandwidth_bps <= 0.0 {
                return Err(TopologyError::BadBandwidth(i));
            }
        }
        for (n, spec) in self.nodes.iter().enumerate() {
            match &spec.kind {
                NodeKind::Router { routes, .. } => {
                    for r in routes {
                        if r.next_hops.is_empty() {
                            return Err(TopologyError::EmptyRoute {
                                node: spec.label.clone(),
                                prefix: r.prefix.to_string(),
                            });
                        }
                        for &hop in &r.next_hops {
                            if self.faces_toward(n, hop).is_empty() {
                                return Err(TopologyError::NotNeighbour {
                                    node: spec.label.clone(),
                                    prefix: r.prefix.to_string(),
                                    hop,
                                });
                            }
                        }
                    }
                }
                NodeKind::Consumer { .. } => {
                    if self.faces(n).len() != 1 {
                        return Err(TopologyError::ConsumerFaces(spec.label.clone()));
                    }
                }
                NodeKind::Producer { .. } => {}
            }
        }
        Ok(())
    }
}
