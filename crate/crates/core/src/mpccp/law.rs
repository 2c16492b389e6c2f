//! Linked-increase window laws. Windows are in packets, RTTs in seconds.

/// Coupling parameter over the in-use paths:
/// `total * max(cwnd/rtt^2) / (sum(cwnd/rtt))^2`.
pub fn alpha(cwnds: &[f64], rtts: &[f64]) -> f64 {
    assert_eq!(cwnds.len(), rtts.len());
    assert!(!cwnds.is_empty(), "alpha over no paths");
    let total: f64 = cwnds.iter().sum();
    let mut best = 0.0f64;
    let mut denom = 0.0;
    for (&w, &r) in cwnds.iter().zip(rtts) {
        best = best.max(w / (r * r));
        denom += w / r;
    }
    total * best / (denom * denom)
}

/// Per-Data additive increment for path `p`.
///
/// `rtt_ratio` is the RTT multiplier applied in front of the clamp
/// (path RTT over reference RTT by default, see [`RttScaling`]).
pub fn increment(cwnds: &[f64], rtts: &[f64], p: usize, rtt_ratio: f64) -> f64 {
    let a = alpha(cwnds, rtts);
    let total: f64 = cwnds.iter().sum();
    rtt_ratio * (a / total).min(1.0 / cwnds[p])
}

pub fn decrease(cwnd: f64, beta: f64, cwnd_min: f64) -> f64 {
    (beta * cwnd).max(cwnd_min)
}

/// Which way the RTT multiplier of the increase points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RttScaling {
    /// rtt_p / rtt_mu
    #[default]
    PathOverReference,
    /// rtt_mu / rtt_p
    ReferenceOverPath,
}

impl RttScaling {
    pub fn ratio(self, rtt_p: f64, rtt_mu: f64) -> f64 {
        match self {
            RttScaling::PathOverReference => rtt_p / rtt_mu,
            RttScaling::ReferenceOverPath => rtt_mu / rtt_p,
        }
    }
}
