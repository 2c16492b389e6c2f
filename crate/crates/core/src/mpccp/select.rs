//! Periodic in-use path selection.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Replace the slowest in-use path by a random unused one.
    #[default]
    Bandwidth,
    Random,
    Hop,
    Latency,
    LatencyVariance,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "bandwidth" => Strategy::Bandwidth,
            "random" => Strategy::Random,
            "hop" => Strategy::Hop,
            "latency" => Strategy::Latency,
            "latency_variance" => Strategy::LatencyVariance,
            _ => return Err(format!("unknown strategy {s:?}")),
        })
    }
}

/// What selection needs to know about one selectable (not disabled) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub in_use: bool,
    pub bandwidth: f64,
    pub hops: usize,
    pub latency: Option<f64>,
}

/// Sum of squared deviations from the window mean, for every window of
/// `w` consecutive sorted RTTs. One value per window start.
pub fn moving_variance(sorted_rtts: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || sorted_rtts.len() < w {
        return Vec::new();
    }
    (0..=sorted_rtts.len() - w)
        .map(|n| {
            let window = &sorted_rtts[n..n + w];
            let mean = window.iter().sum::<f64>() / w as f64;
            window.iter().map(|r| (r - mean).powi(2)).sum()
        })
        .collect()
}

fn latency_key(c: &Candidate) -> f64 {
    c.latency.unwrap_or(f64::INFINITY)
}

fn by_key(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Returns the ids that should be in use after a selection round.
pub fn select<R: Rng>(strategy: Strategy, cands: &[Candidate], n: usize, w: usize, rng: &mut R) -> Vec<usize> {
    let mut in_use: Vec<&Candidate> = cands.iter().filter(|c| c.in_use).collect();
    let mut unused: Vec<&Candidate> = cands.iter().filter(|c| !c.in_use).collect();
    let mut chosen: Vec<usize> = match strategy {
        Strategy::Bandwidth | Strategy::Random => {
            if !unused.is_empty() && !in_use.is_empty() && in_use.len() >= n {
                let victim = match strategy {
                    Strategy::Bandwidth => {
                        in_use.sort_by(|a, b| by_key(b.bandwidth, a.bandwidth).then(a.id.cmp(&b.id)));
                        in_use.len() - 1
                    }
                    _ => rng.random_range(0..in_use.len()),
                };
                let pick = rng.random_range(0..unused.len());
                in_use[victim] = unused.remove(pick);
            }
            in_use.iter().map(|c| c.id).collect()
        }
        Strategy::Hop => {
            let mut all: Vec<&Candidate> = cands.iter().collect();
            all.sort_by_key(|c| (c.hops, c.id));
            all.iter().take(n).map(|c| c.id).collect()
        }
        Strategy::Latency => {
            let mut all: Vec<&Candidate> = cands.iter().collect();
            all.sort_by(|a, b| by_key(latency_key(a), latency_key(b)).then(a.id.cmp(&b.id)));
            all.iter().take(n).map(|c| c.id).collect()
        }
        Strategy::LatencyVariance => {
            let mut measured: Vec<&Candidate> = cands.iter().filter(|c| c.latency.is_some()).collect();
            measured.sort_by(|a, b| by_key(latency_key(a), latency_key(b)).then(a.id.cmp(&b.id)));
            let rtts: Vec<f64> = measured.iter().map(|c| latency_key(c)).collect();
            let width = w.min(rtts.len());
            let sigma = moving_variance(&rtts, width);
            let start = sigma
                .iter()
                .enumerate()
                .min_by(|a, b| by_key(*a.1, *b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            measured
                .iter()
                .skip(start)
                .take(width.min(n))
                .map(|c| c.id)
                .collect()
        }
    };
    // top up to N when paths are missing
    if chosen.len() < n {
        let mut rest: Vec<usize> = cands.iter().map(|c| c.id).filter(|id| !chosen.contains(id)).collect();
        while chosen.len() < n && !rest.is_empty() {
            let pick = rng.random_range(0..rest.len());
            chosen.push(rest.remove(pick));
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(id: usize, in_use: bool, bandwidth: f64, hops: usize, latency: Option<f64>) -> Candidate {
        Candidate {
            id,
            in_use,
            bandwidth,
            hops,
            latency,
        }
    }

    #[test]
    fn lowest_bandwidth_is_replaced() {
        let cands = [
            cand(0, true, 10.0, 3, None),
            cand(1, true, 2.0, 3, None),
            cand(2, true, 7.0, 3, None),
            cand(3, false, 0.0, 3, None),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select(Strategy::Bandwidth, &cands, 3, 10, &mut rng), vec![0, 2, 3]);
    }

    #[test]
    fn nothing_unused_is_noop() {
        let cands = [cand(0, true, 1.0, 3, None), cand(1, true, 2.0, 3, None)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [Strategy::Bandwidth, Strategy::Random] {
            assert_eq!(select(s, &cands, 2, 10, &mut rng), vec![0, 1]);
        }
    }

    #[test]
    fn hop_prefers_short_tags() {
        let cands = [cand(0, true, 0.0, 4, None), cand(1, false, 0.0, 2, None)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select(Strategy::Hop, &cands, 1, 10, &mut rng), vec![1]);
    }

    #[test]
    fn latency_prefers_fast_paths() {
        let cands = [
            cand(0, true, 0.0, 2, Some(0.3)),
            cand(1, false, 0.0, 2, Some(0.1)),
            cand(2, false, 0.0, 2, None),
            cand(3, true, 0.0, 2, Some(0.2)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select(Strategy::Latency, &cands, 2, 10, &mut rng), vec![1, 3]);
    }

    #[test]
    fn variance_window_example() {
        let s = moving_variance(&[0.010, 0.010, 0.010, 0.050], 3);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], 0.0);
        assert!(s[1] > 0.0);
        let cands = [
            cand(0, true, 0.0, 2, Some(0.050)),
            cand(1, false, 0.0, 2, Some(0.010)),
            cand(2, false, 0.0, 2, Some(0.010)),
            cand(3, false, 0.0, 2, Some(0.010)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select(Strategy::LatencyVariance, &cands, 3, 3, &mut rng), vec![1, 2, 3]);
    }

    #[test]
    fn parse_names() {
        assert_eq!("latency_variance".parse::<Strategy>(), Ok(Strategy::LatencyVariance));
        assert!("fastest".parse::<Strategy>().is_err());
    }
}
