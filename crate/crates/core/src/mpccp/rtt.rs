/// Smoothed RTT and retransmission timeout in the usual TCP style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttEstimator {
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub rto: f64,
    min_rto: f64,
    max_rto: f64,
}

pub const INITIAL_RTO: f64 = 1.0;
pub const MIN_RTO: f64 = 0.2;
pub const MAX_RTO: f64 = 60.0;

impl Default for RttEstimator {
    fn default() -> Self {
        RttEstimator::new(INITIAL_RTO, MIN_RTO)
    }
}

impl RttEstimator {
    pub fn new(initial_rto: f64, min_rto: f64) -> Self {
        RttEstimator {
            srtt: None,
            rttvar: 0.0,
            rto: initial_rto,
            min_rto,
            max_rto: MAX_RTO,
        }
    }

    pub fn sample(&mut self, rtt: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = rtt / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - rtt).abs();
                self.srtt = Some(0.875 * s + 0.125 * rtt);
            }
        }
        let s = self.srtt.unwrap();
        // the floor bounds the variance margin, so a jitter-free path never
        // times out at exactly its own round trip
        self.rto = (s + (4.0 * self.rttvar).max(self.min_rto)).min(self.max_rto);
    }

    pub fn backoff(&mut self) {
        self.rto = (self.rto * 2.0).min(self.max_rto);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sample_sets_variance_half() {
        let mut e = RttEstimator::default();
        assert_eq!(e.rto, 1.0);
        e.sample(0.1);
        assert_eq!(e.srtt, Some(0.1));
        assert!((e.rto - 0.3).abs() < 1e-12);
    }

    #[test]
    fn floor_applies_to_margin() {
        let mut e = RttEstimator::default();
        for _ in 0..200 {
            e.sample(0.01);
        }
        assert!((e.rto - (0.01 + MIN_RTO)).abs() < 1e-9);
        e.backoff();
        assert!((e.rto - 2.0 * (0.01 + MIN_RTO)).abs() < 1e-9);
        for _ in 0..200 {
            e.sample(0.5);
        }
        assert!(e.rto > 0.5 + MIN_RTO - 1e-9);
    }

    #[test]
    fn variance_dominates_when_large() {
        let mut e = RttEstimator::default();
        e.sample(1.0);
        // rttvar 0.5, margin 2.0
        assert!((e.rto - 3.0).abs() < 1e-12);
    }
}
