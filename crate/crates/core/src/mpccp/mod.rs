//! Consumer-side multipath transport: probing, per-path windows with
//! linked increase, cache-aware loss detection and path selection.

mod consumer;
pub mod law;
mod path;
pub mod rtt;
pub mod select;

pub use consumer::{Consumer, FlowConfig, FlowStats, Output, PathSnapshot, PhaseChange, Timer};
pub use law::RttScaling;
pub use path::{Path, PathStatus, Phase, SendRecord, WindowParams};
pub use rtt::RttEstimator;
pub use select::Strategy;

#[cfg(test)]
mod tests;
