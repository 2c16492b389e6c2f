pub mod fib;
pub mod forwarder;
pub mod harness;
pub mod mpccp;
pub mod metrics;
pub mod names;
pub mod netsim;
pub mod time;

pub use time::SimTime;
