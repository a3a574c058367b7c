//! Optimal inlet metering for road networks modelled as linear
//! compartmental systems.
//!
//! [`graph`] holds the road network, [`dynamics`] the routing model and the
//! resulting `ẋ = Ax + Bu`, [`kernel`] the matrix exponential and the
//! state/co-state propagation, [`qp`] the per-step inlet allocation, and
//! [`sweep`] the forward-backward iteration tying them together.
//! [`scenario`] and [`export`] handle file input and CSV output.

mod dd;

pub mod dynamics;
pub mod export;
pub mod graph;
pub mod kernel;
pub mod qp;
pub mod scenario;
pub mod sweep;
