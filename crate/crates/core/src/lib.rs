//! Simulation of entanglement-based clock synchronisation: two-level atomic
//! clocks, heralded distribution of entangled atom pairs, the start and
//! readout protocol, and fringe-based frequency comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atom;
pub mod config;
pub mod estimation;
pub mod format;
pub mod link;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod scenario;

pub use estimation::{fit_fringe, Estimate, FringeDataset, FringePoint};
pub use link::{generate_pairs, ChannelModel, Ensemble, LinkOptions};
pub use quantum::{ClockConfig, DensityMatrix, StateVector};
pub use rng::{SimRng, StreamSeed};
