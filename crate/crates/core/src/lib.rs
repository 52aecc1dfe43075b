//! Cycle-level model of an event-driven convolutional spiking network
//! accelerator, plus a dense reference engine it is checked against.
//!
//! The event engine stores membrane potentials in nine interlaced columns so
//! that one input spike updates its whole 3x3 neighborhood in a single
//! cycle, and passes spikes between layers through per-column address event
//! queues.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aeq;
pub mod conv;
pub mod encoder;
pub mod fixed;
pub mod interlace;
pub mod metrics;
pub mod model;
pub mod scheduler;
pub mod spikes;
pub mod thresh;

pub use aeq::{AeqBank, AeqError, AeqStore, QueueEntry};
pub use conv::{ConvStats, ConvUnit, InterlacedMemory, PipelineMode, PreparedKernel};
pub use encoder::{encode, ThresholdSchedule};
pub use fixed::{SatFixed, Width};
pub use interlace::{build_neighbor_plans, FmapDims, InterlacedAddress, NeighborPlans};
pub use metrics::{LayerStats, NetworkStats};
pub use model::{dense_run, Classifier, DenseRun, KernelSize, LayerSpec, ModelError, NetworkSpec};
pub use scheduler::{run_network, EventRun, RunPlan, SimError};
pub use spikes::{Frame, SpikeMap};
pub use thresh::ThreshStats;
