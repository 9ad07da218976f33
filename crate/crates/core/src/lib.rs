//! Performance analysis for platforms whose PMU sampling support is
//! missing or defective.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`platform`] identifies the core from its identification registers and
//!   exposes the capability/event database.
//! * [`sampling`] plans counter groups (including the proxy-leader workaround
//!   for cores whose cycle/instret counters cannot raise overflow interrupts)
//!   and produces [`SampleRecord`]s from a live or replayed session.
//! * [`hotspots`] folds samples into stacks, renders flame graphs and builds
//!   per-function IPC tables.
//! * [`roofline_runtime`] is the runtime linked into instrumented programs.
//! * [`roofline_analysis`] coordinates the baseline/instrumented run pair and
//!   turns the reports into roofline points, classifications and plots.
//!
//! Real-valued results are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the common instantiations.

pub mod hotspots;
pub mod platform;
pub mod roofline_analysis;
pub mod roofline_runtime;
pub mod sampling;
mod scalar;

pub use scalar::Scalar;

pub use hotspots::{FoldedStack, Symbolizer};
pub use platform::{CpuIdentity, EventDescriptor, PlatformDb, PlatformProfile};
pub use roofline_runtime::{LoopCounters, LoopInfo, LoopRecord, Phase, RunReport};
pub use sampling::{EventRequest, GroupPlan, SampleRecord};

pub type HotspotEntryF32 = hotspots::HotspotEntry<f32>;
pub type HotspotEntryF64 = hotspots::HotspotEntry<f64>;
pub type MachineModelF32 = roofline_analysis::MachineModel<f32>;
pub type MachineModelF64 = roofline_analysis::MachineModel<f64>;
pub type RooflinePointF32 = roofline_analysis::RooflinePoint<f32>;
pub type RooflinePointF64 = roofline_analysis::RooflinePoint<f64>;
pub type BoundClassF32 = roofline_analysis::BoundClass<f32>;
pub type BoundClassF64 = roofline_analysis::BoundClass<f64>;
