//! Resource-impact indicators for distributed data-processing workloads.
//!
//! Measures how much a workload's runtime responds to a faster CPU, a faster disk, a faster
//! network or an in-memory dataset, and ranks the four resources by that sensitivity.
//!
//! * [`model`]: experiment designs, run records and the runtime matrix.
//! * [`indicators`]: CRI, DRI, NRI and MRI, plus bottleneck ranking.
//! * [`diagnosis`]: utilization-versus-indicator findings.
//! * [`simulator`]: synthetic workloads with known ground truth, and the scale model.
//! * [`orchestrator`]: run plans, frequency control and plan execution.
//! * [`report`]: ingestion, aggregation and rendering.

pub mod diagnosis;
pub mod indicators;
pub mod model;
pub mod orchestrator;
pub mod report;
pub mod simulator;
