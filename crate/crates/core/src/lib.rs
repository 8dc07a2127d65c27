//! Sinkhorn-divergence barycenters of discrete measures by particle descent.
//!
//! The barycenter of a set of weighted point clouds is found by moving the
//! support of a candidate measure along the negative functional gradient of
//! the average Sinkhorn divergence, with the gradient taken in a
//! vector-valued RKHS. The crate provides:
//!
//! - [`measures`]: discrete measures, ground costs, the RBF kernel, seeded
//!   generators, and CSV/PNG ingestion;
//! - [`sinkhorn`]: log-domain dual potential solvers, entropic transport
//!   costs, the Sinkhorn divergence, and potential gradients;
//! - [`descent`]: the particle descent loop, its kernelized stationarity
//!   diagnostic, and step-size machinery;
//! - [`fw`]: the grid-search conditional-gradient baseline for `d <= 3`;
//! - [`experiments`]: canned experiment setups and run persistence.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops
//! on rayon. Parallel and sequential builds produce bit-identical results:
//! every floating-point reduction is sequential within one output slot.

mod numeric;
mod par;

pub mod descent;
pub mod experiments;
pub mod fw;
pub mod measures;
pub mod sinkhorn;

pub use par::configure_threads;

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
