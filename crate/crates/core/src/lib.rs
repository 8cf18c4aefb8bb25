//! Event-based reconstruction of dynamic (4D) CT data.
//!
//! Each voxel is described by three parameters: an initial attenuation
//! `mu0`, a final attenuation `mu1` and the transition time `tstar` at which
//! it switches from one to the other. The reconstruction estimates these
//! directly from time-stamped projections instead of reconstructing a
//! sequence of frames.
//!
//! Units: lengths in mm, attenuation in 1/cm, time in rotation periods.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod baseline;
pub mod cli;
pub mod dyrect;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod params;
pub mod phantom;
pub mod projection;
pub mod projector;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{AcquisitionGeometry, Beam, Ray, View};
pub use grid::{ScalarField3, Vec3, VoxelGrid3};
pub use params::ReconParams;
pub use projection::ProjectionSet;
pub use volume::{sample_event_volume, EventVolume, WeightVolume};
