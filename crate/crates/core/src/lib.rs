//! Road blind-spot label generation from driving sequences.
//!
//! Given per-frame depth, semantic labels and camera poses, [`pipeline`]
//! marks the road regions hidden in frame `t` that come into view within the
//! next `T` frames. [`synthworld`] renders box-and-plane scenes with exact
//! inputs and ray-cast ground truth; [`align`], [`losses`] and [`eval`] cover
//! depth alignment, training losses and the evaluation protocol.

pub mod align;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod overlay;
pub mod pipeline;
pub mod raster;
pub mod sequence;
pub mod synthworld;

pub use error::{Error, Result};
