pub mod capacity;
pub mod connectivity;
pub mod error;
pub mod green;
pub mod harness;
pub mod lattice;
pub mod rng;
pub mod schemes;
pub mod sampler;
pub mod spectral;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{Ball, BoxRegion, FiniteSet, PathSegment, Point, Region};
pub use rng::StreamId;
