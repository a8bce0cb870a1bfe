//! Convolution/pooling primitives, a small convolutional classifier and the
//! rotated/skewed region search that extracts one spatial tuple per frame.

pub mod conv;
pub mod dataset;
pub mod geometry;
pub mod net;
pub mod render;
pub mod search;

pub use conv::{convolve2d, pool, Kernel};
pub use geometry::{iou, BoxGeom};
pub use net::{ConvNet, Sample, TrainConfig, BACKGROUND};
pub use render::Shape;
pub use search::{
    extract_tuple, propose_regions, sample_region, score_region, SearchGrid, SpatialTuple,
};
