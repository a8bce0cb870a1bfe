//! Neuromorphic smart-camera toolkit.
//!
//! Three processing stages share the crate:
//!
//! * [`reservoir`]: echo-state network filtering (channel equalization by
//!   inverse modeling),
//! * [`spatial`]: convolutional classification plus a rotated/skewed region
//!   search producing one [`spatial::SpatialTuple`] per frame,
//! * [`temporal`]: HTM-style sequence memory that predicts each motion
//!   variable and scores anomalies,
//!
//! plus [`hardware`] emulation of the neuron primitives and the
//! [`pipeline`] that wires everything together behind the CLI.

pub mod error;
pub mod frame;
pub mod hardware;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod reservoir;
pub mod rng;
pub mod series;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};
pub use frame::Frame;
pub use linalg::Matrix;
pub use rng::RngStream;
pub use series::TimeSeries;
