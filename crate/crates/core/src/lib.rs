//! Flexibility area estimation for distribution networks at the TSO-DSO
//! interface: power-flow sampling, OPF boundary tracing and the
//! convolution-based estimator with tensor-train storage.
//!
//! Grids, tensors and estimator runs are generic over [`scalar::Scalar`];
//! the aliases below fix the scalar for the common cases.

pub mod conv;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod network;
pub mod offers;
pub mod opf;
pub mod output;
pub mod pf;
pub mod report;
pub mod run;
pub mod scalar;
pub mod settings;
pub mod study;
pub mod tcp;
pub mod tt;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FaGrid64 = grid::FaGrid<f64>;
pub type FaGrid32 = grid::FaGrid<f32>;
pub type OffsetTensor64 = conv::OffsetTensor<f64>;
pub type OffsetTensor32 = conv::OffsetTensor<f32>;
pub type TtTensor64 = tt::TtTensor<f64>;
pub type TtTensor32 = tt::TtTensor<f32>;
pub type TcpRun64 = tcp::TcpRun<f64>;
pub type TcpRun32 = tcp::TcpRun<f32>;
pub type AdaptRun64 = tcp::AdaptRun<f64>;
