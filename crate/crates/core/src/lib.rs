//! Numerical laboratory for the Hopf normal form with additive noise,
//! `dZ = (A Z − |Z|² B Z) dt + σ dW`.
//!
//! The core is generic over the floating-point type through [`Scalar`]; the
//! aliases below fix it to `f64`, which every experiment uses.

pub mod attractor;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = model::Params<f64>;
pub type State = linalg::State<f64>;
pub type Mat2 = linalg::Mat2<f64>;
pub type WienerPath = noise::WienerPath<f64>;
pub type NoiseStream = noise::NoiseStream<f64>;
pub type Trajectory = flow::Trajectory<f64>;
pub type TangentFlow = flow::TangentFlow<f64>;
pub type Cloud = attractor::Cloud<f64>;
pub type Numerics = numerics::Numerics<f64>;
pub type FtleSample = lyapunov::FtleSample<f64>;
