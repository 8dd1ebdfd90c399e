//! Local density estimation for scalar SDEs with rough coefficients.
//!
//! The crate localizes an SDE `dX = μ(X)dt + σ(X)dW` around a window
//! `[ξ−δ, ξ+δ]`, simulates it by Euler–Maruyama, estimates the localized
//! characteristic function in Lamperti coordinates, bounds its decay, and
//! recovers a local density by discrete Fourier inversion.

pub mod bounds;
pub mod charfn;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod invert;
pub mod lamperti;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, Result};
