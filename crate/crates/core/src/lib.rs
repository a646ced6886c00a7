//! Bit-exact signed fixed-point arithmetic and overflow-freedom analysis.

pub mod analysis;
pub mod bitstream;
pub mod fixedpoint;
pub mod rational;
pub mod simulation;

pub use bitstream::{Bit, BitStream, BitStreamError, Terminal};
pub use fixedpoint::{FixedPointError, FixedPointSpec, OverflowMode, Sign, SignedFixedPoint};
pub use rational::Rational;
