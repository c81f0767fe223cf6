//! Cell-free massive MIMO downlink simulator with oscillator phase noise
//! and asynchronous reception.
//!
//! The crate is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the aliases at the bottom fix it to `f64`.

pub mod chanest;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mcsim;
pub mod netmodel;
pub mod phase;
pub mod rng;
pub mod scalar;
pub mod sedf;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type Scene = netmodel::NetworkScene<f64>;
pub type Phase = phase::PhaseParams<f64>;
pub type Stats = chanest::EstimationStats<f64>;
pub type Scenario = sedf::SeScenario<f64>;
