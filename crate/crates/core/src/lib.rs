//! Certification of output differential passivity (ODP) for bus-level
//! devices, from models or from measured trajectories, and a distributed
//! small-signal stability verdict for networks of certified devices.

pub mod cli;
pub mod devices;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod network;
pub mod odp;
pub mod pipeline;
pub mod trajectory;

pub use error::{Error, Result};
