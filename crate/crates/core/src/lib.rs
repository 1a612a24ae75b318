//! Dwell-time stability certificates for linear parameter-varying systems.

pub mod poly;
pub mod sdp;
pub mod sos;
pub mod model;
pub mod stability;
pub mod sim;
