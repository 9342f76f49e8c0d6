pub mod coefgp;
pub mod config;
pub mod data;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod neighborhood;
pub mod simulators;
mod optim;
pub mod svdmodel;
pub mod timing;

pub use error::{Error, Result};
