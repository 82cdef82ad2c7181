//! Exact enumeration of Rashomon partition sets over factorial feature
//! spaces, with posterior summaries and simulation tooling.

pub mod analysis;
pub mod enumerate;
pub mod error;
pub mod hasse;
pub mod io;
pub mod loss;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
