pub mod diophantine;
pub mod error;
pub mod measures;
pub mod noise;
pub mod sde;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
