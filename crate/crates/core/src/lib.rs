pub mod cli;
pub mod error;
pub mod expr;
pub mod fixedpoint;
pub mod grid;
pub mod holder;
pub mod linsolve;
pub mod quasilin;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
