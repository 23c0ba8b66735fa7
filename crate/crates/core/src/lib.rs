pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod lattice;
pub mod resolvent;
pub mod tridiag;
pub mod cyclotomic;
pub mod separation;
pub mod cluster;
pub mod harness;
