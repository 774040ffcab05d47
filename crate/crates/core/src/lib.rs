#![no_std]
extern crate alloc;

pub mod bcd;
pub mod beamforming;
pub mod convex;
pub mod efficiency;
pub mod error;
pub mod geometry;
pub mod link;
pub mod resource;
pub mod scenario;
pub mod trajectory;

pub use error::{Error, Result};
pub use scenario::Scenario;
