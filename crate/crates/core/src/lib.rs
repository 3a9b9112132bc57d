//! Reset-control loop shaping for lightly damped resonant plants.
//!
//! The crate covers the linear building blocks ([`lti`]), reset elements
//! and their hybrid stepping ([`reset`]), higher-order sinusoidal-input
//! describing functions and dual-loop harmonic analysis ([`hosidf`]), CgLp
//! and shaping-filter synthesis ([`tuning`]), a synthetic modal plant
//! ([`plant`]) and a fixed-step closed-loop simulator ([`sim`]).

mod error;
mod poly;

pub mod hosidf;
pub mod lti;
pub mod plant;
pub mod reset;
pub mod sim;
pub mod tuning;

pub use error::{Error, Result};
pub use lti::{FrfPoint, RationalTf};
