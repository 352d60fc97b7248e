//! Safety filters built from control barrier functions.
//!
//! A nominal control law (LQR or sliding-mode tracking) is passed through a
//! small quadratic program that returns the input closest to the nominal one
//! while respecting one or more barrier constraints. High relative-degree
//! barriers are enforced either with a pole-placement exponential CBF or with
//! a sliding-mode CBF that tolerates bounded model uncertainty.
//!
//! The crate also carries the two benchmark plants (a Furuta pendulum and a
//! three-magnet levitation plate), a fixed-step closed-loop simulator, the
//! built-in experiment catalogue and the writers for the run artifacts.

pub mod barrier;
pub mod error;
pub mod experiments;
pub mod nominal;
pub mod output;
pub mod plants;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
