//! Joint unicast / multi-group multicast cell-free massive MIMO.
//!
//! The crate covers the whole downlink pipeline:
//!
//! * [`netgen`] draws AP/user geometry and correlated-shadowing large-scale gains,
//! * [`chanstats`] turns the gains into MMSE estimation statistics,
//! * [`sinr`] evaluates the closed-form use-and-then-forget SINR/SE,
//! * [`penalty`] and [`project`] build the penalized objective over the
//!   convex set of soft powers and soft associations,
//! * [`apg`] runs the nonmonotone accelerated projected gradient solver,
//! * [`oracle`] validates the closed forms by simulating small-scale fading,
//! * [`bench`] runs seeded Monte-Carlo experiments and the baseline schemes.

pub mod apg;
pub mod bench;
pub mod chanstats;
pub mod error;
pub mod netgen;
pub mod oracle;
pub mod penalty;
pub mod project;
pub mod sinr;

pub use error::{Error, Result};
