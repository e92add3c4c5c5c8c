//! Input-to-state stability toolkit: comparison functions, gain operators and
//! small-gain checks, monotone discrete-time systems, Ω-paths with composite
//! Lyapunov functions, discretized 1-D evolution models, and linear systems.

pub mod cli;
pub mod compfun;
pub mod error;
pub mod gainops;
pub mod linstab;
pub mod monotone_dt;
pub mod netlyap;
pub mod ode;
pub mod pdelab;
pub mod trajectory;

pub use error::{Error, Result};
