//! Adaptive finite element solver for parameter identification in a
//! semilinear elliptic equation by an all-at-once generalized Gauss-Newton
//! method with goal-oriented error estimation.

// tensor-product loops over 3x3 coefficient arrays read better with indices
#![allow(clippy::needless_range_loop)]

pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod subsolver;
pub mod estimators;
pub mod driver;
pub mod baseline;
pub mod theory;
pub mod config;
pub mod io;
pub mod cli;
