//! Constructive ReLU approximation of functions, functionals and operators,
//! DeepONet training, and scaling-law measurement.

pub mod approx_builder;
pub mod basis_quadrature;
pub mod cover_pou;
pub mod deeponet;
pub mod domain;
pub mod error;
pub mod problems;
pub mod relu_net;
pub mod scaling_lab;
pub mod theory_bounds;

pub use error::{Error, Result};
