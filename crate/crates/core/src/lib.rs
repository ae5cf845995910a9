//! Estimation of space-time varying parameters over sensor networks.
//!
//! Every node `k` observes `d_k(i) = u_{k,i} h_k + v_k(i)` where the local
//! parameter `h_k` varies smoothly over space. The field is expanded in a
//! shifted Chebyshev basis, `h_k = B_k w` with `B_k = I_M ⊗ b_kᵀ`, so the
//! network only has to agree on the global coefficient vector `w`.
//!
//! The crate is organised bottom-up:
//!
//! * [`basis`] evaluates the basis and the per-node interpolation matrices.
//! * [`pde_model`] generates ground truth and synthetic measurement streams.
//! * [`network`] builds topologies and combination matrices.
//! * [`estimators`] implements centralized LMS, general diffusion LMS and ATC.
//! * [`theory`] predicts mean and mean-square behaviour in closed form.
//!
//! [`scenario::Scenario`] ties a concrete problem together and is what both
//! the estimators and the theory consume.

pub mod basis;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod network;
pub mod pde_model;
pub mod rng;
pub mod scenario;
pub mod theory;

pub use error::{Error, Result};
