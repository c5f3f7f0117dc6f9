//! Multi-task regularized kernel support vector machines.
//!
//! Tasks `t = 1..T` share a feature space; each task's classifier is
//! `sgn f_t` where `f_t = f₀ + g_t` splits into a component shared by all
//! tasks and a task-private one. Training minimizes
//!
//! ```text
//! Σ_t Σ_i ξ_it + λ₁ Σ_t (m_t/N) ‖g_t‖²_K + λ₂ ‖f₀‖²_K
//! ```
//!
//! over a Gaussian RKHS, with `ξ_it` the hinge slack of sample `i` of task
//! `t` and `m_t/N` the observed task frequency.
//!
//! The crate is organized as
//!
//! * [`kernel`]: Gaussian kernel, coupled multi-task kernel, Gram matrices;
//! * [`data`]: datasets, synthetic generators with exact `η_t`, CSV files;
//! * [`solver`]: dual coordinate ascent, trained models, objective identities;
//! * [`risk`]: misclassification, hinge and empirical risks, excess-risk
//!   decomposition, and finite Bayes-rule enumeration;
//! * [`experiments`]: reproducible studies of convergence, task interaction,
//!   frequency error and solver identities.

pub mod data;
mod error;
pub mod experiments;
pub mod kernel;
mod quadrature;
pub mod risk;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
