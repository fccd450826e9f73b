//! One-class learning with pairs of complementary subspace classifiers (BODS,
//! GODS and its variants, kernelized KODS), trained by Riemannian conjugate
//! gradient on Stiefel-type manifolds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod inference;
pub mod kernels;
pub mod kods;
pub mod linalg;
pub mod manifold;
pub mod persist;
pub mod primal;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
