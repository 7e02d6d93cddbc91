//! Sparse and block-sparse H2 state-feedback synthesis.

pub mod admm;
pub mod cli;
pub mod h2;
pub mod linalg;
pub mod model;
pub mod par;
pub mod path;
pub mod polish;
pub mod problems;
pub mod prox;
