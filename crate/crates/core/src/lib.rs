//! Tensor-network simulation of the mobile toric code ladder: DMRG ground
//! states, Monte-Carlo error-correction trajectories whose circuit depth acts
//! as an order parameter, leg entanglement entropies, and the fits that turn
//! depth curves into critical-point estimates.
//!
//! Sites are addressed by chain position throughout; see [`lattice`].

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod dmrg;
pub mod ed;
pub mod eigensolver;
pub mod lattice;
pub mod mpo;
pub mod mps;
pub mod parallel;
pub mod pipeline;
pub mod sampler;
pub mod tee;
pub mod tensor;
