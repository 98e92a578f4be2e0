//! Finite-length analysis of belief-propagation decoding on the binary
//! erasure channel.
//!
//! For an irregular LDPC ensemble and a fixed number `t` of BP iterations,
//! the bit error probability behaves as
//! `Pb(n, eps, t) = Pb(inf, eps, t) + alpha(eps, t)/n + O(1/n^2)`.
//! This crate computes the coefficient `alpha(eps, t)` and everything
//! around it:
//!
//! * [`ensemble`] — degree distributions and ensemble parameters,
//! * [`density_evolution`] — the erasure-probability recursion, fixed
//!   points and the BP threshold,
//! * [`tree_contribution`] — the cycle-free part `beta(eps, t)`,
//! * [`cycle_contribution`] — the single-cycle part `gamma(eps, t)`,
//! * [`alpha_analysis`] — `alpha = beta + gamma` with cancellation
//!   control, the regular-ensemble direct form and the `t -> inf` limit,
//! * [`simulator`] — configuration-model sampling and Monte Carlo
//!   estimation of `Pb(n, eps, t)`,
//! * [`exact_oracle`] — exhaustive ground truth for tiny instances.

pub mod alpha_analysis;
pub mod cli;
pub mod cycle_contribution;
pub mod density_evolution;
pub mod ensemble;
pub mod exact_oracle;
pub mod real;
pub mod simulator;
pub mod tree_contribution;



pub use alpha_analysis::{alpha, alpha_limit, alpha_regular, xi, AlphaBreakdown};
pub use cycle_contribution::gamma;
pub use density_evolution::{evolve, fixed_point, threshold, DensityTrajectory, FixedPoint};
pub use ensemble::{DegreeDistribution, Ensemble, Perspective, Side};
pub use exact_oracle::{exact_pb_full, exact_pb_sampled, ExactResult};
pub use real::{MpReal, Real};
pub use simulator::{bp_decode, estimate_pb, sample_graph, SimResult, TannerGraph};
pub use tree_contribution::beta;


/// Errors produced by ensemble construction, graph sampling and the oracle.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("cannot parse degree distribution `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("degree counts not realizable at n = {n}: {reason}")]
    InfeasibleDegreeCounts { n: usize, reason: String },

    #[error("instance too large for exact enumeration: {0}")]
    OracleTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
