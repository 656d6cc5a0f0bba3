//! Generalized MCMC convergence diagnostics.
//!
//! Chains over any state space (real vectors, binary matrices, partitions)
//! are reduced to univariate chains by choosing a distance between states
//! and a proximity map that places the unique draws on the real line. The
//! usual traceplot, effective sample size and potential scale reduction
//! factor are then computed on the mapped chains.
//!
//! ```
//! use gendiag::{build_chain_set, run_generalized_diagnostic, Chain, DiagnosticOptions,
//!     DistanceSpec, DrawState, MapChoice, TourStart};
//!
//! let chains = (0..2)
//!     .map(|c| Chain::new(c, (0..20).map(|i| DrawState::scalar((i % 5) as f64 + c as f64)).collect()))
//!     .collect();
//! let cs = build_chain_set(chains).unwrap();
//! let report = run_generalized_diagnostic(
//!     &cs,
//!     &DistanceSpec::Euclidean,
//!     &MapChoice::NearestNeighbor { start: TourStart::Index(0) },
//!     DiagnosticOptions::default(),
//! )
//! .unwrap();
//! assert!(report.psrf.unwrap() >= 1.0);
//! ```

pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod io;
pub mod proximity;
pub mod sampler;
pub mod state;

pub use diagnostics::{
    band_overlap, ess, psrf, run_generalized_diagnostic, traceplot_table, DiagnosticOptions, DiagnosticReport,
    EssResult, MapChoice, Psrf, TraceRow,
};
pub use distance::{
    euclidean, hamming, mh_distance, pairwise_matrix, DistanceSpec, LogDensity, LogProposal, PairwiseDistanceMatrix,
    PoolDistances, StateDistance,
};
pub use error::{Error, Result};
pub use proximity::{
    apply_map, cut_point_select, lanfear_map, nn_map, nn_tour, MapKind, MappedChainSet, ProximityMap, Tour, TourStart,
};
pub use sampler::{
    kl_binned, mh_run, synthetic_discrete_chains, GaussianMixture1D, ProposalFamily, ScenarioSpec, SyntheticKind,
    SyntheticSpec,
};
pub use state::{build_chain_set, canonicalize, coassociation, BinaryMatrix, Chain, ChainSet, DrawState, StateShape};
