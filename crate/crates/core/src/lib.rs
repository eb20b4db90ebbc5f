//! Approximately Koopman-invariant subspaces by principal-vector pruning.
//!
//! A dictionary of observables is lifted onto snapshot data; the subspace it
//! spans is compared with its one-step image through principal angles, and the
//! principal vector with the largest angle is removed until the invariance
//! proximity `sin theta_max` drops below a tolerance. The rank-one driver
//! updates the principal sines with a secular-equation eigen-update and the
//! image basis with an incremental QR, instead of recomputing from scratch.

pub mod bench;
pub mod data;
pub mod dictionary;
pub mod edmd;
pub mod eig_update;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod pruning;

pub use data::{simulate, DuffingParams, TrajectoryDataset};
pub use dictionary::{build_dictionary, Dictionary, DictionarySpec, Observable};
pub use edmd::{fit_edmd, koopman_eigenfunctions, lift, EdmdModel, LiftedData};
pub use error::{Error, Result};
pub use pruning::{run_pruning, PruneConfig, PruneMethod, PruneReport};
