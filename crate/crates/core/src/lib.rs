//! Spectral initialization for compressive phase retrieval.
//!
//! The library recovers starting points for sparse phase retrieval from
//! noisy magnitude-only Gaussian measurements `y_i = |<a_i, x>| + eta_i`.
//! Its centerpiece is a truncated weighted spectral operator whose leading
//! s-sparse eigenvector (computed by sparse-PCA iterations) aligns with the
//! normalized signal; scaling by the amplitude-mean norm estimate yields the
//! initial vector. Alongside the main method the crate provides the
//! non-truncated variant, reconstructions of the ThWF/SPARTA/CoPRAM spectral
//! initializers, random initialization, CoPRAM-style alternating-minimization
//! refinement, brute-force verification of the generative-prior guarantees on
//! toy Lipschitz models, and a seeded experiment harness with CSV output.

pub mod error;
pub mod generative;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod refine;
pub mod rng;
pub mod selftest;
pub mod signals;
pub mod spca;
pub mod spectral;

pub use error::{Error, Result};
pub use generative::{GenOptResult, GenerativeModel, LatentNet};
pub use harness::{
    relative_error, run_experiment, summarize, ExperimentConfig, ExperimentKind, GenToyConfig,
    RunOutput, SummaryRow, TrialRecord,
};
pub use init::{
    copram_init, pri_spca, pri_spca_nt, random_init, sparta_init, thwf_init, InitResult, MethodTag,
    ThwfSelect,
};
pub use refine::{copram_refine, cosamp, RefineOutcome, RefinementConfig};
pub use signals::{
    gen_sensing_matrix, gen_sparse_signal, measure, MeasurementSet, NoiseSpec, SensingMatrix,
    SparseSignal,
};
pub use spca::{
    grqi, power_method, start_vector, tpower, DenseSymOperator, SpcaConfig, SpcaResult, SpcaSolver,
    SymmetricOperator,
};
pub use spectral::{
    build_truncated_operator, build_untruncated_operator, estimate_norm, population_coefficients,
    NormEstimate, OperatorRepresentation, PopulationCoefficients, TruncatedSpectralOperator,
    TruncationBand,
};
