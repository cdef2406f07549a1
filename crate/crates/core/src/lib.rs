//! Embedding recovery from leaked distances.
//!
//! An authentication system that shows the distance (or any invertible score)
//! between a probe and an enrolled template leaks one sphere equation per
//! attempt. This crate simulates such a system ([`oracle`]), solves the
//! resulting equations exactly ([`exact`]) or with fewer observations using a
//! low-rank basis ([`subspace`]), and drives end-to-end attacks and sweeps
//! ([`pipeline`]).

pub mod embedding;
pub mod error;
pub mod exact;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod population;
pub mod subspace;

pub use embedding::{angle_between, distance, normalize, Embedding, Metric};
pub use error::{Error, Result};
pub use exact::{
    build_l2_system, cosine_recover, disambiguate, l2_recover, solve_norm_quadratic, DiscriminantPolicy,
    Disambiguation, L2System, NormQuadratic, RecoveryCandidates, SolveOptions,
};
pub use oracle::{AuthResponse, DisplayMode, EnrollmentDb, Oracle, OracleConfig, TranscriptEntry};
pub use pipeline::{
    export_report, run_attack, sweep, AttackReport, CrossDomainConfig, InDomainExperiment, Judger, ObservationLog,
    RankPolicy, Solver, SweepConfig, SweepResult,
};
pub use population::{synth_population, PopulationSpec};
pub use subspace::{
    fit_basis, rank_error_curve, reduced_cosine_recover, reduced_l2_recover, RankErrorCurve,
    ReducedRecovery, ReducedRecoveryDiagnostics, SvdBasis,
};
