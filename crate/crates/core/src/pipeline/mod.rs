//! End-to-end attacks: collecting leaked distances from an oracle, solving,
//! scoring against ground truth, and sweeping over observation counts.

pub mod attack;
pub mod cross_domain;
pub mod experiment;
pub mod observation;
pub mod sweep;

pub use attack::{run_attack, AttackDiagnostics, AttackReport, Judger, Recovery, Solver};
pub use cross_domain::{
    cross_domain_attack, AffineCalibration, CrossDomainConfig, CrossDomainOutcome, DomainMap, DomainSpec,
    Nonlinearity,
};
pub use experiment::InDomainExperiment;
pub use observation::{collect, Observation, ObservationLog};
pub use sweep::{export_report, load_report, sweep, sweep_logs, RankPolicy, SweepConfig, SweepResult};
