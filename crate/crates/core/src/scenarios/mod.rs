//! Builders for complete physical situations and the drivers that run them.

pub mod epr;
pub mod oracle;

pub use epr::{build_epr, run_epr_ensemble, EprOutcome, EprRunRecord, EprSetup, EprSummary, Magnet, Spin};
pub use oracle::{build_oracle_scenario, OracleScenario};

/// Scenario names accepted by configuration files, with one-line descriptions.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("epr", "singlet pair through two sequential Stern-Gerlach magnets"),
    ("free_gaussian", "free spin-1/2 Gaussian with spin-dependent momenta; equivariance check"),
    ("oscillator_coherent", "displaced oscillator ground state; trajectories against the classical orbit"),
    ("mixed_w_fundamental", "free mixture of Gaussian packets guided by the density matrix"),
    ("random_entangled", "random entangled two-coordinate state; conditional versus full velocity"),
];
