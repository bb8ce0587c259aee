//! Offline analysis: optimality conditions, feasibility certificates,
//! equilibrium characterization, regularization and trajectory scans.

pub mod certificate;
pub mod equilibria;
pub mod kkt;
pub mod optimize;
pub mod regularize;
pub mod scans;

pub use certificate::{
    certificate_scan, crcq_sufficient_check, feasibility_certificate, max_margin,
    normalized_alignment, sample_double_boundary, CertificateScan, CrcqReport,
    FeasibilityCertificate,
};
pub use equilibria::{
    boundary_equilibrium_conditions, equilibrium_check, BoundaryEquilibriumReport, EigenStatus,
    EigenTest, EquilibriumReport,
};
pub use kkt::{kkt_steady_state, KKTReport};
pub use optimize::{offline_optimize, OptimizeError, OptimizeOptions, OptimizeResult};
pub use regularize::{
    regularization_sweep, regularize, RegularizationForm, RegularizationRow, RegularizationSweep,
    RegularizedObjective,
};
pub use scans::{descent_scan, lipschitz_scan, DescentRow, LipschitzReport};
