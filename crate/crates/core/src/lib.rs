//! Anharmonic Lipkin-Meshkov-Glick model: spectra, quench dynamics and
//! dynamical-phase-transition diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]


pub mod charges;
pub mod classical;
pub mod dpt1;
pub mod dpt2;
pub mod error;
pub mod gme;
pub mod operator;
pub mod precise;
pub mod protocol;
pub mod spinmodel;
pub mod state;
pub mod tridiag;

pub use error::{Error, Result};
pub use operator::{BlockOp, Parity, SectorVec};
pub use spinmodel::{
    build_blocks, collective_blockop, collective_operator, diagonalize, spectrum_flow,
    xyz_identification, Axis, EigenSystem, Level, ModelParams, ParityBlock, SectorEigen,
    SpectrumRow, XyzParams,
};
pub use state::StateVector;
pub use classical::{
    classical_energy, classical_spin, classify_phase, critical_energies, hamilton_rhs,
    integrate_orbit, quantum_to_classical, ClassicalState, CriticalEnergies, OrbitPoint, Phase,
};
pub use charges::{
    doublet_matrix_elements, doublet_pairing, parity_matrix, project_tilde, sign_operator, Charge,
    ChargeSet, DoubletRow, DoubletTable, WindowSide,
};
pub use protocol::{
    evolve, expval, ldos, prepare_initial, run_protocol, time_grid, Ldos, Protocol, ProtocolSpec,
    QuenchRun, Superposition,
};
pub use dpt1::{
    default_gap_threshold, finite_horizon_average, infinite_time_average, tau_scan, tau_scan_with,
    time_average, AveragingWeights, FinalObservables, ScanContext, ScanOptions, ScanResult,
    ScanRow, TimeSeries,
};
pub use gme::{build_gme, gme_expectation, tilde_charges, GmeEnsemble, TildeCharges};
pub use dpt2::{
    first_kink, jump_magnitude, pprp, rate, rate_derivative, rate_series, separation_time,
    size_scan, survival, Precision, PprpSeries, Rate, RateSeries, SizeScan,
};
pub use precise::{auto_bits, precise_return, PreciseReturn};
