//! Fidelity measures, gate targets, error models and the compensation search.

pub mod compensation;
pub mod fidelity;
pub mod gates;
pub mod nelder_mead;
pub mod rotation;

pub use compensation::{compensation_search, compensator, CompensationProblem, CompensationResult};
pub use fidelity::{
    diagonal_input, mode_report, oam_overlap, phase_aligned_distance, port_sorting_fidelity, sorting_fidelity,
    FidelityReport, SampleSummary,
};
pub use gates::{
    cphase_alpha, cphase_target, cphase_target_on, gate_fidelity, process_fidelity, zgate_target, GateTarget,
    PhaseSign,
};
pub use rotation::{
    monte_carlo_fidelity, monte_carlo_fidelity_with, rotation_error_fidelity, simulated_rotation_error_fidelity,
    simulated_sorting_fidelity, Element, ErrorDistribution, ErrorModel,
};
