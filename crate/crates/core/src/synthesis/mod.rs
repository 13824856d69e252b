//! Offline synthesis: discretisation, gains, tube cross-section, tightened
//! constraints and the terminal set.

mod gains;
mod lti;
mod pipeline;
mod sets;

pub use gains::{dare_gain, dlyap, dlyap_terminal_cost, lyapunov_residual, GainSet};
pub use lti::{eigenvalues, observability_rank, spectral_radius, zoh_discretize, LtiModel};
pub use pipeline::{
    cache_path, synthesize, synthesize_cached, SetSuite, Synthesis, SynthesisDiagnostics, SynthesisSpec,
};
pub use sets::{
    augmented_dynamics, default_directions, enrich_directions, max_admissible_set, rpi_outer, steady_state_matrix,
    steady_subspace_basis, tighten, AdmissibleOptions, AdmissibleOutcome, RpiOutcome,
};
