//! Seeded, deterministic simulation of the two-particle two-slit pilot-wave
//! experiment.
//!
//! The crate evaluates the symmetrized Gaussian pair state
//! ([`wavepacket`]), integrates the guidance flow ([`guidance`]), draws and
//! evolves ensembles in quantum equilibrium or under the antidiagonal
//! constraint ([`ensemble`]), turns arrivals into detection statistics
//! ([`detection`]), and checks the time/space-average identities
//! ([`ergodicity`]).

pub mod detection;
pub mod ensemble;
pub mod ergodicity;
pub mod guidance;
pub mod io;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod wavepacket;

pub use detection::{
    bm_coincidence_fraction, compare, ghose_p_star, marginal_ks_statistic, sqm_window_probability, CoincidenceResult,
    ComparisonVerdict, DetectionError, DetectorWindow, GhoseEstimate, VerdictReport,
};
pub use ensemble::{
    com_spread, equivariance_distance, evolve_ensemble, sample_constrained, sample_equilibrium, Arrival, ArrivalSet,
    Constraint, EnsembleConfig, EnsembleError, HistogramGrid,
};
pub use ergodicity::{
    bohm_space_average, diagonal_average, expectation_at_time, local_expectation_grid, sqm_expectation, time_average,
    ErgodicityError, LocalObservable, ModeExpansion, ObservableMatrix,
};
pub use guidance::{
    com_oracle, com_velocity, integrate_pair, velocity_field, GuidanceError, IntegratorSettings, PairIntegrator,
    PhasePoint, Trajectory, TrajectoryStatus,
};
pub use params::{ParamsError, PhysicalParams};
pub use wavepacket::{
    normalization_constant, packet_amplitude, packet_gradient_y, sigma_t, ComplexValue, PacketLabel, TwoSlitState,
    WavepacketError,
};
