//! Discretized 1-D evolution models, Lyapunov functionals on grids and the
//! dissipation and envelope checks run against simulated trajectories.

mod banded;
pub mod ensemble;
pub mod functional;
pub mod laws;
pub mod model;
pub mod scenario;
pub mod spectra;

pub use banded::{Banded, BandedLu};
pub use ensemble::{ensemble_s1, escape_time, s1_constant, EnsembleReport, ModePeak};
pub use functional::{eval_on_grid, inequality_suite, lyap_eval, InequalityResult, LyapFunctional, WrapPart};
pub use laws::{
    coupled_linear_composite, dissipation_check, gl_coefficient, gl_state_bound, iss_envelope_check,
    nonlinear_rd_gain_region, CoupledComposite, EnvelopeReport, GainRegion, Law, LawReport, LawViolation,
};
pub use model::{
    build_model, simulate, simulate_strided, Boundary, InputChannel, ModelSpec, PdeKind, PdeModel, Signal,
};
pub use scenario::{state_norm, Profile, Scenario};
pub use spectra::{ks_sigma, ks_sigma_on, regime, stability_threshold, Regime, Threshold};
