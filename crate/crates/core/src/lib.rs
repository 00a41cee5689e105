//! Interference alignment with receive diversity on the K-user Gaussian MIMO
//! interference channel.

pub mod channel;
pub mod error;
pub mod feasibility;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod rates;
pub mod solver;
pub mod special;
pub mod sweep;

pub use channel::{draw_channels, mi_optimum, mi_projection, ChannelSet, NetworkDims, PowerProfile};
pub use error::{Error, Result};
pub use feasibility::{
    build_equation_system, enumerate_dmt_points, is_proper_general, is_proper_symmetric, DmtPoint, EquationSystem,
    ProperReport,
};
pub use montecarlo::{
    estimate_ergodic, estimate_ia_sweep, run_wf_game, waterfill_best_response, ErgodicEstimate, Estimate, GameOpts,
    McMethod, McOpts, WfGameOutcome,
};
pub use rates::{chiani_csu, shin_lee_rate, theorem2_bound, EigProfile, PsiSpec};
pub use solver::{leakage, solve_alternating, verify_alignment, AlignmentReport, IaSolution, SolverOpts};
pub use special::exp_integral;
pub use sweep::{compare, run_sweep, Method, SweepResult, SweepSpec};
