//! Data-driven economic model predictive control for linear systems.
//!
//! The controller never sees a model. It sees one recorded input/output
//! trajectory of the plant (optionally with a recorded stage-cost signal)
//! and predicts by taking linear combinations of that record's Hankel
//! columns; a persistently exciting record spans every trajectory the
//! plant can produce. On top of that predictor, [`empc`] compiles an
//! economic optimal control problem whose terminal condition is an
//! artificial equilibrium chosen by the optimizer, subject to a cost
//! ceiling that [`closed_loop`] tightens as the loop runs. The result
//! steers the plant toward the best reachable equilibrium without ever
//! identifying a model, using nothing but linear programming.
//!
//! Module map:
//!
//! * [`plant`]: state-space simulation, builtin example systems, data
//!   generation with seeded excitation, and state reconstruction.
//! * [`data`]: trajectory storage, CSV round-tripping, Hankel matrices,
//!   and persistency-of-excitation checks.
//! * [`lp`]: a bounded-variable primal simplex with a problem builder,
//!   an l1 epigraph transform, and independent optimality verification.
//! * [`empc`]: the economic MPC problem compiler and one-shot solver,
//!   for known stage costs and for costs known only through data.
//! * [`closed_loop`]: the receding-horizon driver, logging, audits, and
//!   performance summaries.

pub mod closed_loop;
pub mod data;
pub mod empc;
pub mod lp;
pub mod plant;

pub use closed_loop::{
    average_performance, bound_updates_exact, box_audit, monotonicity_audit, run_closed_loop,
    BoxAuditReport, ClosedLoopError, ClosedLoopLog, MonotonicityReport, StepRecord, DEFAULT_TAIL,
};
pub use data::{
    build_hankel, check_excitation, is_persistently_exciting, stacked_predictor, DataError,
    DataTrajectory, HankelMatrix, PeReport,
};
pub use empc::{
    diagnose_infeasibility, min_over_reachable_equilibria, model_optimal_equilibrium,
    optimal_achievable_cost, solve_empc, BoxSet, CostMode, EmpcConfig, EmpcError, EmpcLp,
    EmpcSolution, ExtendedState, InfeasibilityCause, InitialBound, LinearCost, OptimalEquilibrium,
    DEFAULT_ALPHA_REG,
};
pub use lp::{
    l1_epigraph_augment, solve_lp, verify_optimum, LinearProgram, LpError, LpOptions, LpResult,
    LpStatus,
};
pub use plant::{PlantError, SimTrajectory, StateSpace, RNG_ALGORITHM};
