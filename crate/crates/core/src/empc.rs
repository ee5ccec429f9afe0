//! Economic MPC compiled from measured trajectory data.
//!
//! The controller never sees a state-space model. It predicts length
//! L+n+1 input-output windows as column combinations of Hankel matrices
//! built from one recorded trajectory, pins the first n steps to the
//! measured past, and forces the last n+1 steps onto an artificial
//! equilibrium chosen together with the trajectory. An upper bound on the
//! equilibrium's stage cost, tightened step by step by the receding-horizon
//! driver, ratchets that equilibrium toward the best reachable one.
//!
//! Two cost modes compile to the same LP skeleton: a known linear stage
//! cost enters the objective directly, while in data-driven mode the cost
//! is itself predicted through an extra Hankel block built from recorded
//! cost samples, so the controller needs no cost coefficients at all.

use std::fmt;
use std::ops::Range;

use nalgebra::DVector;
use thiserror::Error;

use crate::data::{
    check_excitation, stacked_predictor, DataError, DataTrajectory, DEFAULT_RANK_TOL,
};
use crate::lp::{l1_epigraph_augment, solve_lp, LinearProgram, LpError, LpOptions, LpStatus};
use crate::plant::{PlantError, StateSpace};

/// Default weight of the l1 penalty on the Hankel combination coefficients.
pub const DEFAULT_ALPHA_REG: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum EmpcError {
    #[error("box channel {channel} has invalid bounds [{lower}, {upper}]")]
    InvalidBox {
        channel: usize,
        lower: f64,
        upper: f64,
    },
    #[error("input constraint box must be bounded on every channel")]
    UnboundedInputBox,
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("horizon {horizon} must be at least the order bound {order_bound}")]
    HorizonTooShort { horizon: usize, order_bound: usize },
    #[error("order bound must be at least 1")]
    ZeroOrderBound,
    #[error("terminal weight beta must be positive and finite, got {beta}")]
    InvalidBeta { beta: f64 },
    #[error("regularization weight must be non-negative and finite, got {weight}")]
    InvalidRegWeight { weight: f64 },
    #[error("cost weights must be finite")]
    NonFiniteCost,
    #[error("terminal cost bound must not be NaN")]
    NanCostBound,
    #[error(
        "data not persistently exciting at order {order}: effective rank {effective_rank} < {required_rank}"
    )]
    InsufficientExcitation {
        order: usize,
        required_rank: usize,
        effective_rank: usize,
    },
    #[error("data too short: {samples} samples, need at least {needed} for this horizon")]
    DataTooShort { samples: usize, needed: usize },
    #[error("data-driven cost mode requires recorded cost samples")]
    MissingCostData,
    #[error("solver finished with status {status}")]
    SolveFailed { status: LpStatus },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Axis-aligned constraint set with per-channel bounds. Output boxes may be
/// unbounded on either side; input boxes must be compact (checked where an
/// input box is required, not here).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, EmpcError> {
        if lower.len() != upper.len() {
            return Err(EmpcError::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (channel, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            let ordered = lo <= hi && lo < f64::INFINITY && hi > f64::NEG_INFINITY;
            if lo.is_nan() || hi.is_nan() || !ordered {
                return Err(EmpcError::InvalidBox {
                    channel,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box [-half_width, half_width] on every channel.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self, EmpcError> {
        Self::new(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    /// All of R^dim; only meaningful for output constraints.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    /// Largest bound violation of `v`; zero or negative means inside.
    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.dim() {
            worst = worst.max(self.lower[i] - v[i]).max(v[i] - self.upper[i]);
        }
        worst
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.len() == self.dim() && self.max_violation(v) <= tol
    }
}

/// Linear stage cost l(u, y) = input_weights . u + output_weights . y.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCost {
    input_weights: DVector<f64>,
    output_weights: DVector<f64>,
}

impl LinearCost {
    pub fn new(
        input_weights: DVector<f64>,
        output_weights: DVector<f64>,
    ) -> Result<Self, EmpcError> {
        if !input_weights
            .iter()
            .chain(output_weights.iter())
            .all(|w| w.is_finite())
        {
            return Err(EmpcError::NonFiniteCost);
        }
        Ok(Self {
            input_weights,
            output_weights,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_weights.len()
    }

    pub fn input_weights(&self) -> &DVector<f64> {
        &self.input_weights
    }

    pub fn output_weights(&self) -> &DVector<f64> {
        &self.output_weights
    }

    pub fn evaluate(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.input_weights.dot(u) + self.output_weights.dot(y)
    }
}

/// The last n input-output pairs, newest last. Serves as an output-feedback
/// surrogate for the plant's internal state: for systems of order at most n
/// it determines the state uniquely.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    inputs: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
}

impl ExtendedState {
    pub fn new(inputs: Vec<DVector<f64>>, outputs: Vec<DVector<f64>>) -> Result<Self, EmpcError> {
        if inputs.is_empty() {
            return Err(EmpcError::ZeroOrderBound);
        }
        if inputs.len() != outputs.len() {
            return Err(EmpcError::DimensionMismatch {
                what: "past window lengths",
                expected: inputs.len(),
                got: outputs.len(),
            });
        }
        let m = inputs[0].len();
        let p = outputs[0].len();
        if inputs.iter().any(|u| u.len() != m) || outputs.iter().any(|y| y.len() != p) {
            return Err(EmpcError::DimensionMismatch {
                what: "past window channels",
                expected: m,
                got: p,
            });
        }
        Ok(Self { inputs, outputs })
    }

    /// A resting past: n steps of zero input and zero output.
    pub fn zero(lag: usize, input_dim: usize, output_dim: usize) -> Self {
        Self {
            inputs: vec![DVector::zeros(input_dim); lag],
            outputs: vec![DVector::zeros(output_dim); lag],
        }
    }

    /// Builds the window from the last `lag` entries of a recorded run.
    pub fn from_tail(
        inputs: &[DVector<f64>],
        outputs: &[DVector<f64>],
        lag: usize,
    ) -> Result<Self, EmpcError> {
        if inputs.len() < lag || outputs.len() < lag {
            return Err(EmpcError::DimensionMismatch {
                what: "trajectory tail",
                expected: lag,
                got: inputs.len().min(outputs.len()),
            });
        }
        Self::new(
            inputs[inputs.len() - lag..].to_vec(),
            outputs[outputs.len() - lag..].to_vec(),
        )
    }

    pub fn lag(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    /// Shifts the window one step forward: drops the oldest pair and
    /// appends the latest measurement.
    pub fn advance(&mut self, input: DVector<f64>, output: DVector<f64>) {
        self.inputs.remove(0);
        self.outputs.remove(0);
        self.inputs.push(input);
        self.outputs.push(output);
    }
}

/// Where the stage cost comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CostMode {
    /// Coefficients are known; the objective is assembled from them.
    Known(LinearCost),
    /// Only recorded cost samples exist; predicted costs are LP variables
    /// tied to the trajectory through a cost Hankel block.
    DataDriven,
}

/// How the first terminal-cost bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialBound {
    /// Tightest admissible start: the optimal stage cost over equilibria
    /// reachable within the horizon.
    OptimalReachable,
    Explicit(f64),
}

/// Controller configuration. `order_bound` must dominate the true system
/// order; the data must be persistently exciting of order
/// `horizon + 2 * order_bound + 1`, which every builder verifies.
#[derive(Debug, Clone)]
pub struct EmpcConfig {
    pub horizon: usize,
    pub order_bound: usize,
    pub beta: f64,
    pub alpha_reg: f64,
    pub input_box: BoxSet,
    pub output_box: BoxSet,
    pub cost_mode: CostMode,
    pub initial_bound: InitialBound,
    pub lp_options: LpOptions,
}

impl EmpcConfig {
    pub fn new(
        horizon: usize,
        order_bound: usize,
        beta: f64,
        input_box: BoxSet,
        output_box: BoxSet,
        cost_mode: CostMode,
    ) -> Result<Self, EmpcError> {
        let cfg = Self {
            horizon,
            order_bound,
            beta,
            alpha_reg: DEFAULT_ALPHA_REG,
            input_box,
            output_box,
            cost_mode,
            initial_bound: InitialBound::OptimalReachable,
            lp_options: LpOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EmpcError> {
        if self.order_bound == 0 {
            return Err(EmpcError::ZeroOrderBound);
        }
        if self.horizon < self.order_bound {
            return Err(EmpcError::HorizonTooShort {
                horizon: self.horizon,
                order_bound: self.order_bound,
            });
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(EmpcError::InvalidBeta { beta: self.beta });
        }
        if !(self.alpha_reg.is_finite() && self.alpha_reg >= 0.0) {
            return Err(EmpcError::InvalidRegWeight {
                weight: self.alpha_reg,
            });
        }
        if !self.input_box.is_bounded() {
            return Err(EmpcError::UnboundedInputBox);
        }
        if let CostMode::Known(cost) = &self.cost_mode {
            if cost.input_dim() != self.input_box.dim() {
                return Err(EmpcError::DimensionMismatch {
                    what: "cost input weights",
                    expected: self.input_box.dim(),
                    got: cost.input_dim(),
                });
            }
            if cost.output_dim() != self.output_box.dim() {
                return Err(EmpcError::DimensionMismatch {
                    what: "cost output weights",
                    expected: self.output_box.dim(),
                    got: cost.output_dim(),
                });
            }
        }
        Ok(())
    }

    /// Length of the predicted window: horizon plus past plus one.
    pub fn window(&self) -> usize {
        self.horizon + self.order_bound + 1
    }

    /// Excitation order the data must satisfy.
    pub fn required_excitation_order(&self) -> usize {
        self.horizon + 2 * self.order_bound + 1
    }
}

/// Index map from problem quantities into the flat LP variable vector.
#[derive(Debug, Clone)]
struct Layout {
    alpha: Range<usize>,
    input_dim: usize,
    output_dim: usize,
    window: usize,
    lag: usize,
    horizon: usize,
    u_start: usize,
    y_start: usize,
    u_e: usize,
    y_e: usize,
    cost_start: Option<usize>,
}

impl Layout {
    fn u_var(&self, slot: usize, channel: usize) -> usize {
        self.u_start + slot * self.input_dim + channel
    }

    fn y_var(&self, slot: usize, channel: usize) -> usize {
        self.y_start + slot * self.output_dim + channel
    }

    fn cost_var(&self, slot: usize) -> usize {
        self.cost_start.expect("cost variables present") + slot
    }
}

/// Objective installed on the compiled skeleton.
enum BuildObjective<'a> {
    /// Running stage cost plus beta times the equilibrium's stage cost.
    Economic,
    /// A probe cost on the equilibrium pair alone (reachability analysis).
    Probe(&'a LinearCost),
    /// The predicted terminal cost variable alone (data-driven reachability).
    PredictedTerminal,
    /// Pure feasibility.
    None,
}

struct BuildFlags<'a> {
    cost_bound: Option<f64>,
    terminal: bool,
    pin_initial: bool,
    regularize: bool,
    objective: BuildObjective<'a>,
}

/// A compiled instance of the economic MPC problem for one extended state
/// and one terminal-cost bound. Solving it yields the full optimizer.
#[derive(Debug, Clone)]
pub struct EmpcLp {
    lp: LinearProgram,
    layout: Layout,
    beta: f64,
    known_cost: Option<LinearCost>,
}

impl EmpcLp {
    /// Compiles the problem in the mode selected by `cfg.cost_mode`.
    pub fn build(
        data: &DataTrajectory,
        xi: &ExtendedState,
        cost_bound: f64,
        cfg: &EmpcConfig,
    ) -> Result<Self, EmpcError> {
        compile(
            data,
            xi,
            cfg,
            BuildFlags {
                cost_bound: Some(cost_bound),
                terminal: true,
                pin_initial: true,
                regularize: true,
                objective: BuildObjective::Economic,
            },
        )
    }

    /// Compiles the known-cost problem regardless of `cfg.cost_mode`.
    pub fn known_cost(
        data: &DataTrajectory,
        xi: &ExtendedState,
        cost_bound: f64,
        cfg: &EmpcConfig,
    ) -> Result<Self, EmpcError> {
        match &cfg.cost_mode {
            CostMode::Known(_) => Self::build(data, xi, cost_bound, cfg),
            CostMode::DataDriven => Err(EmpcError::MissingCostData),
        }
    }

    /// Compiles the data-driven-cost problem; requires recorded cost samples.
    pub fn unknown_cost(
        data: &DataTrajectory,
        xi: &ExtendedState,
        cost_bound: f64,
        cfg: &EmpcConfig,
    ) -> Result<Self, EmpcError> {
        match &cfg.cost_mode {
            CostMode::DataDriven => Self::build(data, xi, cost_bound, cfg),
            CostMode::Known(_) => {
                let mut data_driven = cfg.clone();
                data_driven.cost_mode = CostMode::DataDriven;
                Self::build(data, xi, cost_bound, &data_driven)
            }
        }
    }

    /// Restricts the artificial equilibrium to one fixed pair, turning the
    /// generalized terminal constraint into a classical one.
    pub fn pin_equilibrium(
        &mut self,
        u_e: &DVector<f64>,
        y_e: &DVector<f64>,
    ) -> Result<(), EmpcError> {
        if u_e.len() != self.layout.input_dim {
            return Err(EmpcError::DimensionMismatch {
                what: "pinned equilibrium input",
                expected: self.layout.input_dim,
                got: u_e.len(),
            });
        }
        if y_e.len() != self.layout.output_dim {
            return Err(EmpcError::DimensionMismatch {
                what: "pinned equilibrium output",
                expected: self.layout.output_dim,
                got: y_e.len(),
            });
        }
        for i in 0..u_e.len() {
            self.lp.fix_var(self.layout.u_e + i, u_e[i]);
        }
        for i in 0..y_e.len() {
            self.lp.fix_var(self.layout.y_e + i, y_e[i]);
        }
        Ok(())
    }

    /// The underlying linear program, e.g. for a plain-text dump.
    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn solve(&self, options: &LpOptions) -> Result<EmpcSolution, EmpcError> {
        let result = solve_lp(&self.lp, options)?;
        if result.status != LpStatus::Optimal {
            return Err(EmpcError::SolveFailed {
                status: result.status,
            });
        }
        let x = result
            .x
            .as_ref()
            .expect("optimal result carries an optimizer");
        let layout = &self.layout;

        let alpha = DVector::from_iterator(layout.alpha.len(), layout.alpha.clone().map(|j| x[j]));
        let mut inputs = Vec::with_capacity(layout.window);
        let mut outputs = Vec::with_capacity(layout.window);
        for s in 0..layout.window {
            inputs.push(DVector::from_fn(layout.input_dim, |i, _| {
                x[layout.u_var(s, i)]
            }));
            outputs.push(DVector::from_fn(layout.output_dim, |i, _| {
                x[layout.y_var(s, i)]
            }));
        }
        let equilibrium_input = DVector::from_fn(layout.input_dim, |i, _| x[layout.u_e + i]);
        let equilibrium_output = DVector::from_fn(layout.output_dim, |i, _| x[layout.y_e + i]);

        let predicted_costs = layout.cost_start.map(|_| {
            (0..layout.window)
                .map(|s| x[layout.cost_var(s)])
                .collect::<Vec<f64>>()
        });

        let terminal_cost = match (&self.known_cost, &predicted_costs) {
            (Some(cost), _) => cost.evaluate(&equilibrium_input, &equilibrium_output),
            (None, Some(costs)) => costs[layout.window - 1],
            (None, None) => f64::NAN,
        };
        let stage_sum = match (&self.known_cost, &predicted_costs) {
            (Some(cost), _) => (layout.lag..layout.lag + layout.horizon)
                .map(|s| cost.evaluate(&inputs[s], &outputs[s]))
                .sum(),
            (None, Some(costs)) => costs[layout.lag..layout.lag + layout.horizon].iter().sum(),
            (None, None) => f64::NAN,
        };
        let objective = stage_sum + self.beta * terminal_cost;

        Ok(EmpcSolution {
            alpha,
            inputs,
            outputs,
            equilibrium_input,
            equilibrium_output,
            predicted_costs,
            terminal_cost,
            objective,
            objective_with_reg: result.objective,
            iterations: result.iterations,
            lag: layout.lag,
        })
    }
}

/// Optimizer of one compiled problem. Windows run over steps
/// -n..=horizon; `input_at(0)` is the input the receding-horizon driver
/// applies to the plant.
#[derive(Debug, Clone)]
pub struct EmpcSolution {
    pub alpha: DVector<f64>,
    /// Predicted inputs, one per window step.
    pub inputs: Vec<DVector<f64>>,
    /// Predicted outputs, one per window step.
    pub outputs: Vec<DVector<f64>>,
    pub equilibrium_input: DVector<f64>,
    pub equilibrium_output: DVector<f64>,
    /// Predicted stage costs per window step (data-driven mode only).
    pub predicted_costs: Option<Vec<f64>>,
    /// Stage cost of the artificial equilibrium.
    pub terminal_cost: f64,
    /// Running cost plus weighted terminal cost, without regularization.
    pub objective: f64,
    /// Full LP objective including the l1 penalty.
    pub objective_with_reg: f64,
    pub iterations: usize,
    lag: usize,
}

impl EmpcSolution {
    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len() - self.lag - 1
    }

    /// Predicted input at step `k` in -lag..=horizon.
    pub fn input_at(&self, k: isize) -> &DVector<f64> {
        &self.inputs[(k + self.lag as isize) as usize]
    }

    /// Predicted output at step `k` in -lag..=horizon.
    pub fn output_at(&self, k: isize) -> &DVector<f64> {
        &self.outputs[(k + self.lag as isize) as usize]
    }

    pub fn alpha_l1(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }
}

/// Builds and solves the problem for one step of the receding-horizon loop.
pub fn solve_empc(
    data: &DataTrajectory,
    xi: &ExtendedState,
    cost_bound: f64,
    cfg: &EmpcConfig,
) -> Result<EmpcSolution, EmpcError> {
    EmpcLp::build(data, xi, cost_bound, cfg)?.solve(&cfg.lp_options)
}

/// Minimizes a probe cost over the equilibria reachable within the horizon:
/// all constraints of the control problem except the terminal-cost bound,
/// no running cost, no regularization.
pub fn min_over_reachable_equilibria(
    data: &DataTrajectory,
    xi: &ExtendedState,
    cfg: &EmpcConfig,
    probe: &LinearCost,
) -> Result<f64, EmpcError> {
    let compiled = compile(
        data,
        xi,
        cfg,
        BuildFlags {
            cost_bound: None,
            terminal: true,
            pin_initial: true,
            regularize: false,
            objective: BuildObjective::Probe(probe),
        },
    )?;
    let result = solve_lp(&compiled.lp, &cfg.lp_options)?;
    if result.status != LpStatus::Optimal {
        return Err(EmpcError::SolveFailed {
            status: result.status,
        });
    }
    Ok(result.objective)
}

/// Optimal stage cost over the reachable equilibria; the tightest
/// admissible initial terminal-cost bound. In known-cost mode this probes
/// with the stage cost itself; in data-driven mode it minimizes the
/// predicted terminal cost variable, so no cost coefficients are needed.
pub fn optimal_achievable_cost(
    data: &DataTrajectory,
    xi: &ExtendedState,
    cfg: &EmpcConfig,
) -> Result<f64, EmpcError> {
    match &cfg.cost_mode {
        CostMode::Known(cost) => min_over_reachable_equilibria(data, xi, cfg, cost),
        CostMode::DataDriven => {
            let compiled = compile(
                data,
                xi,
                cfg,
                BuildFlags {
                    cost_bound: None,
                    terminal: true,
                    pin_initial: true,
                    regularize: false,
                    objective: BuildObjective::PredictedTerminal,
                },
            )?;
            let result = solve_lp(&compiled.lp, &cfg.lp_options)?;
            if result.status != LpStatus::Optimal {
                return Err(EmpcError::SolveFailed {
                    status: result.status,
                });
            }
            Ok(result.objective)
        }
    }
}

/// Equilibrium pair minimizing a stage cost subject to box constraints,
/// computed from the state-space model. A test oracle; the controller
/// itself never calls this.
#[derive(Debug, Clone)]
pub struct OptimalEquilibrium {
    pub input: DVector<f64>,
    pub output: DVector<f64>,
    pub cost: f64,
}

pub fn model_optimal_equilibrium(
    sys: &StateSpace,
    input_box: &BoxSet,
    output_box: &BoxSet,
    cost: &LinearCost,
) -> Result<OptimalEquilibrium, EmpcError> {
    if input_box.dim() != sys.input_dim() {
        return Err(EmpcError::DimensionMismatch {
            what: "input box",
            expected: sys.input_dim(),
            got: input_box.dim(),
        });
    }
    if output_box.dim() != sys.output_dim() {
        return Err(EmpcError::DimensionMismatch {
            what: "output box",
            expected: sys.output_dim(),
            got: output_box.dim(),
        });
    }
    if cost.input_dim() != sys.input_dim() || cost.output_dim() != sys.output_dim() {
        return Err(EmpcError::DimensionMismatch {
            what: "cost weights",
            expected: sys.input_dim() + sys.output_dim(),
            got: cost.input_dim() + cost.output_dim(),
        });
    }
    let gain = sys.equilibrium_gain()?;

    let mut lp = LinearProgram::new();
    let mut u_vars = Vec::with_capacity(sys.input_dim());
    for i in 0..sys.input_dim() {
        u_vars.push(lp.add_var(
            format!("u_e[{i}]"),
            input_box.lower()[i],
            input_box.upper()[i],
            cost.input_weights()[i],
        ));
    }
    let mut y_vars = Vec::with_capacity(sys.output_dim());
    for i in 0..sys.output_dim() {
        y_vars.push(lp.add_var(
            format!("y_e[{i}]"),
            output_box.lower()[i],
            output_box.upper()[i],
            cost.output_weights()[i],
        ));
    }
    for (i, &y) in y_vars.iter().enumerate() {
        let mut row = vec![(y, 1.0)];
        for (j, &u) in u_vars.iter().enumerate() {
            row.push((u, -gain[(i, j)]));
        }
        lp.add_eq(&row, 0.0);
    }

    let result = solve_lp(&lp, &LpOptions::default())?;
    if result.status != LpStatus::Optimal {
        return Err(EmpcError::SolveFailed {
            status: result.status,
        });
    }
    let x = result.x.expect("optimal result carries an optimizer");
    Ok(OptimalEquilibrium {
        input: DVector::from_fn(sys.input_dim(), |i, _| x[u_vars[i]]),
        output: DVector::from_fn(sys.output_dim(), |i, _| x[y_vars[i]]),
        cost: result.objective,
    })
}

/// Constraint family found responsible for an infeasible instance, by
/// re-solving with families removed one at a time, loosest suspect first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibilityCause {
    /// The instance is feasible after all.
    NotInfeasible,
    /// The terminal-cost bound cuts off every reachable equilibrium.
    CostBound,
    /// No reachable equilibrium exists within the horizon.
    TerminalEquilibrium,
    /// The pinned past window is inconsistent with the data span or boxes.
    InitialWindow,
    /// Infeasible even with all three families relaxed.
    Fundamental,
}

impl fmt::Display for InfeasibilityCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfeasibilityCause::NotInfeasible => "instance is feasible",
            InfeasibilityCause::CostBound => {
                "terminal-cost bound: no reachable equilibrium satisfies it"
            }
            InfeasibilityCause::TerminalEquilibrium => {
                "terminal equilibrium: no equilibrium reachable within the horizon"
            }
            InfeasibilityCause::InitialWindow => {
                "initial window: the pinned past is inconsistent with the constraints"
            }
            InfeasibilityCause::Fundamental => {
                "fundamental: infeasible even with bound, terminal, and past relaxed"
            }
        })
    }
}

pub fn diagnose_infeasibility(
    data: &DataTrajectory,
    xi: &ExtendedState,
    cost_bound: f64,
    cfg: &EmpcConfig,
) -> Result<InfeasibilityCause, EmpcError> {
    let feasible = |flags: BuildFlags| -> Result<bool, EmpcError> {
        let compiled = compile(data, xi, cfg, flags)?;
        let result = solve_lp(&compiled.lp, &cfg.lp_options)?;
        Ok(result.status == LpStatus::Optimal)
    };

    if feasible(BuildFlags {
        cost_bound: Some(cost_bound),
        terminal: true,
        pin_initial: true,
        regularize: false,
        objective: BuildObjective::None,
    })? {
        return Ok(InfeasibilityCause::NotInfeasible);
    }
    if feasible(BuildFlags {
        cost_bound: None,
        terminal: true,
        pin_initial: true,
        regularize: false,
        objective: BuildObjective::None,
    })? {
        return Ok(InfeasibilityCause::CostBound);
    }
    if feasible(BuildFlags {
        cost_bound: None,
        terminal: false,
        pin_initial: true,
        regularize: false,
        objective: BuildObjective::None,
    })? {
        return Ok(InfeasibilityCause::TerminalEquilibrium);
    }
    if feasible(BuildFlags {
        cost_bound: None,
        terminal: false,
        pin_initial: false,
        regularize: false,
        objective: BuildObjective::None,
    })? {
        return Ok(InfeasibilityCause::InitialWindow);
    }
    Ok(InfeasibilityCause::Fundamental)
}

/// Shared compilation path for every variant of the problem.
fn compile(
    data: &DataTrajectory,
    xi: &ExtendedState,
    cfg: &EmpcConfig,
    flags: BuildFlags,
) -> Result<EmpcLp, EmpcError> {
    cfg.validate()?;

    let m = data.input_dim();
    let p = data.output_dim();
    if cfg.input_box.dim() != m {
        return Err(EmpcError::DimensionMismatch {
            what: "input box",
            expected: m,
            got: cfg.input_box.dim(),
        });
    }
    if cfg.output_box.dim() != p {
        return Err(EmpcError::DimensionMismatch {
            what: "output box",
            expected: p,
            got: cfg.output_box.dim(),
        });
    }
    if xi.lag() != cfg.order_bound {
        return Err(EmpcError::DimensionMismatch {
            what: "past window length",
            expected: cfg.order_bound,
            got: xi.lag(),
        });
    }
    if xi.input_dim() != m || xi.output_dim() != p {
        return Err(EmpcError::DimensionMismatch {
            what: "past window channels",
            expected: m + p,
            got: xi.input_dim() + xi.output_dim(),
        });
    }
    if let Some(bound) = flags.cost_bound {
        if bound.is_nan() {
            return Err(EmpcError::NanCostBound);
        }
    }

    let window = cfg.window();
    if data.len() < window {
        return Err(EmpcError::DataTooShort {
            samples: data.len(),
            needed: window,
        });
    }
    let order = cfg.required_excitation_order();
    let report = check_excitation(data.inputs(), order, DEFAULT_RANK_TOL)?;
    if !report.satisfied {
        return Err(EmpcError::InsufficientExcitation {
            order,
            required_rank: report.required_rank,
            effective_rank: report.effective_rank,
        });
    }

    // True in data-driven mode whenever predicted costs appear anywhere in
    // the variant: objective, terminal bound, or the full problem.
    let data_driven = matches!(cfg.cost_mode, CostMode::DataDriven);
    let need_cost_vars = data_driven
        && (matches!(
            flags.objective,
            BuildObjective::Economic | BuildObjective::PredictedTerminal
        ) || flags.cost_bound.is_some());
    if need_cost_vars && !data.has_cost() {
        return Err(EmpcError::MissingCostData);
    }
    if matches!(flags.objective, BuildObjective::PredictedTerminal) && !data_driven {
        return Err(EmpcError::MissingCostData);
    }

    let predictor = stacked_predictor(data, window, need_cost_vars)?;
    let n_alpha = predictor.ncols();
    let lag = cfg.order_bound;
    let horizon = cfg.horizon;

    let mut lp = LinearProgram::new();
    for j in 0..n_alpha {
        lp.add_var(format!("alpha[{j}]"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let u_start = lp.num_vars();
    for s in 0..window {
        let k = s as isize - lag as isize;
        for i in 0..m {
            // Boxes apply from step 0 on; the past is pinned, not boxed.
            let (lo, hi) = if k < 0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (cfg.input_box.lower()[i], cfg.input_box.upper()[i])
            };
            lp.add_var(format!("u[{k}][{i}]"), lo, hi, 0.0);
        }
    }
    let y_start = lp.num_vars();
    for s in 0..window {
        let k = s as isize - lag as isize;
        for i in 0..p {
            let (lo, hi) = if k < 0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (cfg.output_box.lower()[i], cfg.output_box.upper()[i])
            };
            lp.add_var(format!("y[{k}][{i}]"), lo, hi, 0.0);
        }
    }
    let u_e = lp.num_vars();
    for i in 0..m {
        lp.add_var(
            format!("u_e[{i}]"),
            cfg.input_box.lower()[i],
            cfg.input_box.upper()[i],
            0.0,
        );
    }
    let y_e = lp.num_vars();
    for i in 0..p {
        lp.add_var(
            format!("y_e[{i}]"),
            cfg.output_box.lower()[i],
            cfg.output_box.upper()[i],
            0.0,
        );
    }
    let cost_start = if need_cost_vars {
        let start = lp.num_vars();
        for s in 0..window {
            let k = s as isize - lag as isize;
            lp.add_var(format!("l[{k}]"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
        }
        Some(start)
    } else {
        None
    };

    let layout = Layout {
        alpha: 0..n_alpha,
        input_dim: m,
        output_dim: p,
        window,
        lag,
        horizon,
        u_start,
        y_start,
        u_e,
        y_e,
        cost_start,
    };

    // Prediction: every window variable equals its Hankel row applied to
    // alpha. Row blocks are ordered inputs, outputs, then costs.
    let mut row = Vec::with_capacity(n_alpha + 1);
    for s in 0..window {
        for i in 0..m {
            row.clear();
            row.push((layout.u_var(s, i), 1.0));
            let hankel_row = s * m + i;
            for j in 0..n_alpha {
                let h = predictor[(hankel_row, j)];
                if h != 0.0 {
                    row.push((j, -h));
                }
            }
            lp.add_eq(&row, 0.0);
        }
    }
    for s in 0..window {
        for i in 0..p {
            row.clear();
            row.push((layout.y_var(s, i), 1.0));
            let hankel_row = window * m + s * p + i;
            for j in 0..n_alpha {
                let h = predictor[(hankel_row, j)];
                if h != 0.0 {
                    row.push((j, -h));
                }
            }
            lp.add_eq(&row, 0.0);
        }
    }
    if need_cost_vars {
        for s in 0..window {
            row.clear();
            row.push((layout.cost_var(s), 1.0));
            let hankel_row = window * (m + p) + s;
            for j in 0..n_alpha {
                let h = predictor[(hankel_row, j)];
                if h != 0.0 {
                    row.push((j, -h));
                }
            }
            lp.add_eq(&row, 0.0);
        }
    }

    // Past window pinned to the measured extended state. Collapsed bounds
    // rather than equality rows, so the pin holds exactly at any optimum.
    if flags.pin_initial {
        for s in 0..lag {
            for i in 0..m {
                lp.fix_var(layout.u_var(s, i), xi.inputs()[s][i]);
            }
            for i in 0..p {
                lp.fix_var(layout.y_var(s, i), xi.outputs()[s][i]);
            }
        }
    }

    // Terminal constraint: the last order_bound + 1 window steps all equal
    // the artificial equilibrium pair.
    if flags.terminal {
        for s in horizon..window {
            for i in 0..m {
                lp.add_eq(&[(layout.u_var(s, i), 1.0), (layout.u_e + i, -1.0)], 0.0);
            }
            for i in 0..p {
                lp.add_eq(&[(layout.y_var(s, i), 1.0), (layout.y_e + i, -1.0)], 0.0);
            }
        }
    }

    // Terminal-cost bound. With known coefficients it is one inequality on
    // the equilibrium pair; in data-driven mode it caps the predicted
    // terminal cost variable directly.
    if let Some(bound) = flags.cost_bound {
        if bound.is_finite() {
            match &cfg.cost_mode {
                CostMode::Known(cost) => {
                    let mut bound_row = Vec::with_capacity(m + p);
                    for i in 0..m {
                        bound_row.push((layout.u_e + i, cost.input_weights()[i]));
                    }
                    for i in 0..p {
                        bound_row.push((layout.y_e + i, cost.output_weights()[i]));
                    }
                    lp.add_le(&bound_row, bound);
                }
                CostMode::DataDriven => {
                    let terminal = layout.cost_var(window - 1);
                    let (lo, _) = lp.bounds(terminal);
                    lp.set_bounds(terminal, lo, bound);
                }
            }
        }
    }

    let known_cost = match (&flags.objective, &cfg.cost_mode) {
        (BuildObjective::Economic, CostMode::Known(cost)) => Some(cost.clone()),
        _ => None,
    };
    match &flags.objective {
        BuildObjective::Economic => match &cfg.cost_mode {
            CostMode::Known(cost) => {
                for s in lag..lag + horizon {
                    for i in 0..m {
                        lp.set_cost(layout.u_var(s, i), cost.input_weights()[i]);
                    }
                    for i in 0..p {
                        lp.set_cost(layout.y_var(s, i), cost.output_weights()[i]);
                    }
                }
                for i in 0..m {
                    lp.set_cost(layout.u_e + i, cfg.beta * cost.input_weights()[i]);
                }
                for i in 0..p {
                    lp.set_cost(layout.y_e + i, cfg.beta * cost.output_weights()[i]);
                }
            }
            CostMode::DataDriven => {
                for s in lag..lag + horizon {
                    lp.set_cost(layout.cost_var(s), 1.0);
                }
                lp.set_cost(layout.cost_var(window - 1), cfg.beta);
            }
        },
        BuildObjective::Probe(probe) => {
            if probe.input_dim() != m || probe.output_dim() != p {
                return Err(EmpcError::DimensionMismatch {
                    what: "probe cost weights",
                    expected: m + p,
                    got: probe.input_dim() + probe.output_dim(),
                });
            }
            for i in 0..m {
                lp.set_cost(layout.u_e + i, probe.input_weights()[i]);
            }
            for i in 0..p {
                lp.set_cost(layout.y_e + i, probe.output_weights()[i]);
            }
        }
        BuildObjective::PredictedTerminal => {
            lp.set_cost(layout.cost_var(window - 1), 1.0);
        }
        BuildObjective::None => {}
    }

    let lp = if flags.regularize && cfg.alpha_reg > 0.0 {
        l1_epigraph_augment(&lp, layout.alpha.clone(), cfg.alpha_reg)?
    } else {
        lp
    };

    Ok(EmpcLp {
        lp,
        layout,
        beta: cfg.beta,
        known_cost,
    })
}
