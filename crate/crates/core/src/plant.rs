//! Discrete-time LTI plants in state-space form.
//!
//! This module is the simulation side of the toolkit: it generates the
//! offline data a controller consumes and plays the plant in closed-loop
//! experiments. The controller itself never reads the matrices here; it
//! sees input/output samples only.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::data::DataTrajectory;

/// Generator used by [`StateSpace::generate_pe_data`]. Recorded in experiment
/// metadata so datasets can be reproduced exactly.
pub const RNG_ALGORITHM: &str = "chacha12";

/// Relative singular-value threshold below which a matrix is treated as
/// rank-deficient.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state matrix must be square, got {rows}x{cols}")]
    NonSquareState { rows: usize, cols: usize },
    #[error("plant must have at least one state, input, and output")]
    EmptyDimension,
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("input box is invalid: lower bound exceeds upper bound on channel {channel}")]
    InvalidInputBox { channel: usize },
    #[error("I - A is singular; the plant has no unique forced equilibrium")]
    SingularEquilibrium,
    #[error("window is not consistent with any plant state (residual {residual:.3e})")]
    InconsistentWindow { residual: f64 },
    #[error("window must contain at least one sample")]
    EmptyWindow,
}

/// Discrete-time system x+ = A x + B u, y = C x + D u.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

/// Simulation record: inputs applied, outputs measured, and the state at
/// every sample time (`states[k]` is the state y[k] was measured from;
/// `states` has one extra trailing entry, the state after the final step).
#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
}

impl SimTrajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        if a.nrows() != a.ncols() {
            return Err(PlantError::NonSquareState {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(PlantError::EmptyDimension);
        }
        if b.nrows() != n {
            return Err(PlantError::DimensionMismatch {
                what: "input matrix rows",
                expected: n,
                got: b.nrows(),
            });
        }
        if c.ncols() != n {
            return Err(PlantError::DimensionMismatch {
                what: "output matrix columns",
                expected: n,
                got: c.ncols(),
            });
        }
        if d.nrows() != c.nrows() {
            return Err(PlantError::DimensionMismatch {
                what: "feedthrough rows",
                expected: c.nrows(),
                got: d.nrows(),
            });
        }
        if d.ncols() != b.ncols() {
            return Err(PlantError::DimensionMismatch {
                what: "feedthrough columns",
                expected: b.ncols(),
                got: d.ncols(),
            });
        }
        Ok(Self { a, b, c, d })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Runs the recursion from `x0` over the given input sequence.
    pub fn simulate(
        &self,
        x0: &DVector<f64>,
        inputs: &[DVector<f64>],
    ) -> Result<SimTrajectory, PlantError> {
        if inputs.is_empty() {
            return Err(PlantError::EmptyInput);
        }
        if x0.len() != self.state_dim() {
            return Err(PlantError::DimensionMismatch {
                what: "initial state",
                expected: self.state_dim(),
                got: x0.len(),
            });
        }
        for u in inputs {
            if u.len() != self.input_dim() {
                return Err(PlantError::DimensionMismatch {
                    what: "input sample",
                    expected: self.input_dim(),
                    got: u.len(),
                });
            }
        }
        let mut states = Vec::with_capacity(inputs.len() + 1);
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut x = x0.clone();
        for u in inputs {
            outputs.push(&self.c * &x + &self.d * u);
            states.push(x.clone());
            x = &self.a * &x + &self.b * u;
        }
        states.push(x);
        Ok(SimTrajectory {
            inputs: inputs.to_vec(),
            outputs,
            states,
        })
    }

    /// Generates an input/output dataset from the zero state, with inputs
    /// drawn i.i.d. uniformly from the given per-channel box. The RNG is
    /// [`RNG_ALGORITHM`] seeded with `seed`; identical arguments reproduce
    /// the dataset bit for bit.
    pub fn generate_pe_data(
        &self,
        samples: usize,
        input_lower: &DVector<f64>,
        input_upper: &DVector<f64>,
        seed: u64,
    ) -> Result<DataTrajectory, PlantError> {
        if samples == 0 {
            return Err(PlantError::EmptyInput);
        }
        let m = self.input_dim();
        if input_lower.len() != m {
            return Err(PlantError::DimensionMismatch {
                what: "input box lower bound",
                expected: m,
                got: input_lower.len(),
            });
        }
        if input_upper.len() != m {
            return Err(PlantError::DimensionMismatch {
                what: "input box upper bound",
                expected: m,
                got: input_upper.len(),
            });
        }
        for ch in 0..m {
            // Rejects NaN bounds along with inverted ones.
            let ordered = input_lower[ch] <= input_upper[ch];
            if !ordered {
                return Err(PlantError::InvalidInputBox { channel: ch });
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let channels: Vec<Uniform<f64>> = (0..m)
            .map(|ch| Uniform::new_inclusive(input_lower[ch], input_upper[ch]))
            .collect();
        let inputs: Vec<DVector<f64>> = (0..samples)
            .map(|_| DVector::from_iterator(m, channels.iter().map(|dist| dist.sample(&mut rng))))
            .collect();
        let x0 = DVector::zeros(self.state_dim());
        let sim = self.simulate(&x0, &inputs)?;
        Ok(DataTrajectory::new(sim.inputs, sim.outputs).expect("simulated lengths match"))
    }

    /// State reached by holding `u_e` forever: x = (I - A)^-1 B u_e.
    pub fn equilibrium_state(&self, u_e: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        if u_e.len() != self.input_dim() {
            return Err(PlantError::DimensionMismatch {
                what: "equilibrium input",
                expected: self.input_dim(),
                got: u_e.len(),
            });
        }
        let n = self.state_dim();
        let i_minus_a = DMatrix::identity(n, n) - &self.a;
        // A unit eigenvalue makes the forced equilibrium non-unique; reject it
        // by singular-value test rather than trusting LU pivots.
        let svals = i_minus_a.clone().svd(false, false).singular_values;
        let smax = svals.max();
        if smax <= 0.0 || svals.min() <= RANK_TOL * smax {
            return Err(PlantError::SingularEquilibrium);
        }
        i_minus_a
            .lu()
            .solve(&(&self.b * u_e))
            .ok_or(PlantError::SingularEquilibrium)
    }

    /// Steady-state output for a held input: y = (C (I - A)^-1 B + D) u_e.
    pub fn equilibrium_output(&self, u_e: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        let x_e = self.equilibrium_state(u_e)?;
        Ok(&self.c * x_e + &self.d * u_e)
    }

    /// Steady-state gain matrix C (I - A)^-1 B + D.
    pub fn equilibrium_gain(&self) -> Result<DMatrix<f64>, PlantError> {
        let n = self.state_dim();
        let i_minus_a = DMatrix::identity(n, n) - &self.a;
        let svals = i_minus_a.clone().svd(false, false).singular_values;
        let smax = svals.max();
        if smax <= 0.0 || svals.min() <= RANK_TOL * smax {
            return Err(PlantError::SingularEquilibrium);
        }
        let inv = i_minus_a
            .try_inverse()
            .ok_or(PlantError::SingularEquilibrium)?;
        Ok(&self.c * inv * &self.b + &self.d)
    }

    /// True when the realization is both controllable and observable
    /// (full-rank Kalman matrices under the [`RANK_TOL`] threshold).
    pub fn is_minimal(&self) -> bool {
        let n = self.state_dim();
        let ctrb = self.controllability_matrix();
        let obsv = self.observability_matrix(n);
        numeric_rank(&ctrb) == n && numeric_rank(&obsv) == n
    }

    fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut blocks = DMatrix::zeros(n, n * m);
        let mut power = self.b.clone();
        for k in 0..n {
            blocks.view_mut((0, k * m), (n, m)).copy_from(&power);
            power = &self.a * power;
        }
        blocks
    }

    /// Stacked output maps C, CA, ..., CA^(rows-1).
    fn observability_matrix(&self, rows: usize) -> DMatrix<f64> {
        let n = self.state_dim();
        let p = self.output_dim();
        let mut stack = DMatrix::zeros(rows * p, n);
        let mut power = self.c.clone();
        for k in 0..rows {
            stack.view_mut((k * p, 0), (p, n)).copy_from(&power);
            power *= &self.a;
        }
        stack
    }

    /// Smallest-residual state explaining an input/output window, i.e. the
    /// state at the time of the first window sample. Fails when the window
    /// is not a trajectory of this plant.
    pub fn reconstruct_state(
        &self,
        u_window: &[DVector<f64>],
        y_window: &[DVector<f64>],
    ) -> Result<DVector<f64>, PlantError> {
        let residual_tol = 1e-6;
        let (x0, residual) = self.explain_window(u_window, y_window)?;
        let scale = 1.0 + y_window.iter().map(|y| y.amax()).fold(0.0_f64, f64::max);
        if residual > residual_tol * scale {
            return Err(PlantError::InconsistentWindow { residual });
        }
        Ok(x0)
    }

    /// Infinity-norm residual of the best state-space explanation of a
    /// window. Zero (up to rounding) exactly when the window is a
    /// trajectory of this plant.
    pub fn trajectory_residual(
        &self,
        u_window: &[DVector<f64>],
        y_window: &[DVector<f64>],
    ) -> Result<f64, PlantError> {
        Ok(self.explain_window(u_window, y_window)?.1)
    }

    /// Least-squares initial state for a window plus its output residual.
    fn explain_window(
        &self,
        u_window: &[DVector<f64>],
        y_window: &[DVector<f64>],
    ) -> Result<(DVector<f64>, f64), PlantError> {
        if u_window.is_empty() {
            return Err(PlantError::EmptyWindow);
        }
        if u_window.len() != y_window.len() {
            return Err(PlantError::DimensionMismatch {
                what: "window output length",
                expected: u_window.len(),
                got: y_window.len(),
            });
        }
        let p = self.output_dim();
        let len = u_window.len();
        // Forced response from the zero state; what remains must lie in the
        // range of the observability stack.
        let forced = self.simulate(&DVector::zeros(self.state_dim()), u_window)?;
        let mut free = DVector::zeros(len * p);
        for (k, (y, yf)) in y_window.iter().zip(forced.outputs.iter()).enumerate() {
            if y.len() != p {
                return Err(PlantError::DimensionMismatch {
                    what: "window output sample",
                    expected: p,
                    got: y.len(),
                });
            }
            free.rows_mut(k * p, p).copy_from(&(y - yf));
        }
        let obsv = self.observability_matrix(len);
        let svd = obsv.clone().svd(true, true);
        let x0 = svd
            .solve(&free, RANK_TOL * svd.singular_values.max().max(1e-300))
            .map_err(|_| PlantError::InconsistentWindow { residual: f64::NAN })?;
        let residual = (obsv * &x0 - free).amax();
        Ok((x0, residual))
    }
}

/// Rank under the relative singular-value threshold [`RANK_TOL`].
fn numeric_rank(matrix: &DMatrix<f64>) -> usize {
    let svals = matrix.clone().svd(false, false).singular_values;
    let smax = svals.max();
    if smax <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Plants used by the bundled experiments and tests.
pub mod builtins {
    use super::StateSpace;
    use nalgebra::DMatrix;

    /// First-order lag with static gain 2: x+ = 0.5 x + u, y = x.
    pub fn scalar_test() -> StateSpace {
        StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        )
        .expect("static dimensions are consistent")
    }

    /// Three-state, single-input, two-output continuously stirred tank
    /// reactor model (zero-order-hold discretization).
    pub fn reactor() -> StateSpace {
        StateSpace::new(
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.7438, 0.0, -3.1180, //
                    0.0267, 0.9048, 0.4728, //
                    0.0, 0.0, 0.9048,
                ],
            ),
            DMatrix::from_row_slice(3, 1, &[-0.1666, 0.0253, 0.0952]),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
        )
        .expect("static dimensions are consistent")
    }
}
