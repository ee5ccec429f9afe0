//! Scenario files: one JSON document describing the plant, the data source,
//! the controller configuration, and the closed-loop run. Parsing is strict
//! (unknown fields are rejected) and serialization round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use dempc_core::plant::builtins;
use dempc_core::{
    BoxSet, CostMode, DataTrajectory, EmpcConfig, ExtendedState, InitialBound, LinearCost,
    StateSpace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub plant: PlantSpec,
    pub data: DataSpec,
    pub empc: EmpcSpec,
    #[serde(default)]
    pub initial_bound: BoundSpec,
    pub run: RunSpec,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    /// Name in the builtin registry: `scalar_test` or `reactor`.
    Builtin(String),
    /// Explicit state-space matrices, row major.
    Inline {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSpec {
    /// Simulate the plant from rest under i.i.d. uniform inputs.
    Generate {
        samples: usize,
        seed: u64,
        input_lower: Vec<f64>,
        input_upper: Vec<f64>,
    },
    /// Load a previously recorded dataset.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpcSpec {
    pub horizon: usize,
    pub order_bound: usize,
    /// Terminal-cost weight used when `run.betas` is absent.
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_reg: Option<f64>,
    pub input_box: BoxSpec,
    pub output_box: BoxSpec,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub input_weights: Vec<f64>,
    pub output_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSpec {
    /// Coefficients available to the controller.
    Known(CostWeights),
    /// Controller sees only sampled costs; the true coefficients generate
    /// the cost column and measure closed-loop performance.
    DataDriven { true_cost: CostWeights },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSpec {
    /// Tightest admissible start: optimal cost over reachable equilibria.
    #[default]
    OptimalReachable,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub steps: usize,
    /// Sweep points; defaults to the single `empc.beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Averaging window for the reported tail performance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<usize>,
    #[serde(default)]
    pub xi0: Xi0Spec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Xi0Spec {
    /// Resting past: the plant has sat at the origin.
    #[default]
    Zero,
    /// Run the plant open loop from the origin under this constant input
    /// for `order_bound` steps and start from the resulting window.
    WarmUp { input: Vec<f64> },
    Explicit {
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    },
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .with_context(|| format!("parsing scenario {}", path.display()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(betas) = &self.run.betas {
            if betas.is_empty() {
                bail!("run.betas must be nonempty when present");
            }
        }
        if self.run.steps == 0 {
            bail!("run.steps must be positive");
        }
        Ok(())
    }

    /// Sweep points for `run`: the explicit list, or the single beta.
    pub fn betas(&self) -> Vec<f64> {
        self.run
            .betas
            .clone()
            .unwrap_or_else(|| vec![self.empc.beta])
    }

    pub fn build_plant(&self) -> Result<StateSpace> {
        match &self.plant {
            PlantSpec::Builtin(name) => match name.as_str() {
                "scalar_test" => Ok(builtins::scalar_test()),
                "reactor" => Ok(builtins::reactor()),
                other => bail!("unknown builtin plant `{other}` (available: scalar_test, reactor)"),
            },
            PlantSpec::Inline { a, b, c, d } => {
                let build = |rows: &Vec<Vec<f64>>, what: &str| -> Result<DMatrix<f64>> {
                    let nrows = rows.len();
                    let ncols = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|r| r.len() != ncols) {
                        bail!("matrix {what} has ragged rows");
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
                };
                StateSpace::new(
                    build(a, "a")?,
                    build(b, "b")?,
                    build(c, "c")?,
                    build(d, "d")?,
                )
                .context("assembling the inline plant")
            }
        }
    }

    /// The stage cost used to measure closed-loop performance; in
    /// data-driven mode this is the generating cost, never shown to the
    /// controller.
    pub fn true_cost(&self) -> Result<LinearCost> {
        let weights = match &self.empc.cost {
            CostSpec::Known(w) => w,
            CostSpec::DataDriven { true_cost } => true_cost,
        };
        LinearCost::new(
            DVector::from_column_slice(&weights.input_weights),
            DVector::from_column_slice(&weights.output_weights),
        )
        .context("assembling the stage cost")
    }

    /// Loads or generates the dataset. Generated data gets a cost column in
    /// data-driven mode; file data must already carry one.
    pub fn load_data(&self, plant: &StateSpace, base_dir: &Path) -> Result<DataTrajectory> {
        let data = match &self.data {
            DataSpec::Generate {
                samples,
                seed,
                input_lower,
                input_upper,
            } => {
                let data = plant
                    .generate_pe_data(
                        *samples,
                        &DVector::from_column_slice(input_lower),
                        &DVector::from_column_slice(input_upper),
                        *seed,
                    )
                    .context("generating the dataset")?;
                if matches!(self.empc.cost, CostSpec::DataDriven { .. }) {
                    let cost = self.true_cost()?;
                    let samples: Vec<f64> = data
                        .inputs()
                        .iter()
                        .zip(data.outputs())
                        .map(|(u, y)| cost.evaluate(u, y))
                        .collect();
                    data.with_cost(samples).context("attaching cost samples")?
                } else {
                    data
                }
            }
            DataSpec::File { path } => {
                let resolved = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let file = fs::File::open(&resolved)
                    .with_context(|| format!("opening dataset {}", resolved.display()))?;
                let data = DataTrajectory::read_csv(file)
                    .with_context(|| format!("parsing dataset {}", resolved.display()))?;
                if matches!(self.empc.cost, CostSpec::DataDriven { .. }) && !data.has_cost() {
                    bail!(
                        "data-driven cost mode needs an `l` column in {}",
                        resolved.display()
                    );
                }
                data
            }
        };
        Ok(data)
    }

    pub fn empc_config(&self, beta: f64) -> Result<EmpcConfig> {
        let cost_mode = match &self.empc.cost {
            CostSpec::Known(w) => CostMode::Known(
                LinearCost::new(
                    DVector::from_column_slice(&w.input_weights),
                    DVector::from_column_slice(&w.output_weights),
                )
                .context("assembling the known cost")?,
            ),
            CostSpec::DataDriven { .. } => CostMode::DataDriven,
        };
        let mut cfg = EmpcConfig::new(
            self.empc.horizon,
            self.empc.order_bound,
            beta,
            BoxSet::new(
                DVector::from_column_slice(&self.empc.input_box.lower),
                DVector::from_column_slice(&self.empc.input_box.upper),
            )
            .context("assembling the input box")?,
            BoxSet::new(
                DVector::from_column_slice(&self.empc.output_box.lower),
                DVector::from_column_slice(&self.empc.output_box.upper),
            )
            .context("assembling the output box")?,
            cost_mode,
        )
        .context("building the controller configuration")?;
        if let Some(reg) = self.empc.alpha_reg {
            cfg.alpha_reg = reg;
        }
        cfg.initial_bound = match self.initial_bound {
            BoundSpec::OptimalReachable => InitialBound::OptimalReachable,
            BoundSpec::Explicit(v) => InitialBound::Explicit(v),
        };
        cfg.validate()
            .context("validating the controller configuration")?;
        Ok(cfg)
    }

    pub fn initial_state(&self, plant: &StateSpace) -> Result<ExtendedState> {
        let lag = self.empc.order_bound;
        match &self.run.xi0 {
            Xi0Spec::Zero => Ok(ExtendedState::zero(
                lag,
                plant.input_dim(),
                plant.output_dim(),
            )),
            Xi0Spec::WarmUp { input } => {
                let u = DVector::from_column_slice(input);
                let inputs = vec![u; lag];
                let sim = plant
                    .simulate(&DVector::zeros(plant.state_dim()), &inputs)
                    .context("warm-up simulation")?;
                ExtendedState::new(sim.inputs, sim.outputs).context("assembling the warm-up window")
            }
            Xi0Spec::Explicit { inputs, outputs } => ExtendedState::new(
                inputs
                    .iter()
                    .map(|u| DVector::from_column_slice(u))
                    .collect(),
                outputs
                    .iter()
                    .map(|y| DVector::from_column_slice(y))
                    .collect(),
            )
            .context("assembling the explicit past window"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reactor_scenario_json() -> &'static str {
        r#"{
            "plant": { "builtin": "reactor" },
            "data": { "generate": { "samples": 100, "seed": 20260401,
                                     "input_lower": [-1.0], "input_upper": [1.0] } },
            "empc": {
                "horizon": 15,
                "order_bound": 3,
                "beta": 100.0,
                "alpha_reg": 0.01,
                "input_box": { "lower": [-3.0], "upper": [3.0] },
                "output_box": { "lower": [-5.0, -5.0], "upper": [5.0, 5.0] },
                "cost": { "known": { "input_weights": [0.0], "output_weights": [0.0, -1.0] } }
            },
            "run": { "steps": 100, "betas": [1.0, 10.0, 100.0, 1000.0], "tail": 20, "xi0": "zero" },
            "output_dir": "out/reactor"
        }"#
    }

    #[test]
    fn scenario_round_trip_is_identity() {
        let parsed: Scenario = serde_json::from_str(reactor_scenario_json()).unwrap();
        let serialized = serde_json::to_string_pretty(&parsed).unwrap();
        let reparsed: Scenario = serde_json::from_str(&serialized).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text =
            reactor_scenario_json().replace("\"steps\": 100", "\"steps\": 100, \"bogus\": 1");
        assert!(serde_json::from_str::<Scenario>(&text).is_err());
    }

    #[test]
    fn builtin_registry_resolves_both_plants() {
        let parsed: Scenario = serde_json::from_str(reactor_scenario_json()).unwrap();
        let plant = parsed.build_plant().unwrap();
        assert_eq!(plant.state_dim(), 3);

        let mut scalar = parsed;
        scalar.plant = PlantSpec::Builtin("scalar_test".into());
        assert_eq!(scalar.build_plant().unwrap().state_dim(), 1);

        scalar.plant = PlantSpec::Builtin("nonexistent".into());
        assert!(scalar.build_plant().is_err());
    }

    #[test]
    fn empty_beta_sweep_is_rejected() {
        let text = reactor_scenario_json().replace("[1.0, 10.0, 100.0, 1000.0]", "[]");
        let parsed: Scenario = serde_json::from_str(&text).unwrap();
        assert!(parsed.validate().is_err());
    }

    #[test]
    fn warm_up_window_is_a_plant_trajectory() {
        let text =
            reactor_scenario_json().replace("\"zero\"", r#"{ "warm_up": { "input": [0.5] } }"#);
        let parsed: Scenario = serde_json::from_str(&text).unwrap();
        let plant = parsed.build_plant().unwrap();
        let xi = parsed.initial_state(&plant).unwrap();
        assert_eq!(xi.lag(), 3);
        let residual = plant
            .trajectory_residual(xi.inputs(), xi.outputs())
            .unwrap();
        assert!(residual < 1e-12);
    }
}
