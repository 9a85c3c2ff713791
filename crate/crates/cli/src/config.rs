//! Experiment configuration: one JSON file captures the system, constraint
//! sets, horizon, costs, solver and training settings, and the simulation
//! scenarios. The built-in default is the two-state benchmark with the
//! octagonal input set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use neurodp::{HPolytope, LinearSystem, StageCost, StepRule, TrainMethod};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySection {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintsSection {
    #[serde(rename = "X")]
    pub x: PolySection,
    #[serde(rename = "U")]
    pub u: PolySection,
    #[serde(rename = "X_N")]
    pub x_n: PolySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostsSection {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "terminal_Q")]
    pub terminal_q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FwSection {
    pub max_iters: usize,
    /// "exact" uses the closed-form quadratic step where available and falls
    /// back to Armijo; "armijo" always backtracks.
    pub step_rule: String,
    pub gap_tol: f64,
}

impl Default for FwSection {
    fn default() -> Self {
        Self { max_iters: 10, step_rule: "armijo".into(), gap_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSection {
    /// "levenberg_marquardt" or "gradient_descent".
    pub method: String,
    pub q_per_stage: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub target_mse: f64,
    pub max_epochs: usize,
    pub hidden_units: Vec<usize>,
    #[serde(default = "default_gd_step")]
    pub gd_step: f64,
    #[serde(default = "default_gd_epochs")]
    pub gd_epochs: usize,
}

fn default_gd_step() -> f64 {
    1e-3
}

fn default_gd_epochs() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(rename = "T")]
    pub t: usize,
    pub initial_states: Vec<Vec<f64>>,
    #[serde(default = "default_threshold")]
    pub suboptimality_threshold: f64,
}

fn default_threshold() -> f64 {
    0.10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub constraints: ConstraintsSection,
    pub horizon: usize,
    pub costs: CostsSection,
    #[serde(default)]
    pub fw: FwSection,
    pub training: TrainingSection,
    pub simulation: SimulationSection,
    pub output_dir: String,
}

impl ExperimentConfig {
    /// The benchmark parameterization: A = [[1.5, 0], [1, -1.5]], B = I,
    /// |x|_inf <= 10, the octagonal input set, N = 6, identity Q and R, zero
    /// terminal cost, target set {0}, initial states (6.75, 9) and
    /// (-8.6, -7.1).
    pub fn benchmark() -> Self {
        Self {
            system: SystemSection {
                a: vec![vec![1.5, 0.0], vec![1.0, -1.5]],
                b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            constraints: ConstraintsSection {
                x: PolySection {
                    h: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                    offsets: vec![10.0, 10.0, 10.0, 10.0],
                },
                u: PolySection {
                    h: vec![
                        vec![1.0, 0.0],
                        vec![0.0, 1.0],
                        vec![-1.0, 0.0],
                        vec![0.0, -1.0],
                        vec![1.0, 1.0],
                        vec![-1.0, 1.0],
                        vec![-1.0, -1.0],
                        vec![1.0, -1.0],
                    ],
                    offsets: vec![5.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 7.0],
                },
                x_n: PolySection {
                    h: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                    offsets: vec![0.0, 0.0, 0.0, 0.0],
                },
            },
            horizon: 6,
            costs: CostsSection {
                q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                r: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                terminal_q: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            },
            fw: FwSection::default(),
            training: TrainingSection {
                method: "levenberg_marquardt".into(),
                q_per_stage: 1000,
                seed: 7,
                validation_fraction: 0.2,
                target_mse: 1e-2,
                max_epochs: 250,
                hidden_units: vec![50],
                gd_step: default_gd_step(),
                gd_epochs: default_gd_epochs(),
            },
            simulation: SimulationSection {
                t: 12,
                initial_states: vec![vec![6.75, 9.0], vec![-8.6, -7.1]],
                suboptimality_threshold: 0.10,
            },
            output_dir: "out".into(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n_x = self.system.a.len();
        if n_x == 0 || self.system.a.iter().any(|r| r.len() != n_x) {
            return Err(ConfigError("system.A must be square and nonempty".into()));
        }
        if self.system.b.len() != n_x {
            return Err(ConfigError("system.B must have as many rows as A".into()));
        }
        let n_u = self.system.b[0].len();
        if n_u == 0 || self.system.b.iter().any(|r| r.len() != n_u) {
            return Err(ConfigError("system.B rows must have equal nonzero width".into()));
        }
        for (name, poly, dim) in [
            ("constraints.X", &self.constraints.x, n_x),
            ("constraints.U", &self.constraints.u, n_u),
            ("constraints.X_N", &self.constraints.x_n, n_x),
        ] {
            if poly.h.is_empty() || poly.h.iter().any(|r| r.len() != dim) {
                return Err(ConfigError(format!("{name}.H must have rows of width {dim}")));
            }
            if poly.offsets.len() != poly.h.len() {
                return Err(ConfigError(format!("{name}.h length must match its row count")));
            }
        }
        for (name, m, dim) in [
            ("costs.Q", &self.costs.q, n_x),
            ("costs.R", &self.costs.r, n_u),
            ("costs.terminal_Q", &self.costs.terminal_q, n_x),
        ] {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(ConfigError(format!("{name} must be {dim}x{dim}")));
            }
        }
        if self.horizon == 0 {
            return Err(ConfigError("horizon must be at least 1".into()));
        }
        if self.simulation.t == 0 {
            return Err(ConfigError("simulation.T must be at least 1".into()));
        }
        for (i, x0) in self.simulation.initial_states.iter().enumerate() {
            if x0.len() != n_x {
                return Err(ConfigError(format!(
                    "simulation.initial_states[{i}] must have dimension {n_x}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.training.validation_fraction) {
            return Err(ConfigError("training.validation_fraction must be in [0, 1)".into()));
        }
        if self.training.target_mse <= 0.0 {
            return Err(ConfigError("training.target_mse must be positive".into()));
        }
        if self.training.hidden_units.is_empty() || self.training.hidden_units.contains(&0) {
            return Err(ConfigError("training.hidden_units must be nonempty and positive".into()));
        }
        match self.training.method.as_str() {
            "levenberg_marquardt" | "gradient_descent" => {}
            other => {
                return Err(ConfigError(format!(
                    "training.method must be levenberg_marquardt or gradient_descent, got {other}"
                )))
            }
        }
        match self.fw.step_rule.as_str() {
            "exact" | "armijo" => {}
            other => {
                return Err(ConfigError(format!("fw.step_rule must be exact or armijo, got {other}")))
            }
        }
        if self.fw.max_iters == 0 {
            return Err(ConfigError("fw.max_iters must be at least 1".into()));
        }
        if self.simulation.suboptimality_threshold <= 0.0 {
            return Err(ConfigError("simulation.suboptimality_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.system.a.len()
    }

    pub fn system(&self) -> Result<LinearSystem, ConfigError> {
        let a = to_matrix(&self.system.a);
        let b = to_matrix(&self.system.b);
        LinearSystem::new(a, b).map_err(|e| ConfigError(format!("system: {e}")))
    }

    pub fn cost(&self) -> Result<StageCost, ConfigError> {
        StageCost::new(
            to_matrix(&self.costs.q),
            to_matrix(&self.costs.r),
            to_matrix(&self.costs.terminal_q),
        )
        .map_err(|e| ConfigError(format!("costs: {e}")))
    }

    pub fn x_set(&self) -> Result<HPolytope, ConfigError> {
        poly(&self.constraints.x).map_err(|e| ConfigError(format!("constraints.X: {e}")))
    }

    pub fn u_set(&self) -> Result<HPolytope, ConfigError> {
        poly(&self.constraints.u).map_err(|e| ConfigError(format!("constraints.U: {e}")))
    }

    pub fn target_set(&self) -> Result<HPolytope, ConfigError> {
        poly(&self.constraints.x_n).map_err(|e| ConfigError(format!("constraints.X_N: {e}")))
    }

    pub fn fw_config(&self) -> neurodp::FwConfig {
        neurodp::FwConfig {
            max_iters: self.fw.max_iters,
            step_rule: match self.fw.step_rule.as_str() {
                "exact" => StepRule::ExactQuadratic,
                _ => StepRule::armijo_default(),
            },
            gap_tol: self.fw.gap_tol,
            record_trace: false,
        }
    }

    pub fn train_config(&self, seed_override: Option<u64>) -> neurodp::TrainConfig {
        neurodp::TrainConfig {
            method: match self.training.method.as_str() {
                "gradient_descent" => TrainMethod::GradientDescent {
                    step: self.training.gd_step,
                    epochs: self.training.gd_epochs,
                },
                _ => TrainMethod::LevenbergMarquardt,
            },
            max_epochs: self.training.max_epochs,
            target_mse: self.training.target_mse,
            validation_fraction: self.training.validation_fraction,
            seed: seed_override.unwrap_or(self.training.seed),
        }
    }

    pub fn initial_states(&self) -> Vec<DVector<f64>> {
        self.simulation.initial_states.iter().map(|v| DVector::from_vec(v.clone())).collect()
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn poly(section: &PolySection) -> Result<HPolytope, neurodp::GeometryError> {
    HPolytope::new(to_matrix(&section.h), DVector::from_vec(section.offsets.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::benchmark();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.horizon, 6);
        assert_eq!(back.training.q_per_stage, 1000);
        assert_eq!(back.training.hidden_units, vec![50]);
    }

    #[test]
    fn validation_catches_dimension_mismatch() {
        let mut cfg = ExperimentConfig::benchmark();
        cfg.costs.q = vec![vec![1.0]];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::benchmark();
        cfg.simulation.initial_states.push(vec![1.0]);
        assert!(cfg.validate().is_err());
    }
}
