//! Experiment configuration: a sectioned TOML file with keyed defaults for
//! every game, model, objective, solver, run, and evaluation constant.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use cogs_core::bargaining::BargainingConfig;
use cogs_core::driver::Algorithm;
use cogs_core::dynamics::EnsembleConfig;
use cogs_core::eval::OracleKind;
use cogs_core::response::DdqnConfig;
use cogs_core::solvers::{SolverConfig, SolverKind};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    /// "bargaining" or "mini_bargaining".
    pub name: String,
}

impl Default for GameSection {
    fn default() -> Self {
        Self { name: "bargaining".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BargainingSection {
    pub n_items: usize,
    pub valuation_sum_bounds: [f64; 2],
    pub pool_sum_bounds: [u32; 2],
    pub max_turns: usize,
    pub discount: f64,
}

impl Default for BargainingSection {
    fn default() -> Self {
        let cfg = BargainingConfig::default();
        Self {
            n_items: cfg.n_items,
            valuation_sum_bounds: cfg.valuation_sum_bounds,
            pool_sum_bounds: cfg.pool_sum_bounds,
            max_turns: cfg.max_turns,
            discount: cfg.discount,
        }
    }
}

impl BargainingSection {
    fn from_config(cfg: &BargainingConfig) -> Self {
        Self {
            n_items: cfg.n_items,
            valuation_sum_bounds: cfg.valuation_sum_bounds,
            pool_sum_bounds: cfg.pool_sum_bounds,
            max_turns: cfg.max_turns,
            discount: cfg.discount,
        }
    }

    pub fn to_config(&self) -> BargainingConfig {
        BargainingConfig {
            n_items: self.n_items,
            valuation_sum_bounds: self.valuation_sum_bounds,
            pool_sum_bounds: self.pool_sum_bounds,
            max_turns: self.max_turns,
            discount: self.discount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// "uniform" or "psro_eq".
    pub behavior: String,
    pub num_trajectories: usize,
    /// Equilibrium-mixture generation: number of PSRO trials mixed over.
    pub psro_profiles: usize,
    /// Iterations per PSRO trial.
    pub psro_iterations: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            behavior: "uniform".into(),
            num_trajectories: 1000,
            psro_profiles: 5,
            psro_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub ensemble_size: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub training_steps: usize,
    pub terminal_match_tol: f64,
    pub max_rollout_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let cfg = EnsembleConfig::default();
        Self {
            ensemble_size: cfg.ensemble_size,
            hidden_width: cfg.hidden_width,
            depth: cfg.depth,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            training_steps: cfg.training_steps,
            terminal_match_tol: cfg.terminal_match_tol,
            max_rollout_len: 10,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            ensemble_size: self.ensemble_size,
            hidden_width: self.hidden_width,
            depth: self.depth,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            training_steps: self.training_steps,
            terminal_match_tol: self.terminal_match_tol,
            max_rollout_len: self.max_rollout_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSection {
    pub penalty_weight: f64,
    pub coverage_weight: f64,
    pub anneal_steps: usize,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self { penalty_weight: 4.0, coverage_weight: 0.2, anneal_steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdqnSection {
    pub width: usize,
    pub depth: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_update_every: usize,
    pub learn_every: usize,
    pub discount: f64,
    pub min_buffer: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    pub training_steps: usize,
}

impl Default for DdqnSection {
    fn default() -> Self {
        let cfg = DdqnConfig::default();
        Self {
            width: cfg.width,
            depth: cfg.depth,
            replay_capacity: cfg.replay_capacity,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            target_update_every: cfg.target_update_every,
            learn_every: cfg.learn_every,
            discount: cfg.discount,
            min_buffer: cfg.min_buffer,
            eps_start: cfg.eps_start,
            eps_end: cfg.eps_end,
            eps_decay_steps: cfg.eps_decay_steps,
            training_steps: cfg.training_steps,
        }
    }
}

impl DdqnSection {
    pub fn to_config(&self) -> DdqnConfig {
        DdqnConfig {
            width: self.width,
            depth: self.depth,
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            target_update_every: self.target_update_every,
            learn_every: self.learn_every,
            discount: self.discount,
            min_buffer: self.min_buffer,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_decay_steps: self.eps_decay_steps,
            training_steps: self.training_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MssSection {
    pub kind: String,
    pub step_size: f64,
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub regret_threshold: f64,
    pub restarts: usize,
}

impl Default for MssSection {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        Self {
            kind: "r2d".into(),
            step_size: cfg.step_size,
            max_steps: cfg.max_steps,
            convergence_tol: cfg.convergence_tol,
            regret_threshold: cfg.regret_threshold,
            restarts: cfg.restarts,
        }
    }
}

pub fn parse_solver_kind(name: &str) -> Result<SolverKind, CliError> {
    match name {
        "rd" => Ok(SolverKind::Rd),
        "rrd" => Ok(SolverKind::Rrd),
        "r2d" => Ok(SolverKind::R2d),
        "r3d" => Ok(SolverKind::R3d),
        other => Err(CliError::config(format!("unknown solver kind '{other}'"))),
    }
}

impl MssSection {
    pub fn to_config(&self, seed: u64) -> Result<SolverConfig, CliError> {
        Ok(SolverConfig {
            kind: parse_solver_kind(&self.kind)?,
            step_size: self.step_size,
            max_steps: self.max_steps,
            convergence_tol: self.convergence_tol,
            regret_threshold: self.regret_threshold,
            restarts: self.restarts,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub algorithm: String,
    pub iterations: usize,
    pub simulations_per_entry: usize,
    pub alpha_bc: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algorithm: "coffee".into(),
            iterations: 40,
            simulations_per_entry: 1000,
            alpha_bc: 0.2,
        }
    }
}

pub fn parse_algorithm(name: &str) -> Result<Algorithm, CliError> {
    match name {
        "psro" => Ok(Algorithm::Psro),
        "coffee" => Ok(Algorithm::Coffee),
        "oef" => Ok(Algorithm::Oef),
        "oef_bc" => Ok(Algorithm::OefBc),
        other => Err(CliError::config(format!("unknown algorithm '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub eval_window: usize,
    pub true_simulations: usize,
    /// "exact_tree_search" or "ddqn_online".
    pub oracle: String,
    /// Solver kinds to re-solve prefix games with during evaluation.
    pub m_eval: Vec<String>,
    pub scenarios: usize,
    pub belief_particles: usize,
    pub max_nodes: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            eval_window: 20,
            true_simulations: 1000,
            oracle: "exact_tree_search".into(),
            m_eval: vec!["rd".into(), "r2d".into()],
            scenarios: 64,
            belief_particles: 8,
            max_nodes: 2_000_000,
        }
    }
}

impl EvalSection {
    pub fn oracle_kind(&self) -> Result<OracleKind, CliError> {
        match self.oracle.as_str() {
            "exact_tree_search" => Ok(OracleKind::ExactTreeSearch),
            "ddqn_online" => Ok(OracleKind::DdqnOnline),
            other => Err(CliError::config(format!("unknown oracle '{other}'"))),
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub game: GameSection,
    pub bargaining: Option<BargainingSection>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub objective: ObjectiveSection,
    pub ddqn: DdqnSection,
    pub mss: MssSection,
    pub run: RunSection,
    pub eval: EvalSection,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config parse error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    /// The resolved game configuration: preset by name, overridden by an
    /// explicit [bargaining] section.
    pub fn game_config(&self) -> Result<BargainingConfig, CliError> {
        let base = match self.game.name.as_str() {
            "bargaining" => BargainingConfig::default(),
            "mini_bargaining" => BargainingConfig::mini(),
            other => return Err(CliError::config(format!("unknown game '{other}'"))),
        };
        Ok(self.bargaining.as_ref().map_or(base, BargainingSection::to_config))
    }

    /// Resolve, fixing the [bargaining] section so the stored snapshot is
    /// self-contained.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let mut spec = self.clone();
        spec.bargaining = Some(BargainingSection::from_config(&self.game_config()?));
        Ok(spec)
    }

    /// Shrink the expensive knobs by fixed, documented factors for
    /// laptop-scale runs.
    pub fn apply_desk_scale(&mut self) {
        self.model.training_steps = (self.model.training_steps / 20).max(1);
        self.ddqn.training_steps = (self.ddqn.training_steps / 100).max(1);
        self.ddqn.min_buffer = (self.ddqn.min_buffer / 100).max(1);
        self.ddqn.eps_decay_steps = (self.ddqn.eps_decay_steps / 100).max(1);
        self.ddqn.replay_capacity = (self.ddqn.replay_capacity / 10).max(1);
        self.run.iterations = (self.run.iterations / 8).max(1);
        self.run.simulations_per_entry = (self.run.simulations_per_entry / 20).max(1);
        self.dataset.num_trajectories = (self.dataset.num_trajectories / 5).max(1);
        self.dataset.psro_iterations = (self.dataset.psro_iterations / 4).max(1);
        self.eval.true_simulations = (self.eval.true_simulations / 20).max(1);
        self.eval.eval_window = (self.run.iterations / 2).max(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let spec = ExperimentSpec::parse("").unwrap();
        assert_eq!(spec.run.iterations, 40);
        assert_eq!(spec.run.simulations_per_entry, 1000);
        assert_eq!(spec.model.ensemble_size, 4);
        assert_eq!(spec.ddqn.training_steps, 200_000);
        assert_eq!(spec.objective.anneal_steps, 10);
        assert_eq!(spec.eval.eval_window, 20);
        let game = spec.game_config().unwrap();
        assert_eq!(game.n_items, 3);
        assert_eq!(game.pool_sum_bounds, [5, 7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentSpec::parse("[run]\nunknown_knob = 3\n");
        assert!(err.is_err());
        let err = ExperimentSpec::parse("[not_a_section]\nx = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn mini_preset_resolves() {
        let spec = ExperimentSpec::parse("[game]\nname = \"mini_bargaining\"\n").unwrap();
        let cfg = spec.game_config().unwrap();
        assert_eq!(cfg.n_items, 2);
        assert_eq!(cfg.max_turns, 4);
    }

    #[test]
    fn resolved_spec_round_trips_through_toml() {
        let mut spec = ExperimentSpec::parse("[game]\nname = \"mini_bargaining\"\n").unwrap();
        spec.apply_desk_scale();
        let resolved = spec.resolved().unwrap();
        let text = resolved.to_toml();
        let back = ExperimentSpec::parse(&text).unwrap();
        assert_eq!(resolved, back);
    }

    #[test]
    fn desk_scale_factors() {
        let mut spec = ExperimentSpec::default();
        spec.apply_desk_scale();
        assert_eq!(spec.model.training_steps, 500);
        assert_eq!(spec.ddqn.training_steps, 2000);
        assert_eq!(spec.ddqn.min_buffer, 500);
        assert_eq!(spec.run.iterations, 5);
        assert_eq!(spec.run.simulations_per_entry, 50);
        assert_eq!(spec.dataset.num_trajectories, 200);
        assert_eq!(spec.eval.true_simulations, 50);
    }
}
