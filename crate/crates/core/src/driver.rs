//! End-to-end strategy-generation loops.
//!
//! All four drivers share one skeleton: keep a symmetric strategy set and
//! empirical game, train one best response per iteration against the
//! current solver profile, extend the game, and re-solve. They differ in
//! the environment the responses train in (true game vs. learned model),
//! the response objective, and post-processing (behavior-cloning mixture).

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dynamics::{train_ensemble, Ensemble, EnsembleConfig, ModelMdp};
use crate::empirical::{
    EmpiricalGame, EmpiricalSnapshot, EntryStats, ProfileSimulator, TrueGameSimulator,
};
use crate::error::{CogsError, Result};
use crate::game::{
    ActionId, FixedActionPolicy, Game, MixedStrategy, PurePolicy, UniformRandomPolicy,
};
use crate::nn::{softmax, Mlp};
use crate::response::{
    anneal_alpha, train_best_response, DdqnConfig, ObjectiveConfig, ObjectiveMode, QPolicy,
};
use crate::solvers::{solve, SolveResult, SolverConfig, StopReason};

/// Serializable policy checkpoint. Every stored strategy reduces to one of
/// these; `instantiate` rebuilds a behaviorally identical policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    UniformRandom,
    FixedAction { action: ActionId },
    QNet { net: Mlp },
    BehaviorClone { net: Mlp },
    Mixed { alpha_bc: f64, trained: Box<PolicySpec>, cloned: Box<PolicySpec> },
}

impl PolicySpec {
    pub fn instantiate(&self) -> Arc<dyn PurePolicy> {
        match self {
            PolicySpec::UniformRandom => Arc::new(UniformRandomPolicy),
            PolicySpec::FixedAction { action } => Arc::new(FixedActionPolicy { action: *action }),
            PolicySpec::QNet { net } => Arc::new(QPolicy { net: net.clone() }),
            PolicySpec::BehaviorClone { net } => {
                Arc::new(BehaviorClonePolicy { net: net.clone() })
            }
            PolicySpec::Mixed { alpha_bc, trained, cloned } => Arc::new(MixedPolicy {
                alpha_bc: *alpha_bc,
                trained: trained.instantiate(),
                cloned: cloned.instantiate(),
            }),
        }
    }
}

/// Samples dataset-like actions: softmax over the classifier's logits,
/// restricted to legal actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorClonePolicy {
    pub net: Mlp,
}

impl BehaviorClonePolicy {
    fn legal_probs(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let probs = softmax(&self.net.forward_one(infostate));
        let mut masked: Vec<f64> =
            probs.iter().zip(legal_mask).map(|(&p, &m)| if m { p } else { 0.0 }).collect();
        let total: f64 = masked.iter().sum();
        if total <= f64::MIN_POSITIVE {
            let count = legal_mask.iter().filter(|&&m| m).count();
            return legal_mask
                .iter()
                .map(|&m| if m { 1.0 / count as f64 } else { 0.0 })
                .collect();
        }
        for p in &mut masked {
            *p /= total;
        }
        masked
    }
}

impl PurePolicy for BehaviorClonePolicy {
    fn act(&self, infostate: &[f64], legal_mask: &[bool], rng: &mut StdRng) -> ActionId {
        let probs = self.legal_probs(infostate, legal_mask);
        let mut u: f64 = rng.random();
        let mut last_legal = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_legal = i;
                u -= p;
                if u <= 0.0 {
                    return i;
                }
            }
        }
        last_legal
    }

    fn action_distribution(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        self.legal_probs(infostate, legal_mask)
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn checkpoint(&self) -> Option<PolicySpec> {
        Some(PolicySpec::BehaviorClone { net: self.net.clone() })
    }
}

/// Per-timestep mixture: each `act` call uses `cloned` with probability
/// `alpha_bc` and `trained` otherwise.
pub struct MixedPolicy {
    pub alpha_bc: f64,
    pub trained: Arc<dyn PurePolicy>,
    pub cloned: Arc<dyn PurePolicy>,
}

impl PurePolicy for MixedPolicy {
    fn act(&self, infostate: &[f64], legal_mask: &[bool], rng: &mut StdRng) -> ActionId {
        if self.alpha_bc > 0.0 && rng.random::<f64>() < self.alpha_bc {
            self.cloned.act(infostate, legal_mask, rng)
        } else {
            self.trained.act(infostate, legal_mask, rng)
        }
    }

    fn action_distribution(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let t = self.trained.action_distribution(infostate, legal_mask);
        let c = self.cloned.action_distribution(infostate, legal_mask);
        t.iter()
            .zip(&c)
            .map(|(tp, cp)| tp * (1.0 - self.alpha_bc) + cp * self.alpha_bc)
            .collect()
    }

    fn is_deterministic(&self) -> bool {
        match self.alpha_bc {
            a if a <= 0.0 => self.trained.is_deterministic(),
            a if a >= 1.0 => self.cloned.is_deterministic(),
            _ => false,
        }
    }

    fn checkpoint(&self) -> Option<PolicySpec> {
        Some(PolicySpec::Mixed {
            alpha_bc: self.alpha_bc,
            trained: Box::new(self.trained.checkpoint()?),
            cloned: Box::new(self.cloned.checkpoint()?),
        })
    }
}

/// Wrap a trained policy and a behavior clone into a per-timestep mixture.
pub fn mix_policy(
    trained: Arc<dyn PurePolicy>,
    cloned: Arc<dyn PurePolicy>,
    alpha_bc: f64,
) -> Result<Arc<dyn PurePolicy>> {
    if !(0.0..=1.0).contains(&alpha_bc) {
        return Err(CogsError::InvalidConfig(format!("alpha_bc {alpha_bc} out of [0, 1]")));
    }
    Ok(Arc::new(MixedPolicy { alpha_bc, trained, cloned }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Online PSRO in the true game.
    Psro,
    /// Conservative offline loop (model + penalties + coverage episodes).
    Coffee,
    /// Offline equilibrium finding: the model loop with a plain objective.
    Oef,
    /// OEF plus a behavior-cloning mixture applied to every strategy.
    OefBc,
}

/// One full run's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// PSRO iterations (one new strategy each).
    pub iterations: usize,
    /// Simulations per empirical-game entry.
    pub simulations_per_entry: usize,
    pub mss: SolverConfig,
    /// Penalty weight lambda; conservative runs only.
    pub penalty_weight: Option<f64>,
    /// Initial coverage weight alpha; conservative runs only.
    pub alpha_init: Option<f64>,
    /// Iterations over which alpha anneals to zero; conservative runs only.
    pub anneal_steps: Option<usize>,
    /// Behavior-cloning mixture weight; OEF-BC only.
    pub alpha_bc: Option<f64>,
    pub seed: u64,
    pub ensemble: EnsembleConfig,
    pub ddqn: DdqnConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.mss.validate()?;
        self.ensemble.validate()?;
        self.ddqn.validate()?;
        if self.simulations_per_entry == 0 {
            return Err(CogsError::InvalidConfig("simulations_per_entry must be >= 1".into()));
        }
        match self.algorithm {
            Algorithm::Coffee => {
                let lambda = self.penalty_weight.ok_or_else(|| {
                    CogsError::InvalidConfig("conservative runs need penalty_weight".into())
                })?;
                let alpha = self.alpha_init.ok_or_else(|| {
                    CogsError::InvalidConfig("conservative runs need alpha_init".into())
                })?;
                let steps = self.anneal_steps.ok_or_else(|| {
                    CogsError::InvalidConfig("conservative runs need anneal_steps".into())
                })?;
                if lambda < 0.0 || !(0.0..=1.0).contains(&alpha) || steps == 0 {
                    return Err(CogsError::InvalidConfig(
                        "conservative parameters out of range".into(),
                    ));
                }
            }
            Algorithm::OefBc => {
                let alpha_bc = self.alpha_bc.ok_or_else(|| {
                    CogsError::InvalidConfig("behavior-cloning runs need alpha_bc".into())
                })?;
                if !(0.0..=1.0).contains(&alpha_bc) {
                    return Err(CogsError::InvalidConfig("alpha_bc out of [0, 1]".into()));
                }
            }
            Algorithm::Psro | Algorithm::Oef => {}
        }
        Ok(())
    }
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Coverage weight used by this iteration's best response.
    pub alpha: f64,
    pub solver_steps: usize,
    pub solver_stop: StopReason,
    /// The solver's final metric (expected or worst-case summed regret).
    pub solver_metric: f64,
    /// Disagreement stats over this iteration's entry simulations.
    pub rho: EntryStats,
}

/// Everything a run produces.
pub struct RunArtifacts {
    pub run_config: RunConfig,
    pub game_config_hash: String,
    /// Strategy set, index 0 the initial uniform-random policy.
    pub strategies: Vec<Arc<dyn PurePolicy>>,
    /// Solver profiles sigma_1 .. sigma_S (over strategy prefixes).
    pub profiles: Vec<MixedStrategy>,
    pub metrics: Vec<IterationMetrics>,
    /// Disagreement stats from the initial empirical-game update.
    pub setup_rho: EntryStats,
    pub empirical: EmpiricalSnapshot,
    pub ensemble: Option<Arc<Ensemble>>,
}

impl RunArtifacts {
    /// Strategy-count invariant: the initial policy plus one per iteration.
    pub fn strategy_count_consistent(&self) -> bool {
        self.strategies.len() == self.run_config.iterations + 1
    }
}

/// The shared PSRO skeleton. `train` produces iteration s's best response
/// given (strategies, target profile, alpha_s).
fn run_loop<F>(
    cfg: &RunConfig,
    simulator: &dyn ProfileSimulator,
    game_config_hash: String,
    ensemble: Option<Arc<Ensemble>>,
    rng: &mut StdRng,
    mut train: F,
) -> Result<RunArtifacts>
where
    F: FnMut(&[Arc<dyn PurePolicy>], &MixedStrategy, f64, &mut StdRng) -> Result<QPolicy>,
{
    let mut empirical = EmpiricalGame::new(2, cfg.simulations_per_entry)?;
    let mut strategies: Vec<Arc<dyn PurePolicy>> = Vec::new();

    let initial: Arc<dyn PurePolicy> = Arc::new(UniformRandomPolicy);
    strategies.push(initial.clone());
    let setup_rho = empirical.extend(initial, simulator, rng)?;

    let mut target = MixedStrategy::one_hot(0, 1);
    let mut profiles = Vec::with_capacity(cfg.iterations);
    let mut metrics = Vec::with_capacity(cfg.iterations);

    for s in 1..=cfg.iterations {
        let alpha_s = match (cfg.alpha_init, cfg.anneal_steps) {
            (Some(a0), Some(steps)) => anneal_alpha(a0, steps, s - 1),
            _ => 0.0,
        };
        let new_policy = train(&strategies, &target, alpha_s, rng)?;
        let shared: Arc<dyn PurePolicy> = Arc::new(new_policy);
        strategies.push(shared.clone());
        let rho = empirical.extend(shared, simulator, rng)?;

        let bounded = empirical.to_bounded_nfg()?;
        let result: SolveResult = solve(&bounded, &cfg.mss)?;
        target = result.profile.clone();
        profiles.push(result.profile);
        metrics.push(IterationMetrics {
            iteration: s,
            alpha: alpha_s,
            solver_steps: result.steps_taken,
            solver_stop: result.stop_reason,
            solver_metric: result.final_metric,
            rho,
        });
        log::info!(
            "iteration {s}/{}: solver {:?} in {} steps, metric {:.4}",
            cfg.iterations,
            metrics[s - 1].solver_stop,
            metrics[s - 1].solver_steps,
            metrics[s - 1].solver_metric
        );
    }

    Ok(RunArtifacts {
        run_config: cfg.clone(),
        game_config_hash,
        strategies,
        profiles,
        metrics,
        setup_rho,
        empirical: empirical.snapshot(),
        ensemble,
    })
}

/// Online PSRO: best responses and payoff estimation in the true game.
pub fn run_psro<G: Game>(
    true_game: &G,
    game_config_hash: &str,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let simulator = TrueGameSimulator { game: true_game };
    run_loop(
        cfg,
        &simulator,
        game_config_hash.to_string(),
        None,
        rng,
        |strategies, target, _alpha, rng| {
            let (policy, _) = train_best_response(
                true_game,
                strategies,
                target,
                &ObjectiveConfig::plain(),
                &cfg.ddqn,
                None,
                rng,
            )?;
            Ok(policy)
        },
    )
}

fn run_model_loop<G: Game>(
    game: Arc<G>,
    dataset: &Dataset,
    cfg: &RunConfig,
    mode: ObjectiveMode,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(CogsError::EmptyDataset("cannot run offline on an empty dataset".into()));
    }
    let ensemble = Arc::new(train_ensemble(dataset, &cfg.ensemble, rng)?);
    let mdp = ModelMdp::new(game, ensemble.clone(), dataset.initial_states())?;
    let lambda = cfg.penalty_weight.unwrap_or(0.0);
    let anneal_steps = cfg.anneal_steps.unwrap_or(1);
    let rho_ens = ensemble.clone();
    let rho_fn = move |state: &[f64], action: ActionId| rho_ens.rho(state, action);

    run_loop(
        cfg,
        &mdp,
        dataset.metadata.game_config_hash.clone(),
        Some(ensemble.clone()),
        rng,
        |strategies, target, alpha_s, rng| {
            let obj = ObjectiveConfig {
                penalty_weight: lambda,
                coverage_weight: alpha_s,
                anneal_steps,
                mode,
            };
            let (policy, _) =
                train_best_response(&mdp, strategies, target, &obj, &cfg.ddqn, Some(&rho_fn), rng)?;
            Ok(policy)
        },
    )
}

/// Conservative offline loop: the model MDP plus the penalty-shaped,
/// coverage-augmented response objective.
pub fn run_coffee<G: Game>(
    game: Arc<G>,
    dataset: &Dataset,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    run_model_loop(game, dataset, cfg, ObjectiveMode::CoverageAugmented, rng)
}

/// Offline equilibrium finding: the model loop with the plain objective
/// (equivalent to the conservative loop with lambda = alpha = 0).
pub fn run_oef<G: Game>(
    game: Arc<G>,
    dataset: &Dataset,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    let mut plain = cfg.clone();
    plain.penalty_weight = Some(0.0);
    plain.alpha_init = Some(0.0);
    plain.anneal_steps = Some(plain.anneal_steps.unwrap_or(1));
    run_model_loop(game, dataset, &plain, ObjectiveMode::Plain, rng)
}

/// Behavior-cloning network settings; the classifier reuses the DDQN body
/// with a softmax readout and the model learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    pub width: usize,
    pub depth: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub training_steps: usize,
}

impl BcConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            width: cfg.ddqn.width,
            depth: cfg.ddqn.depth,
            batch_size: cfg.ensemble.batch_size,
            learning_rate: cfg.ensemble.learning_rate,
            training_steps: cfg.ensemble.training_steps,
        }
    }
}

/// Supervised imitation of dataset actions given information states.
pub fn train_behavior_clone<G: Game>(
    game: &G,
    dataset: &Dataset,
    cfg: &BcConfig,
    rng: &mut StdRng,
) -> Result<BehaviorClonePolicy> {
    if dataset.is_empty() {
        return Err(CogsError::EmptyDataset("behavior cloning needs trajectories".into()));
    }
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for traj in &dataset.trajectories {
        let mut actions: Vec<ActionId> = Vec::new();
        for step in &traj.steps {
            inputs.push(game.encode_infostate(step.acting_player, &step.observation, &actions));
            labels.push(step.action);
            actions.push(step.action);
        }
    }
    if inputs.is_empty() {
        return Err(CogsError::EmptyDataset("dataset has no steps".into()));
    }

    let mut dims = vec![game.infostate_dim()];
    dims.extend(std::iter::repeat(cfg.width).take(cfg.depth));
    dims.push(game.num_actions());
    let mut net = Mlp::new(&dims, rng);
    let n = inputs.len();
    let batch = cfg.batch_size.min(n);
    for _ in 0..cfg.training_steps {
        let mut x = Array2::zeros((batch, dims[0]));
        let mut y = Vec::with_capacity(batch);
        for row in 0..batch {
            let pick = if n > batch { rng.random_range(0..n) } else { row };
            for (c, v) in inputs[pick].iter().enumerate() {
                x[[row, c]] = *v;
            }
            y.push(labels[pick]);
        }
        net.train_cross_entropy(&x, &y, cfg.learning_rate);
    }
    Ok(BehaviorClonePolicy { net })
}

/// OEF with every strategy (including the initial random policy) replaced
/// by its per-timestep mixture with the behavior clone. Profiles are the
/// loop's own: mixing happens after strategy generation.
pub fn run_oef_bc<G: Game>(
    game: Arc<G>,
    dataset: &Dataset,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let alpha_bc = cfg
        .alpha_bc
        .ok_or_else(|| CogsError::InvalidConfig("behavior-cloning runs need alpha_bc".into()))?;
    let mut artifacts = run_oef(game.clone(), dataset, cfg, rng)?;
    let clone = Arc::new(train_behavior_clone(
        game.as_ref(),
        dataset,
        &BcConfig::from_run(cfg),
        rng,
    )?);
    artifacts.strategies = artifacts
        .strategies
        .iter()
        .map(|s| mix_policy(s.clone(), clone.clone(), alpha_bc))
        .collect::<Result<Vec<_>>>()?;
    artifacts.run_config = cfg.clone();
    Ok(artifacts)
}

/// Dispatch on the configured algorithm. Offline algorithms need the
/// dataset; PSRO needs only the game.
pub fn run<G: Game>(
    game: Arc<G>,
    game_config_hash: &str,
    dataset: Option<&Dataset>,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Result<RunArtifacts> {
    let need_data = || {
        dataset.ok_or_else(|| CogsError::InvalidConfig("this algorithm requires a dataset".into()))
    };
    match cfg.algorithm {
        Algorithm::Psro => run_psro(game.as_ref(), game_config_hash, cfg, rng),
        Algorithm::Coffee => run_coffee(game, need_data()?, cfg, rng),
        Algorithm::Oef => run_oef(game, need_data()?, cfg, rng),
        Algorithm::OefBc => run_oef_bc(game, need_data()?, cfg, rng),
    }
}

// ---------------------------------------------------------------------------
// Run-directory persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RunFile {
    run_config: RunConfig,
    game_config_hash: String,
    profiles: Vec<Vec<f64>>,
    metrics: Vec<IterationMetrics>,
    setup_rho: EntryStats,
    num_strategies: usize,
    has_ensemble: bool,
}

/// A policy checkpoint together with the hash of the game configuration it
/// was trained for.
#[derive(Debug, Serialize, Deserialize)]
struct PolicyCheckpoint {
    game_config_hash: String,
    spec: PolicySpec,
}

/// Per-strategy description stored in the empirical-game dump.
#[derive(Debug, Serialize, Deserialize)]
struct StrategyMeta {
    index: usize,
    kind: String,
    deterministic: bool,
}

/// The empirical-game dump: the per-member table plus the bound views the
/// solvers consume.
#[derive(Debug, Serialize, Deserialize)]
struct EmpiricalDump {
    snapshot: EmpiricalSnapshot,
    strategies: Vec<StrategyMeta>,
    lower_view: Option<Vec<f64>>,
    mean_view: Option<Vec<f64>>,
    upper_view: Option<Vec<f64>>,
}

fn policy_kind(spec: &PolicySpec) -> &'static str {
    match spec {
        PolicySpec::UniformRandom => "uniform_random",
        PolicySpec::FixedAction { .. } => "fixed_action",
        PolicySpec::QNet { .. } => "q_net",
        PolicySpec::BehaviorClone { .. } => "behavior_clone",
        PolicySpec::Mixed { .. } => "mixed",
    }
}

fn flatten_payoffs(game: &crate::nfg::NormalFormGame) -> Vec<f64> {
    let m = game.strategy_counts()[0];
    let mut out = Vec::with_capacity(m * m * 2);
    for a in 0..m {
        for b in 0..m {
            out.extend_from_slice(game.entry(&[a, b]));
        }
    }
    out
}

/// Write a run directory: run.json, strategies/, profiles.csv, metrics.csv,
/// empirical_game.json, and the model checkpoint when one exists.
pub fn save_run(artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("strategies"))?;
    let run_file = RunFile {
        run_config: artifacts.run_config.clone(),
        game_config_hash: artifacts.game_config_hash.clone(),
        profiles: artifacts.profiles.iter().map(|p| p.weights().to_vec()).collect(),
        metrics: artifacts.metrics.clone(),
        setup_rho: artifacts.setup_rho,
        num_strategies: artifacts.strategies.len(),
        has_ensemble: artifacts.ensemble.is_some(),
    };
    write_json(&dir.join("run.json"), &run_file)?;

    let mut strategy_meta = Vec::with_capacity(artifacts.strategies.len());
    for (i, strategy) in artifacts.strategies.iter().enumerate() {
        let spec = strategy.checkpoint().ok_or_else(|| {
            CogsError::IncompleteArtifacts(format!("strategy {i} is not checkpointable"))
        })?;
        strategy_meta.push(StrategyMeta {
            index: i,
            kind: policy_kind(&spec).to_string(),
            deterministic: strategy.is_deterministic(),
        });
        let checkpoint =
            PolicyCheckpoint { game_config_hash: artifacts.game_config_hash.clone(), spec };
        write_json(&dir.join("strategies").join(format!("policy_{i:03}.json")), &checkpoint)?;
    }

    // profiles.csv: iteration x strategy weights, zero-padded to the final
    // strategy count
    let total = artifacts.strategies.len();
    let mut profiles_csv = String::from("iteration");
    for k in 0..total {
        profiles_csv.push_str(&format!(",w{k}"));
    }
    profiles_csv.push('\n');
    for (s, profile) in artifacts.profiles.iter().enumerate() {
        profiles_csv.push_str(&format!("{}", s + 1));
        let padded = profile.padded(total);
        for w in padded.weights() {
            profiles_csv.push_str(&format!(",{w}"));
        }
        profiles_csv.push('\n');
    }
    std::fs::write(dir.join("profiles.csv"), profiles_csv)?;

    // metrics.csv: one row per iteration
    let mut metrics_csv =
        String::from("iteration,alpha,solver_steps,solver_stop,solver_metric,mean_rho\n");
    for m in &artifacts.metrics {
        let mean_rho = if m.rho.rho_count > 0 {
            m.rho.rho_sum / m.rho.rho_count as f64
        } else {
            f64::NAN
        };
        metrics_csv.push_str(&format!(
            "{},{},{},{:?},{},{}\n",
            m.iteration, m.alpha, m.solver_steps, m.solver_stop, m.solver_metric, mean_rho
        ));
    }
    std::fs::write(dir.join("metrics.csv"), metrics_csv)?;

    let views = artifacts.empirical.bounded_prefix(artifacts.strategies.len()).ok();
    let dump = EmpiricalDump {
        snapshot: artifacts.empirical.clone(),
        strategies: strategy_meta,
        lower_view: views.as_ref().map(|v| flatten_payoffs(&v.lower_game())),
        mean_view: views.as_ref().map(|v| flatten_payoffs(v.mean_game())),
        upper_view: views.as_ref().map(|v| flatten_payoffs(&v.upper_game())),
    };
    write_json(&dir.join("empirical_game.json"), &dump)?;
    if let Some(ensemble) = &artifacts.ensemble {
        ensemble.save(&dir.join("ensemble.json"))?;
    }
    Ok(())
}

/// Load a run directory back into artifacts with instantiated policies.
pub fn load_run(dir: &Path) -> Result<RunArtifacts> {
    let run_file: RunFile = read_json(&dir.join("run.json"))?;
    let mut strategies: Vec<Arc<dyn PurePolicy>> = Vec::with_capacity(run_file.num_strategies);
    for i in 0..run_file.num_strategies {
        let path = dir.join("strategies").join(format!("policy_{i:03}.json"));
        let checkpoint: PolicyCheckpoint = read_json(&path)?;
        if checkpoint.game_config_hash != run_file.game_config_hash {
            return Err(CogsError::HashMismatch {
                expected: run_file.game_config_hash,
                found: checkpoint.game_config_hash,
            });
        }
        strategies.push(checkpoint.spec.instantiate());
    }
    let dump: EmpiricalDump = read_json(&dir.join("empirical_game.json"))?;
    let ensemble = if run_file.has_ensemble {
        Some(Arc::new(Ensemble::load(&dir.join("ensemble.json"))?))
    } else {
        None
    };
    let profiles = run_file
        .profiles
        .into_iter()
        .map(MixedStrategy::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(RunArtifacts {
        run_config: run_file.run_config,
        game_config_hash: run_file.game_config_hash,
        strategies,
        profiles,
        metrics: run_file.metrics,
        setup_rho: run_file.setup_rho,
        empirical: dump.snapshot,
        ensemble,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path)
        .map_err(|e| CogsError::IncompleteArtifacts(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Generate an offline dataset by rolling out a joint behavior policy.
/// `sample_joint` picks the episode's joint policy (uniform-random for the
/// uniform tag; a profile-then-pure draw for equilibrium mixtures).
pub fn generate_dataset<G, F>(
    game: &G,
    num_trajectories: usize,
    mut sample_joint: F,
    rng: &mut StdRng,
) -> Result<Vec<crate::game::Trajectory>>
where
    G: Game,
    F: FnMut(&mut StdRng) -> Vec<Arc<dyn PurePolicy>>,
{
    if num_trajectories == 0 {
        return Err(CogsError::InvalidConfig("dataset needs at least one trajectory".into()));
    }
    let max_steps = game.max_episode_steps() + 1;
    let mut out = Vec::with_capacity(num_trajectories);
    for _ in 0..num_trajectories {
        let joint_arcs = sample_joint(rng);
        let joint: Vec<&dyn PurePolicy> = joint_arcs.iter().map(|a| a.as_ref()).collect();
        out.push(crate::game::rollout(game, &joint, rng, max_steps)?);
    }
    Ok(out)
}
