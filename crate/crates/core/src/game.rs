//! Stochastic-game interface, policies, trajectories, and rollouts.

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CogsError, Result};

/// Index into a game's flat action space.
pub type ActionId = usize;

/// Result of applying one action.
#[derive(Debug, Clone)]
pub struct StepOutcome<S> {
    pub next: S,
    /// One reward per player, in seat order.
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Full states plus an action history consistent with one player's
/// information state, as reconstructed by [`Game::reconstruct_from_infostate`].
pub struct InfostateReconstruction<S> {
    /// Candidate initial states. Components the player observes are fixed;
    /// hidden components are resampled from their prior.
    pub initial_states: Vec<S>,
    /// Actions taken so far, in order.
    pub actions: Vec<ActionId>,
}

/// A turn-based stochastic game.
///
/// Games expose a flat action space of size [`num_actions`](Self::num_actions);
/// legality at a given state is reported as a boolean mask over that space.
/// Information states are fixed-length real vectors computed from the acting
/// player's current observation plus the episode's action sequence; encoders
/// must not depend on earlier observations (the current observation together
/// with the action history has to determine the information state).
pub trait Game: Send + Sync {
    type State: Clone + Send;

    fn num_players(&self) -> usize;
    fn discount(&self) -> f64;
    /// Size of the flat action space (legal masks and Q-heads use this).
    fn num_actions(&self) -> usize;
    /// Hard cap on episode length; rollouts beyond this are a bug.
    fn max_episode_steps(&self) -> usize;

    fn initial_state(&self, rng: &mut StdRng) -> Self::State;
    fn is_terminal(&self, state: &Self::State) -> bool;
    fn step(&self, state: &Self::State, action: ActionId) -> Result<StepOutcome<Self::State>>;
    /// Legality mask over the full action space. Errors on terminal states.
    fn legal_actions(&self, state: &Self::State) -> Result<Vec<bool>>;
    fn observe(&self, state: &Self::State, player: usize) -> Vec<f64>;
    fn acting_player(&self, state: &Self::State) -> usize;

    fn state_vector(&self, state: &Self::State) -> Vec<f64>;
    /// The designated terminal state vector (used by learned models to
    /// detect episode ends).
    fn terminal_state_vector(&self) -> Vec<f64>;
    /// Read the acting player off a raw state vector (model rollouts only
    /// have vectors, not `State` values).
    fn acting_player_of_vector(&self, v: &[f64]) -> usize;

    fn infostate_dim(&self) -> usize;
    /// Condense (current observation, action history) into the acting
    /// player's fixed-length information state.
    fn encode_infostate(&self, player: usize, current_obs: &[f64], actions: &[ActionId])
        -> Vec<f64>;

    /// Resample components of `state` hidden from `player`, keeping what the
    /// player observes fixed. Fully observable games return the state as is.
    fn resample_hidden(&self, state: &Self::State, _player: usize, _rng: &mut StdRng)
        -> Self::State {
        state.clone()
    }

    /// Invert an information state into candidate full states for exact
    /// best-response search. Returns `None` when the game does not support
    /// reconstruction.
    fn reconstruct_from_infostate(
        &self,
        _player: usize,
        _infostate: &[f64],
        _samples: usize,
        _rng: &mut StdRng,
    ) -> Option<InfostateReconstruction<Self::State>> {
        None
    }
}

/// A pure strategy: a deterministic or stochastic map from information
/// states to legal actions.
pub trait PurePolicy: Send + Sync {
    /// Choose a legal action. Implementations must honor `legal_mask`.
    fn act(&self, infostate: &[f64], legal_mask: &[bool], rng: &mut StdRng) -> ActionId;

    /// Probability the policy assigns to each action at this information
    /// state (zero on illegal actions, sums to one over legal ones).
    fn action_distribution(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64>;

    /// True when `act` is a function of the information state alone.
    fn is_deterministic(&self) -> bool;

    /// Serializable form, if the policy can be checkpointed.
    fn checkpoint(&self) -> Option<crate::driver::PolicySpec> {
        None
    }
}

/// Plays a uniformly random legal action.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UniformRandomPolicy;

impl PurePolicy for UniformRandomPolicy {
    fn act(&self, _infostate: &[f64], legal_mask: &[bool], rng: &mut StdRng) -> ActionId {
        let legal: Vec<ActionId> = legal_indices(legal_mask);
        assert!(!legal.is_empty(), "no legal actions");
        legal[rng.random_range(0..legal.len())]
    }

    fn action_distribution(&self, _infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let count = legal_mask.iter().filter(|&&m| m).count();
        legal_mask
            .iter()
            .map(|&m| if m { 1.0 / count as f64 } else { 0.0 })
            .collect()
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn checkpoint(&self) -> Option<crate::driver::PolicySpec> {
        Some(crate::driver::PolicySpec::UniformRandom)
    }
}

/// Always plays a fixed action when legal, otherwise the lowest legal index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedActionPolicy {
    pub action: ActionId,
}

impl PurePolicy for FixedActionPolicy {
    fn act(&self, _infostate: &[f64], legal_mask: &[bool], _rng: &mut StdRng) -> ActionId {
        if legal_mask.get(self.action).copied().unwrap_or(false) {
            self.action
        } else {
            legal_indices(legal_mask)[0]
        }
    }

    fn action_distribution(&self, _infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let chosen = if legal_mask.get(self.action).copied().unwrap_or(false) {
            self.action
        } else {
            legal_indices(legal_mask)[0]
        };
        let mut dist = vec![0.0; legal_mask.len()];
        dist[chosen] = 1.0;
        dist
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn checkpoint(&self) -> Option<crate::driver::PolicySpec> {
        Some(crate::driver::PolicySpec::FixedAction { action: self.action })
    }
}

pub fn legal_indices(legal_mask: &[bool]) -> Vec<ActionId> {
    legal_mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// A distribution over strategy indices, kept on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    weights: Vec<f64>,
}

impl MixedStrategy {
    const SIMPLEX_TOL: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CogsError::InvalidConfig("empty mixed strategy".into()));
        }
        if weights.iter().any(|&w| w < -Self::SIMPLEX_TOL || !w.is_finite()) {
            return Err(CogsError::InvalidConfig(format!(
                "mixed strategy has negative or non-finite weight: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(CogsError::InvalidConfig(format!(
                "mixed strategy weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn one_hot(index: usize, n: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with non-negligible mass.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter_map(|(i, &w)| (w > 1e-12).then_some(i))
            .collect()
    }

    /// Sample a strategy index.
    pub fn sample(&self, rng: &mut StdRng) -> usize {
        let mut u: f64 = rng.random::<f64>();
        for (i, &w) in self.weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        self.weights.len() - 1
    }

    /// Pad with zero weight up to `n` strategies.
    pub fn padded(&self, n: usize) -> Self {
        let mut weights = self.weights.clone();
        weights.resize(n.max(weights.len()), 0.0);
        Self { weights }
    }
}

/// One step of game play as recorded in trajectories and datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// Full state vector before the action.
    pub state: Vec<f64>,
    /// Acting player's observation at this state.
    pub observation: Vec<f64>,
    pub action: ActionId,
    /// Rewards for all players issued by this step.
    pub rewards: Vec<f64>,
    pub acting_player: usize,
    /// Legality mask over the full action space at this state.
    pub legal_mask: Vec<bool>,
}

/// A rollout of game play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Per-player sums of step rewards.
    pub episode_return: Vec<f64>,
    /// State vector after the last step.
    pub final_state: Vec<f64>,
    /// Whether the episode ended in a terminal state (false: step cap hit).
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Play one episode under a joint policy.
///
/// The acting player's policy chooses each action from its information
/// state; the episode ends at a terminal state or after `max_steps` actions.
pub fn rollout<G: Game>(
    game: &G,
    joint: &[&dyn PurePolicy],
    rng: &mut StdRng,
    max_steps: usize,
) -> Result<Trajectory> {
    if joint.len() != game.num_players() {
        return Err(CogsError::DimensionMismatch(format!(
            "joint policy has {} entries for {} players",
            joint.len(),
            game.num_players()
        )));
    }
    if max_steps == 0 {
        return Err(CogsError::InvalidConfig("rollout max_steps must be >= 1".into()));
    }

    let mut state = game.initial_state(rng);
    let mut steps = Vec::new();
    let mut actions: Vec<ActionId> = Vec::new();
    let mut returns = vec![0.0; game.num_players()];

    for t in 0..max_steps {
        if game.is_terminal(&state) {
            break;
        }
        let player = game.acting_player(&state);
        let obs = game.observe(&state, player);
        let mask = game.legal_actions(&state)?;
        let infostate = game.encode_infostate(player, &obs, &actions);
        let action = joint[player].act(&infostate, &mask, rng);
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(CogsError::IllegalAction { step: t, action });
        }
        let outcome = game.step(&state, action)?;
        for (acc, r) in returns.iter_mut().zip(&outcome.rewards) {
            *acc += r;
        }
        steps.push(TrajectoryStep {
            state: game.state_vector(&state),
            observation: obs,
            action,
            rewards: outcome.rewards.clone(),
            acting_player: player,
            legal_mask: mask,
        });
        actions.push(action);
        state = outcome.next;
        if outcome.done {
            break;
        }
    }

    Ok(Trajectory {
        steps,
        episode_return: returns,
        final_state: game.state_vector(&state),
        terminated: game.is_terminal(&state),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::OneStepGame;
    use rand::SeedableRng;

    #[test]
    fn rollout_one_step_game_terminates_immediately() {
        let game = OneStepGame::new(vec![1.0, 0.0]);
        let p0 = UniformRandomPolicy;
        let p1 = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(0);
        let traj = rollout(&game, &[&p0, &p1], &mut rng, 10).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.episode_return, vec![1.0, 0.0]);
        assert!(traj.terminated);
    }

    #[test]
    fn rollout_rejects_zero_max_steps() {
        let game = OneStepGame::new(vec![1.0, 0.0]);
        let p0 = UniformRandomPolicy;
        let p1 = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(0);
        let err = rollout(&game, &[&p0, &p1], &mut rng, 0).unwrap_err();
        assert!(matches!(err, CogsError::InvalidConfig(_)));
    }

    #[test]
    fn rollout_flags_illegal_action_with_step_index() {
        struct IllegalPolicy;
        impl PurePolicy for IllegalPolicy {
            fn act(&self, _i: &[f64], mask: &[bool], _rng: &mut StdRng) -> ActionId {
                mask.len() - 1 // OneStepGame masks the last action off
            }
            fn action_distribution(&self, _i: &[f64], mask: &[bool]) -> Vec<f64> {
                vec![0.0; mask.len()]
            }
            fn is_deterministic(&self) -> bool {
                true
            }
        }
        let game = OneStepGame::with_mask(vec![1.0, 0.0], vec![true, false]);
        let bad = IllegalPolicy;
        let p1 = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(0);
        let err = rollout(&game, &[&bad, &p1], &mut rng, 10).unwrap_err();
        assert!(matches!(err, CogsError::IllegalAction { step: 0, .. }));
    }

    #[test]
    fn episode_return_matches_step_sums() {
        let game = OneStepGame::new(vec![0.5, -0.25]);
        let p0 = UniformRandomPolicy;
        let p1 = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(3);
        let traj = rollout(&game, &[&p0, &p1], &mut rng, 10).unwrap();
        let mut sums = vec![0.0; 2];
        for step in &traj.steps {
            for (s, r) in sums.iter_mut().zip(&step.rewards) {
                *s += r;
            }
        }
        assert_eq!(sums, traj.episode_return);
    }

    #[test]
    fn mixed_strategy_validates_simplex() {
        assert!(MixedStrategy::new(vec![0.5, 0.5]).is_ok());
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![-0.1, 1.1]).is_err());
        assert!(MixedStrategy::new(vec![]).is_err());
    }

    #[test]
    fn mixed_strategy_sampling_frequencies() {
        let mix = MixedStrategy::new(vec![0.25, 0.75]).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let n = 20_000;
        let ones = (0..n).filter(|_| mix.sample(&mut rng) == 1).count() as f64;
        let p = ones / n as f64;
        // 3 sigma for Bernoulli(0.75) over 20k draws
        let sigma = (0.75 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sigma, "p = {p}");
    }
}
