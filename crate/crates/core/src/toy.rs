//! Small deterministic games for tests and benchmarks.

use rand::rngs::StdRng;

use crate::error::{CogsError, Result};
use crate::game::{ActionId, Game, InfostateReconstruction, StepOutcome};

/// Two-player game where the first action ends the episode with a fixed
/// reward vector. Only player 0 ever acts.
pub struct OneStepGame {
    rewards: Vec<f64>,
    mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct OneStepState {
    pub done: bool,
}

impl OneStepGame {
    pub fn new(rewards: Vec<f64>) -> Self {
        Self { rewards, mask: vec![true, true] }
    }

    pub fn with_mask(rewards: Vec<f64>, mask: Vec<bool>) -> Self {
        Self { rewards, mask }
    }
}

impl Game for OneStepGame {
    type State = OneStepState;

    fn num_players(&self) -> usize {
        self.rewards.len()
    }
    fn discount(&self) -> f64 {
        1.0
    }
    fn num_actions(&self) -> usize {
        self.mask.len()
    }
    fn max_episode_steps(&self) -> usize {
        1
    }
    fn initial_state(&self, _rng: &mut StdRng) -> OneStepState {
        OneStepState { done: false }
    }
    fn is_terminal(&self, state: &OneStepState) -> bool {
        state.done
    }
    fn step(&self, state: &OneStepState, action: ActionId) -> Result<StepOutcome<OneStepState>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        if !self.mask.get(action).copied().unwrap_or(false) {
            return Err(CogsError::IllegalAction { step: 0, action });
        }
        Ok(StepOutcome { next: OneStepState { done: true }, rewards: self.rewards.clone(), done: true })
    }
    fn legal_actions(&self, state: &OneStepState) -> Result<Vec<bool>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        Ok(self.mask.clone())
    }
    fn observe(&self, state: &OneStepState, _player: usize) -> Vec<f64> {
        self.state_vector(state)
    }
    fn acting_player(&self, _state: &OneStepState) -> usize {
        0
    }
    fn state_vector(&self, state: &OneStepState) -> Vec<f64> {
        if state.done { vec![-1.0] } else { vec![0.0] }
    }
    fn terminal_state_vector(&self) -> Vec<f64> {
        vec![-1.0]
    }
    fn acting_player_of_vector(&self, _v: &[f64]) -> usize {
        0
    }
    fn infostate_dim(&self) -> usize {
        1
    }
    fn encode_infostate(&self, _player: usize, current_obs: &[f64], _actions: &[ActionId]) -> Vec<f64> {
        current_obs.to_vec()
    }
}

/// Single-player deterministic chain MDP over one-hot states.
///
/// Action 0 advances along the chain (the last state advances into the
/// terminal state); action 1 stops immediately. Rewards are per-state
/// constants, so a trained dynamics model can be checked against the exact
/// transition and reward tables.
pub struct ChainMdp {
    pub advance_reward: Vec<f64>,
    pub stop_reward: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub index: usize,
    pub done: bool,
}

impl ChainMdp {
    pub fn new(advance_reward: Vec<f64>, stop_reward: Vec<f64>) -> Self {
        assert_eq!(advance_reward.len(), stop_reward.len());
        Self { advance_reward, stop_reward }
    }

    /// The five-state instance used in model-training tests.
    pub fn five_state() -> Self {
        Self::new(vec![0.1, 0.2, 0.3, 0.4, 1.0], vec![0.05; 5])
    }

    pub fn num_states(&self) -> usize {
        self.advance_reward.len()
    }

    fn one_hot(&self, index: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states()];
        v[index] = 1.0;
        v
    }
}

impl Game for ChainMdp {
    type State = ChainState;

    fn num_players(&self) -> usize {
        1
    }
    fn discount(&self) -> f64 {
        0.99
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn max_episode_steps(&self) -> usize {
        self.num_states() + 1
    }
    fn initial_state(&self, _rng: &mut StdRng) -> ChainState {
        ChainState { index: 0, done: false }
    }
    fn is_terminal(&self, state: &ChainState) -> bool {
        state.done
    }
    fn step(&self, state: &ChainState, action: ActionId) -> Result<StepOutcome<ChainState>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        match action {
            0 => {
                let reward = self.advance_reward[state.index];
                if state.index + 1 == self.num_states() {
                    Ok(StepOutcome {
                        next: ChainState { index: state.index, done: true },
                        rewards: vec![reward],
                        done: true,
                    })
                } else {
                    Ok(StepOutcome {
                        next: ChainState { index: state.index + 1, done: false },
                        rewards: vec![reward],
                        done: false,
                    })
                }
            }
            1 => Ok(StepOutcome {
                next: ChainState { index: state.index, done: true },
                rewards: vec![self.stop_reward[state.index]],
                done: true,
            }),
            a => Err(CogsError::IllegalAction { step: 0, action: a }),
        }
    }
    fn legal_actions(&self, state: &ChainState) -> Result<Vec<bool>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        Ok(vec![true, true])
    }
    fn observe(&self, state: &ChainState, _player: usize) -> Vec<f64> {
        self.state_vector(state)
    }
    fn acting_player(&self, _state: &ChainState) -> usize {
        0
    }
    fn state_vector(&self, state: &ChainState) -> Vec<f64> {
        if state.done { self.terminal_state_vector() } else { self.one_hot(state.index) }
    }
    fn terminal_state_vector(&self) -> Vec<f64> {
        vec![-1.0; self.num_states()]
    }
    fn acting_player_of_vector(&self, _v: &[f64]) -> usize {
        0
    }
    fn infostate_dim(&self) -> usize {
        self.num_states()
    }
    fn encode_infostate(&self, _player: usize, current_obs: &[f64], _actions: &[ActionId]) -> Vec<f64> {
        current_obs.to_vec()
    }
}

/// Two-player, two-ply, perfect-information tree game: player 0 picks a row,
/// player 1 (seeing the row) picks a column, and the episode ends with the
/// payoff pair at that cell.
pub struct TreeGame {
    /// payoffs[a][b] = (player 0 utility, player 1 utility)
    pub payoffs: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
pub struct TreeState {
    pub turn: usize,
    pub first_action: Option<ActionId>,
    pub done: bool,
}

impl TreeGame {
    pub fn new(payoffs: Vec<Vec<[f64; 2]>>) -> Self {
        assert!(!payoffs.is_empty() && !payoffs[0].is_empty());
        Self { payoffs }
    }

    /// One action per player; the game is forced.
    pub fn single_action(payoff: [f64; 2]) -> Self {
        Self::new(vec![vec![payoff]])
    }

    fn rows(&self) -> usize {
        self.payoffs.len()
    }
    fn cols(&self) -> usize {
        self.payoffs[0].len()
    }
}

impl Game for TreeGame {
    type State = TreeState;

    fn num_players(&self) -> usize {
        2
    }
    fn discount(&self) -> f64 {
        1.0
    }
    fn num_actions(&self) -> usize {
        self.rows().max(self.cols())
    }
    fn max_episode_steps(&self) -> usize {
        2
    }
    fn initial_state(&self, _rng: &mut StdRng) -> TreeState {
        TreeState { turn: 0, first_action: None, done: false }
    }
    fn is_terminal(&self, state: &TreeState) -> bool {
        state.done
    }
    fn step(&self, state: &TreeState, action: ActionId) -> Result<StepOutcome<TreeState>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        let mask = self.legal_actions(state)?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(CogsError::IllegalAction { step: state.turn, action });
        }
        match state.turn {
            0 => Ok(StepOutcome {
                next: TreeState { turn: 1, first_action: Some(action), done: false },
                rewards: vec![0.0, 0.0],
                done: false,
            }),
            _ => {
                let a = state.first_action.expect("second ply without a first action");
                let [u0, u1] = self.payoffs[a][action];
                Ok(StepOutcome {
                    next: TreeState { turn: 2, first_action: state.first_action, done: true },
                    rewards: vec![u0, u1],
                    done: true,
                })
            }
        }
    }
    fn legal_actions(&self, state: &TreeState) -> Result<Vec<bool>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        let limit = if state.turn == 0 { self.rows() } else { self.cols() };
        Ok((0..self.num_actions()).map(|a| a < limit).collect())
    }
    fn observe(&self, state: &TreeState, _player: usize) -> Vec<f64> {
        self.state_vector(state)
    }
    fn acting_player(&self, state: &TreeState) -> usize {
        state.turn.min(1)
    }
    fn state_vector(&self, state: &TreeState) -> Vec<f64> {
        if state.done {
            return self.terminal_state_vector();
        }
        vec![
            state.turn as f64,
            state.first_action.map_or(-1.0, |a| a as f64),
            self.acting_player(state) as f64,
        ]
    }
    fn terminal_state_vector(&self) -> Vec<f64> {
        vec![-1.0; 3]
    }
    fn acting_player_of_vector(&self, v: &[f64]) -> usize {
        (v[2].round().max(0.0) as usize).min(1)
    }
    fn infostate_dim(&self) -> usize {
        3
    }
    fn encode_infostate(&self, _player: usize, current_obs: &[f64], _actions: &[ActionId]) -> Vec<f64> {
        current_obs.to_vec()
    }
    fn reconstruct_from_infostate(
        &self,
        _player: usize,
        infostate: &[f64],
        _samples: usize,
        _rng: &mut StdRng,
    ) -> Option<InfostateReconstruction<TreeState>> {
        let turn = infostate[0].round() as usize;
        let actions = if turn == 0 {
            Vec::new()
        } else {
            vec![infostate[1].round() as ActionId]
        };
        Some(InfostateReconstruction {
            initial_states: vec![TreeState { turn: 0, first_action: None, done: false }],
            actions,
        })
    }
}
