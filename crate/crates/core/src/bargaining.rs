//! Two-player sequential bargaining over a pool of items.
//!
//! Players alternate offering divisions of a randomly drawn item pool; each
//! holds a private per-item valuation. Accepting an outstanding offer ends
//! the episode with utilities discounted by `gamma^t`, where `t` counts the
//! offers made so far. If the offer count would exceed `max_turns`, both
//! players get zero.

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CogsError, Result};
use crate::game::{ActionId, Game, InfostateReconstruction, StepOutcome};

/// Game constants. The defaults match the benchmark configuration; the
/// mini preset keeps the rules but shrinks every dimension for fast tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BargainingConfig {
    pub n_items: usize,
    /// Bounds on each player's summed valuation.
    pub valuation_sum_bounds: [f64; 2],
    /// Bounds on the summed item count of a sampled pool.
    pub pool_sum_bounds: [u32; 2],
    /// Maximum number of offers before the game is void.
    pub max_turns: usize,
    pub discount: f64,
}

impl Default for BargainingConfig {
    fn default() -> Self {
        Self {
            n_items: 3,
            valuation_sum_bounds: [5.0, 10.0],
            pool_sum_bounds: [5, 7],
            max_turns: 10,
            discount: 0.99,
        }
    }
}

impl BargainingConfig {
    /// Desk-scale preset: two item types, tiny pools, four turns.
    pub fn mini() -> Self {
        Self {
            n_items: 2,
            valuation_sum_bounds: [2.0, 4.0],
            pool_sum_bounds: [2, 3],
            max_turns: 4,
            discount: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_items;
        if n == 0 {
            return Err(CogsError::InvalidConfig("n_items must be >= 1".into()));
        }
        let [v_min, v_max] = self.valuation_sum_bounds;
        if !(v_min <= v_max) || v_min < n as f64 {
            return Err(CogsError::InvalidConfig(format!(
                "valuation bounds [{v_min}, {v_max}] infeasible for {n} items (each value >= 1)"
            )));
        }
        let [c_min, c_max] = self.pool_sum_bounds;
        if c_min > c_max || (c_min as usize) < n {
            return Err(CogsError::InvalidConfig(format!(
                "pool bounds [{c_min}, {c_max}] infeasible for {n} items (each count >= 1)"
            )));
        }
        if self.max_turns == 0 {
            return Err(CogsError::InvalidConfig("max_turns must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(CogsError::InvalidConfig(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        Ok(())
    }

    /// Stable hash of the configuration, stored in dataset and run metadata.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Item counts available for division.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub counts: Vec<u32>,
}

/// One player's per-item values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub values: Vec<f64>,
}

/// Bijection between flat action indices and offer vectors, with ACCEPT as
/// the final index. Offer components range over `0..=max_per_item`, the
/// largest count any single item type can take under the pool bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferCodec {
    n_items: usize,
    base: u32,
}

impl OfferCodec {
    pub fn new(cfg: &BargainingConfig) -> Self {
        let max_per_item = cfg.pool_sum_bounds[1] - (cfg.n_items as u32 - 1);
        Self { n_items: cfg.n_items, base: max_per_item + 1 }
    }

    pub fn num_offers(&self) -> usize {
        (self.base as usize).pow(self.n_items as u32)
    }

    /// Total action-space size: all offers plus ACCEPT.
    pub fn num_actions(&self) -> usize {
        self.num_offers() + 1
    }

    pub fn accept_action(&self) -> ActionId {
        self.num_offers()
    }

    pub fn is_offer(&self, action: ActionId) -> bool {
        action < self.num_offers()
    }

    /// Offer vector for an offer index.
    pub fn decode(&self, action: ActionId) -> Vec<u32> {
        assert!(self.is_offer(action), "action {action} is not an offer");
        let mut rem = action as u32;
        let mut offer = vec![0u32; self.n_items];
        for j in (0..self.n_items).rev() {
            offer[j] = rem % self.base;
            rem /= self.base;
        }
        offer
    }

    pub fn encode(&self, offer: &[u32]) -> ActionId {
        assert_eq!(offer.len(), self.n_items);
        let mut idx = 0u32;
        for &c in offer {
            debug_assert!(c < self.base);
            idx = idx * self.base + c;
        }
        idx as ActionId
    }
}

/// Live game state. The post-acceptance state is the all(-1) terminal
/// vector, so `accepted` never appears as 1 in a reachable non-terminal
/// state; the slot exists to keep the documented vector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BargainingState {
    pub accepted: bool,
    pub turn: usize,
    pub pool: Pool,
    pub valuations: [Valuation; 2],
    pub last_offer: Option<ActionId>,
    pub current_player: usize,
    pub terminal: bool,
}

/// The bargaining game. Construction enumerates the feasible pool set once;
/// all operations are pure, so one instance serves concurrent rollouts.
#[derive(Debug, Clone)]
pub struct BargainingGame {
    cfg: BargainingConfig,
    codec: OfferCodec,
    feasible_pools: Vec<Vec<u32>>,
}

impl BargainingGame {
    pub fn new(cfg: BargainingConfig) -> Result<Self> {
        cfg.validate()?;
        let codec = OfferCodec::new(&cfg);
        let feasible_pools = enumerate_pools(&cfg);
        if feasible_pools.is_empty() {
            return Err(CogsError::InvalidConfig("no feasible pools under bounds".into()));
        }
        Ok(Self { cfg, codec, feasible_pools })
    }

    pub fn config(&self) -> &BargainingConfig {
        &self.cfg
    }

    pub fn codec(&self) -> &OfferCodec {
        &self.codec
    }

    pub fn feasible_pools(&self) -> &[Vec<u32>] {
        &self.feasible_pools
    }

    /// Uniform draw over the enumerated feasible pool set.
    pub fn sample_pool(&self, rng: &mut StdRng) -> Pool {
        let idx = rng.random_range(0..self.feasible_pools.len());
        Pool { counts: self.feasible_pools[idx].clone() }
    }

    /// Uniform draw over {v : v_j >= 1, sum in bounds} by rejection from the
    /// enclosing box [1, v_max - (n-1)]^n, which contains the region because
    /// the other n-1 components take at least 1 each.
    pub fn sample_valuation(&self, rng: &mut StdRng) -> Valuation {
        let n = self.cfg.n_items;
        let [v_min, v_max] = self.cfg.valuation_sum_bounds;
        let hi = v_max - (n as f64 - 1.0);
        loop {
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=hi)).collect();
            let sum: f64 = values.iter().sum();
            if sum >= v_min && sum <= v_max {
                return Valuation { values };
            }
        }
    }

    /// Independent, identically distributed valuations for both players.
    pub fn sample_valuations(&self, rng: &mut StdRng) -> [Valuation; 2] {
        [self.sample_valuation(rng), self.sample_valuation(rng)]
    }

    fn state_dim(&self) -> usize {
        3 * self.cfg.n_items + 4
    }

    /// [accept, t, pool, V_i, last offer] for player `i`.
    fn observation(&self, state: &BargainingState, player: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.cfg.n_items + 3);
        v.push(if state.accepted { 1.0 } else { 0.0 });
        v.push(state.turn as f64);
        v.extend(state.pool.counts.iter().map(|&c| c as f64));
        v.extend(state.valuations[player].values.iter().copied());
        v.push(state.last_offer.map_or(-1.0, |a| a as f64));
        v
    }
}

fn enumerate_pools(cfg: &BargainingConfig) -> Vec<Vec<u32>> {
    let n = cfg.n_items;
    let [c_min, c_max] = cfg.pool_sum_bounds;
    let mut out = Vec::new();
    let mut current = vec![1u32; n];
    fn recurse(
        current: &mut Vec<u32>,
        j: usize,
        c_min: u32,
        c_max: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        let n = current.len();
        if j == n {
            let sum: u32 = current.iter().sum();
            if sum >= c_min && sum <= c_max {
                out.push(current.clone());
            }
            return;
        }
        let used: u32 = current[..j].iter().sum();
        let remaining_min = (n - j - 1) as u32; // later items take >= 1 each
        for c in 1..=(c_max.saturating_sub(used + remaining_min)) {
            current[j] = c;
            recurse(current, j + 1, c_min, c_max, out);
        }
    }
    recurse(&mut current, 0, c_min, c_max, &mut out);
    out.sort();
    out
}

impl Game for BargainingGame {
    type State = BargainingState;

    fn num_players(&self) -> usize {
        2
    }

    fn discount(&self) -> f64 {
        self.cfg.discount
    }

    fn num_actions(&self) -> usize {
        self.codec.num_actions()
    }

    fn max_episode_steps(&self) -> usize {
        self.cfg.max_turns + 1
    }

    fn initial_state(&self, rng: &mut StdRng) -> BargainingState {
        let pool = self.sample_pool(rng);
        let valuations = self.sample_valuations(rng);
        let current_player = usize::from(rng.random::<bool>());
        BargainingState {
            accepted: false,
            turn: 0,
            pool,
            valuations,
            last_offer: None,
            current_player,
            terminal: false,
        }
    }

    fn is_terminal(&self, state: &BargainingState) -> bool {
        state.terminal
    }

    fn step(&self, state: &BargainingState, action: ActionId) -> Result<StepOutcome<BargainingState>> {
        if state.terminal {
            return Err(CogsError::TerminalStep);
        }
        let mask = self.legal_actions(state)?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(CogsError::IllegalAction { step: state.turn, action });
        }

        let mut terminal = state.clone();
        terminal.terminal = true;

        if action == self.codec.accept_action() {
            let offer_idx = state.last_offer.expect("accept requires an outstanding offer");
            let offer = self.codec.decode(offer_idx);
            let accepter = state.current_player;
            let offerer = 1 - accepter;
            let gamma_t = self.cfg.discount.powi(state.turn as i32);
            let accepter_value: f64 = state.valuations[accepter]
                .values
                .iter()
                .zip(&offer)
                .map(|(v, &n)| v * f64::from(n))
                .sum();
            let offerer_value: f64 = state.valuations[offerer]
                .values
                .iter()
                .zip(state.pool.counts.iter().zip(&offer))
                .map(|(v, (&c, &n))| v * f64::from(c - n))
                .sum();
            let mut rewards = vec![0.0; 2];
            rewards[accepter] = gamma_t * accepter_value;
            rewards[offerer] = gamma_t * offerer_value;
            terminal.accepted = true;
            return Ok(StepOutcome { next: terminal, rewards, done: true });
        }

        // An offer past the turn limit voids the game.
        if state.turn >= self.cfg.max_turns {
            return Ok(StepOutcome { next: terminal, rewards: vec![0.0, 0.0], done: true });
        }

        let next = BargainingState {
            accepted: false,
            turn: state.turn + 1,
            pool: state.pool.clone(),
            valuations: state.valuations.clone(),
            last_offer: Some(action),
            current_player: 1 - state.current_player,
            terminal: false,
        };
        Ok(StepOutcome { next, rewards: vec![0.0, 0.0], done: false })
    }

    fn legal_actions(&self, state: &BargainingState) -> Result<Vec<bool>> {
        if state.terminal {
            return Err(CogsError::TerminalStep);
        }
        let mut mask = vec![false; self.codec.num_actions()];
        for idx in 0..self.codec.num_offers() {
            let offer = self.codec.decode(idx);
            if offer.iter().zip(&state.pool.counts).all(|(&n, &c)| n <= c) {
                mask[idx] = true;
            }
        }
        if state.last_offer.is_some() {
            mask[self.codec.accept_action()] = true;
        }
        Ok(mask)
    }

    fn observe(&self, state: &BargainingState, player: usize) -> Vec<f64> {
        self.observation(state, player)
    }

    fn acting_player(&self, state: &BargainingState) -> usize {
        state.current_player
    }

    fn state_vector(&self, state: &BargainingState) -> Vec<f64> {
        if state.terminal {
            return self.terminal_state_vector();
        }
        let mut v = Vec::with_capacity(self.state_dim());
        v.push(if state.accepted { 1.0 } else { 0.0 });
        v.push(state.turn as f64);
        v.extend(state.pool.counts.iter().map(|&c| c as f64));
        v.extend(state.valuations[0].values.iter().copied());
        v.extend(state.valuations[1].values.iter().copied());
        v.push(state.last_offer.map_or(-1.0, |a| a as f64));
        v.push(state.current_player as f64);
        v
    }

    fn terminal_state_vector(&self) -> Vec<f64> {
        vec![-1.0; self.state_dim()]
    }

    fn acting_player_of_vector(&self, v: &[f64]) -> usize {
        let raw = v[self.state_dim() - 1];
        (raw.round().max(0.0) as usize).min(1)
    }

    fn infostate_dim(&self) -> usize {
        2 + 2 * self.cfg.n_items + self.cfg.max_turns
    }

    /// [accept, t, pool, V_i, action history padded to max_turns with -1].
    /// `t` is the number of actions taken, which in this game equals the
    /// number of offers so far.
    fn encode_infostate(&self, _player: usize, current_obs: &[f64], actions: &[ActionId]) -> Vec<f64> {
        let n = self.cfg.n_items;
        assert!(
            actions.len() <= self.cfg.max_turns,
            "history of {} actions exceeds the {}-turn limit",
            actions.len(),
            self.cfg.max_turns
        );
        let mut v = Vec::with_capacity(self.infostate_dim());
        v.push(current_obs[0]);
        v.push(actions.len() as f64);
        v.extend_from_slice(&current_obs[2..2 + 2 * n]);
        for slot in 0..self.cfg.max_turns {
            v.push(actions.get(slot).map_or(-1.0, |&a| a as f64));
        }
        v
    }

    fn resample_hidden(&self, state: &BargainingState, player: usize, rng: &mut StdRng) -> BargainingState {
        let mut resampled = state.clone();
        resampled.valuations[1 - player] = self.sample_valuation(rng);
        resampled
    }

    fn reconstruct_from_infostate(
        &self,
        player: usize,
        infostate: &[f64],
        samples: usize,
        rng: &mut StdRng,
    ) -> Option<InfostateReconstruction<BargainingState>> {
        let n = self.cfg.n_items;
        let t = infostate[1].round().max(0.0) as usize;
        let pool = Pool {
            counts: infostate[2..2 + n].iter().map(|&c| c.round().max(0.0) as u32).collect(),
        };
        let own = Valuation { values: infostate[2 + n..2 + 2 * n].to_vec() };
        let actions: Vec<ActionId> = infostate[2 + 2 * n..2 + 2 * n + t]
            .iter()
            .map(|&a| a.round().max(0.0) as ActionId)
            .collect();
        // Turn alternation fixes the first mover: the player acts now at
        // step t, so an even t means they opened the episode.
        let first_mover = if t % 2 == 0 { player } else { 1 - player };
        let initial_states = (0..samples)
            .map(|_| {
                let mut valuations = [own.clone(), own.clone()];
                valuations[1 - player] = self.sample_valuation(rng);
                BargainingState {
                    accepted: false,
                    turn: 0,
                    pool: pool.clone(),
                    valuations,
                    last_offer: None,
                    current_player: first_mover,
                    terminal: false,
                }
            })
            .collect();
        Some(InfostateReconstruction { initial_states, actions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{rollout, UniformRandomPolicy};
    use rand::SeedableRng;

    fn default_game() -> BargainingGame {
        BargainingGame::new(BargainingConfig::default()).unwrap()
    }

    /// Independent enumeration of feasible pools used as the test oracle.
    fn oracle_pool_count(n: usize, c_min: u32, c_max: u32) -> usize {
        fn count_vectors(n: usize, sum: u32) -> usize {
            // positive integer vectors of length n summing to `sum`
            if sum < n as u32 {
                return 0;
            }
            // stars and bars: C(sum - 1, n - 1)
            let k = n as u64 - 1;
            let s = sum as u64 - 1;
            let mut c = 1u64;
            for i in 0..k {
                c = c * (s - i) / (i + 1);
            }
            c as usize
        }
        (c_min..=c_max).map(|s| count_vectors(n, s)).sum()
    }

    #[test]
    fn feasible_pool_set_matches_oracle() {
        let game = default_game();
        // C(4,2) + C(5,2) + C(6,2) = 6 + 10 + 15 = 31
        assert_eq!(oracle_pool_count(3, 5, 7), 31);
        assert_eq!(game.feasible_pools().len(), 31);
        for pool in game.feasible_pools() {
            assert!(pool.iter().all(|&c| c >= 1));
            let sum: u32 = pool.iter().sum();
            assert!((5..=7).contains(&sum));
        }
    }

    #[test]
    fn degenerate_pool_bounds_yield_unique_pool() {
        let cfg = BargainingConfig {
            pool_sum_bounds: [3, 3],
            ..BargainingConfig::default()
        };
        let game = BargainingGame::new(cfg).unwrap();
        assert_eq!(game.feasible_pools(), &[vec![1, 1, 1]]);
        let mut rng = StdRng::seed_from_u64(0);
        assert_eq!(game.sample_pool(&mut rng).counts, vec![1, 1, 1]);
    }

    #[test]
    fn pool_sampling_is_uniform() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(42);
        let n = 100_000;
        let mut counts = vec![0usize; game.feasible_pools().len()];
        for _ in 0..n {
            let pool = game.sample_pool(&mut rng);
            let idx = game.feasible_pools().iter().position(|p| *p == pool.counts).unwrap();
            counts[idx] += 1;
        }
        let p = 1.0 / counts.len() as f64;
        let sigma = (p * (1.0 - p) * n as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - p * n as f64).abs();
            assert!(dev < 3.0 * sigma, "pool {i} count {c} deviates {dev:.1} > 3 sigma");
        }
    }

    #[test]
    fn valuations_respect_bounds_and_exchangeability() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(7);
        let n = 100_000;
        let mut sums = vec![0.0; 3];
        let mut sq_sums = vec![0.0; 3];
        for _ in 0..n {
            let [v0, v1] = game.sample_valuations(&mut rng);
            for v in [&v0, &v1] {
                assert!(v.values.iter().all(|&x| x >= 1.0));
                let s: f64 = v.values.iter().sum();
                assert!((5.0..=10.0).contains(&s), "sum {s} out of bounds");
            }
            for j in 0..3 {
                sums[j] += v0.values[j];
                sq_sums[j] += v0.values[j] * v0.values[j];
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let vars: Vec<f64> = (0..3)
            .map(|j| sq_sums[j] / n as f64 - means[j] * means[j])
            .collect();
        // coordinate exchangeability: marginal means agree within 3 sigma
        for j in 1..3 {
            let se = ((vars[0] + vars[j]) / n as f64).sqrt();
            assert!(
                (means[0] - means[j]).abs() < 3.0 * se,
                "marginal means differ: {means:?}"
            );
        }
    }

    #[test]
    fn degenerate_valuation_bounds_give_all_ones() {
        let cfg = BargainingConfig {
            valuation_sum_bounds: [3.0, 3.0],
            ..BargainingConfig::default()
        };
        let game = BargainingGame::new(cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(0);
        let v = game.sample_valuation(&mut rng);
        for x in &v.values {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    fn state_with_offer(game: &BargainingGame, turn: usize) -> BargainingState {
        let offer = game.codec().encode(&[2, 2, 1]); // the full pool
        BargainingState {
            accepted: false,
            turn,
            pool: Pool { counts: vec![2, 2, 1] },
            valuations: [
                Valuation { values: vec![2.0, 3.0, 2.0] }, // accepter
                Valuation { values: vec![2.0, 2.0, 3.0] }, // offerer
            ],
            last_offer: Some(offer),
            current_player: 0,
            terminal: false,
        }
    }

    #[test]
    fn accept_pays_discounted_valuation_dot_allocation() {
        let game = default_game();
        let state = state_with_offer(&game, 1);
        let out = game.step(&state, game.codec().accept_action()).unwrap();
        assert!(out.done);
        // accepter gets gamma^1 * (2*2 + 3*2 + 2*1) = 0.99 * 12
        assert!((out.rewards[0] - 11.88).abs() < 1e-9, "{:?}", out.rewards);
        assert!((out.rewards[1] - 0.0).abs() < 1e-9);
        assert!(game.is_terminal(&out.next));
    }

    #[test]
    fn later_acceptance_discounts_further() {
        let game = default_game();
        let state = state_with_offer(&game, 2);
        let out = game.step(&state, game.codec().accept_action()).unwrap();
        assert!((out.rewards[0] - 0.99f64.powi(2) * 12.0).abs() < 1e-9);
        assert!((out.rewards[0] - 11.7612).abs() < 1e-9);
    }

    #[test]
    fn turn_limit_pays_zero() {
        let game = default_game();
        let mut state = state_with_offer(&game, game.config().max_turns);
        state.current_player = 1;
        // an offer at the turn limit voids the game
        let some_offer = game.codec().encode(&[1, 0, 0]);
        let out = game.step(&state, some_offer).unwrap();
        assert!(out.done);
        assert_eq!(out.rewards, vec![0.0, 0.0]);
        // but accepting at the limit still pays
        let out = game.step(&state, game.codec().accept_action()).unwrap();
        assert!(out.rewards.iter().any(|&r| r > 0.0));
    }

    #[test]
    fn legal_action_counts_follow_pool() {
        let game = default_game();
        let first_move = BargainingState {
            accepted: false,
            turn: 0,
            pool: Pool { counts: vec![1, 1, 1] },
            valuations: [
                Valuation { values: vec![2.0, 2.0, 2.0] },
                Valuation { values: vec![2.0, 2.0, 2.0] },
            ],
            last_offer: None,
            current_player: 0,
            terminal: false,
        };
        let mask = game.legal_actions(&first_move).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 8); // 2^3 offers, no ACCEPT
        assert!(!mask[game.codec().accept_action()]);

        let after_offer = state_with_offer(&game, 1);
        let mask = game.legal_actions(&after_offer).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 19); // 3*3*2 offers + ACCEPT
        assert!(mask[game.codec().accept_action()]);
    }

    #[test]
    fn terminal_state_has_no_legal_actions() {
        let game = default_game();
        let mut state = state_with_offer(&game, 1);
        state.terminal = true;
        assert!(matches!(game.legal_actions(&state), Err(CogsError::TerminalStep)));
        assert!(matches!(game.step(&state, 0), Err(CogsError::TerminalStep)));
    }

    #[test]
    fn codec_round_trips_every_action() {
        let game = default_game();
        let codec = game.codec();
        assert_eq!(codec.num_actions(), 217); // 6^3 offers + ACCEPT
        for idx in 0..codec.num_offers() {
            let offer = codec.decode(idx);
            assert_eq!(codec.encode(&offer), idx);
        }
    }

    #[test]
    fn infostate_layout_matches_documented_slots() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(5);
        let state = game.initial_state(&mut rng);
        let player = game.acting_player(&state);
        let obs = game.observe(&state, player);
        let info = game.encode_infostate(player, &obs, &[]);
        assert_eq!(info.len(), game.infostate_dim());
        assert_eq!(info[0], 0.0); // accept flag
        assert_eq!(info[1], 0.0); // t
        let n = game.config().n_items;
        for j in 0..n {
            assert_eq!(info[2 + j], state.pool.counts[j] as f64);
            assert_eq!(info[2 + n + j], state.valuations[player].values[j]);
        }
        for slot in 0..game.config().max_turns {
            assert_eq!(info[2 + 2 * n + slot], -1.0);
        }

        // one prior offer with index k occupies action slot 0
        let k = game.codec().encode(&[1, 1, 0]);
        let out = game.step(&state, k).unwrap();
        let next_player = game.acting_player(&out.next);
        let obs = game.observe(&out.next, next_player);
        let info = game.encode_infostate(next_player, &obs, &[k]);
        assert_eq!(info[1], 1.0);
        assert_eq!(info[2 + 2 * n], k as f64);
        for slot in 1..game.config().max_turns {
            assert_eq!(info[2 + 2 * n + slot], -1.0);
        }
    }

    #[test]
    fn infostate_hides_opponent_valuation() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(9);
        let state = game.initial_state(&mut rng);
        let mut other = state.clone();
        other.valuations[1] = game.sample_valuation(&mut rng);
        let obs_a = game.observe(&state, 0);
        let obs_b = game.observe(&other, 0);
        assert_eq!(
            game.encode_infostate(0, &obs_a, &[]),
            game.encode_infostate(0, &obs_b, &[])
        );
    }

    #[test]
    fn first_mover_is_a_fair_coin() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(1234);
        let n = 100_000;
        let mut first0 = 0usize;
        for _ in 0..n {
            if game.initial_state(&mut rng).current_player == 0 {
                first0 += 1;
            }
        }
        let sigma = (0.25 * n as f64).sqrt();
        assert!(
            ((first0 as f64) - 0.5 * n as f64).abs() < 3.0 * sigma,
            "first-mover count {first0} not within 3 sigma of n/2"
        );
    }

    #[test]
    fn random_episodes_respect_reward_and_length_invariants() {
        let game = default_game();
        let policy = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..1000 {
            let traj = rollout(&game, &[&policy, &policy], &mut rng, 64).unwrap();
            assert!(traj.len() <= game.config().max_turns + 1);
            assert!(traj.terminated);
            for (k, step) in traj.steps.iter().enumerate() {
                if k + 1 < traj.len() {
                    assert_eq!(step.rewards, vec![0.0, 0.0]);
                }
                // non-terminal state vectors never collide with the terminal vector
                assert_ne!(step.state, game.terminal_state_vector());
            }
        }
    }

    #[test]
    fn reconstruction_recovers_public_state_and_history() {
        let game = default_game();
        let mut rng = StdRng::seed_from_u64(3);
        let s0 = game.initial_state(&mut rng);
        let a0 = crate::game::legal_indices(&game.legal_actions(&s0).unwrap())[4];
        let s1 = game.step(&s0, a0).unwrap().next;
        let player = game.acting_player(&s1);
        let obs = game.observe(&s1, player);
        let info = game.encode_infostate(player, &obs, &[a0]);
        let rec = game
            .reconstruct_from_infostate(player, &info, 8, &mut rng)
            .unwrap();
        assert_eq!(rec.actions, vec![a0]);
        for init in &rec.initial_states {
            assert_eq!(init.pool, s0.pool);
            assert_eq!(init.current_player, s0.current_player);
            assert_eq!(init.valuations[player].values, s1.valuations[player].values);
        }
    }
}
