//! The growing symmetric empirical game with per-ensemble-member payoff
//! estimates.
//!
//! Entries are keyed by unordered strategy pairs; looking a profile up with
//! roles swapped returns player-swapped utilities. Every entry stores the
//! full `[K][n]` member utility matrix so pessimistic and optimistic views
//! can be derived without re-simulation.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{model_rollout, ModelMdp};
use crate::error::{CogsError, Result};
use crate::game::{rollout, Game, MixedStrategy, PurePolicy};
use crate::nfg::NormalFormGame;
use crate::rng::derive_seed_tagged;

/// Simulation estimates for one unordered strategy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEntry {
    /// `[K][n]`: member j's utility estimate for player i.
    pub per_member_utilities: Vec<Vec<f64>>,
    /// Member average, per player.
    pub mean_utilities: Vec<f64>,
    pub num_samples: usize,
}

/// Disagreement bookkeeping accumulated while estimating entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryStats {
    pub rho_sum: f64,
    pub rho_count: usize,
}

impl EntryStats {
    pub fn merge(&mut self, other: &EntryStats) {
        self.rho_sum += other.rho_sum;
        self.rho_count += other.rho_count;
    }
}

/// Source of payoff samples for empirical-game entries: the model MDP
/// during offline runs, the true game during online PSRO and evaluation.
pub trait ProfileSimulator: Sync {
    fn num_players(&self) -> usize;
    fn estimate(
        &self,
        joint: &[&dyn PurePolicy],
        num_simulations: usize,
        seed: u64,
    ) -> Result<(PayoffEntry, EntryStats)>;
}

impl<G: Game> ProfileSimulator for ModelMdp<G> {
    fn num_players(&self) -> usize {
        Game::num_players(self)
    }

    fn estimate(
        &self,
        joint: &[&dyn PurePolicy],
        num_simulations: usize,
        seed: u64,
    ) -> Result<(PayoffEntry, EntryStats)> {
        let mut rng = StdRng::seed_from_u64(seed);
        estimate_entry(self, joint, num_simulations, &mut rng)
    }
}

/// True-game simulation: one "member" whose utilities are rollout returns.
pub struct TrueGameSimulator<'a, G: Game> {
    pub game: &'a G,
}

impl<'a, G: Game> ProfileSimulator for TrueGameSimulator<'a, G> {
    fn num_players(&self) -> usize {
        self.game.num_players()
    }

    fn estimate(
        &self,
        joint: &[&dyn PurePolicy],
        num_simulations: usize,
        seed: u64,
    ) -> Result<(PayoffEntry, EntryStats)> {
        if num_simulations == 0 {
            return Err(CogsError::InvalidConfig("need at least one simulation per entry".into()));
        }
        let n = self.game.num_players();
        let max_steps = self.game.max_episode_steps() + 1;
        let mut totals = vec![0.0; n];
        for sim in 0..num_simulations {
            let mut rng = StdRng::seed_from_u64(derive_seed_tagged(seed, "sim", sim as u64));
            let traj = rollout(self.game, joint, &mut rng, max_steps)?;
            for (t, r) in totals.iter_mut().zip(&traj.episode_return) {
                *t += r;
            }
        }
        for t in &mut totals {
            *t /= num_simulations as f64;
        }
        Ok((
            PayoffEntry {
                per_member_utilities: vec![totals.clone()],
                mean_utilities: totals,
                num_samples: num_simulations,
            },
            EntryStats::default(),
        ))
    }
}

/// Average a profile's utilities over N model rollouts, keeping per-member
/// estimates separate.
pub fn estimate_entry<G: Game>(
    mdp: &ModelMdp<G>,
    profile: &[&dyn PurePolicy],
    num_simulations: usize,
    rng: &mut StdRng,
) -> Result<(PayoffEntry, EntryStats)> {
    if num_simulations == 0 {
        return Err(CogsError::InvalidConfig("need at least one simulation per entry".into()));
    }
    let k = mdp.ensemble().ensemble_size();
    let n = Game::num_players(mdp);
    let mut totals = vec![vec![0.0; n]; k];
    let mut stats = EntryStats::default();
    for _ in 0..num_simulations {
        let rec = model_rollout(mdp, profile, rng)?;
        for (acc, row) in totals.iter_mut().zip(&rec.per_member_returns) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for rho in rec.rho_values {
            stats.rho_sum += rho;
            stats.rho_count += 1;
        }
    }
    for row in &mut totals {
        for v in row.iter_mut() {
            *v /= num_simulations as f64;
        }
    }
    let mean = member_average(&totals);
    Ok((
        PayoffEntry { per_member_utilities: totals, mean_utilities: mean, num_samples: num_simulations },
        stats,
    ))
}

fn member_average(member_utilities: &[Vec<f64>]) -> Vec<f64> {
    let k = member_utilities.len() as f64;
    let mut mean = vec![0.0; member_utilities[0].len()];
    for row in member_utilities {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / k;
        }
    }
    mean
}

/// Symmetric 2-player empirical game over a shared strategy set.
pub struct EmpiricalGame {
    strategies: Vec<Arc<dyn PurePolicy>>,
    /// Key: (lo, hi) strategy indices; utilities oriented (lo-player,
    /// hi-player).
    table: BTreeMap<(usize, usize), PayoffEntry>,
    num_players: usize,
    num_simulations: usize,
}

impl EmpiricalGame {
    pub fn new(num_players: usize, num_simulations: usize) -> Result<Self> {
        if num_players != 2 {
            return Err(CogsError::InvalidConfig(
                "the empirical game machinery is 2-player symmetric".into(),
            ));
        }
        if num_simulations == 0 {
            return Err(CogsError::InvalidConfig("num_simulations must be >= 1".into()));
        }
        Ok(Self { strategies: Vec::new(), table: BTreeMap::new(), num_players, num_simulations })
    }

    pub fn num_strategies(&self) -> usize {
        self.strategies.len()
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn num_simulations(&self) -> usize {
        self.num_simulations
    }

    pub fn strategies(&self) -> &[Arc<dyn PurePolicy>] {
        &self.strategies
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &PayoffEntry)> {
        self.table.iter()
    }

    /// Utilities of the ordered profile (a, b), player-oriented.
    pub fn lookup(&self, a: usize, b: usize) -> Option<Vec<f64>> {
        let key = (a.min(b), a.max(b));
        let entry = self.table.get(&key)?;
        if a <= b {
            Some(entry.mean_utilities.clone())
        } else {
            Some(vec![entry.mean_utilities[1], entry.mean_utilities[0]])
        }
    }

    pub fn entry(&self, a: usize, b: usize) -> Option<&PayoffEntry> {
        self.table.get(&(a.min(b), a.max(b)))
    }

    /// Add a strategy and simulate exactly the profiles that involve it.
    /// Returns the disagreement stats accumulated over the new simulations.
    pub fn extend(
        &mut self,
        new_policy: Arc<dyn PurePolicy>,
        simulator: &dyn ProfileSimulator,
        rng: &mut StdRng,
    ) -> Result<EntryStats> {
        self.strategies.push(new_policy);
        let m = self.strategies.len() - 1;
        // Derive one seed per new profile up front so the parallel map is
        // schedule-independent.
        let jobs: Vec<(usize, u64)> = (0..=m).map(|i| (i, rng.random::<u64>())).collect();
        let results: Vec<((usize, usize), PayoffEntry, EntryStats)> = jobs
            .par_iter()
            .map(|&(i, seed)| {
                let profile: Vec<&dyn PurePolicy> =
                    vec![self.strategies[i].as_ref(), self.strategies[m].as_ref()];
                let (entry, stats) = simulator.estimate(&profile, self.num_simulations, seed)?;
                Ok(((i, m), entry, stats))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = EntryStats::default();
        for (key, entry, stats) in results {
            total.merge(&stats);
            self.table.insert(key, entry);
        }
        Ok(total)
    }

    /// Plain serializable form of the table.
    pub fn snapshot(&self) -> EmpiricalSnapshot {
        EmpiricalSnapshot {
            num_simulations: self.num_simulations,
            entries: self.table.iter().map(|(&(a, b), e)| (a, b, e.clone())).collect(),
        }
    }

    fn complete(&self) -> bool {
        let m = self.strategies.len();
        self.table.len() == m * (m + 1) / 2
            && (0..m).all(|a| (a..m).all(|b| self.table.contains_key(&(a, b))))
    }

    /// Project the table into mean and per-member normal-form views.
    /// Diagonal entries' two seat samples are averaged: seats are
    /// exchangeable, so both estimate the same quantity, and the averaged
    /// view is exactly symmetric.
    pub fn to_bounded_nfg(&self) -> Result<BoundedNfg> {
        if self.strategies.is_empty() {
            return Err(CogsError::IncompleteArtifacts("empirical game has no strategies".into()));
        }
        if !self.complete() {
            return Err(CogsError::IncompleteArtifacts(format!(
                "payoff table has {} of {} entries",
                self.table.len(),
                self.strategies.len() * (self.strategies.len() + 1) / 2
            )));
        }
        self.snapshot().bounded_prefix(self.strategies.len())
    }
}

/// The payoff table detached from live policy objects, as persisted in run
/// artifacts and consumed by evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSnapshot {
    pub num_simulations: usize,
    /// (lo, hi, entry) rows in key order.
    pub entries: Vec<(usize, usize, PayoffEntry)>,
}

impl EmpiricalSnapshot {
    pub fn num_strategies(&self) -> usize {
        self.entries.iter().map(|&(_, b, _)| b + 1).max().unwrap_or(0)
    }

    fn entry(&self, a: usize, b: usize) -> Option<&PayoffEntry> {
        let key = (a.min(b), a.max(b));
        self.entries
            .iter()
            .find(|&&(lo, hi, _)| (lo, hi) == key)
            .map(|(_, _, e)| e)
    }

    /// Interval game over the first `m` strategies (the state of the
    /// empirical game after iteration m-1). Diagonal seat samples are
    /// averaged exactly as in the live views.
    pub fn bounded_prefix(&self, m: usize) -> Result<BoundedNfg> {
        if m == 0 || m > self.num_strategies() {
            return Err(CogsError::IncompleteArtifacts(format!(
                "prefix of {m} strategies not available (table has {})",
                self.num_strategies()
            )));
        }
        let k = self
            .entries
            .first()
            .map(|(_, _, e)| e.per_member_utilities.len())
            .unwrap_or(0);
        let mut member_payoffs = vec![Vec::with_capacity(m * m * 2); k];
        for a in 0..m {
            for b in 0..m {
                let entry = self.entry(a, b).ok_or_else(|| {
                    CogsError::IncompleteArtifacts(format!("missing entry ({a}, {b})"))
                })?;
                for (j, row) in entry.per_member_utilities.iter().enumerate() {
                    let (u0, u1) = if a == b {
                        let avg = 0.5 * (row[0] + row[1]);
                        (avg, avg)
                    } else if a < b {
                        (row[0], row[1])
                    } else {
                        (row[1], row[0])
                    };
                    member_payoffs[j].push(u0);
                    member_payoffs[j].push(u1);
                }
            }
        }
        let member_games = member_payoffs
            .into_iter()
            .map(|p| NormalFormGame::new(vec![m, m], p, true))
            .collect::<Result<Vec<_>>>()?;
        BoundedNfg::new(member_games)
    }
}

/// Interval-valued symmetric game: one coherent normal-form game per
/// ensemble member and the derived mean game. Mixed-strategy bounds are
/// computed per member first and then min/maxed, so each bound reflects a
/// single member's consistent world view.
#[derive(Debug, Clone)]
pub struct BoundedNfg {
    member_games: Vec<NormalFormGame>,
    mean_game: NormalFormGame,
}

impl BoundedNfg {
    pub fn new(member_games: Vec<NormalFormGame>) -> Result<Self> {
        if member_games.is_empty() {
            return Err(CogsError::InvalidConfig("bounded game needs at least one member".into()));
        }
        let counts = member_games[0].strategy_counts().to_vec();
        for g in &member_games {
            if g.strategy_counts() != counts {
                return Err(CogsError::DimensionMismatch("member games differ in shape".into()));
            }
            if !g.is_symmetric() {
                return Err(CogsError::InvalidConfig("member games must be symmetric".into()));
            }
        }
        let m = counts[0];
        let mut mean_payoffs = Vec::with_capacity(m * m * 2);
        for a in 0..m {
            for b in 0..m {
                for i in 0..2 {
                    let avg: f64 = member_games.iter().map(|g| g.entry(&[a, b])[i]).sum::<f64>()
                        / member_games.len() as f64;
                    mean_payoffs.push(avg);
                }
            }
        }
        let mean_game = NormalFormGame::new(vec![m, m], mean_payoffs, true)?;
        Ok(Self { member_games, mean_game })
    }

    /// A game whose bounds collapse onto the given payoffs.
    pub fn collapsed(game: NormalFormGame) -> Result<Self> {
        Self::new(vec![game])
    }

    pub fn num_strategies(&self) -> usize {
        self.mean_game.strategy_counts()[0]
    }

    pub fn num_members(&self) -> usize {
        self.member_games.len()
    }

    pub fn mean_game(&self) -> &NormalFormGame {
        &self.mean_game
    }

    pub fn member_games(&self) -> &[NormalFormGame] {
        &self.member_games
    }

    fn check_profile(&self, profile: &MixedStrategy) -> Result<()> {
        if profile.len() != self.num_strategies() {
            return Err(CogsError::DimensionMismatch(format!(
                "profile mixes over {} strategies, game has {}",
                profile.len(),
                self.num_strategies()
            )));
        }
        Ok(())
    }

    /// Member j's payoff to a player deviating to pure strategy k while the
    /// opponent plays the symmetric mixture.
    fn member_deviation(&self, j: usize, k: usize, profile: &MixedStrategy) -> f64 {
        let joint = vec![profile.clone(), profile.clone()];
        self.member_games[j]
            .deviation_payoff(0, k, &joint)
            .expect("profile checked by caller")
    }

    fn member_mixed(&self, j: usize, profile: &MixedStrategy) -> f64 {
        let joint = vec![profile.clone(), profile.clone()];
        self.member_games[j].mixed_payoff(&joint).expect("profile checked by caller")[0]
    }

    /// Optimistic deviation payoff: max over members.
    pub fn upper_deviation(&self, k: usize, profile: &MixedStrategy) -> Result<f64> {
        self.check_profile(profile)?;
        if k >= self.num_strategies() {
            return Err(CogsError::DimensionMismatch(format!("strategy {k} out of range")));
        }
        Ok((0..self.num_members())
            .map(|j| self.member_deviation(j, k, profile))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Pessimistic deviation payoff: min over members.
    pub fn lower_deviation(&self, k: usize, profile: &MixedStrategy) -> Result<f64> {
        self.check_profile(profile)?;
        if k >= self.num_strategies() {
            return Err(CogsError::DimensionMismatch(format!("strategy {k} out of range")));
        }
        Ok((0..self.num_members())
            .map(|j| self.member_deviation(j, k, profile))
            .fold(f64::INFINITY, f64::min))
    }

    /// Pessimistic value of the symmetric mixed profile.
    pub fn lower_mixed(&self, profile: &MixedStrategy) -> Result<f64> {
        self.check_profile(profile)?;
        Ok((0..self.num_members())
            .map(|j| self.member_mixed(j, profile))
            .fold(f64::INFINITY, f64::min))
    }

    /// Entrywise lower-bound game (min over members).
    pub fn lower_game(&self) -> NormalFormGame {
        self.bound_game(true)
    }

    /// Entrywise upper-bound game (max over members).
    pub fn upper_game(&self) -> NormalFormGame {
        self.bound_game(false)
    }

    fn bound_game(&self, lower: bool) -> NormalFormGame {
        let m = self.num_strategies();
        let mut payoffs = Vec::with_capacity(m * m * 2);
        for a in 0..m {
            for b in 0..m {
                for i in 0..2 {
                    let vals = self.member_games.iter().map(|g| g.entry(&[a, b])[i]);
                    payoffs.push(if lower {
                        vals.fold(f64::INFINITY, f64::min)
                    } else {
                        vals.fold(f64::NEG_INFINITY, f64::max)
                    });
                }
            }
        }
        NormalFormGame::new(vec![m, m], payoffs, true).expect("bounds preserve symmetry")
    }
}

/// Estimate a normal-form game over the given strategies with true-game
/// rollouts (evaluation only).
pub fn reconstruct_true<G: Game>(
    strategies: &[Arc<dyn PurePolicy>],
    true_game: &G,
    num_simulations: usize,
    rng: &mut StdRng,
) -> Result<NormalFormGame> {
    if true_game.num_players() != 2 {
        return Err(CogsError::InvalidConfig("reconstruction is 2-player symmetric".into()));
    }
    if strategies.is_empty() {
        return Err(CogsError::InvalidConfig("no strategies to reconstruct over".into()));
    }
    let m = strategies.len();
    let mut jobs: Vec<((usize, usize), u64)> = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        for b in a..m {
            jobs.push(((a, b), rng.random::<u64>()));
        }
    }
    let max_steps = true_game.max_episode_steps() + 1;
    let estimates: Vec<((usize, usize), Vec<f64>)> = jobs
        .par_iter()
        .map(|&((a, b), seed)| {
            let mut totals = vec![0.0; 2];
            for sim in 0..num_simulations {
                let mut sim_rng =
                    StdRng::seed_from_u64(derive_seed_tagged(seed, "sim", sim as u64));
                let joint: Vec<&dyn PurePolicy> = vec![strategies[a].as_ref(), strategies[b].as_ref()];
                let traj = rollout(true_game, &joint, &mut sim_rng, max_steps)?;
                for (t, r) in totals.iter_mut().zip(&traj.episode_return) {
                    *t += r;
                }
            }
            for t in &mut totals {
                *t /= num_simulations as f64;
            }
            Ok(((a, b), totals))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = BTreeMap::new();
    for (key, totals) in estimates {
        table.insert(key, totals);
    }
    let mut payoffs = Vec::with_capacity(m * m * 2);
    for a in 0..m {
        for b in 0..m {
            let entry = &table[&(a.min(b), a.max(b))];
            // diagonal seat samples are averaged, as in the model-side views
            let (u0, u1) = if a == b {
                let avg = 0.5 * (entry[0] + entry[1]);
                (avg, avg)
            } else if a < b {
                (entry[0], entry[1])
            } else {
                (entry[1], entry[0])
            };
            payoffs.push(u0);
            payoffs.push(u1);
        }
    }
    NormalFormGame::new(vec![m, m], payoffs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, DatasetMetadata};
    use crate::dynamics::{constant_ensemble, EnsembleConfig};
    use crate::game::{FixedActionPolicy, UniformRandomPolicy};
    use crate::toy::{ChainMdp, TreeGame};

    fn small_cfg() -> EnsembleConfig {
        EnsembleConfig {
            ensemble_size: 2,
            hidden_width: 8,
            depth: 1,
            batch_size: 8,
            learning_rate: 1e-2,
            training_steps: 10,
            terminal_match_tol: 0.5,
            max_rollout_len: 1,
        }
    }

    /// Model MDP whose every rollout lasts one step with fixed member rewards.
    fn one_step_mdp(member_rewards: &[Vec<f64>]) -> ModelMdp<ChainMdp> {
        let chain = ChainMdp::new(vec![0.0; 5], vec![0.0; 5]);
        let deltas: Vec<Vec<f64>> = member_rewards.iter().map(|_| vec![-1.0; 5]).collect();
        let ens = constant_ensemble(
            5,
            1,
            2,
            &deltas,
            member_rewards,
            &[0.0; 5],
            EnsembleConfig { max_rollout_len: 5, ..small_cfg() },
        );
        ModelMdp::new(Arc::new(chain), Arc::new(ens), vec![vec![0.0; 5]]).unwrap()
    }

    #[test]
    fn identical_members_collapse_entry_bounds() {
        let mdp = one_step_mdp(&[vec![2.0], vec![2.0]]);
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        let (entry, _) = estimate_entry(&mdp, &[&policy], 5, &mut rng).unwrap();
        assert_eq!(entry.per_member_utilities[0], entry.per_member_utilities[1]);
        assert_eq!(entry.mean_utilities, vec![2.0]);
        assert_eq!(entry.num_samples, 5);
    }

    #[test]
    fn entry_mean_matches_resummation_oracle() {
        let mdp = one_step_mdp(&[vec![1.0], vec![3.0]]);
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        let (entry, stats) = estimate_entry(&mdp, &[&policy], 7, &mut rng).unwrap();
        let k = entry.per_member_utilities.len() as f64;
        for (i, m) in entry.mean_utilities.iter().enumerate() {
            let s: f64 =
                entry.per_member_utilities.iter().map(|r| r[i]).sum::<f64>() / k;
            assert!((m - s).abs() < 1e-12);
        }
        assert_eq!(stats.rho_count, 7);
        assert!((stats.rho_sum - 7.0 * 2.0).abs() < 1e-12); // |1-3| per step
    }

    #[test]
    fn single_sample_entry_equals_single_rollout() {
        let mdp = one_step_mdp(&[vec![1.0], vec![3.0]]);
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        let (entry, _) = estimate_entry(&mdp, &[&policy], 1, &mut rng).unwrap();
        assert_eq!(entry.per_member_utilities, vec![vec![1.0], vec![3.0]]);
    }

    /// Model MDP over the tree game with constant member rewards; used to
    /// exercise the 2-player empirical game plumbing.
    fn tree_mdp(member_rewards: &[Vec<f64>]) -> ModelMdp<TreeGame> {
        let tree = TreeGame::new(vec![vec![[0.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [0.0, 0.0]]]);
        let deltas: Vec<Vec<f64>> = member_rewards.iter().map(|_| vec![-2.0, 0.0, -2.0]).collect();
        let ens = constant_ensemble(
            3,
            2,
            2,
            &deltas,
            member_rewards,
            &[0.0; 3],
            EnsembleConfig { max_rollout_len: 1, ..small_cfg() },
        );
        ModelMdp::new(Arc::new(tree), Arc::new(ens), vec![vec![0.0, -1.0, 0.0]]).unwrap()
    }

    #[test]
    fn extend_simulates_exactly_the_new_profiles() {
        let mdp = tree_mdp(&[vec![1.0, 0.5], vec![2.0, 1.5]]);
        let mut game = EmpiricalGame::new(2, 3).unwrap();
        let mut rng = StdRng::seed_from_u64(1);

        game.extend(Arc::new(UniformRandomPolicy), &mdp, &mut rng).unwrap();
        assert_eq!(game.num_strategies(), 1);
        assert_eq!(game.entries().count(), 1); // (0,0) only

        game.extend(Arc::new(FixedActionPolicy { action: 0 }), &mdp, &mut rng).unwrap();
        assert_eq!(game.entries().count(), 3); // + (0,1), (1,1)

        let before: Vec<PayoffEntry> =
            game.entries().map(|(_, e)| e.clone()).collect();
        game.extend(Arc::new(FixedActionPolicy { action: 1 }), &mdp, &mut rng).unwrap();
        assert_eq!(game.entries().count(), 6); // + (0,2), (1,2), (2,2)
        // previously simulated entries unchanged
        let after: Vec<PayoffEntry> = game
            .entries()
            .filter(|((_, hi), _)| *hi < 2)
            .map(|(_, e)| e.clone())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn duplicate_policies_get_independent_entries() {
        let mdp = tree_mdp(&[vec![1.0, 0.5], vec![2.0, 1.5]]);
        let mut game = EmpiricalGame::new(2, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let shared: Arc<dyn PurePolicy> = Arc::new(FixedActionPolicy { action: 0 });
        game.extend(shared.clone(), &mdp, &mut rng).unwrap();
        game.extend(shared, &mdp, &mut rng).unwrap();
        assert_eq!(game.num_strategies(), 2);
        assert_eq!(game.entries().count(), 3);
    }

    #[test]
    fn bounded_views_order_correctly() {
        let mdp = tree_mdp(&[vec![1.0, 3.0], vec![3.0, 1.0]]);
        let mut game = EmpiricalGame::new(2, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        game.extend(Arc::new(FixedActionPolicy { action: 0 }), &mdp, &mut rng).unwrap();
        game.extend(Arc::new(FixedActionPolicy { action: 1 }), &mdp, &mut rng).unwrap();
        let bounded = game.to_bounded_nfg().unwrap();
        let lower = bounded.lower_game();
        let upper = bounded.upper_game();
        let mean = bounded.mean_game();
        for a in 0..2 {
            for b in 0..2 {
                for i in 0..2 {
                    let l = lower.entry(&[a, b])[i];
                    let m = mean.entry(&[a, b])[i];
                    let u = upper.entry(&[a, b])[i];
                    assert!(l <= m + 1e-12 && m <= u + 1e-12, "({a},{b},{i}): {l} {m} {u}");
                }
            }
        }
    }

    #[test]
    fn hand_set_member_utilities_produce_expected_bounds() {
        // player-0 member values {1.0, 3.0} at a profile: lower 1, upper 3, mean 2
        let g1 = NormalFormGame::symmetric_2p(&[vec![1.0]]).unwrap();
        let g2 = NormalFormGame::symmetric_2p(&[vec![3.0]]).unwrap();
        let bounded = BoundedNfg::new(vec![g1, g2]).unwrap();
        let sigma = MixedStrategy::one_hot(0, 1);
        assert_eq!(bounded.lower_deviation(0, &sigma).unwrap(), 1.0);
        assert_eq!(bounded.upper_deviation(0, &sigma).unwrap(), 3.0);
        assert_eq!(bounded.mean_game().entry(&[0, 0])[0], 2.0);
    }

    #[test]
    fn single_member_bounds_collapse() {
        let g = NormalFormGame::symmetric_2p(&[vec![2.0, 0.0], vec![3.0, 1.0]]).unwrap();
        let bounded = BoundedNfg::collapsed(g.clone()).unwrap();
        let sigma = MixedStrategy::uniform(2);
        for k in 0..2 {
            let lo = bounded.lower_deviation(k, &sigma).unwrap();
            let hi = bounded.upper_deviation(k, &sigma).unwrap();
            assert_eq!(lo, hi);
        }
        assert_eq!(bounded.lower_game(), g);
        assert_eq!(bounded.upper_game(), g);
    }

    #[test]
    fn symmetric_lookup_swaps_players() {
        let mdp = tree_mdp(&[vec![1.0, 0.5], vec![2.0, 1.5]]);
        let mut game = EmpiricalGame::new(2, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        game.extend(Arc::new(FixedActionPolicy { action: 0 }), &mdp, &mut rng).unwrap();
        game.extend(Arc::new(FixedActionPolicy { action: 1 }), &mdp, &mut rng).unwrap();
        let fwd = game.lookup(0, 1).unwrap();
        let rev = game.lookup(1, 0).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let game = EmpiricalGame::new(2, 2).unwrap();
        assert!(game.to_bounded_nfg().is_err());
    }

    #[test]
    fn reconstruct_true_on_deterministic_game_is_exact() {
        let tree = TreeGame::new(vec![vec![[1.0, 2.0], [3.0, 4.0]], vec![[5.0, 6.0], [0.0, 1.0]]]);
        let a: Arc<dyn PurePolicy> = Arc::new(FixedActionPolicy { action: 0 });
        let b: Arc<dyn PurePolicy> = Arc::new(FixedActionPolicy { action: 1 });
        let mut rng = StdRng::seed_from_u64(5);
        let nfg = reconstruct_true(&[a, b], &tree, 4, &mut rng).unwrap();
        // profile (0, 1): row player fixed to action 0, column player to 1
        assert_eq!(nfg.entry(&[0, 1]), &[3.0, 4.0]);
        assert_eq!(nfg.entry(&[1, 0]), &[4.0, 3.0]); // symmetric storage swap
        assert_eq!(nfg.entry(&[0, 0]), &[1.5, 1.5]); // seats averaged on the diagonal
    }

    #[test]
    fn reconstruct_true_zero_reward_game_is_zero() {
        let tree = TreeGame::new(vec![vec![[0.0, 0.0]; 2]; 2]);
        let a: Arc<dyn PurePolicy> = Arc::new(UniformRandomPolicy);
        let mut rng = StdRng::seed_from_u64(6);
        let nfg = reconstruct_true(&[a], &tree, 8, &mut rng).unwrap();
        assert_eq!(nfg.entry(&[0, 0]), &[0.0, 0.0]);
    }

    #[test]
    fn reconstruct_true_is_seed_reproducible() {
        let ds_seedless = || {
            let tree =
                TreeGame::new(vec![vec![[1.0, 0.0], [0.0, 1.0]], vec![[2.0, 2.0], [1.0, 3.0]]]);
            let a: Arc<dyn PurePolicy> = Arc::new(UniformRandomPolicy);
            let b: Arc<dyn PurePolicy> = Arc::new(FixedActionPolicy { action: 1 });
            let mut rng = StdRng::seed_from_u64(7);
            reconstruct_true(&[a, b], &tree, 16, &mut rng).unwrap()
        };
        assert_eq!(ds_seedless(), ds_seedless());
    }

    #[test]
    fn dataset_helpers_are_not_required_here() {
        // estimate_entry rejects zero simulations
        let mdp = one_step_mdp(&[vec![1.0], vec![1.0]]);
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        assert!(estimate_entry(&mdp, &[&policy], 0, &mut rng).is_err());
        let _ = Dataset::new(
            DatasetMetadata {
                behavior_policy_tag: "x".into(),
                seed: 0,
                game_config_hash: "h".into(),
            },
            vec![],
        );
    }
}
