//! Normal-form games, expected payoffs, and regret.

use serde::{Deserialize, Serialize};

use crate::error::{CogsError, Result};
use crate::game::MixedStrategy;

/// A finite normal-form game with a dense payoff tensor.
///
/// Payoffs are stored row-major over pure profiles, with the per-player
/// payoff vector innermost: index = ((p_0 * m_1 + p_1) * ... ) * n + i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormGame {
    num_players: usize,
    strategy_counts: Vec<usize>,
    payoffs: Vec<f64>,
    symmetric: bool,
}

impl NormalFormGame {
    pub fn new(strategy_counts: Vec<usize>, payoffs: Vec<f64>, symmetric: bool) -> Result<Self> {
        let num_players = strategy_counts.len();
        if num_players == 0 {
            return Err(CogsError::InvalidConfig("game needs at least one player".into()));
        }
        let cells: usize = strategy_counts.iter().product();
        if payoffs.len() != cells * num_players {
            return Err(CogsError::DimensionMismatch(format!(
                "payoff tensor has {} entries, expected {}",
                payoffs.len(),
                cells * num_players
            )));
        }
        let game = Self { num_players, strategy_counts, payoffs, symmetric };
        if symmetric && !game.symmetry_holds() {
            return Err(CogsError::InvalidConfig(
                "payoffs are not invariant under player/strategy permutation".into(),
            ));
        }
        Ok(game)
    }

    /// Build a 2-player game from per-player matrices `u0[a][b]`, `u1[a][b]`.
    pub fn from_matrices(u0: &[Vec<f64>], u1: &[Vec<f64>]) -> Result<Self> {
        let rows = u0.len();
        let cols = u0.first().map_or(0, Vec::len);
        let mut payoffs = Vec::with_capacity(rows * cols * 2);
        for a in 0..rows {
            for b in 0..cols {
                payoffs.push(u0[a][b]);
                payoffs.push(u1[a][b]);
            }
        }
        let symmetric = rows == cols
            && (0..rows).all(|a| (0..cols).all(|b| (u0[a][b] - u1[b][a]).abs() <= 1e-12));
        Self::new(vec![rows, cols], payoffs, symmetric)
    }

    /// A symmetric 2-player game from the row player's matrix.
    pub fn symmetric_2p(u_row: &[Vec<f64>]) -> Result<Self> {
        let m = u_row.len();
        let u1: Vec<Vec<f64>> = (0..m).map(|a| (0..m).map(|b| u_row[b][a]).collect()).collect();
        Self::from_matrices(u_row, &u1)
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn offset(&self, profile: &[usize]) -> usize {
        let mut idx = 0;
        for (p, (&s, &m)) in profile.iter().zip(&self.strategy_counts).enumerate() {
            debug_assert!(s < m, "strategy {s} out of range for player {p}");
            idx = idx * m + s;
        }
        idx * self.num_players
    }

    /// Payoff vector of a pure profile.
    pub fn entry(&self, profile: &[usize]) -> &[f64] {
        let o = self.offset(profile);
        &self.payoffs[o..o + self.num_players]
    }

    fn symmetry_holds(&self) -> bool {
        // Only the 2-player condition u_0(a, b) = u_1(b, a) is checked; the
        // crate's symmetric machinery is 2-player.
        if self.num_players != 2 || self.strategy_counts[0] != self.strategy_counts[1] {
            return false;
        }
        let m = self.strategy_counts[0];
        for a in 0..m {
            for b in 0..m {
                if (self.entry(&[a, b])[0] - self.entry(&[b, a])[1]).abs() > 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    fn check_profile(&self, profile: &[MixedStrategy]) -> Result<()> {
        if profile.len() != self.num_players {
            return Err(CogsError::DimensionMismatch(format!(
                "profile has {} strategies for {} players",
                profile.len(),
                self.num_players
            )));
        }
        for (i, (mix, &m)) in profile.iter().zip(&self.strategy_counts).enumerate() {
            if mix.len() != m {
                return Err(CogsError::DimensionMismatch(format!(
                    "player {i} mixes over {} strategies, game has {m}",
                    mix.len()
                )));
            }
        }
        Ok(())
    }

    fn profiles(&self) -> ProfileIter {
        ProfileIter { counts: self.strategy_counts.clone(), current: None }
    }

    /// Expected payoffs of a mixed profile: the weight-product-weighted sum
    /// over all pure profiles.
    pub fn mixed_payoff(&self, profile: &[MixedStrategy]) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        let mut out = vec![0.0; self.num_players];
        for pure in self.profiles() {
            let w: f64 = pure
                .iter()
                .enumerate()
                .map(|(i, &s)| profile[i].weights()[s])
                .product();
            if w == 0.0 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(self.entry(&pure)) {
                *o += w * u;
            }
        }
        Ok(out)
    }

    /// Expected payoff to player `player` for deviating to pure strategy
    /// `strategy` while everyone else follows `profile`.
    pub fn deviation_payoff(
        &self,
        player: usize,
        strategy: usize,
        profile: &[MixedStrategy],
    ) -> Result<f64> {
        self.check_profile(profile)?;
        let mut total = 0.0;
        for pure in self.profiles() {
            if pure[player] != strategy {
                continue;
            }
            let w: f64 = pure
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != player)
                .map(|(i, &s)| profile[i].weights()[s])
                .product();
            if w != 0.0 {
                total += w * self.entry(&pure)[player];
            }
        }
        Ok(total)
    }

    /// Per-player regret: the payoff gain of the best pure deviation.
    pub fn regret(&self, profile: &[MixedStrategy]) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        let base = self.mixed_payoff(profile)?;
        let mut out = Vec::with_capacity(self.num_players);
        for player in 0..self.num_players {
            let mut best = f64::NEG_INFINITY;
            for s in 0..self.strategy_counts[player] {
                best = best.max(self.deviation_payoff(player, s, profile)?);
            }
            out.push(best - base[player]);
        }
        Ok(out)
    }
}

struct ProfileIter {
    counts: Vec<usize>,
    current: Option<Vec<usize>>,
}

impl Iterator for ProfileIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        match &mut self.current {
            None => {
                if self.counts.iter().any(|&c| c == 0) {
                    return None;
                }
                self.current = Some(vec![0; self.counts.len()]);
            }
            Some(profile) => {
                let mut i = profile.len();
                loop {
                    if i == 0 {
                        return None;
                    }
                    i -= 1;
                    profile[i] += 1;
                    if profile[i] < self.counts[i] {
                        break;
                    }
                    profile[i] = 0;
                }
            }
        }
        self.current.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn prisoners_dilemma() -> NormalFormGame {
        // strategies: 0 = cooperate, 1 = defect; T=5, R=3, P=1, S=0
        NormalFormGame::symmetric_2p(&[vec![3.0, 0.0], vec![5.0, 1.0]]).unwrap()
    }

    fn rock_paper_scissors() -> NormalFormGame {
        NormalFormGame::symmetric_2p(&[
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn matching_pennies() -> NormalFormGame {
        NormalFormGame::from_matrices(
            &[vec![1.0, -1.0], vec![-1.0, 1.0]],
            &[vec![-1.0, 1.0], vec![1.0, -1.0]],
        )
        .unwrap()
    }

    /// Independent evaluation used as the test oracle: expected payoffs and
    /// best pure deviation via direct enumeration, no shared helpers.
    fn brute_force_regret(game: &NormalFormGame, profile: &[MixedStrategy]) -> Vec<f64> {
        let counts = game.strategy_counts().to_vec();
        let n = game.num_players();
        let enumerate = |fixed: Option<(usize, usize)>| -> Vec<f64> {
            let mut totals = vec![0.0; n];
            let mut stack = vec![0usize; counts.len()];
            'outer: loop {
                let mut w = 1.0;
                for (i, &s) in stack.iter().enumerate() {
                    match fixed {
                        Some((p, f)) if p == i => {
                            if s != f {
                                w = 0.0;
                            }
                        }
                        _ => w *= profile[i].weights()[s],
                    }
                }
                if w != 0.0 {
                    for (t, &u) in totals.iter_mut().zip(game.entry(&stack)) {
                        *t += w * u;
                    }
                }
                for i in (0..stack.len()).rev() {
                    stack[i] += 1;
                    if stack[i] < counts[i] {
                        continue 'outer;
                    }
                    stack[i] = 0;
                    if i == 0 {
                        break 'outer;
                    }
                }
            }
            totals
        };
        let base = enumerate(None);
        (0..n)
            .map(|p| {
                let best = (0..counts[p])
                    .map(|s| enumerate(Some((p, s)))[p])
                    .fold(f64::NEG_INFINITY, f64::max);
                best - base[p]
            })
            .collect()
    }

    #[test]
    fn matching_pennies_uniform_is_zero() {
        let game = matching_pennies();
        let uniform = vec![MixedStrategy::uniform(2), MixedStrategy::uniform(2)];
        let u = game.mixed_payoff(&uniform).unwrap();
        assert!(u.iter().all(|x| x.abs() < 1e-12), "{u:?}");
    }

    #[test]
    fn pd_pure_cooperate_payoff() {
        let game = prisoners_dilemma();
        let both_c = vec![MixedStrategy::one_hot(0, 2), MixedStrategy::one_hot(0, 2)];
        assert_eq!(game.mixed_payoff(&both_c).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn one_hot_profile_recovers_tensor_entry() {
        let mut rng = StdRng::seed_from_u64(5);
        let payoffs: Vec<f64> = (0..3 * 3 * 2).map(|_| rng.random_range(-5.0..5.0)).collect();
        let game = NormalFormGame::new(vec![3, 3], payoffs, false).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let profile = vec![MixedStrategy::one_hot(a, 3), MixedStrategy::one_hot(b, 3)];
                assert_eq!(game.mixed_payoff(&profile).unwrap(), game.entry(&[a, b]));
            }
        }
    }

    #[test]
    fn pd_cooperate_regret_is_two() {
        // Deviating from (C, C) to D gains T - R = 5 - 3 = 2 for either player.
        let game = prisoners_dilemma();
        let both_c = vec![MixedStrategy::one_hot(0, 2), MixedStrategy::one_hot(0, 2)];
        let r = game.regret(&both_c).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12, "{r:?}");
        assert_eq!(brute_force_regret(&game, &both_c), r);
    }

    #[test]
    fn pd_defect_is_equilibrium() {
        let game = prisoners_dilemma();
        let both_d = vec![MixedStrategy::one_hot(1, 2), MixedStrategy::one_hot(1, 2)];
        let r = game.regret(&both_d).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-12), "{r:?}");
    }

    #[test]
    fn rps_uniform_is_equilibrium() {
        let game = rock_paper_scissors();
        let uniform = vec![MixedStrategy::uniform(3), MixedStrategy::uniform(3)];
        let r = game.regret(&uniform).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-9), "{r:?}");
    }

    #[test]
    fn regret_matches_brute_force_on_random_games() {
        for seed in 0..100u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let payoffs: Vec<f64> = (0..3 * 3 * 2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let game = NormalFormGame::new(vec![3, 3], payoffs, false).unwrap();
            let profile: Vec<MixedStrategy> = (0..2)
                .map(|_| {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                    let sum: f64 = raw.iter().sum();
                    MixedStrategy::new(raw.into_iter().map(|w| w / sum).collect()).unwrap()
                })
                .collect();
            let fast = game.regret(&profile).unwrap();
            let slow = brute_force_regret(&game, &profile);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-9, "seed {seed}: {fast:?} vs {slow:?}");
            }
            assert!(fast.iter().all(|&x| x >= -1e-9));
        }
    }

    #[test]
    fn symmetric_profile_regret_invariant_under_role_swap() {
        let game = rock_paper_scissors();
        let shares = MixedStrategy::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r1 = game.regret(&[shares.clone(), shares.clone()]).unwrap();
        // Swapping player roles in a symmetric game relabels the same value.
        assert!((r1[0] - r1[1]).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let game = prisoners_dilemma();
        let bad = vec![MixedStrategy::uniform(3), MixedStrategy::uniform(2)];
        assert!(matches!(game.mixed_payoff(&bad), Err(CogsError::DimensionMismatch(_))));
        assert!(matches!(game.regret(&bad), Err(CogsError::DimensionMismatch(_))));
    }

    #[test]
    fn symmetric_flag_rejects_asymmetric_payoffs() {
        let err = NormalFormGame::new(vec![2, 2], vec![1.0; 8], true);
        assert!(err.is_ok()); // constant game is symmetric
        let bad = NormalFormGame::new(
            vec![2, 2],
            vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0],
            true,
        );
        assert!(bad.is_err());
    }
}
