//! True-game evaluation: regret against combined strategy sets, model
//! fidelity, disagreement summaries, and Welch's t-test for comparing run
//! groups.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::driver::RunArtifacts;
use crate::empirical::reconstruct_true;
use crate::error::{CogsError, Result};
use crate::game::{ActionId, Game, MixedStrategy, PurePolicy};
use crate::nfg::NormalFormGame;
use crate::response::{train_best_response, DdqnConfig, ObjectiveConfig};
use crate::rng::derive_seed_tagged;
use crate::solvers::{solve, SolverConfig};

// ---------------------------------------------------------------------------
// Welch's t-test
// ---------------------------------------------------------------------------

/// Two-sided Welch's t-test p-value with Welch-Satterthwaite degrees of
/// freedom. Identical samples give p = 1; zero variance with distinct means
/// gives p = 0.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CogsError::InvalidConfig("welch test needs >= 2 samples per side".into()));
    }
    let (ma, va, na) = sample_stats(a);
    let (mb, vb, nb) = sample_stats(b);
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| CogsError::InvalidConfig(format!("t-distribution: {e}")))?;
    Ok(2.0 * dist.cdf(-t.abs()))
}

fn sample_stats(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var, n)
}

// ---------------------------------------------------------------------------
// Model fidelity and disagreement summaries
// ---------------------------------------------------------------------------

/// Average per-profile summed utility error between two games over the same
/// strategy sets: (1/|profiles|) * sum over profiles of sum_i |u_i - v_i|.
pub fn fidelity_gap(true_game: &NormalFormGame, model_game: &NormalFormGame) -> Result<f64> {
    if true_game.strategy_counts() != model_game.strategy_counts()
        || true_game.num_players() != model_game.num_players()
    {
        return Err(CogsError::DimensionMismatch("fidelity views differ in shape".into()));
    }
    let m = true_game.strategy_counts()[0];
    let n = true_game.num_players();
    let mut total = 0.0;
    let mut profiles = 0.0;
    for a in 0..m {
        for b in 0..true_game.strategy_counts()[1] {
            let t = true_game.entry(&[a, b]);
            let v = model_game.entry(&[a, b]);
            total += t.iter().zip(v).map(|(x, y)| (x - y).abs()).sum::<f64>();
            profiles += 1.0;
        }
    }
    let _ = n;
    Ok(total / profiles)
}

/// Model fidelity of a finished run: reconstruct the strategy set's payoffs
/// with true-game simulations and compare them to the run's own
/// model-estimated mean view.
pub fn model_fidelity<G: Game>(
    artifacts: &RunArtifacts,
    true_game: &G,
    num_simulations: usize,
    rng: &mut StdRng,
) -> Result<f64> {
    let m = artifacts.strategies.len();
    let model_view = artifacts.empirical.bounded_prefix(m)?;
    let true_view = reconstruct_true(&artifacts.strategies, true_game, num_simulations, rng)?;
    fidelity_gap(&true_view, model_view.mean_game())
}

/// Mean disagreement over every entry simulation the run performed.
pub fn mean_rho(artifacts: &RunArtifacts) -> Result<f64> {
    let mut sum = artifacts.setup_rho.rho_sum;
    let mut count = artifacts.setup_rho.rho_count;
    for m in &artifacts.metrics {
        sum += m.rho.rho_sum;
        count += m.rho.rho_count;
    }
    if count == 0 {
        return Err(CogsError::EmptyDataset("run logged no disagreement values".into()));
    }
    Ok(sum / count as f64)
}

// ---------------------------------------------------------------------------
// Exact best response by belief-weighted expectimax
// ---------------------------------------------------------------------------

/// Limits for the exact search oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactOracleConfig {
    /// Initial-state samples averaged for the best-response value.
    pub scenarios: usize,
    /// Hidden-state samples per belief (opponent private information).
    pub belief_particles: usize,
    /// Upper bound on expectimax node visits per search.
    pub max_nodes: u64,
    pub seed: u64,
}

impl Default for ExactOracleConfig {
    fn default() -> Self {
        Self { scenarios: 64, belief_particles: 8, max_nodes: 2_000_000, seed: 0 }
    }
}

struct Particle<S> {
    state: S,
    weight: f64,
    /// Index into the opponent support.
    opp: usize,
}

struct Searcher<'a, G: Game> {
    game: &'a G,
    /// Seat the value is computed for.
    player: usize,
    support: Vec<Arc<dyn PurePolicy>>,
    max_depth: usize,
}

impl<'a, G: Game> Searcher<'a, G> {
    /// Weighted sum over particles of the expected return to `player`,
    /// maximizing at the player's own decision nodes and marginalizing
    /// opponent behavior elsewhere. Returns (sum, best root action if the
    /// root is the player's node).
    fn value(
        &self,
        particles: &[Particle<G::State>],
        actions: &mut Vec<ActionId>,
        budget: &mut u64,
    ) -> Result<(f64, Option<ActionId>)> {
        if particles.is_empty() {
            return Ok((0.0, None));
        }
        if *budget == 0 {
            return Err(CogsError::GameTooLarge("expectimax node budget exhausted".into()));
        }
        *budget -= 1;
        if actions.len() >= self.max_depth {
            return Ok((0.0, None));
        }
        let acting = self.game.acting_player(&particles[0].state);
        let mask = self.game.legal_actions(&particles[0].state)?;

        if acting == self.player {
            let mut best_sum = f64::NEG_INFINITY;
            let mut best_action = None;
            for (action, &legal) in mask.iter().enumerate() {
                if !legal {
                    continue;
                }
                let mut immediate = 0.0;
                let mut children = Vec::with_capacity(particles.len());
                let mut done_flag = None;
                for p in particles {
                    let out = self.game.step(&p.state, action)?;
                    immediate += p.weight * out.rewards[self.player];
                    debug_assert!(
                        *done_flag.get_or_insert(out.done) == out.done,
                        "episode end must be public"
                    );
                    if !out.done {
                        children.push(Particle { state: out.next, weight: p.weight, opp: p.opp });
                    }
                }
                actions.push(action);
                let (future, _) = self.value(&children, actions, budget)?;
                actions.pop();
                let total = immediate + future;
                if total > best_sum {
                    best_sum = total;
                    best_action = Some(action);
                }
            }
            Ok((best_sum, best_action))
        } else {
            // opponent node: branch on every action any particle's policy
            // gives mass to, scaling weights by that mass
            let dists: Vec<Vec<f64>> = particles
                .iter()
                .map(|p| {
                    let obs = self.game.observe(&p.state, acting);
                    let info = self.game.encode_infostate(acting, &obs, actions);
                    self.support[p.opp].action_distribution(&info, &mask)
                })
                .collect();
            let mut sum = 0.0;
            for (action, &legal) in mask.iter().enumerate() {
                if !legal {
                    continue;
                }
                let mut immediate = 0.0;
                let mut children = Vec::new();
                let mut any = false;
                for (p, dist) in particles.iter().zip(&dists) {
                    let w = p.weight * dist[action];
                    if w <= 1e-300 {
                        continue;
                    }
                    any = true;
                    let out = self.game.step(&p.state, action)?;
                    immediate += w * out.rewards[self.player];
                    if !out.done {
                        children.push(Particle { state: out.next, weight: w, opp: p.opp });
                    }
                }
                if !any {
                    continue;
                }
                actions.push(action);
                let (future, _) = self.value(&children, actions, budget)?;
                actions.pop();
                sum += immediate + future;
            }
            Ok((sum, None))
        }
    }
}

/// A best response computed by exact search over reconstructed beliefs.
/// Deterministic: the belief particles are seeded from the information
/// state itself.
pub struct ExactBestResponsePolicy<G: Game> {
    game: Arc<G>,
    support: Vec<Arc<dyn PurePolicy>>,
    support_weights: Vec<f64>,
    cfg: ExactOracleConfig,
}

impl<G: Game> ExactBestResponsePolicy<G> {
    fn initial_particles(&self, states: Vec<G::State>) -> Vec<Particle<G::State>> {
        let h = states.len() as f64;
        let mut particles = Vec::with_capacity(states.len() * self.support.len());
        for state in states {
            for (k, &w) in self.support_weights.iter().enumerate() {
                if w <= 1e-12 {
                    continue;
                }
                particles.push(Particle { state: state.clone(), weight: w / h, opp: k });
            }
        }
        particles
    }

    /// Replay the public action history through each particle, reweighting
    /// opponent steps by the probability the particle's policy assigns to
    /// the observed action.
    fn replay(
        &self,
        mut particles: Vec<Particle<G::State>>,
        actions: &[ActionId],
    ) -> Result<(Vec<Particle<G::State>>, usize)> {
        let game = self.game.as_ref();
        // first pass: find the seat acting after the full history
        let mut probe = particles
            .first()
            .map(|p| p.state.clone())
            .ok_or_else(|| CogsError::InvalidConfig("no belief particles".into()))?;
        for &a in actions {
            probe = game.step(&probe, a)?.next;
        }
        let our_seat = game.acting_player(&probe);

        for (t, &a) in actions.iter().enumerate() {
            let mut next = Vec::with_capacity(particles.len());
            for mut p in particles {
                let acting = game.acting_player(&p.state);
                if acting != our_seat {
                    let obs = game.observe(&p.state, acting);
                    let info = game.encode_infostate(acting, &obs, &actions[..t]);
                    let mask = game.legal_actions(&p.state)?;
                    let dist = self.support[p.opp].action_distribution(&info, &mask);
                    p.weight *= dist[a];
                    if p.weight <= 1e-300 {
                        continue;
                    }
                }
                let out = game.step(&p.state, a)?;
                p.state = out.next;
                next.push(p);
            }
            particles = next;
        }
        if particles.is_empty() {
            return Ok((Vec::new(), our_seat));
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        for p in &mut particles {
            p.weight /= total;
        }
        Ok((particles, our_seat))
    }
}

fn infostate_seed(infostate: &[f64], base: u64) -> u64 {
    let mut h = base ^ 0x9e37_79b9_2545_f491;
    for v in infostate {
        h = derive_seed_tagged(h, "info", v.to_bits());
    }
    h
}

impl<G: Game> PurePolicy for ExactBestResponsePolicy<G> {
    fn act(&self, infostate: &[f64], legal_mask: &[bool], _rng: &mut StdRng) -> ActionId {
        let mut belief_rng = StdRng::seed_from_u64(infostate_seed(infostate, self.cfg.seed));
        let rec = self
            .game
            .reconstruct_from_infostate(0, infostate, self.cfg.belief_particles, &mut belief_rng)
            .expect("exact search needs a game with information-state reconstruction");
        let particles = self.initial_particles(rec.initial_states);
        let (mut particles, our_seat) =
            self.replay(particles, &rec.actions).expect("history replay failed");
        if particles.is_empty() {
            // no particle explains the observed history (deterministic
            // opponents off their support); fall back to a fresh prior
            let mut retry_rng = StdRng::seed_from_u64(infostate_seed(infostate, !self.cfg.seed));
            let rec = self
                .game
                .reconstruct_from_infostate(0, infostate, self.cfg.belief_particles, &mut retry_rng)
                .expect("exact search needs reconstruction");
            particles = self.initial_particles(rec.initial_states);
            let mut replayed = Vec::new();
            for mut p in particles {
                let mut state = p.state;
                let mut ok = true;
                for &a in &rec.actions {
                    match self.game.step(&state, a) {
                        Ok(out) => state = out.next,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    p.state = state;
                    replayed.push(p);
                }
            }
            particles = replayed;
            let total: f64 = particles.iter().map(|p| p.weight).sum();
            for p in &mut particles {
                p.weight /= total;
            }
        }
        let searcher = Searcher {
            game: self.game.as_ref(),
            player: our_seat,
            support: self.support.clone(),
            max_depth: self.game.max_episode_steps(),
        };
        let mut actions = rec.actions.clone();
        let mut budget = self.cfg.max_nodes;
        let (_, best) = searcher
            .value(&particles, &mut actions, &mut budget)
            .expect("expectimax exceeded its node budget");
        let action = best.expect("policy queried at an opponent node");
        debug_assert!(legal_mask.get(action).copied().unwrap_or(false));
        action
    }

    fn action_distribution(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(0);
        let chosen = self.act(infostate, legal_mask, &mut rng);
        let mut dist = vec![0.0; legal_mask.len()];
        dist[chosen] = 1.0;
        dist
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Compute an exact best response for `player` against the opponent
/// mixture, via backward induction over action histories with hidden
/// initial conditions marginalized by belief particles.
///
/// Returns the policy plus its estimated value (averaged over sampled
/// initial scenarios). Games whose action tree exceeds the node budget are
/// rejected up front.
pub fn exact_best_response<G: Game>(
    game: Arc<G>,
    opponent_strategies: &[Arc<dyn PurePolicy>],
    opponent_mix: &MixedStrategy,
    player: usize,
    cfg: &ExactOracleConfig,
    rng: &mut StdRng,
) -> Result<(Arc<ExactBestResponsePolicy<G>>, f64)> {
    if game.num_players() != 2 {
        return Err(CogsError::InvalidConfig("exact search supports 2-player games".into()));
    }
    if opponent_strategies.is_empty() || opponent_mix.len() != opponent_strategies.len() {
        return Err(CogsError::DimensionMismatch("opponent mixture/support mismatch".into()));
    }
    // static size guard: the worst-case action tree
    let mut estimate: f64 = 1.0;
    for _ in 0..game.max_episode_steps() {
        estimate *= game.num_actions() as f64;
        if estimate > cfg.max_nodes as f64 {
            return Err(CogsError::GameTooLarge(format!(
                "{} actions over {} steps exceed the {}-node search budget",
                game.num_actions(),
                game.max_episode_steps(),
                cfg.max_nodes
            )));
        }
    }

    let policy = Arc::new(ExactBestResponsePolicy {
        game: game.clone(),
        support: opponent_strategies.to_vec(),
        support_weights: opponent_mix.weights().to_vec(),
        cfg: cfg.clone(),
    });

    // value estimate over sampled initial scenarios
    let searcher_support = opponent_strategies.to_vec();
    let mut total = 0.0;
    for scenario in 0..cfg.scenarios {
        let mut scen_rng =
            StdRng::seed_from_u64(derive_seed_tagged(cfg.seed, "scenario", scenario as u64));
        let s0 = game.initial_state(&mut scen_rng);
        let mut states = Vec::with_capacity(cfg.belief_particles);
        for _ in 0..cfg.belief_particles.max(1) {
            states.push(game.resample_hidden(&s0, player, &mut scen_rng));
        }
        let particles = policy.initial_particles(states);
        let searcher = Searcher {
            game: game.as_ref(),
            player,
            support: searcher_support.clone(),
            max_depth: game.max_episode_steps(),
        };
        let mut actions = Vec::new();
        let mut budget = cfg.max_nodes;
        let (value, _) = searcher.value(&particles, &mut actions, &mut budget)?;
        total += value;
    }
    let _ = rng;
    Ok((policy, total / cfg.scenarios as f64))
}

// ---------------------------------------------------------------------------
// True-game regret protocol
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    ExactTreeSearch,
    DdqnOnline,
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Number of trailing profiles that get a freshly computed best
    /// response added to the evaluation strategy set.
    pub eval_window: usize,
    /// True-game simulations per reconstructed entry.
    pub true_simulations: usize,
    pub oracle: OracleKind,
    /// Re-solve each iteration's prefix game with this solver instead of
    /// using the run's recorded profiles.
    pub m_eval: Option<SolverConfig>,
    pub exact: ExactOracleConfig,
    /// Online-oracle training settings (DDQN in the true game).
    pub ddqn_online: Option<DdqnConfig>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eval_window: 20,
            true_simulations: 1000,
            oracle: OracleKind::ExactTreeSearch,
            m_eval: None,
            exact: ExactOracleConfig::default(),
            ddqn_online: None,
            seed: 0,
        }
    }
}

/// Per-profile regret under the combined evaluation strategy set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub iteration: usize,
    /// Raw (unclamped) per-player regrets.
    pub per_player: Vec<f64>,
    /// Sum over players of regret clamped at zero.
    pub summed: f64,
    /// Whether a best response targeted at this profile joined the set.
    pub oracle_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub rows: Vec<RegretRow>,
    /// Number of oracle best responses added to the evaluation set.
    pub oracle_strategies: usize,
}

/// The profiles evaluation scores: the run's own, or each prefix game
/// re-solved with the evaluation solver.
pub fn evaluation_profiles(
    artifacts: &RunArtifacts,
    m_eval: Option<&SolverConfig>,
) -> Result<Vec<MixedStrategy>> {
    match m_eval {
        None => Ok(artifacts.profiles.clone()),
        Some(cfg) => {
            let mut out = Vec::with_capacity(artifacts.profiles.len());
            for s in 0..artifacts.profiles.len() {
                let bounded = artifacts.empirical.bounded_prefix(s + 2)?;
                out.push(solve(&bounded, cfg)?.profile);
            }
            Ok(out)
        }
    }
}

/// Appendix-style regret evaluation: build best responses to the last
/// `eval_window` profiles, reconstruct the combined game with true-game
/// simulations, and report every profile's regret against it.
pub fn true_game_regret<G: Game + 'static>(
    artifacts: &RunArtifacts,
    true_game: Arc<G>,
    cfg: &EvalConfig,
    rng: &mut StdRng,
) -> Result<RegretReport> {
    let profiles = evaluation_profiles(artifacts, cfg.m_eval.as_ref())?;
    if profiles.is_empty() {
        return Err(CogsError::IncompleteArtifacts("run has no profiles to evaluate".into()));
    }
    if cfg.eval_window > profiles.len() {
        return Err(CogsError::InvalidConfig(format!(
            "eval_window {} exceeds the {} recorded profiles",
            cfg.eval_window,
            profiles.len()
        )));
    }

    let window_start = profiles.len() - cfg.eval_window;
    let mut eval_set: Vec<Arc<dyn PurePolicy>> = artifacts.strategies.clone();
    let mut oracle_ok = vec![false; profiles.len()];
    for (offset, profile) in profiles[window_start..].iter().enumerate() {
        let s = window_start + offset;
        let opponents = &artifacts.strategies[..profile.len()];
        let br: Result<Arc<dyn PurePolicy>> = match cfg.oracle {
            OracleKind::ExactTreeSearch => {
                let mut oracle_cfg = cfg.exact.clone();
                oracle_cfg.seed = derive_seed_tagged(cfg.seed, "oracle", s as u64);
                exact_best_response(
                    true_game.clone(),
                    opponents,
                    profile,
                    0,
                    &oracle_cfg,
                    rng,
                )
                .map(|(p, _)| p as Arc<dyn PurePolicy>)
            }
            OracleKind::DdqnOnline => {
                let ddqn = cfg.ddqn_online.clone().ok_or_else(|| {
                    CogsError::InvalidConfig("online oracle needs ddqn settings".into())
                })?;
                let mut br_rng =
                    StdRng::seed_from_u64(derive_seed_tagged(cfg.seed, "oracle", s as u64));
                train_best_response(
                    true_game.as_ref(),
                    opponents,
                    profile,
                    &ObjectiveConfig::plain(),
                    &ddqn,
                    None,
                    &mut br_rng,
                )
                .map(|(p, _)| Arc::new(p) as Arc<dyn PurePolicy>)
            }
        };
        match br {
            Ok(policy) => {
                eval_set.push(policy);
                oracle_ok[s] = true;
            }
            Err(e) => {
                log::warn!("oracle failed for profile {s}: {e}");
            }
        }
    }
    let oracle_strategies = eval_set.len() - artifacts.strategies.len();

    let nfg = reconstruct_true(&eval_set, true_game.as_ref(), cfg.true_simulations, rng)?;
    let total = eval_set.len();
    let mut rows = Vec::with_capacity(profiles.len());
    for (s, profile) in profiles.iter().enumerate() {
        let padded = profile.padded(total);
        let per_player = nfg.regret(&[padded.clone(), padded])?;
        let summed = per_player.iter().map(|r| r.max(0.0)).sum();
        rows.push(RegretRow { iteration: s + 1, per_player, summed, oracle_ok: oracle_ok[s] });
    }
    Ok(RegretReport { rows, oracle_strategies })
}
