//! Meta-strategy solvers over the symmetric empirical game.
//!
//! RD and RRD run discrete-time replicator dynamics on mean payoffs; R2D
//! and R3D run the robust variant whose fitness is the gap between the
//! upper-bound deviation payoff (UBDP) and the upper-bound deviating regret
//! (UBDR) over interval-valued payoffs. RRD/R3D add an early stop once
//! (worst-case) regret falls below a threshold. None of these converge by
//! construction, so the step cap is an ordinary stop, not an error.

use serde::{Deserialize, Serialize};

use crate::empirical::BoundedNfg;
use crate::error::{CogsError, Result};
use crate::game::MixedStrategy;
use crate::nfg::NormalFormGame;
use crate::rng::derive_seed_tagged;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Rd,
    Rrd,
    R2d,
    R3d,
}

impl SolverKind {
    pub fn uses_bounds(self) -> bool {
        matches!(self, SolverKind::R2d | SolverKind::R3d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub step_size: f64,
    pub max_steps: usize,
    /// Convergence test on the max absolute profile change per step.
    pub convergence_tol: f64,
    /// Early-stop threshold on summed (worst-case) regret; RRD/R3D only.
    pub regret_threshold: f64,
    /// Number of starts: the first is uniform, the rest random interior.
    pub restarts: usize,
    /// Seeds the random restarts.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Rd,
            step_size: 1e-2,
            max_steps: 100_000,
            convergence_tol: 1e-8,
            regret_threshold: 0.1,
            restarts: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0 {
            return Err(CogsError::InvalidConfig("step_size must be positive".into()));
        }
        if self.regret_threshold < 0.0 {
            return Err(CogsError::InvalidConfig("regret_threshold must be >= 0".into()));
        }
        if self.max_steps == 0 || self.restarts == 0 {
            return Err(CogsError::InvalidConfig("max_steps and restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Threshold,
    MaxSteps,
}

/// Solver output: a symmetric profile plus how and where the run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub profile: MixedStrategy,
    pub steps_taken: usize,
    pub stop_reason: StopReason,
    /// Summed expected regret (RD/RRD) or summed worst-case regret
    /// (R2D/R3D) of the returned profile.
    pub final_metric: f64,
}

/// Upper-bound deviation payoff of pure strategy `k` against the symmetric
/// profile: optimistic deviation value minus the pessimistic profile value.
pub fn ubdp(bounded: &BoundedNfg, k: usize, profile: &MixedStrategy) -> Result<f64> {
    Ok(bounded.upper_deviation(k, profile)? - bounded.lower_mixed(profile)?)
}

/// Upper-bound deviating regret of pure strategy `k`: the best optimistic
/// alternative minus `k`'s pessimistic value against the profile. Zero when
/// no alternative exists.
pub fn ubdr(bounded: &BoundedNfg, k: usize, profile: &MixedStrategy) -> Result<f64> {
    let m = bounded.num_strategies();
    if k >= m {
        return Err(CogsError::DimensionMismatch(format!("strategy {k} out of range")));
    }
    if m == 1 {
        return Ok(0.0);
    }
    let mut best_alt = f64::NEG_INFINITY;
    for j in 0..m {
        if j != k {
            best_alt = best_alt.max(bounded.upper_deviation(j, profile)?);
        }
    }
    Ok(best_alt - bounded.lower_deviation(k, profile)?)
}

/// Summed worst-case regret of a symmetric profile: per player, the best
/// optimistic deviation minus the pessimistic profile value, clamped at
/// zero, times the player count.
pub fn worst_case_regret(bounded: &BoundedNfg, profile: &MixedStrategy) -> Result<f64> {
    let m = bounded.num_strategies();
    let mut best = f64::NEG_INFINITY;
    for k in 0..m {
        best = best.max(bounded.upper_deviation(k, profile)?);
    }
    let per_player = (best - bounded.lower_mixed(profile)?).max(0.0);
    Ok(per_player * 2.0)
}

/// Summed expected regret of the symmetric profile under mean payoffs.
pub fn summed_regret(mean_game: &NormalFormGame, profile: &MixedStrategy) -> Result<f64> {
    let joint = vec![profile.clone(), profile.clone()];
    Ok(mean_game.regret(&joint)?.iter().sum())
}

fn is_simplex(weights: &[f64]) -> bool {
    weights.iter().all(|&w| w >= -1e-9) && (weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// One clipped, renormalized replicator step: w_k <- w_k (1 + eta g_k).
fn replicator_step(weights: &[f64], fitness_gap: &[f64], eta: f64) -> Vec<f64> {
    let mut next: Vec<f64> = weights
        .iter()
        .zip(fitness_gap)
        .map(|(&w, &g)| (w + eta * w * g).max(0.0))
        .collect();
    let total: f64 = next.iter().sum();
    if total <= f64::MIN_POSITIVE {
        // Every strategy clipped to zero (only possible with enormous
        // negative fitness at this step size); keep the previous point.
        return weights.to_vec();
    }
    for w in &mut next {
        *w /= total;
    }
    debug_assert!(is_simplex(&next), "replicator left the simplex: {next:?}");
    next
}

fn initial_points(m: usize, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let mut points = vec![vec![1.0 / m as f64; m]];
    for r in 1..cfg.restarts {
        let mut rng = StdRng::seed_from_u64(derive_seed_tagged(cfg.seed, "restart", r as u64));
        // Dirichlet(1): exponential draws, normalized
        let draws: Vec<f64> = (0..m).map(|_| -(rng.random::<f64>().max(1e-12)).ln()).collect();
        let total: f64 = draws.iter().sum();
        points.push(draws.into_iter().map(|d| d / total).collect());
    }
    points
}

struct RunOutcome {
    weights: Vec<f64>,
    steps: usize,
    reason: StopReason,
}

/// Shared iteration engine. `fitness` returns the per-strategy growth gap;
/// `threshold_metric` (when present) is checked before every step.
fn iterate<F, T>(
    start: Vec<f64>,
    cfg: &SolverConfig,
    fitness: F,
    threshold_metric: Option<T>,
) -> Result<RunOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    T: Fn(&[f64]) -> Result<f64>,
{
    let mut weights = start;
    let mut steps = 0;
    loop {
        if let Some(metric) = &threshold_metric {
            if metric(&weights)? <= cfg.regret_threshold {
                return Ok(RunOutcome { weights, steps, reason: StopReason::Threshold });
            }
        }
        if steps >= cfg.max_steps {
            return Ok(RunOutcome { weights, steps, reason: StopReason::MaxSteps });
        }
        let gap = fitness(&weights)?;
        let next = replicator_step(&weights, &gap, cfg.step_size);
        steps += 1;
        let delta = weights
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        weights = next;
        if delta <= cfg.convergence_tol {
            return Ok(RunOutcome { weights, steps, reason: StopReason::Converged });
        }
    }
}

/// Extract the row player's payoff matrix from a symmetric game.
fn payoff_matrix(game: &NormalFormGame) -> Vec<Vec<f64>> {
    let m = game.strategy_counts()[0];
    (0..m)
        .map(|a| (0..m).map(|b| game.entry(&[a, b])[0]).collect())
        .collect()
}

fn solve_mean(game: &NormalFormGame, cfg: &SolverConfig, threshold: bool) -> Result<SolveResult> {
    cfg.validate()?;
    if !game.is_symmetric() {
        return Err(CogsError::InvalidConfig("replicator dynamics needs a symmetric game".into()));
    }
    let u = payoff_matrix(game);
    let m = u.len();
    let fitness = |weights: &[f64]| -> Result<Vec<f64>> {
        let dev: Vec<f64> = u
            .iter()
            .map(|row| row.iter().zip(weights).map(|(p, w)| p * w).sum())
            .collect();
        let base: f64 = dev.iter().zip(weights).map(|(d, w)| d * w).sum();
        Ok(dev.into_iter().map(|d| d - base).collect())
    };
    let metric = |weights: &[f64]| -> Result<f64> {
        summed_regret(game, &MixedStrategy::new(weights.to_vec())?)
    };

    let mut best: Option<SolveResult> = None;
    for start in initial_points(m, cfg) {
        let outcome = iterate(start, cfg, fitness, threshold.then_some(metric))?;
        let profile = MixedStrategy::new(outcome.weights)?;
        let final_metric = summed_regret(game, &profile)?;
        let candidate = SolveResult {
            profile,
            steps_taken: outcome.steps,
            stop_reason: outcome.reason,
            final_metric,
        };
        if best.as_ref().map_or(true, |b| candidate.final_metric < b.final_metric) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn solve_robust(bounded: &BoundedNfg, cfg: &SolverConfig, threshold: bool) -> Result<SolveResult> {
    cfg.validate()?;
    let m = bounded.num_strategies();
    let fitness = |weights: &[f64]| -> Result<Vec<f64>> {
        let profile = MixedStrategy::new(weights.to_vec())?;
        let mut gap = Vec::with_capacity(m);
        for k in 0..m {
            gap.push(ubdp(bounded, k, &profile)? - ubdr(bounded, k, &profile)?);
        }
        Ok(gap)
    };
    let metric = |weights: &[f64]| -> Result<f64> {
        worst_case_regret(bounded, &MixedStrategy::new(weights.to_vec())?)
    };

    let mut best: Option<SolveResult> = None;
    for start in initial_points(m, cfg) {
        let outcome = iterate(start, cfg, fitness, threshold.then_some(metric))?;
        let profile = MixedStrategy::new(outcome.weights)?;
        let final_metric = worst_case_regret(bounded, &profile)?;
        let candidate = SolveResult {
            profile,
            steps_taken: outcome.steps,
            stop_reason: outcome.reason,
            final_metric,
        };
        if best.as_ref().map_or(true, |b| candidate.final_metric < b.final_metric) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Replicator dynamics on mean payoffs.
pub fn solve_rd(mean_game: &NormalFormGame, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_mean(mean_game, cfg, false)
}

/// RD with an early stop once summed regret drops to the threshold.
pub fn solve_rrd(mean_game: &NormalFormGame, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_mean(mean_game, cfg, true)
}

/// Robust replicator dynamics: fitness = UBDP - UBDR over interval payoffs.
pub fn solve_r2d(bounded: &BoundedNfg, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_robust(bounded, cfg, false)
}

/// R2D with an early stop once worst-case regret drops to the threshold.
pub fn solve_r3d(bounded: &BoundedNfg, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_robust(bounded, cfg, true)
}

/// Run the configured solver against the right payoff view: mean payoffs
/// for RD/RRD, interval payoffs for R2D/R3D.
pub fn solve(bounded: &BoundedNfg, cfg: &SolverConfig) -> Result<SolveResult> {
    match cfg.kind {
        SolverKind::Rd => solve_rd(bounded.mean_game(), cfg),
        SolverKind::Rrd => solve_rrd(bounded.mean_game(), cfg),
        SolverKind::R2d => solve_r2d(bounded, cfg),
        SolverKind::R3d => solve_r3d(bounded, cfg),
    }
}
