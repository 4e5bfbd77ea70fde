//! Command implementations. Each is deterministic given (spec, seed).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use cogs_core::bargaining::BargainingGame;
use cogs_core::dataset::{Dataset, DatasetMetadata};
use cogs_core::driver::{
    generate_dataset, load_run, run, run_psro, save_run, Algorithm, RunArtifacts, RunConfig,
};
use cogs_core::eval::{
    evaluation_profiles, mean_rho, model_fidelity, true_game_regret, EvalConfig,
    ExactOracleConfig, OracleKind,
};
use cogs_core::game::{MixedStrategy, PurePolicy, UniformRandomPolicy};
use cogs_core::rng::derive_seed_tagged;
use cogs_core::solvers::SolverConfig;

use crate::spec::{parse_algorithm, parse_solver_kind, ExperimentSpec};
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

/// Extra run provenance the reporter groups by.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: String,
    pub m_expl: String,
    pub dataset_tag: String,
    pub dataset_size: usize,
    pub seed: u64,
    pub game_config_hash: String,
    pub penalty_weight: Option<f64>,
    pub alpha_init: Option<f64>,
    pub alpha_bc: Option<f64>,
}

fn build_run_config(spec: &ExperimentSpec, seed: u64) -> CliResult<RunConfig> {
    let algorithm = parse_algorithm(&spec.run.algorithm)?;
    let cfg = RunConfig {
        algorithm,
        iterations: spec.run.iterations,
        simulations_per_entry: spec.run.simulations_per_entry,
        mss: spec.mss.to_config(derive_seed_tagged(seed, "mss", 0))?,
        penalty_weight: matches!(algorithm, Algorithm::Coffee)
            .then_some(spec.objective.penalty_weight),
        alpha_init: matches!(algorithm, Algorithm::Coffee)
            .then_some(spec.objective.coverage_weight),
        anneal_steps: matches!(algorithm, Algorithm::Coffee).then_some(spec.objective.anneal_steps),
        alpha_bc: matches!(algorithm, Algorithm::OefBc).then_some(spec.run.alpha_bc),
        seed,
        ensemble: spec.model.to_config(),
        ddqn: spec.ddqn.to_config(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Generate an offline dataset file.
///
/// Uniform behavior rolls out uniform-random joint play. The equilibrium
/// mixture first obtains `psro_profiles` PSRO runs (cached in a sibling
/// directory keyed by the game hash and trial seed), then samples one run's
/// final profile per episode and draws both players' pure strategies from
/// it.
pub fn cmd_generate_dataset(spec: &ExperimentSpec, seed: u64, out: &Path) -> CliResult<()> {
    if spec.dataset.num_trajectories == 0 {
        return Err(CliError::config("dataset.num_trajectories must be >= 1"));
    }
    let game_cfg = spec.game_config()?;
    let game = Arc::new(BargainingGame::new(game_cfg.clone())?);
    let hash = game_cfg.config_hash();
    let mut rng = StdRng::seed_from_u64(derive_seed_tagged(seed, "dataset", 0));

    let trajectories = match spec.dataset.behavior.as_str() {
        "uniform" => generate_dataset(
            game.as_ref(),
            spec.dataset.num_trajectories,
            |_rng| {
                vec![
                    Arc::new(UniformRandomPolicy) as Arc<dyn PurePolicy>,
                    Arc::new(UniformRandomPolicy),
                ]
            },
            &mut rng,
        )?,
        "psro_eq" => {
            let sources = psro_equilibrium_sources(spec, &game, &hash, seed, out)?;
            generate_dataset(
                game.as_ref(),
                spec.dataset.num_trajectories,
                |rng| {
                    // one source profile per episode, then independent pure
                    // draws for the two seats
                    let (strategies, profile) = &sources[rng.random_range(0..sources.len())];
                    let a = profile.sample(rng);
                    let b = profile.sample(rng);
                    vec![strategies[a].clone(), strategies[b].clone()]
                },
                &mut rng,
            )?
        }
        other => return Err(CliError::config(format!("unknown behavior policy '{other}'"))),
    };

    let dataset = Dataset::new(
        DatasetMetadata {
            behavior_policy_tag: spec.dataset.behavior.clone(),
            seed,
            game_config_hash: hash,
        },
        trajectories,
    );
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::artifact(e.to_string()))?;
        }
    }
    dataset.save(out)?;
    log::info!("wrote {} trajectories to {}", dataset.len(), out.display());
    Ok(())
}

type ProfileSource = (Vec<Arc<dyn PurePolicy>>, MixedStrategy);

/// Obtain the PSRO runs backing an equilibrium-mixture dataset, reusing
/// cached run directories when their game hash matches.
fn psro_equilibrium_sources(
    spec: &ExperimentSpec,
    game: &Arc<BargainingGame>,
    hash: &str,
    seed: u64,
    out: &Path,
) -> CliResult<Vec<ProfileSource>> {
    if spec.dataset.psro_profiles == 0 {
        return Err(CliError::config("dataset.psro_profiles must be >= 1"));
    }
    let cache_root = out.with_extension("psro_cache");
    let mut sources = Vec::with_capacity(spec.dataset.psro_profiles);
    for trial in 0..spec.dataset.psro_profiles {
        let dir = cache_root.join(format!("trial_{trial:02}"));
        let artifacts = match load_run(&dir) {
            Ok(a) if a.game_config_hash == hash => a,
            _ => {
                let mut cfg = build_run_config(spec, derive_seed_tagged(seed, "psro", trial as u64))?;
                cfg.algorithm = Algorithm::Psro;
                cfg.iterations = spec.dataset.psro_iterations;
                cfg.penalty_weight = None;
                cfg.alpha_init = None;
                cfg.anneal_steps = None;
                cfg.alpha_bc = None;
                cfg.mss.kind = parse_solver_kind("rd")?;
                let mut rng = StdRng::seed_from_u64(cfg.seed);
                let artifacts = run_psro(game.as_ref(), hash, &cfg, &mut rng)?;
                save_run(&artifacts, &dir)?;
                artifacts
            }
        };
        let profile = artifacts
            .profiles
            .last()
            .cloned()
            .ok_or_else(|| CliError::artifact("cached run has no profiles"))?;
        sources.push((artifacts.strategies, profile));
    }
    Ok(sources)
}

/// Run the configured algorithm and persist the run directory.
pub fn cmd_solve(
    spec: &ExperimentSpec,
    dataset_path: Option<&Path>,
    out_dir: &Path,
    seed: u64,
) -> CliResult<()> {
    let game_cfg = spec.game_config()?;
    let game = Arc::new(BargainingGame::new(game_cfg.clone())?);
    let hash = game_cfg.config_hash();
    let cfg = build_run_config(spec, seed)?;

    let dataset = match dataset_path {
        Some(path) => {
            let ds = Dataset::load(path)?;
            if ds.metadata.game_config_hash != hash {
                return Err(CliError::artifact(format!(
                    "dataset was generated for game {} but the config hashes to {}",
                    ds.metadata.game_config_hash, hash
                )));
            }
            Some(ds)
        }
        None => None,
    };
    if dataset.is_none() && cfg.algorithm != Algorithm::Psro {
        return Err(CliError::config("offline algorithms need --dataset"));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let artifacts = run(game, &hash, dataset.as_ref(), &cfg, &mut rng)?;
    save_run(&artifacts, out_dir)?;

    // config snapshot + reporting metadata
    let resolved = spec.resolved()?;
    std::fs::write(out_dir.join("config.toml"), resolved.to_toml())
        .map_err(|e| CliError::artifact(e.to_string()))?;
    let meta = RunMeta {
        algorithm: spec.run.algorithm.clone(),
        m_expl: spec.mss.kind.clone(),
        dataset_tag: dataset
            .as_ref()
            .map_or_else(|| "none".to_string(), |d| d.metadata.behavior_policy_tag.clone()),
        dataset_size: dataset.as_ref().map_or(0, Dataset::len),
        seed,
        game_config_hash: hash,
        penalty_weight: cfg.penalty_weight,
        alpha_init: cfg.alpha_init,
        alpha_bc: cfg.alpha_bc,
    };
    write_json(&out_dir.join("run_meta.json"), &meta)?;
    log::info!("run complete: {} strategies", artifacts.strategies.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct RegretCsvRow<'a> {
    run_id: &'a str,
    iteration: usize,
    m_eval: &'a str,
    regret_sum: f64,
    regret_p0: f64,
    regret_p1: f64,
    oracle_ok: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct FidelityCsvRow {
    run_id: String,
    fidelity: f64,
    mean_rho: f64,
}

/// Evaluate a finished run: true-game regret per evaluation solver, model
/// fidelity, and the mean disagreement diagnostic. Emits CSV files under
/// `<run>/evaluation/`.
pub fn cmd_evaluate(run_dir: &Path, spec: &ExperimentSpec, seed: u64) -> CliResult<()> {
    let artifacts = load_run(run_dir)?;
    let game_cfg = spec.game_config()?;
    if artifacts.game_config_hash != game_cfg.config_hash() {
        return Err(CliError::artifact(format!(
            "run was produced for game {} but the config hashes to {}",
            artifacts.game_config_hash,
            game_cfg.config_hash()
        )));
    }
    if artifacts.profiles.is_empty() {
        return Err(CliError::artifact("run has no profiles to evaluate"));
    }
    let game = Arc::new(BargainingGame::new(game_cfg)?);
    let run_id = run_dir
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());
    let eval_dir = run_dir.join("evaluation");
    std::fs::create_dir_all(&eval_dir).map_err(|e| CliError::artifact(e.to_string()))?;

    if spec.eval.eval_window > artifacts.profiles.len() {
        return Err(CliError::config(format!(
            "eval.eval_window {} exceeds the run's {} iterations",
            spec.eval.eval_window,
            artifacts.profiles.len()
        )));
    }

    let oracle = spec.eval.oracle_kind()?;
    let mut final_regrets = BTreeMap::new();
    for m_eval_name in &spec.eval.m_eval {
        let m_eval = SolverConfig {
            kind: parse_solver_kind(m_eval_name)?,
            ..spec.mss.to_config(derive_seed_tagged(seed, "m_eval", 0))?
        };
        let cfg = EvalConfig {
            eval_window: spec.eval.eval_window,
            true_simulations: spec.eval.true_simulations,
            oracle,
            m_eval: Some(m_eval),
            exact: ExactOracleConfig {
                scenarios: spec.eval.scenarios,
                belief_particles: spec.eval.belief_particles,
                max_nodes: spec.eval.max_nodes,
                seed: derive_seed_tagged(seed, "oracle", 0),
            },
            ddqn_online: matches!(oracle, OracleKind::DdqnOnline)
                .then(|| spec.ddqn.to_config()),
            seed: derive_seed_tagged(seed, "eval", 0),
        };
        let mut rng = StdRng::seed_from_u64(derive_seed_tagged(seed, m_eval_name, 1));
        let report = true_game_regret(&artifacts, game.clone(), &cfg, &mut rng)?;

        let path = eval_dir.join(format!("regret_{m_eval_name}.csv"));
        let mut writer =
            csv::Writer::from_path(&path).map_err(|e| CliError::artifact(e.to_string()))?;
        for row in &report.rows {
            writer
                .serialize(RegretCsvRow {
                    run_id: &run_id,
                    iteration: row.iteration,
                    m_eval: m_eval_name,
                    regret_sum: row.summed,
                    regret_p0: row.per_player[0],
                    regret_p1: row.per_player[1],
                    oracle_ok: row.oracle_ok,
                })
                .map_err(|e| CliError::artifact(e.to_string()))?;
        }
        writer.flush().map_err(|e| CliError::artifact(e.to_string()))?;
        if let Some(last) = report.rows.last() {
            final_regrets.insert(m_eval_name.clone(), last.summed);
        }
        log::info!("wrote {}", path.display());
    }

    // fidelity + mean disagreement (model-based runs only)
    if artifacts.ensemble.is_some() {
        let mut rng = StdRng::seed_from_u64(derive_seed_tagged(seed, "fidelity", 0));
        let fidelity =
            model_fidelity(&artifacts, game.as_ref(), spec.eval.true_simulations, &mut rng)?;
        let rho = mean_rho(&artifacts)?;
        let mut writer = csv::Writer::from_path(eval_dir.join("fidelity.csv"))
            .map_err(|e| CliError::artifact(e.to_string()))?;
        writer
            .serialize(FidelityCsvRow { run_id: run_id.clone(), fidelity, mean_rho: rho })
            .map_err(|e| CliError::artifact(e.to_string()))?;
        writer.flush().map_err(|e| CliError::artifact(e.to_string()))?;
    }
    write_json(&eval_dir.join("final_regret.json"), &final_regrets)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AggregateRow {
    algorithm: String,
    m_expl: String,
    m_eval: String,
    dataset: String,
    trials: usize,
    regret_mean: f64,
    regret_std: f64,
    single_trial: bool,
}

#[derive(Debug, Serialize)]
struct ComparisonRow {
    m_eval: String,
    dataset: String,
    baseline: String,
    against: String,
    p_value: f64,
}

#[derive(Debug, Serialize)]
struct ScatterRow {
    run_id: String,
    algorithm: String,
    m_expl: String,
    m_eval: String,
    dataset: String,
    mean_rho: f64,
    fidelity: f64,
    final_regret: f64,
    penalty_weight: f64,
    alpha_init: f64,
}

/// Aggregate evaluated runs: mean and standard deviation of final regret
/// per (algorithm, exploration solver, evaluation solver, dataset) group,
/// Welch p-values against the conservative baseline, and per-trial scatter
/// data relating disagreement, fidelity, and regret.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> CliResult<()> {
    if run_dirs.is_empty() {
        return Err(CliError::config("report needs at least one evaluated run"));
    }
    struct Trial {
        run_id: String,
        meta: RunMeta,
        final_regret: BTreeMap<String, f64>,
        fidelity: Option<FidelityCsvRow>,
    }

    let mut trials = Vec::new();
    let mut hash: Option<String> = None;
    for dir in run_dirs {
        let meta: RunMeta = read_json(&dir.join("run_meta.json"))?;
        match &hash {
            None => hash = Some(meta.game_config_hash.clone()),
            Some(h) if *h != meta.game_config_hash => {
                return Err(CliError::artifact(format!(
                    "refusing to aggregate runs for different games ({} vs {})",
                    h, meta.game_config_hash
                )));
            }
            _ => {}
        }
        let final_regret: BTreeMap<String, f64> =
            read_json(&dir.join("evaluation").join("final_regret.json"))?;
        if final_regret.is_empty() {
            return Err(CliError::artifact(format!("{} has no evaluation output", dir.display())));
        }
        let fidelity = read_fidelity(&dir.join("evaluation").join("fidelity.csv")).ok();
        trials.push(Trial {
            run_id: dir
                .file_name()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| dir.display().to_string()),
            meta,
            final_regret,
            fidelity,
        });
    }

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::artifact(e.to_string()))?;

    // group trials by (algorithm, m_expl, m_eval, dataset)
    let mut groups: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for trial in &trials {
        let dataset = format!("{}:{}", trial.meta.dataset_size, trial.meta.dataset_tag);
        for (m_eval, regret) in &trial.final_regret {
            groups
                .entry((
                    trial.meta.algorithm.clone(),
                    trial.meta.m_expl.clone(),
                    m_eval.clone(),
                    dataset.clone(),
                ))
                .or_default()
                .push(*regret);
        }
    }

    let mut agg =
        csv::Writer::from_path(out_dir.join("aggregate.csv")).map_err(artifact_err)?;
    for ((algorithm, m_expl, m_eval, dataset), values) in &groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        agg.serialize(AggregateRow {
            algorithm: algorithm.clone(),
            m_expl: m_expl.clone(),
            m_eval: m_eval.clone(),
            dataset: dataset.clone(),
            trials: values.len(),
            regret_mean: mean,
            regret_std: std,
            single_trial: values.len() == 1,
        })
        .map_err(artifact_err)?;
    }
    agg.flush().map_err(artifact_err)?;

    // Welch comparisons against the conservative baseline group
    let mut cmp =
        csv::Writer::from_path(out_dir.join("comparisons.csv")).map_err(artifact_err)?;
    let blocks: std::collections::BTreeSet<(String, String)> =
        groups.keys().map(|(_, _, m_eval, dataset)| (m_eval.clone(), dataset.clone())).collect();
    for (m_eval, dataset) in blocks {
        let baseline_key =
            ("coffee".to_string(), "r2d".to_string(), m_eval.clone(), dataset.clone());
        let Some(baseline) = groups.get(&baseline_key) else { continue };
        if baseline.len() < 2 {
            continue;
        }
        for ((algorithm, m_expl, me, ds), values) in &groups {
            if *me != m_eval || *ds != dataset || values.len() < 2 {
                continue;
            }
            if (algorithm.as_str(), m_expl.as_str()) == ("coffee", "r2d") {
                continue;
            }
            let p = cogs_core::eval::welch_t_test(baseline, values)?;
            cmp.serialize(ComparisonRow {
                m_eval: m_eval.clone(),
                dataset: dataset.clone(),
                baseline: "coffee+r2d".into(),
                against: format!("{algorithm}+{m_expl}"),
                p_value: p,
            })
            .map_err(artifact_err)?;
        }
    }
    cmp.flush().map_err(artifact_err)?;

    // per-trial scatter data
    let mut scatter = csv::Writer::from_path(out_dir.join("scatter.csv")).map_err(artifact_err)?;
    for trial in &trials {
        let dataset = format!("{}:{}", trial.meta.dataset_size, trial.meta.dataset_tag);
        for (m_eval, regret) in &trial.final_regret {
            scatter
                .serialize(ScatterRow {
                    run_id: trial.run_id.clone(),
                    algorithm: trial.meta.algorithm.clone(),
                    m_expl: trial.meta.m_expl.clone(),
                    m_eval: m_eval.clone(),
                    dataset: dataset.clone(),
                    mean_rho: trial.fidelity.as_ref().map_or(f64::NAN, |f| f.mean_rho),
                    fidelity: trial.fidelity.as_ref().map_or(f64::NAN, |f| f.fidelity),
                    final_regret: *regret,
                    penalty_weight: trial.meta.penalty_weight.unwrap_or(0.0),
                    alpha_init: trial.meta.alpha_init.unwrap_or(0.0),
                })
                .map_err(artifact_err)?;
        }
    }
    scatter.flush().map_err(artifact_err)?;
    log::info!("report written to {}", out_dir.display());
    Ok(())
}

fn read_fidelity(path: &Path) -> CliResult<FidelityCsvRow> {
    let mut reader = csv::Reader::from_path(path).map_err(artifact_err)?;
    let row = reader
        .deserialize()
        .next()
        .ok_or_else(|| CliError::artifact("empty fidelity file"))?
        .map_err(artifact_err)?;
    Ok(row)
}

fn artifact_err(e: impl std::fmt::Display) -> CliError {
    CliError::artifact(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(artifact_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(artifact_err)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(artifact_err)
}

/// Exposed for tests: the evaluated profiles a report would score.
pub fn recorded_profiles(artifacts: &RunArtifacts) -> Vec<MixedStrategy> {
    evaluation_profiles(artifacts, None).unwrap_or_default()
}
