//! Trajectory datasets: the offline learning substrate.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CogsError, Result};
use crate::game::{ActionId, Trajectory};

/// Dataset provenance, written as the first record of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub behavior_policy_tag: String,
    pub seed: u64,
    pub game_config_hash: String,
}

/// A fixed collection of trajectories from one game configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub metadata: DatasetMetadata,
    pub trajectories: Vec<Trajectory>,
}

/// One (state, action, next-state, rewards) sample, as consumed by model
/// training.
#[derive(Debug, Clone)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub observation: &'a [f64],
    pub action: ActionId,
    pub rewards: &'a [f64],
    pub acting_player: usize,
    pub legal_mask: &'a [bool],
    pub next_state: &'a [f64],
    pub done: bool,
}

impl Dataset {
    pub fn new(metadata: DatasetMetadata, trajectories: Vec<Trajectory>) -> Self {
        Self { metadata, trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// All consecutive (s, a, s') transitions. The next state of a
    /// trajectory's last step is its recorded final state; `done` is set
    /// only when the trajectory actually terminated.
    pub fn transitions(&self) -> Vec<Transition<'_>> {
        let mut out = Vec::new();
        for traj in &self.trajectories {
            let n = traj.steps.len();
            for (k, step) in traj.steps.iter().enumerate() {
                let (next_state, done) = if k + 1 < n {
                    (traj.steps[k + 1].state.as_slice(), false)
                } else {
                    (traj.final_state.as_slice(), traj.terminated)
                };
                out.push(Transition {
                    state: &step.state,
                    observation: &step.observation,
                    action: step.action,
                    rewards: &step.rewards,
                    acting_player: step.acting_player,
                    legal_mask: &step.legal_mask,
                    next_state,
                    done,
                });
            }
        }
        out
    }

    /// First-state vectors of every trajectory (the model MDP's initial
    /// state distribution).
    pub fn initial_states(&self) -> Vec<Vec<f64>> {
        self.trajectories
            .iter()
            .filter_map(|t| t.steps.first().map(|s| s.state.clone()))
            .collect()
    }

    /// Write as newline-delimited JSON: metadata record first, then one
    /// record per trajectory. Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.metadata)?;
        w.write_all(b"\n")?;
        for traj in &self.trajectories {
            serde_json::to_writer(&mut w, traj)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| CogsError::EmptyDataset(format!("{} has no header", path.display())))??;
        let metadata: DatasetMetadata = serde_json::from_str(&header)?;
        let mut trajectories = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            trajectories.push(serde_json::from_str(&line)?);
        }
        Ok(Self { metadata, trajectories })
    }
}

/// Whether the dataset contains a state-action pair, where states match
/// when their max-absolute componentwise difference is within `tol`.
pub fn is_covered(dataset: &Dataset, state: &[f64], action: ActionId, tol: f64) -> bool {
    dataset.trajectories.iter().flat_map(|t| &t.steps).any(|step| {
        step.action == action
            && step.state.len() == state.len()
            && step
                .state
                .iter()
                .zip(state)
                .all(|(a, b)| (a - b).abs() <= tol)
    })
}

/// Fraction of a probe trajectory's state-action pairs present in the
/// dataset.
pub fn coverage_fraction(dataset: &Dataset, probe: &Trajectory, tol: f64) -> Result<f64> {
    if probe.steps.is_empty() {
        return Err(CogsError::InvalidConfig("coverage probe trajectory is empty".into()));
    }
    let covered = probe
        .steps
        .iter()
        .filter(|s| is_covered(dataset, &s.state, s.action, tol))
        .count();
    Ok(covered as f64 / probe.steps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{rollout, UniformRandomPolicy};
    use crate::toy::ChainMdp;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn chain_dataset(episodes: usize, seed: u64) -> Dataset {
        let chain = ChainMdp::five_state();
        let policy = UniformRandomPolicy;
        let mut rng = StdRng::seed_from_u64(seed);
        let trajectories = (0..episodes)
            .map(|_| rollout(&chain, &[&policy], &mut rng, 10).unwrap())
            .collect();
        Dataset::new(
            DatasetMetadata {
                behavior_policy_tag: "uniform".into(),
                seed,
                game_config_hash: "chain".into(),
            },
            trajectories,
        )
    }

    #[test]
    fn exact_membership_is_covered_at_tol_zero() {
        let ds = chain_dataset(20, 0);
        let step = &ds.trajectories[0].steps[0];
        assert!(is_covered(&ds, &step.state, step.action, 0.0));
    }

    #[test]
    fn empty_dataset_covers_nothing() {
        let ds = Dataset::new(
            DatasetMetadata {
                behavior_policy_tag: "uniform".into(),
                seed: 0,
                game_config_hash: "x".into(),
            },
            vec![],
        );
        assert!(!is_covered(&ds, &[0.0, 1.0], 0, 0.0));
    }

    #[test]
    fn tolerance_widens_membership() {
        let ds = chain_dataset(5, 1);
        let step = &ds.trajectories[0].steps[0];
        let shifted: Vec<f64> = step.state.iter().map(|x| x + 0.3).collect();
        assert!(!is_covered(&ds, &shifted, step.action, 0.0));
        assert!(is_covered(&ds, &shifted, step.action, 0.5));
    }

    #[test]
    fn coverage_fraction_of_self_and_disjoint_probes() {
        let ds = chain_dataset(20, 2);
        let probe = ds.trajectories[3].clone();
        assert_eq!(coverage_fraction(&ds, &probe, 0.0).unwrap(), 1.0);

        // shift every state far away: fully uncovered
        let mut far = probe.clone();
        for step in &mut far.steps {
            for x in &mut step.state {
                *x += 100.0;
            }
        }
        assert_eq!(coverage_fraction(&ds, &far, 0.0).unwrap(), 0.0);

        // half the steps shifted: fraction 0.5 on an even-length probe
        let mut half = ds.trajectories.iter().find(|t| t.len() % 2 == 0).cloned();
        if half.is_none() {
            // construct an even probe from two trajectories
            let mut t = ds.trajectories[0].clone();
            if t.len() % 2 == 1 {
                t.steps.push(t.steps[0].clone());
            }
            half = Some(t);
        }
        let mut half = half.unwrap();
        let n = half.len();
        for step in half.steps.iter_mut().take(n / 2) {
            for x in &mut step.state {
                *x += 100.0;
            }
        }
        assert_eq!(coverage_fraction(&ds, &half, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn dataset_round_trips_byte_exactly() {
        let ds = chain_dataset(10, 3);
        let dir = std::env::temp_dir().join("cogs_dataset_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.jsonl");
        ds.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(ds, loaded);

        let path2 = dir.join("roundtrip2.jsonl");
        loaded.save(&path2).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
    }
}
