//! Shared fixtures for the criterion benchmarks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cogs_core::bargaining::{BargainingConfig, BargainingGame};
use cogs_core::nfg::NormalFormGame;

pub fn default_bargaining() -> BargainingGame {
    BargainingGame::new(BargainingConfig::default()).unwrap()
}

/// A random symmetric game with `m` strategies.
pub fn random_symmetric_game(m: usize, seed: u64) -> NormalFormGame {
    let mut rng = StdRng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        (0..m).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    NormalFormGame::symmetric_2p(&rows).unwrap()
}
