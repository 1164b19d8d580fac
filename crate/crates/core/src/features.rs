//! State features for linear critics and policies.

use serde::{Deserialize, Serialize};

use crate::rng::splitmix64;
use crate::{Error, Result};

/// Sparse binary features: each state activates a short list of indices.
pub trait FeatureMap<S> {
    fn n_features(&self) -> usize;

    /// Appends the active indices of `state` to `out` (after clearing it).
    fn active_into(&self, state: &S, out: &mut Vec<usize>) -> Result<()>;

    fn active(&self, state: &S) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        self.active_into(state, &mut out)?;
        Ok(out)
    }
}

/// Tabular indicator features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHot {
    pub n_states: usize,
}

impl FeatureMap<usize> for OneHot {
    fn n_features(&self) -> usize {
        self.n_states
    }

    fn active_into(&self, &s: &usize, out: &mut Vec<usize>) -> Result<()> {
        out.clear();
        if s >= self.n_states {
            return Err(Error::Shape(format!("state {s} outside {} states", self.n_states)));
        }
        out.push(s);
        Ok(())
    }
}

/// Hashed grid tile coding over the unit square.
///
/// Tiling `i` is shifted by `i / (n_tilings * tiles_per_dim)` along both axes.
/// The hash space is split into `n_tilings` equal blocks so indices of
/// different tilings never coincide; within a block, cells are hashed with a
/// fixed mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileCoder {
    pub n_tilings: usize,
    pub tiles_per_dim: usize,
    pub hash_size: usize,
}

impl Default for TileCoder {
    fn default() -> Self {
        TileCoder { n_tilings: 10, tiles_per_dim: 5, hash_size: 1024 }
    }
}

const HASH_SEED: u64 = 0x7469_6c65_636f_6465;

impl TileCoder {
    pub fn validate(&self) -> Result<()> {
        if self.n_tilings == 0 || self.tiles_per_dim == 0 || self.hash_size < self.n_tilings {
            return Err(Error::InvalidModel(format!("degenerate tile coder {self:?}")));
        }
        Ok(())
    }

    fn block(&self) -> usize {
        self.hash_size / self.n_tilings
    }

    /// Unhashed cell coordinates of `point` in tiling `i`.
    pub fn cell(&self, i: usize, [x, y]: [f64; 2]) -> (u64, u64) {
        let offset = i as f64 / (self.n_tilings * self.tiles_per_dim) as f64;
        let t = self.tiles_per_dim as f64;
        (((x + offset) * t).floor() as u64, ((y + offset) * t).floor() as u64)
    }

    pub fn hash(&self, i: usize, (cx, cy): (u64, u64)) -> usize {
        let key = HASH_SEED ^ ((i as u64) << 40) ^ (cx << 20) ^ cy;
        i * self.block() + (splitmix64(key) % self.block() as u64) as usize
    }

    pub fn encode(&self, point: [f64; 2]) -> Result<Vec<usize>> {
        self.active(&point)
    }
}

impl FeatureMap<[f64; 2]> for TileCoder {
    fn n_features(&self) -> usize {
        self.hash_size
    }

    fn active_into(&self, point: &[f64; 2], out: &mut Vec<usize>) -> Result<()> {
        out.clear();
        if !point.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange { x: point[0], y: point[1] });
        }
        out.extend((0..self.n_tilings).map(|i| self.hash(i, self.cell(i, *point))));
        Ok(())
    }
}
