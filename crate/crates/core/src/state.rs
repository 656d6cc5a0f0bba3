//! Sampler states, chains, and the deduplicated pool of unique draws.
//!
//! Every distance computation downstream works on pool indices, never on the
//! raw chains. Duplicate detection is exact: Metropolis-Hastings rejections
//! repeat the previous state bit for bit, and that repetition is what keeps
//! the pool small.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense binary matrix stored row-major, one byte (0 or 1) per entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidState(format!(
                "binary matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&b| b > 1) {
            return Err(Error::InvalidState(format!(
                "binary matrix entry {pos} is {}, expected 0 or 1",
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v as u8;
    }

    pub(crate) fn flip(&mut self, idx: usize) {
        self.data[idx] ^= 1;
    }
}

/// One sampler state.
#[derive(Debug, Clone, PartialEq)]
pub enum DrawState {
    RealVector(Vec<f64>),
    BinaryMatrix(BinaryMatrix),
    /// Cluster label per observation. Labels are arbitrary ids; two labelings
    /// that differ only by renaming clusters are different states here and
    /// become equivalent only through [`coassociation`].
    Partition(Vec<u32>),
}

/// Variant tag plus the dimensions that must agree across a chain set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateShape {
    RealVector { len: usize },
    BinaryMatrix { rows: usize, cols: usize },
    Partition { n_obs: usize },
}

impl std::fmt::Display for StateShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateShape::RealVector { len } => write!(f, "real_vector[{len}]"),
            StateShape::BinaryMatrix { rows, cols } => write!(f, "binary_matrix[{rows}x{cols}]"),
            StateShape::Partition { n_obs } => write!(f, "partition[{n_obs}]"),
        }
    }
}

impl DrawState {
    pub fn scalar(x: f64) -> Self {
        DrawState::RealVector(vec![x])
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            DrawState::RealVector(_) => "real_vector",
            DrawState::BinaryMatrix(_) => "binary_matrix",
            DrawState::Partition(_) => "partition",
        }
    }

    pub fn shape(&self) -> StateShape {
        match self {
            DrawState::RealVector(v) => StateShape::RealVector { len: v.len() },
            DrawState::BinaryMatrix(m) => StateShape::BinaryMatrix {
                rows: m.rows,
                cols: m.cols,
            },
            DrawState::Partition(p) => StateShape::Partition { n_obs: p.len() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DrawState::RealVector(v) => {
                if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidState(format!(
                        "real vector entry {pos} is not finite ({})",
                        v[pos]
                    )));
                }
                Ok(())
            }
            // Matrices are validated on construction.
            DrawState::BinaryMatrix(_) => Ok(()),
            DrawState::Partition(p) => {
                if p.is_empty() {
                    return Err(Error::InvalidState("partition has no observations".into()));
                }
                Ok(())
            }
        }
    }

    /// The single coordinate of a one-dimensional real state.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            DrawState::RealVector(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }
}

/// Deterministic byte encoding of a state. Two valid states encode equally
/// iff they are exactly equal (bitwise for reals).
pub fn canonicalize(state: &DrawState) -> Result<Vec<u8>> {
    state.validate()?;
    let mut out = Vec::new();
    match state {
        DrawState::RealVector(v) => {
            out.reserve(9 + 8 * v.len());
            out.push(0u8);
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        DrawState::BinaryMatrix(m) => {
            out.reserve(17 + m.data.len());
            out.push(1u8);
            out.extend_from_slice(&(m.rows as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols as u64).to_le_bytes());
            out.extend_from_slice(&m.data);
        }
        DrawState::Partition(p) => {
            out.reserve(9 + 4 * p.len());
            out.push(2u8);
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
            for l in p {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Co-association matrix of a partition: entry (i, j) is 1 iff observations
/// i and j carry the same cluster label.
pub fn coassociation(labels: &[u32]) -> BinaryMatrix {
    let n = labels.len();
    let mut m = BinaryMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, labels[i] == labels[j]);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub chain_id: usize,
    pub draws: Vec<DrawState>,
}

impl Chain {
    pub fn new(chain_id: usize, draws: Vec<DrawState>) -> Self {
        Self { chain_id, draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Drops the first `n` draws.
    pub fn without_burn_in(mut self, n: usize) -> Self {
        let n = n.min(self.draws.len());
        self.draws.drain(..n);
        self
    }
}

/// `k` chains of `n` draws, plus the pool of unique states and, for each
/// draw, its index into the pool.
#[derive(Debug, Clone)]
pub struct ChainSet {
    chains: Vec<Chain>,
    pool: Vec<DrawState>,
    index_chains: Vec<Vec<usize>>,
    shape: StateShape,
}

impl ChainSet {
    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn pool(&self) -> &[DrawState] {
        &self.pool
    }

    pub fn index_chains(&self) -> &[Vec<usize>] {
        &self.index_chains
    }

    pub fn shape(&self) -> StateShape {
        self.shape
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn chain_len(&self) -> usize {
        self.chains[0].draws.len()
    }

    pub fn n_unique(&self) -> usize {
        self.pool.len()
    }

    /// Position of `state` in the pool, if present.
    pub fn pool_index_of(&self, state: &DrawState) -> Option<usize> {
        let key = canonicalize(state).ok()?;
        self.pool
            .iter()
            .position(|s| canonicalize(s).map(|k| k == key).unwrap_or(false))
    }

    /// Raw draws of one-dimensional real chains, in chain order.
    pub fn scalar_chains(&self) -> Option<Vec<Vec<f64>>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(DrawState::as_scalar).collect())
            .collect()
    }
}

/// Validates chains and deduplicates their draws into a pool in
/// first-occurrence order (chains in input order, draws in iteration order).
pub fn build_chain_set(chains: Vec<Chain>) -> Result<ChainSet> {
    let first = chains
        .first()
        .ok_or_else(|| Error::EmptyInput("no chains supplied".into()))?;
    let n = first.draws.len();
    if n < 2 {
        return Err(Error::TooFew {
            what: "draws per chain",
            needed: 2,
            got: n,
        });
    }
    let shape = first.draws[0].shape();

    let mut seen: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut pool = Vec::new();
    let mut index_chains = Vec::with_capacity(chains.len());
    for chain in &chains {
        if chain.draws.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "chain {} has {} draws, chain {} has {n}",
                chain.chain_id,
                chain.draws.len(),
                first.chain_id
            )));
        }
        let mut idx = Vec::with_capacity(n);
        for (j, draw) in chain.draws.iter().enumerate() {
            if draw.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "chain {} draw {j} is {}, expected {shape}",
                    chain.chain_id,
                    draw.shape()
                )));
            }
            let key = canonicalize(draw)?;
            let next = pool.len();
            let slot = *seen.entry(key).or_insert_with(|| {
                pool.push(draw.clone());
                next
            });
            idx.push(slot);
        }
        index_chains.push(idx);
    }

    Ok(ChainSet {
        chains,
        pool,
        index_chains,
        shape,
    })
}

// Wire representation used by the NDJSON chain format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub(crate) enum WireState {
    RealVector { values: Vec<f64> },
    BinaryMatrix { rows: usize, cols: usize, data: Vec<u8> },
    Partition { labels: Vec<u32> },
}

impl From<&DrawState> for WireState {
    fn from(s: &DrawState) -> Self {
        match s {
            DrawState::RealVector(v) => WireState::RealVector { values: v.clone() },
            DrawState::BinaryMatrix(m) => WireState::BinaryMatrix {
                rows: m.rows,
                cols: m.cols,
                data: m.data.clone(),
            },
            DrawState::Partition(p) => WireState::Partition { labels: p.clone() },
        }
    }
}

impl TryFrom<WireState> for DrawState {
    type Error = Error;

    fn try_from(w: WireState) -> Result<Self> {
        let s = match w {
            WireState::RealVector { values } => DrawState::RealVector(values),
            WireState::BinaryMatrix { rows, cols, data } => {
                DrawState::BinaryMatrix(BinaryMatrix::new(rows, cols, data)?)
            }
            WireState::Partition { labels } => DrawState::Partition(labels),
        };
        s.validate()?;
        Ok(s)
    }
}

impl Serialize for DrawState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        WireState::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DrawState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let w = WireState::deserialize(deserializer)?;
        DrawState::try_from(w).map_err(serde::de::Error::custom)
    }
}
