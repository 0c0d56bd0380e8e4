//! Appearance embedding storage and matching: exponential-moving-average
//! feature banks and cosine-distance costs, plus pluggable embedding
//! providers.

use std::collections::{HashMap, VecDeque};

use crate::{Error, Result};

/// L2-normalized appearance feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Builds an embedding, normalizing the input. Fails on zero or
    /// non-finite vectors.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("empty embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite embedding component"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::numerical("zero-norm embedding"));
        }
        Ok(Embedding {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Cosine distance 1 - aᵀb, in [0, 2] for unit vectors.
    pub fn cosine_distance(&self, other: &Embedding) -> f64 {
        1.0 - self.dot(other)
    }

    /// Mean of a set of embeddings, re-normalized.
    pub fn normalized_mean<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for e in items {
            if sum.is_empty() {
                sum = vec![0.0; e.dim()];
            } else if sum.len() != e.dim() {
                return Err(Error::input("embedding dimension mismatch in mean"));
            }
            for (s, v) in sum.iter_mut().zip(e.values.iter()) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::input("mean of zero embeddings"));
        }
        Embedding::new(sum)
    }
}

/// Blends the previous feature state with a new detection feature:
/// alpha * prev + (1 - alpha) * f, re-normalized.
pub fn ema_update(prev: &Embedding, f: &Embedding, alpha: f64) -> Result<Embedding> {
    if prev.dim() != f.dim() {
        return Err(Error::input(format!(
            "embedding dimension mismatch: {} vs {}",
            prev.dim(),
            f.dim()
        )));
    }
    // degenerate momenta select an endpoint exactly
    if alpha == 0.0 {
        return Ok(f.clone());
    }
    if alpha == 1.0 {
        return Ok(prev.clone());
    }
    let blended: Vec<f64> = prev
        .values
        .iter()
        .zip(f.values.iter())
        .map(|(p, x)| alpha * p + (1.0 - alpha) * x)
        .collect();
    Embedding::new(blended)
}

/// Bounded buffer of EMA-smoothed appearance features for one track.
///
/// With momentum 0 it degenerates to a raw feature bank; with capacity 1 it
/// is the pure running EMA.
#[derive(Debug, Clone)]
pub struct EmaBank {
    entries: VecDeque<Embedding>,
    capacity: usize,
    momentum: f64,
}

impl EmaBank {
    pub fn new(capacity: usize, momentum: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::input("bank capacity must be at least 1"));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::input(format!("momentum {momentum} outside [0, 1]")));
        }
        Ok(EmaBank {
            entries: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
            momentum,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Embedding> {
        self.entries.iter()
    }

    /// EMA-blends `f` with the newest entry (or seeds with `f` itself),
    /// appends the result and evicts the oldest entry past capacity.
    pub fn push(&mut self, f: &Embedding) -> Result<()> {
        let e = match self.entries.back() {
            Some(last) => ema_update(last, f, self.momentum)?,
            None => f.clone(),
        };
        self.entries.push_back(e);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Minimum cosine distance from any stored feature to the query.
    pub fn min_cosine_distance(&self, f: &Embedding) -> Result<f64> {
        let first = self
            .entries
            .front()
            .ok_or_else(|| Error::input("min_cosine_distance on an empty bank"))?;
        if first.dim() != f.dim() {
            return Err(Error::input(format!(
                "query dimension {} does not match bank dimension {}",
                f.dim(),
                first.dim()
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|e| e.cosine_distance(f))
            .fold(f64::INFINITY, f64::min))
    }
}

/// Source of per-detection appearance embeddings, keyed by
/// (frame, detection ordinal).
pub trait EmbeddingProvider {
    /// Embedding dimension, if known up front.
    fn dim(&self) -> Option<usize>;
    fn get(&self, frame: i64, det_idx: usize) -> Option<&Embedding>;
}

/// In-memory embedding table, the backing store for the sidecar file format.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    map: HashMap<(i64, usize), Embedding>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim: Some(dim),
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, frame: i64, det_idx: usize, e: Embedding) -> Result<()> {
        match self.dim {
            Some(d) if d != e.dim() => {
                return Err(Error::input(format!(
                    "embedding dimension {} does not match table dimension {d}",
                    e.dim()
                )))
            }
            None => self.dim = Some(e.dim()),
            _ => {}
        }
        self.map.insert((frame, det_idx), e);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = (i64, usize)> + '_ {
        self.map.keys().copied()
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn get(&self, frame: i64, det_idx: usize) -> Option<&Embedding> {
        self.map.get(&(frame, det_idx))
    }
}

/// Provider with no embeddings at all; association degrades to motion-only.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEmbeddings;

impl EmbeddingProvider for NoEmbeddings {
    fn dim(&self) -> Option<usize> {
        None
    }

    fn get(&self, _frame: i64, _det_idx: usize) -> Option<&Embedding> {
        None
    }
}
