//! Correspondence between trainable prototypes and per-domain feature
//! memory banks.
//!
//! The ground cost mixes a feature term (cosine distance between prototype
//! and feature) with a label term (cross-entropy of the feature's
//! temperature-softmax cluster probabilities against the prototype's
//! one-hot label). Entropic OT over that cost, with encoder and prototypes
//! held fixed, yields the prototype-to-bank coupling; its leading columns
//! belong to the current batch.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalize_in_place, softmax, Matrix, EPS};
use crate::ot::{sinkhorn_min, CostMatrix, SinkhornConfig, TransportPlan};

/// Unit-norm embedding vector.
pub type FeatureVector = Vec<f64>;

const UNIT_TOLERANCE: f64 = 1e-6;

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!("{what} has norm {n}, expected 1")));
    }
    Ok(())
}

/// `K` unit-norm prototype rows. Prototype `i` carries the implicit one-hot
/// label `e_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    vectors: Matrix,
}

impl PrototypeBank {
    /// Builds a bank from raw rows, normalizing each to unit length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut vectors = Matrix::from_rows(rows)?;
        if vectors.rows() < 2 {
            return Err(Error::invalid("a prototype bank needs at least two prototypes"));
        }
        if vectors.cols() == 0 {
            return Err(Error::invalid("prototype dimension must be positive"));
        }
        if !vectors.is_finite() {
            return Err(Error::invalid("prototype rows must be finite"));
        }
        for i in 0..vectors.rows() {
            normalize_in_place(vectors.row_mut(i));
        }
        Ok(Self { vectors })
    }

    pub fn from_matrix(vectors: Matrix) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..vectors.rows()).map(|i| vectors.row(i).to_vec()).collect();
        Self::from_rows(&rows)
    }

    pub fn count(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn prototype(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    /// Raw mutable access for optimizer updates; call [`Self::renormalize`] afterwards.
    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.vectors
    }

    pub fn renormalize(&mut self) {
        for i in 0..self.vectors.rows() {
            normalize_in_place(self.vectors.row_mut(i));
        }
    }

    /// Dot products `u_k · x` for every prototype.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.count()).map(|k| dot(self.prototype(k), x)).collect()
    }
}

/// Fixed-capacity FIFO of detached feature snapshots.
///
/// The newest batch sits at positions `0..A`; pushing beyond capacity evicts
/// the oldest batch. Also serves as the swapped-assignment feature queue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    capacity: usize,
    batch_size: usize,
    slots: VecDeque<FeatureVector>,
}

/// Feature queue used for online cluster assignment; same FIFO semantics.
pub type FeatureQueue = MemoryBank;

impl MemoryBank {
    pub fn new(capacity: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || capacity == 0 {
            return Err(Error::invalid("bank capacity and batch size must be positive"));
        }
        if capacity % batch_size != 0 {
            return Err(Error::invalid(format!(
                "bank capacity {capacity} is not a multiple of batch size {batch_size}"
            )));
        }
        Ok(Self { capacity, batch_size, slots: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.slots[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureVector> {
        self.slots.iter()
    }

    /// Places `batch` on top, keeping its internal order, then evicts the
    /// oldest entries past capacity.
    pub fn push(&mut self, batch: &[FeatureVector]) -> Result<()> {
        if batch.len() != self.batch_size {
            return Err(Error::invalid(format!(
                "batch of {} pushed into a bank with batch size {}",
                batch.len(),
                self.batch_size
            )));
        }
        if let Some(first) = self.slots.front() {
            if batch.iter().any(|v| v.len() != first.len()) {
                return Err(Error::Shape("batch dimension differs from bank contents".into()));
            }
        }
        for v in batch {
            check_unit(v, "bank entry")?;
        }
        for v in batch.iter().rev() {
            self.slots.push_front(v.clone());
        }
        self.slots.truncate(self.capacity);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// Weight on the cosine feature distance.
    pub alpha: f64,
    /// Weight on the label cross-entropy.
    pub beta: f64,
    pub temperature: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, temperature: 0.1 }
    }
}

impl CostParams {
    pub fn new(alpha: f64, beta: f64, temperature: f64) -> Result<Self> {
        let params = Self { alpha, beta, temperature };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be nonnegative"));
        }
        if !(self.alpha + self.beta > 0.0) {
            return Err(Error::invalid("alpha + beta must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }
}

/// Softmax of `u_k · x / τ` over prototypes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterProbability(pub Vec<f64>);

impl ClusterProbability {
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }
}

pub fn cluster_probabilities(x: &[f64], protos: &PrototypeBank, temperature: f64) -> ClusterProbability {
    let logits: Vec<f64> = protos.scores(x).into_iter().map(|s| s / temperature).collect();
    ClusterProbability(softmax(&logits))
}

/// Cosine distance `1 - u·x` for unit vectors, clamped at zero.
#[inline]
pub fn cosine_distance(u: &[f64], x: &[f64]) -> f64 {
    (1.0 - dot(u, x)).max(0.0)
}

/// Cross-entropy of `probs` against the one-hot label of prototype `i`.
#[inline]
pub fn label_distance(probs: &ClusterProbability, i: usize) -> f64 {
    -probs.0[i].max(EPS).ln()
}

/// `C(i, j) = α d_f(u_i, x_j) + β d_l(v_i, y_j)` over the bank's current occupancy.
pub fn joint_cost(protos: &PrototypeBank, bank: &MemoryBank, params: &CostParams) -> Result<CostMatrix> {
    params.validate()?;
    if bank.is_empty() {
        return Err(Error::invalid("cannot build a cost matrix over an empty bank"));
    }
    let feats: Vec<&[f64]> = bank.iter().map(Vec::as_slice).collect();
    joint_cost_over(protos, &feats, params)
}

pub(crate) fn joint_cost_over(protos: &PrototypeBank, feats: &[&[f64]], params: &CostParams) -> Result<CostMatrix> {
    if feats.iter().any(|x| x.len() != protos.dim()) {
        return Err(Error::Shape("feature dimension differs from prototype dimension".into()));
    }
    let k = protos.count();
    let mut cost = Matrix::zeros(k, feats.len());
    for (j, x) in feats.iter().enumerate() {
        let scores = protos.scores(x);
        let probs = ClusterProbability(softmax(&scores.iter().map(|s| s / params.temperature).collect::<Vec<_>>()));
        for i in 0..k {
            let feature = (1.0 - scores[i]).max(0.0);
            cost.set(i, j, params.alpha * feature + params.beta * label_distance(&probs, i));
        }
    }
    CostMatrix::new(cost)
}

/// Feature-only cost `α (1 - a_i · b_j)` between two feature sets, used by
/// the prototype-free ablations.
pub fn feature_cost(rows: &[&[f64]], cols: &[&[f64]], alpha: f64) -> Result<CostMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid("feature cost needs non-empty feature sets"));
    }
    let cost = Matrix::from_fn(rows.len(), cols.len(), |i, j| alpha * cosine_distance(rows[i], cols[j]));
    CostMatrix::new(cost)
}

/// Prototype-to-bank coupling. Encoder and prototypes are only read.
pub fn estimate_correspondence(
    protos: &PrototypeBank,
    bank: &MemoryBank,
    params: &CostParams,
    config: &SinkhornConfig,
) -> Result<TransportPlan> {
    if bank.len() < bank.batch_size() {
        return Err(Error::invalid(format!(
            "bank holds {} entries, fewer than one batch of {}",
            bank.len(),
            bank.batch_size()
        )));
    }
    let cost = joint_cost(protos, bank, params)?;
    sinkhorn_min(&cost, config)
}

/// Leading `batch_size` columns of `plan`, rescaled so all entries sum to one.
pub fn extract_batch_plan(plan: &Matrix, batch_size: usize) -> Result<Matrix> {
    if batch_size == 0 || batch_size > plan.cols() {
        return Err(Error::invalid(format!(
            "cannot take {batch_size} columns from a plan with {} columns",
            plan.cols()
        )));
    }
    let block = plan.leading_cols(batch_size);
    let mass = block.sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateMass(format!("batch columns carry mass {mass}")));
    }
    Ok(block.map(|p| p / mass))
}
