//! One alternating-optimization step: correspondence with parameters
//! frozen, then a gradient step on encoder and prototypes with the
//! correspondence frozen.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentationSpec};
use super::encoder::{Encoder, ForwardCache};
use super::loss::{alignment_loss_domain, pair_alignment_loss, swav_assignments, swav_loss_domain};
use super::optim::Momentum;
use crate::correspondence::{
    estimate_correspondence, extract_batch_plan, feature_cost, CostParams, FeatureQueue, FeatureVector, MemoryBank,
    PrototypeBank,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::ot::{sinkhorn_min, SinkhornConfig, TransportPlan};

pub const SKETCH: usize = 0;
pub const PHOTO: usize = 1;

/// Which features share one balanced cluster assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentScope {
    /// Sketch and photo batches and queues are assigned together.
    #[default]
    Joint,
    /// Each domain is spread evenly over the prototypes on its own.
    PerDomain,
}

/// How often the prototype correspondence is recomputed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrespondenceRefresh {
    /// Against the memory bank, every step.
    #[default]
    Step,
    /// Against the whole training set, once per epoch.
    Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight on the alignment loss.
    pub nu: f64,
    /// Weight on the swapped-prediction loss.
    pub mu: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_period: usize,
    pub batch_size: usize,
    /// Defaults to `4 * batch_size`.
    pub queue_size: Option<usize>,
    /// Defaults to `8 * batch_size`.
    pub bank_size: Option<usize>,
    pub prototype_count: usize,
    pub temperature: f64,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub augmentation: AugmentationSpec,
    pub prototype_grad_from_alignment: bool,
    pub prototype_grad_from_semantic: bool,
    pub correspondence_refresh: CorrespondenceRefresh,
    pub assignment_scope: AssignmentScope,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            mu: 10.0,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_halving_period: 10,
            batch_size: 32,
            queue_size: None,
            bank_size: None,
            prototype_count: 10,
            temperature: 0.1,
            hidden_dims: vec![64],
            embedding_dim: 16,
            augmentation: AugmentationSpec::default(),
            prototype_grad_from_alignment: true,
            prototype_grad_from_semantic: true,
            correspondence_refresh: CorrespondenceRefresh::Step,
            assignment_scope: AssignmentScope::Joint,
        }
    }
}

impl TrainingConfig {
    pub fn queue_size(&self) -> usize {
        self.queue_size.unwrap_or(4 * self.batch_size)
    }

    pub fn bank_size(&self) -> usize {
        self.bank_size.unwrap_or(8 * self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.nu, self.mu, self.momentum, self.weight_decay];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("loss weights, momentum and weight decay must be nonnegative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.batch_size > self.queue_size() || self.batch_size > self.bank_size() {
            return Err(Error::invalid("batch_size must not exceed queue_size or bank_size"));
        }
        if self.prototype_count < 2 {
            return Err(Error::invalid("prototype_count must be at least 2"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.embedding_dim == 0 || self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        self.augmentation.validate()
    }

    pub fn encoder_widths(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }
}

/// Which correspondence drives the alignment loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// No alignment loss.
    None,
    /// OT between the current sketch and photo batches.
    BatchToBatch,
    /// OT between prototypes and each domain's memory bank.
    Prototypes,
    /// OT between the sketch bank and the photo bank.
    BankToBank,
}

/// Everything a step needs besides the mutable state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSetup {
    pub training: TrainingConfig,
    pub cost: CostParams,
    /// Correspondence solver (λ).
    pub correspondence: SinkhornConfig,
    /// Cluster-assignment solver (ε).
    pub assignment: SinkhornConfig,
    pub mode: AlignmentMode,
}

impl TrainingSetup {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.cost.validate()?;
        self.correspondence.validate()?;
        self.assignment.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub encoder: Encoder,
    pub prototypes: PrototypeBank,
    pub encoder_momentum: Momentum,
    pub prototype_momentum: Momentum,
    /// Memory banks, indexed by [`SKETCH`] and [`PHOTO`].
    pub banks: [MemoryBank; 2],
    pub queues: [FeatureQueue; 2],
    pub step: u64,
}

impl TrainState {
    pub fn new(encoder: Encoder, prototypes: PrototypeBank, config: &TrainingConfig) -> Result<Self> {
        if encoder.output_dim() != prototypes.dim() {
            return Err(Error::Shape("encoder output and prototype dimensions differ".into()));
        }
        let a = config.batch_size;
        let bank = MemoryBank::new(config.bank_size(), a)?;
        let queue = MemoryBank::new(config.queue_size(), a)?;
        Ok(Self {
            encoder_momentum: Momentum::zeros(encoder.param_count()),
            prototype_momentum: Momentum::zeros(prototypes.count() * prototypes.dim()),
            encoder,
            prototypes,
            banks: [bank.clone(), bank],
            queues: [queue.clone(), queue],
            step: 0,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub alignment_loss: f64,
    pub semantic_loss: f64,
    pub total_loss: f64,
    /// Shape of the coupling the alignment solver ran on, if it ran.
    pub alignment_plan_shape: Option<(usize, usize)>,
    /// Largest marginal violation over every plan solved in the step.
    pub max_plan_residual: f64,
    pub unconverged_plans: usize,
    pub clamped_logs: usize,
}

impl StepDiagnostics {
    fn record(&mut self, plan: &TransportPlan) {
        self.max_plan_residual = self.max_plan_residual.max(plan.max_marginal_violation());
        if !plan.converged {
            self.unconverged_plans += 1;
        }
    }
}

fn add_scaled(dst: &mut [Vec<f64>], src: &[Vec<f64>], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (x, y) in d.iter_mut().zip(s) {
            *x += scale * y;
        }
    }
}

fn add_scaled_matrix(dst: &mut Matrix, src: &Matrix, scale: f64) {
    for (x, y) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *x += scale * y;
    }
}

/// Rows `0..rows` (or columns `0..cols`) of `plan`, rescaled to unit mass.
fn leading_block(plan: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    let block = Matrix::from_fn(rows, cols, |i, j| plan.get(i, j));
    let mass = block.sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateMass(format!("leading block carries mass {mass}")));
    }
    Ok(block.map(|p| p / mass))
}

/// Runs one training step on a sketch batch and a photo batch of raw inputs.
///
/// `epoch_plans`, when given, supplies the prototype-to-batch couplings
/// (already restricted to the batch and normalized) instead of solving
/// against the memory banks. On error the state is left untouched.
pub fn training_step(
    state: &mut TrainState,
    batches: [&[Vec<f64>]; 2],
    setup: &TrainingSetup,
    learning_rate: f64,
    epoch_plans: Option<[Matrix; 2]>,
    rng: &mut impl Rng,
) -> Result<StepDiagnostics> {
    let cfg = &setup.training;
    let a = cfg.batch_size;
    if batches.iter().any(|b| b.len() != a) {
        return Err(Error::invalid(format!("both batches must hold exactly {a} samples")));
    }
    let dim = state.encoder.input_dim();
    if batches.iter().flat_map(|b| b.iter()).any(|x| x.len() != dim) {
        return Err(Error::Shape(format!("training inputs must have dimension {dim}")));
    }
    let tau = cfg.temperature;
    let protos = &state.prototypes;
    let mut diag = StepDiagnostics { step: state.step, ..Default::default() };

    // (1) two augmented views per sample
    let mut caches: [[Vec<ForwardCache>; 2]; 2] = Default::default();
    for d in [SKETCH, PHOTO] {
        for x in batches[d] {
            for view in 0..2 {
                let draw = cfg.augmentation.sample(dim, rng);
                caches[d][view].push(state.encoder.forward(&augment(x, &draw))?);
            }
        }
    }
    let feats: [[Vec<FeatureVector>; 2]; 2] = std::array::from_fn(|d| {
        std::array::from_fn(|v| caches[d][v].iter().map(|c| c.output.clone()).collect())
    });

    // (2) view-1 snapshots enter banks and queues
    let mut banks = state.banks.clone();
    let mut queues = state.queues.clone();
    for d in [SKETCH, PHOTO] {
        banks[d].push(&feats[d][0])?;
        queues[d].push(&feats[d][0])?;
    }

    let zero_grads = || -> [[Vec<Vec<f64>>; 2]; 2] {
        std::array::from_fn(|_| std::array::from_fn(|_| vec![vec![0.0; protos.dim()]; a]))
    };
    let mut feat_grads = zero_grads();
    let mut proto_grad = Matrix::zeros(protos.count(), protos.dim());

    // (3) correspondence with parameters frozen, (4a) alignment loss
    let mut alignment = 0.0;
    match setup.mode {
        AlignmentMode::None => {}
        AlignmentMode::Prototypes => {
            let mut supplied = epoch_plans.map(|[s, p]| [Some(s), Some(p)]).unwrap_or_default();
            for d in [SKETCH, PHOTO] {
                let plan = match supplied[d].take() {
                    Some(p) => p,
                    None => {
                        let full = estimate_correspondence(protos, &banks[d], &setup.cost, &setup.correspondence)
                            .map_err(|e| e.context("prototype correspondence"))?;
                        diag.record(&full);
                        diag.alignment_plan_shape = Some((full.rows(), full.cols()));
                        extract_batch_plan(full.matrix(), a)?
                    }
                };
                let out = alignment_loss_domain(&plan, protos, &feats[d][0], setup.cost.alpha, setup.cost.beta, tau)?;
                alignment += out.loss;
                diag.clamped_logs += out.clamped;
                add_scaled(&mut feat_grads[d][0], &out.features, cfg.nu);
                if cfg.prototype_grad_from_alignment {
                    add_scaled_matrix(&mut proto_grad, &out.prototypes, cfg.nu);
                }
            }
        }
        AlignmentMode::BatchToBatch => {
            let rows: Vec<&[f64]> = feats[SKETCH][0].iter().map(Vec::as_slice).collect();
            let cols: Vec<&[f64]> = feats[PHOTO][0].iter().map(Vec::as_slice).collect();
            let cost = feature_cost(&rows, &cols, setup.cost.alpha)?;
            let plan = sinkhorn_min(&cost, &setup.correspondence).map_err(|e| e.context("batch correspondence"))?;
            diag.record(&plan);
            diag.alignment_plan_shape = Some((plan.rows(), plan.cols()));
            let block = leading_block(plan.matrix(), a, a)?;
            let out = pair_alignment_loss(&block, &rows, &cols, setup.cost.alpha, true, true)?;
            alignment += out.loss;
            add_scaled(&mut feat_grads[SKETCH][0], &out.rows, cfg.nu);
            add_scaled(&mut feat_grads[PHOTO][0], &out.cols, cfg.nu);
        }
        AlignmentMode::BankToBank => {
            let rows: Vec<&[f64]> = banks[SKETCH].iter().map(Vec::as_slice).collect();
            let cols: Vec<&[f64]> = banks[PHOTO].iter().map(Vec::as_slice).collect();
            let cost = feature_cost(&rows, &cols, setup.cost.alpha)?;
            let plan = sinkhorn_min(&cost, &setup.correspondence).map_err(|e| e.context("bank correspondence"))?;
            diag.record(&plan);
            diag.alignment_plan_shape = Some((plan.rows(), plan.cols()));
            let plan = plan.into_matrix();
            // current sketch batch against the whole photo bank
            let sketch_block = leading_block(&plan, a, cols.len())?;
            let out = pair_alignment_loss(&sketch_block, &rows[..a], &cols, setup.cost.alpha, true, false)?;
            alignment += out.loss;
            add_scaled(&mut feat_grads[SKETCH][0], &out.rows, cfg.nu);
            // whole sketch bank against the current photo batch
            let photo_block = leading_block(&plan, rows.len(), a)?;
            let out = pair_alignment_loss(&photo_block, &rows, &cols[..a], setup.cost.alpha, false, true)?;
            alignment += out.loss;
            add_scaled(&mut feat_grads[PHOTO][0], &out.cols, cfg.nu);
        }
    }

    // (4b) swapped prediction against online assignments
    let mut semantic = 0.0;
    let rest: [Vec<&[f64]>; 2] = std::array::from_fn(|d| queues[d].iter().skip(a).map(Vec::as_slice).collect());
    let mut assign: [[Matrix; 2]; 2] = Default::default();
    for view in 0..2 {
        let batch = |d: usize| feats[d][view].iter().map(Vec::as_slice);
        match cfg.assignment_scope {
            AssignmentScope::Joint => {
                let q: Vec<&[f64]> = batch(SKETCH)
                    .chain(batch(PHOTO))
                    .chain(rest[SKETCH].iter().copied())
                    .chain(rest[PHOTO].iter().copied())
                    .collect();
                let z = swav_assignments(&q, protos, &setup.assignment).map_err(|e| e.context("cluster assignment"))?;
                diag.record(&z);
                let z = z.matrix().leading_cols(2 * a);
                assign[SKETCH][view] = z.leading_cols(a);
                assign[PHOTO][view] = Matrix::from_fn(z.rows(), a, |i, j| z.get(i, a + j));
            }
            AssignmentScope::PerDomain => {
                for d in [SKETCH, PHOTO] {
                    let q: Vec<&[f64]> = batch(d).chain(rest[d].iter().copied()).collect();
                    let z = swav_assignments(&q, protos, &setup.assignment)
                        .map_err(|e| e.context("cluster assignment"))?;
                    diag.record(&z);
                    assign[d][view] = z.matrix().leading_cols(a);
                }
            }
        }
    }
    for d in [SKETCH, PHOTO] {
        let out = swav_loss_domain(&feats[d][0], &feats[d][1], &assign[d][0], &assign[d][1], protos, tau)?;
        for (view, part) in out.iter().enumerate() {
            semantic += part.loss;
            diag.clamped_logs += part.clamped;
            add_scaled(&mut feat_grads[d][view], &part.features, cfg.mu);
            if cfg.prototype_grad_from_semantic {
                add_scaled_matrix(&mut proto_grad, &part.prototypes, cfg.mu);
            }
        }
    }

    let total = cfg.nu * alignment + cfg.mu * semantic;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            what: format!("alignment {alignment}, semantic {semantic}"),
        });
    }
    diag.alignment_loss = alignment;
    diag.semantic_loss = semantic;
    diag.total_loss = total;

    // (5) SGD step on θ and U
    let mut encoder_grad = vec![0.0; state.encoder.param_count()];
    for d in [SKETCH, PHOTO] {
        for view in 0..2 {
            for (cache, g) in caches[d][view].iter().zip(&feat_grads[d][view]) {
                if g.iter().any(|v| *v != 0.0) {
                    state.encoder.backward(cache, g, &mut encoder_grad);
                }
            }
        }
    }
    if encoder_grad.iter().chain(proto_grad.as_slice()).any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { step: state.step, what: "non-finite gradient".into() });
    }
    let mask = state.encoder.weight_mask();
    state.encoder_momentum.step(
        state.encoder.params_mut(),
        &encoder_grad,
        Some(&mask),
        learning_rate,
        cfg.momentum,
        cfg.weight_decay,
    );
    state.prototype_momentum.step(
        state.prototypes.matrix_mut().as_mut_slice(),
        proto_grad.as_slice(),
        None,
        learning_rate,
        cfg.momentum,
        0.0,
    );
    // (6) back onto the unit sphere
    state.prototypes.renormalize();
    state.banks = banks;
    state.queues = queues;
    state.step += 1;
    Ok(diag)
}

/// Prototype correspondence over an entire domain, for once-per-epoch refresh.
pub fn full_correspondence(
    encoder: &Encoder,
    protos: &PrototypeBank,
    inputs: &[Vec<f64>],
    cost: &CostParams,
    config: &SinkhornConfig,
) -> Result<TransportPlan> {
    let feats = inputs.iter().map(|x| encoder.encode(x)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
    let cost = crate::correspondence::joint_cost_over(protos, &refs, cost)?;
    sinkhorn_min(&cost, config)
}

/// Columns `indices` of a full-domain plan, rescaled to unit mass.
pub fn batch_columns(plan: &Matrix, indices: &[usize]) -> Result<Matrix> {
    if indices.iter().any(|&j| j >= plan.cols()) {
        return Err(Error::invalid("batch index outside the plan"));
    }
    let block = Matrix::from_fn(plan.rows(), indices.len(), |i, j| plan.get(i, indices[j]));
    let mass = block.sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateMass(format!("batch columns carry mass {mass}")));
    }
    Ok(block.map(|p| p / mass))
}
