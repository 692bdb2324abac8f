//! Alignment and swapped-prediction losses with exact gradients.
//!
//! Transport plans and cluster assignments enter as constants; gradients
//! flow to features and prototype rows only. Prototype rows are used as
//! given (no normalization inside the loss), which matches the unit-norm
//! rows maintained by the training loop.

use crate::correspondence::{FeatureQueue, FeatureVector, PrototypeBank};
use crate::error::{Error, Result};
use crate::linalg::{dot, softmax, Matrix, EPS};
use crate::ot::{sinkhorn_max, SinkhornConfig, TransportPlan};

/// Loss value with gradients for one domain's batch.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    /// `∂L/∂x_j` per batch feature.
    pub features: Vec<Vec<f64>>,
    /// `∂L/∂u_k` per prototype row.
    pub prototypes: Matrix,
    /// Log terms that hit the `1e-12` clamp.
    pub clamped: usize,
}

/// Second-domain gradients for losses that couple two feature sets.
#[derive(Clone, Debug)]
pub struct PairLossGrad {
    pub loss: f64,
    pub rows: Vec<Vec<f64>>,
    pub cols: Vec<Vec<f64>>,
}

fn logits(protos: &PrototypeBank, x: &[f64], temperature: f64) -> Vec<f64> {
    protos.scores(x).into_iter().map(|s| s / temperature).collect()
}

/// Cross-entropy `-Σ_k t_k log y_k` with `y = softmax(logits)`, scaled by
/// `scale`. Returns the loss, its gradient with respect to the logits, and
/// the number of clamped terms (which contribute a constant).
fn cross_entropy(logit: &[f64], target: impl Fn(usize) -> f64, scale: f64) -> (f64, Vec<f64>, usize) {
    let y = softmax(logit);
    let mut loss = 0.0;
    let mut live_mass = 0.0;
    let mut clamped = 0;
    let mut grad = vec![0.0; y.len()];
    for (k, &yk) in y.iter().enumerate() {
        let t = target(k);
        if t == 0.0 {
            continue;
        }
        if yk < EPS {
            loss -= t * EPS.ln();
            clamped += 1;
        } else {
            loss -= t * yk.ln();
            live_mass += t;
            grad[k] -= t;
        }
    }
    for (g, yk) in grad.iter_mut().zip(&y) {
        *g = scale * (*g + live_mass * yk);
    }
    (scale * loss, grad, clamped)
}

fn check_batch(plan: &Matrix, protos: &PrototypeBank, feats: &[FeatureVector]) -> Result<()> {
    if plan.rows() != protos.count() || plan.cols() != feats.len() {
        return Err(Error::Shape(format!(
            "plan is {}x{}, expected {}x{}",
            plan.rows(),
            plan.cols(),
            protos.count(),
            feats.len()
        )));
    }
    if feats.iter().any(|x| x.len() != protos.dim()) {
        return Err(Error::Shape("feature dimension differs from prototype dimension".into()));
    }
    Ok(())
}

/// `Σ_ij Γ_ij (α (1 - u_i·x_j) + β (-log y_j^(i)))` for one domain.
pub fn alignment_loss_domain(
    plan: &Matrix,
    protos: &PrototypeBank,
    feats: &[FeatureVector],
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<LossGrad> {
    check_batch(plan, protos, feats)?;
    let (k, d) = (protos.count(), protos.dim());
    let mut loss = 0.0;
    let mut clamped = 0;
    let mut feature_grads = Vec::with_capacity(feats.len());
    let mut proto_grad = Matrix::zeros(k, d);
    for (j, x) in feats.iter().enumerate() {
        let mut gx = vec![0.0; d];
        if alpha != 0.0 {
            for i in 0..k {
                let w = plan.get(i, j);
                if w == 0.0 {
                    continue;
                }
                let u = protos.prototype(i);
                loss += w * alpha * (1.0 - dot(u, x));
                for (g, ui) in gx.iter_mut().zip(u) {
                    *g -= w * alpha * ui;
                }
                for (g, xi) in proto_grad.row_mut(i).iter_mut().zip(x) {
                    *g -= w * alpha * xi;
                }
            }
        }
        if beta != 0.0 {
            let s = logits(protos, x, temperature);
            let (l, gs, c) = cross_entropy(&s, |i| plan.get(i, j), beta);
            loss += l;
            clamped += c;
            backprop_logits(&gs, protos, x, temperature, &mut gx, &mut proto_grad);
        }
        feature_grads.push(gx);
    }
    Ok(LossGrad { loss, features: feature_grads, prototypes: proto_grad, clamped })
}

/// Routes `∂L/∂s` for `s_k = u_k·x / τ` into feature and prototype gradients.
fn backprop_logits(gs: &[f64], protos: &PrototypeBank, x: &[f64], temperature: f64, gx: &mut [f64], gu: &mut Matrix) {
    for (k, &g) in gs.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let g = g / temperature;
        for (gxi, ui) in gx.iter_mut().zip(protos.prototype(k)) {
            *gxi += g * ui;
        }
        for (gui, xi) in gu.row_mut(k).iter_mut().zip(x) {
            *gui += g * xi;
        }
    }
}

/// Alignment loss summed over the two domains.
pub fn alignment_loss(
    plans: [&Matrix; 2],
    protos: &PrototypeBank,
    feats: [&[FeatureVector]; 2],
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<[LossGrad; 2]> {
    Ok([
        alignment_loss_domain(plans[0], protos, feats[0], alpha, beta, temperature)?,
        alignment_loss_domain(plans[1], protos, feats[1], alpha, beta, temperature)?,
    ])
}

/// `Σ_ij Γ_ij α (1 - a_i·b_j)` between two feature sets, for the
/// prototype-free ablations. Gradients are only produced for the sides
/// flagged as trainable.
pub fn pair_alignment_loss(
    plan: &Matrix,
    rows: &[&[f64]],
    cols: &[&[f64]],
    alpha: f64,
    grad_rows: bool,
    grad_cols: bool,
) -> Result<PairLossGrad> {
    if plan.rows() != rows.len() || plan.cols() != cols.len() {
        return Err(Error::Shape("plan shape does not match feature sets".into()));
    }
    let d = rows.first().map_or(0, |r| r.len());
    let mut loss = 0.0;
    let mut gr = vec![vec![0.0; d]; if grad_rows { rows.len() } else { 0 }];
    let mut gc = vec![vec![0.0; d]; if grad_cols { cols.len() } else { 0 }];
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            let w = plan.get(i, j);
            if w == 0.0 {
                continue;
            }
            loss += w * alpha * (1.0 - dot(a, b));
            if grad_rows {
                for (g, bj) in gr[i].iter_mut().zip(b.iter()) {
                    *g -= w * alpha * bj;
                }
            }
            if grad_cols {
                for (g, ai) in gc[j].iter_mut().zip(a.iter()) {
                    *g -= w * alpha * ai;
                }
            }
        }
    }
    Ok(PairLossGrad { loss, rows: gr, cols: gc })
}

/// Online cluster assignment for the queued features: maximizes
/// `Tr(Zᵀ Uᵀ Q) + ε H(Z)` over the uniform-marginal polytope. Column `j`
/// of the result belongs to `features[j]`.
pub fn swav_assignments(features: &[&[f64]], protos: &PrototypeBank, config: &SinkhornConfig) -> Result<TransportPlan> {
    if features.is_empty() {
        return Err(Error::invalid("assignment needs at least one queued feature"));
    }
    if features.iter().any(|x| x.len() != protos.dim()) {
        return Err(Error::Shape("feature dimension differs from prototype dimension".into()));
    }
    let score = Matrix::from_fn(protos.count(), features.len(), |k, j| dot(protos.prototype(k), features[j]));
    sinkhorn_max(&score, config)
}

/// [`swav_assignments`] over a queue's current contents.
pub fn queue_assignments(queue: &FeatureQueue, protos: &PrototypeBank, config: &SinkhornConfig) -> Result<TransportPlan> {
    if queue.len() < queue.batch_size() {
        return Err(Error::invalid("queue holds less than one batch"));
    }
    let feats: Vec<&[f64]> = queue.iter().map(Vec::as_slice).collect();
    swav_assignments(&feats, protos, config)
}

/// Swapped prediction for one domain:
/// `mean_j [ℓ(y(x¹_j), z²_j) + ℓ(y(x²_j), z¹_j)]` with cross-entropy `ℓ`.
/// Assignment columns are rescaled to sum to one before use.
pub fn swav_loss_domain(
    view1: &[FeatureVector],
    view2: &[FeatureVector],
    assign1: &Matrix,
    assign2: &Matrix,
    protos: &PrototypeBank,
    temperature: f64,
) -> Result<[LossGrad; 2]> {
    let a = view1.len();
    if view2.len() != a || assign1.cols() != a || assign2.cols() != a {
        return Err(Error::Shape("views and assignments must cover the same batch".into()));
    }
    if assign1.rows() != protos.count() || assign2.rows() != protos.count() {
        return Err(Error::Shape("assignment rows must match prototype count".into()));
    }
    let scale = 1.0 / a as f64;
    let mut out = Vec::with_capacity(2);
    for (feats, targets) in [(view1, assign2), (view2, assign1)] {
        let (k, d) = (protos.count(), protos.dim());
        let mut loss = 0.0;
        let mut clamped = 0;
        let mut gfeat = Vec::with_capacity(a);
        let mut gproto = Matrix::zeros(k, d);
        for (j, x) in feats.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Shape("feature dimension differs from prototype dimension".into()));
            }
            let col_mass: f64 = (0..k).map(|i| targets.get(i, j)).sum();
            if !(col_mass > 0.0) {
                return Err(Error::DegenerateMass(format!("assignment column {j} has no mass")));
            }
            let s = logits(protos, x, temperature);
            let (l, gs, c) = cross_entropy(&s, |i| targets.get(i, j) / col_mass, scale);
            loss += l;
            clamped += c;
            let mut gx = vec![0.0; d];
            backprop_logits(&gs, protos, x, temperature, &mut gx, &mut gproto);
            gfeat.push(gx);
        }
        out.push(LossGrad { loss, features: gfeat, prototypes: gproto, clamped });
    }
    let second = out.pop().unwrap();
    let first = out.pop().unwrap();
    Ok([first, second])
}
