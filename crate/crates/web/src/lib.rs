//! WebAssembly bindings for the browser demo: an entropic transport plan
//! explorer, a cluster-probability/joint-cost explorer, and a small
//! training run that reports retrieval mAP epoch by epoch.

use pmjdot::correspondence::{cluster_probabilities, cosine_distance, label_distance, CostParams, PrototypeBank};
use pmjdot::data::{generate, DomainSpec, LabeledCorpus};
use pmjdot::experiment::{evaluate_encoder, initial_state, train_epoch, ExperimentConfig, Mode};
use pmjdot::ot::{sinkhorn_min, CostMatrix, SinkhornConfig};
use pmjdot::representation::{TrainState, TrainingSetup};
use wasm_bindgen::prelude::*;

fn js_err(e: pmjdot::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct PlanResult {
    plan: Vec<f64>,
    rows: usize,
    cols: usize,
    iterations: usize,
    converged: bool,
    cost: f64,
    entropy: f64,
}

#[wasm_bindgen]
impl PlanResult {
    /// Row-major plan entries.
    pub fn plan(&self) -> Vec<f64> {
        self.plan.clone()
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    pub fn converged(&self) -> bool {
        self.converged
    }
    pub fn cost(&self) -> f64 {
        self.cost
    }
    pub fn entropy(&self) -> f64 {
        self.entropy
    }
}

/// Squared distance between points on two 1-D grids, `|i/(rows-1) - j/(cols-1) - shift|²`.
pub fn grid_cost(rows: usize, cols: usize, shift: f64) -> Vec<f64> {
    let pos = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (pos(i, rows) - pos(j, cols) - shift).powi(2)))
        .collect()
}

/// Solves entropic OT on the grid cost with uniform marginals.
#[wasm_bindgen]
pub fn transport_plan(rows: usize, cols: usize, shift: f64, lambda: f64) -> Result<PlanResult, JsError> {
    if rows == 0 || cols == 0 || rows > 64 || cols > 64 {
        return Err(JsError::new("rows and cols must lie in 1..=64"));
    }
    let rows_vec: Vec<Vec<f64>> = grid_cost(rows, cols, shift).chunks(cols).map(<[f64]>::to_vec).collect();
    let cost = CostMatrix::from_rows(&rows_vec).map_err(js_err)?;
    let config = SinkhornConfig::with_entropy_weight(lambda);
    let plan = sinkhorn_min(&cost, &config).map_err(js_err)?;
    Ok(PlanResult {
        rows,
        cols,
        iterations: plan.iterations,
        converged: plan.converged,
        cost: plan.transport_cost(&cost),
        entropy: plan.entropy(),
        plan: plan.matrix().as_slice().to_vec(),
    })
}

/// `k` prototypes evenly spaced on the unit circle.
fn circle_prototypes(k: usize) -> pmjdot::Result<PrototypeBank> {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / k as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    PrototypeBank::from_rows(&rows)
}

/// For a unit feature at `angle` and `k` prototypes on the circle, returns
/// `k` cluster probabilities followed by the `k` joint costs to each prototype.
#[wasm_bindgen]
pub fn prototype_costs(angle: f64, k: usize, temperature: f64, alpha: f64, beta: f64) -> Result<Vec<f64>, JsError> {
    if !(2..=16).contains(&k) {
        return Err(JsError::new("prototype count must lie in 2..=16"));
    }
    let params = CostParams::new(alpha, beta, temperature).map_err(js_err)?;
    let protos = circle_prototypes(k).map_err(js_err)?;
    let x = [angle.cos(), angle.sin()];
    let probs = cluster_probabilities(&x, &protos, params.temperature);
    let costs: Vec<f64> = (0..k)
        .map(|i| {
            params.alpha * cosine_distance(protos.prototype(i), &x) + params.beta * label_distance(&probs, i)
        })
        .collect();
    Ok(probs.0.into_iter().chain(costs).collect())
}

/// A small experiment advanced one epoch per call.
#[wasm_bindgen]
pub struct Trainer {
    config: ExperimentConfig,
    setup: TrainingSetup,
    corpus: LabeledCorpus,
    state: TrainState,
    epoch: usize,
}

/// Desk-demo sized config: 5 classes in 16 dimensions.
pub fn demo_config(mode: Mode, seed: u64, gap: f64) -> ExperimentConfig {
    let mut config = ExperimentConfig { seed, mode, eval_k: 50, ..Default::default() };
    config.data = DomainSpec {
        class_count: 5,
        photos_per_class: 40,
        sketches_per_class: 30,
        queries_per_class: 6,
        ambient_dim: 16,
        ..Default::default()
    };
    config.data.domain_gap.rotation_planes = 8;
    config.data.domain_gap.translation = 1.5;
    config.data.domain_gap.rotation_angle = gap;
    config.training.batch_size = 16;
    config.training.prototype_count = 5;
    config.training.hidden_dims = vec![32];
    config.training.embedding_dim = 8;
    config
}

#[wasm_bindgen]
impl Trainer {
    /// `mode` is one of `v1`..`v5`; `gap` is the sketch rotation angle.
    #[wasm_bindgen(constructor)]
    pub fn new(mode: &str, seed: u32, gap: f64) -> Result<Trainer, JsError> {
        let mode: Mode = mode.parse().map_err(js_err)?;
        let config = demo_config(mode, seed as u64, gap);
        config.validate().map_err(js_err)?;
        let corpus = generate(&config.data).map_err(js_err)?;
        let state = initial_state(&config, &corpus).map_err(js_err)?;
        Ok(Trainer { setup: config.setup(), config, corpus, state, epoch: 0 })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Current retrieval mAP of sketch queries against the photo gallery.
    pub fn map(&self) -> Result<f64, JsError> {
        Ok(evaluate_encoder(&self.state.encoder, &self.corpus, self.config.eval_k).map_err(js_err)?.map)
    }

    /// Trains one epoch and returns the new mAP.
    pub fn step(&mut self) -> Result<f64, JsError> {
        self.epoch += 1;
        train_epoch(&mut self.state, &self.corpus, &self.config, &self.setup, self.epoch).map_err(js_err)?;
        self.map()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_plan_is_feasible() {
        let r = transport_plan(6, 9, 0.1, 0.05).ok().unwrap();
        assert!(r.converged());
        let sum: f64 = r.plan().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(r.plan().len(), 54);
    }

    #[test]
    fn nearest_prototype_is_cheapest() {
        let out = prototype_costs(0.1, 4, 0.1, 1.0, 1.0).ok().unwrap();
        let (probs, costs) = out.split_at(4);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = (0..4).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn trainer_runs_and_is_deterministic() {
        let mut a = Trainer::new("v5", 1, 0.6).ok().unwrap();
        let mut b = Trainer::new("v5", 1, 0.6).ok().unwrap();
        let ma = a.step().ok().unwrap();
        assert_eq!(ma, b.step().ok().unwrap());
        assert!((0.0..=1.0).contains(&ma));
        assert_eq!(a.epoch(), 1);
    }
}
