//! Seeded end-to-end experiments: configuration, ablation wiring,
//! per-epoch evaluation, artifacts and checkpoint/resume.
//!
//! Every epoch draws from its own ChaCha stream keyed by `(seed, epoch)`,
//! so a run resumed from a checkpoint replays exactly the randomness of an
//! uninterrupted run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correspondence::CostParams;
use crate::data::{generate, load_corpus, DomainSpec, Labeled, LabeledCorpus};
use crate::error::{Error, Result};
use crate::eval::{evaluate, LabeledFeature, RetrievalReport};
use crate::linalg::Matrix;
use crate::ot::SinkhornConfig;
use crate::representation::{
    batch_columns, full_correspondence, kmeans_init, lr_schedule, training_step, AlignmentMode,
    CorrespondenceRefresh, Encoder, StepDiagnostics, TrainState, TrainingConfig, TrainingSetup, PHOTO, SKETCH,
};

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const METRICS_CSV_HEADER: &str = "mode,seed,epoch,prec_at_k,map_at_k,map";

/// Ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Swapped prediction only.
    V1,
    /// Plus OT between the sketch batch and the photo batch.
    V2,
    /// Prototypes against the current batch only (`E = A`).
    V3,
    /// OT between the sketch bank and the photo bank, no prototypes.
    V4,
    /// Prototypes against memory banks.
    V5,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::V1, Mode::V2, Mode::V3, Mode::V4, Mode::V5];

    pub fn alignment(self) -> AlignmentMode {
        match self {
            Mode::V1 => AlignmentMode::None,
            Mode::V2 => AlignmentMode::BatchToBatch,
            Mode::V3 | Mode::V5 => AlignmentMode::Prototypes,
            Mode::V4 => AlignmentMode::BankToBank,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = Mode::ALL.iter().position(|m| m == self).unwrap() + 1;
        write!(f, "v{n}")
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected one of v1..v5")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub epochs: usize,
    pub mode: Mode,
    /// Retrieval cutoff; clipped to the gallery size.
    pub eval_k: usize,
    /// Output directory. Not part of the config hash.
    pub out: Option<PathBuf>,
    /// Corpus file to load instead of generating from `data`.
    pub corpus: Option<PathBuf>,
    pub data: DomainSpec,
    pub training: TrainingConfig,
    pub cost: CostParams,
    /// Correspondence solver.
    pub correspondence: SinkhornConfig,
    /// Cluster-assignment solver.
    pub assignment: SinkhornConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 30,
            mode: Mode::V5,
            eval_k: 200,
            out: None,
            corpus: None,
            data: DomainSpec::default(),
            training: TrainingConfig::default(),
            cost: CostParams::default(),
            correspondence: SinkhornConfig::default(),
            assignment: SinkhornConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("parsing {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_k == 0 {
            return Err(Error::Config("eval_k must be positive".into()));
        }
        if self.corpus.is_none() {
            self.data.validate()?;
        }
        self.setup().validate()
    }

    /// Step configuration with the mode's wiring applied.
    pub fn setup(&self) -> TrainingSetup {
        let mut training = self.training.clone();
        if self.mode == Mode::V3 {
            training.bank_size = Some(training.batch_size);
        }
        TrainingSetup {
            training,
            cost: self.cost,
            correspondence: self.correspondence,
            assignment: self.assignment,
            mode: self.mode.alignment(),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `epochs` and `out` so a
    /// run can be extended or relocated without invalidating checkpoints.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.epochs = 0;
        canon.out = None;
        let value = serde_json::to_value(&canon).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load_corpus(&self) -> Result<LabeledCorpus> {
        match &self.corpus {
            Some(path) => load_corpus(path),
            None => generate(&self.data),
        }
    }
}

/// Independent random stream for `(seed, epoch)`; stream 0 initializes.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub prec_at_k: f64,
    pub map_at_k: f64,
    pub map: f64,
    pub mean_alignment_loss: f64,
    pub mean_semantic_loss: f64,
    pub mean_total_loss: f64,
    pub max_plan_residual: f64,
    pub unconverged_plans: usize,
    pub clamped_logs: usize,
    /// Number of steps whose alignment solver ran, with the last plan shape.
    pub alignment_solves: usize,
    pub alignment_plan_shape: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub k: usize,
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsFile {
    pub fn csv_rows(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|e| format!("{},{},{},{:.6},{:.6},{:.6}", self.mode, self.seed, e.epoch, e.prec_at_k, e.map_at_k, e.map))
            .collect()
    }

    pub fn final_map(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.map)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub epoch: usize,
    pub report: RetrievalReport,
}

impl ReportFile {
    pub const CSV_HEADER: &'static str = "config_hash,mode,seed,epoch,k,prec_at_k,map_at_k,map";

    pub fn csv_summary(&self) -> String {
        format!("{},{},{},{},{}", self.config_hash, self.mode, self.seed, self.epoch, self.report.csv_summary())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Last completed epoch.
    pub epoch: usize,
    pub state: TrainState,
    pub history: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != CHECKPOINT_FORMAT || ckpt.code_version != CODE_VERSION {
            return Err(Error::Checkpoint(format!(
                "written by format {} / version {}, this build is format {CHECKPOINT_FORMAT} / version {CODE_VERSION}",
                ckpt.format_version, ckpt.code_version
            )));
        }
        if ckpt.config.hash() != ckpt.config_hash {
            return Err(Error::Checkpoint("stored config does not match its recorded hash".into()));
        }
        Ok(ckpt)
    }
}

/// Everything produced by a run, also written to disk when `out` is set.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsFile,
    pub report: ReportFile,
    pub checkpoint: Checkpoint,
}

fn labeled_features(encoder: &Encoder, records: &[Labeled]) -> Result<Vec<LabeledFeature>> {
    records
        .iter()
        .map(|r| Ok(LabeledFeature { label: r.label, vector: encoder.encode(&r.values)? }))
        .collect()
}

/// Retrieval of held-out sketches against the photo gallery.
pub fn evaluate_encoder(encoder: &Encoder, corpus: &LabeledCorpus, k: usize) -> Result<RetrievalReport> {
    let queries = labeled_features(encoder, &corpus.query_sketch)?;
    let gallery = labeled_features(encoder, &corpus.gallery_photo)?;
    evaluate(&queries, &gallery, k.min(gallery.len()))
}

/// Seeded encoder plus k-means prototypes on the initial photo features.
pub fn initial_state(config: &ExperimentConfig, corpus: &LabeledCorpus) -> Result<TrainState> {
    let setup = config.setup();
    let mut rng = epoch_rng(config.seed, 0);
    let encoder = Encoder::new(&setup.training.encoder_widths(corpus.dim), &mut rng)?;
    let feats = corpus.train_photo.iter().map(|x| encoder.encode(x)).collect::<Result<Vec<_>>>()?;
    let protos = kmeans_init(&feats, setup.training.prototype_count, &mut rng)
        .map_err(|e| e.context("prototype initialization"))?;
    TrainState::new(encoder, protos, &setup.training)
}

fn check_corpus(corpus: &LabeledCorpus, batch: usize) -> Result<()> {
    if corpus.train_sketch.len() < batch || corpus.train_photo.len() < batch {
        return Err(Error::Config(format!(
            "batch size {batch} exceeds a training split ({} sketches, {} photos)",
            corpus.train_sketch.len(),
            corpus.train_photo.len()
        )));
    }
    if corpus.query_sketch.is_empty() || corpus.gallery_photo.is_empty() {
        return Err(Error::Config("corpus has no query or gallery records".into()));
    }
    Ok(())
}

/// One training epoch; returns the per-step diagnostics.
pub fn train_epoch(
    state: &mut TrainState,
    corpus: &LabeledCorpus,
    config: &ExperimentConfig,
    setup: &TrainingSetup,
    epoch: usize,
) -> Result<Vec<StepDiagnostics>> {
    let t = &setup.training;
    let a = t.batch_size;
    let mut rng = epoch_rng(config.seed, epoch);
    let splits = [&corpus.train_sketch, &corpus.train_photo];
    let orders: [Vec<usize>; 2] = std::array::from_fn(|d| {
        let mut o: Vec<usize> = (0..splits[d].len()).collect();
        o.shuffle(&mut rng);
        o
    });
    let steps = splits.iter().map(|s| s.len()).max().unwrap() / a;
    let lr = lr_schedule(epoch - 1, t.learning_rate, t.lr_halving_period);

    let full_plans = if t.correspondence_refresh == CorrespondenceRefresh::Epoch && setup.mode == AlignmentMode::Prototypes {
        let plans = [SKETCH, PHOTO].map(|d| {
            full_correspondence(&state.encoder, &state.prototypes, splits[d], &setup.cost, &setup.correspondence)
                .map(|p| p.into_matrix())
        });
        let [s, p] = plans;
        Some([s?, p?])
    } else {
        None
    };

    let mut diags = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx: [Vec<usize>; 2] =
            std::array::from_fn(|d| (0..a).map(|i| orders[d][(step * a + i) % orders[d].len()]).collect());
        let batch: [Vec<Vec<f64>>; 2] = std::array::from_fn(|d| idx[d].iter().map(|&i| splits[d][i].clone()).collect());
        let plans: Option<[Matrix; 2]> = match &full_plans {
            Some(full) => Some([batch_columns(&full[SKETCH], &idx[SKETCH])?, batch_columns(&full[PHOTO], &idx[PHOTO])?]),
            None => None,
        };
        let diag = training_step(state, [&batch[SKETCH], &batch[PHOTO]], setup, lr, plans, &mut rng)
            .map_err(|e| e.context(format!("epoch {epoch}, step {step}")))?;
        diags.push(diag);
    }
    Ok(diags)
}

fn summarize(epoch: usize, report: &RetrievalReport, diags: &[StepDiagnostics]) -> EpochMetrics {
    let n = diags.len().max(1) as f64;
    let mean = |f: fn(&StepDiagnostics) -> f64| diags.iter().map(f).fold(0.0, |a, b| a + b) / n;
    EpochMetrics {
        epoch,
        prec_at_k: report.prec_at_k,
        map_at_k: report.map_at_k,
        map: report.map,
        mean_alignment_loss: mean(|d| d.alignment_loss),
        mean_semantic_loss: mean(|d| d.semantic_loss),
        mean_total_loss: mean(|d| d.total_loss),
        max_plan_residual: diags.iter().map(|d| d.max_plan_residual).fold(0.0, f64::max),
        unconverged_plans: diags.iter().map(|d| d.unconverged_plans).sum(),
        clamped_logs: diags.iter().map(|d| d.clamped_logs).sum(),
        alignment_solves: diags.iter().filter(|d| d.alignment_plan_shape.is_some()).count(),
        alignment_plan_shape: diags.iter().rev().find_map(|d| d.alignment_plan_shape),
    }
}

/// Trains from `start` (the last completed epoch) to `config.epochs`.
fn continue_run(
    config: &ExperimentConfig,
    corpus: &LabeledCorpus,
    mut state: TrainState,
    start: usize,
    mut history: Vec<EpochMetrics>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutput> {
    let setup = config.setup();
    let hash = config.hash();
    let mut last = None;
    for epoch in start + 1..=config.epochs {
        let diags = train_epoch(&mut state, corpus, config, &setup, epoch)?;
        let report = evaluate_encoder(&state.encoder, corpus, config.eval_k)
            .map_err(|e| e.context(format!("evaluation after epoch {epoch}")))?;
        let m = summarize(epoch, &report, &diags);
        on_epoch(&m);
        history.push(m);
        last = Some(report);
    }
    let report = match last {
        Some(r) => r,
        None => evaluate_encoder(&state.encoder, corpus, config.eval_k)?,
    };
    let epoch = start.max(config.epochs);
    let output = RunOutput {
        metrics: MetricsFile {
            config_hash: hash.clone(),
            mode: config.mode,
            seed: config.seed,
            k: report.k,
            epochs: history.clone(),
        },
        report: ReportFile { config_hash: hash.clone(), mode: config.mode, seed: config.seed, epoch, report },
        checkpoint: Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            code_version: CODE_VERSION.to_string(),
            config_hash: hash,
            config: config.clone(),
            epoch,
            state,
            history,
        },
    };
    if let Some(dir) = &config.out {
        write_outputs(dir, &output)?;
    }
    Ok(output)
}

/// Runs an experiment from scratch. `on_epoch` sees each epoch's metrics,
/// starting with the untrained evaluation at epoch 0.
pub fn run_with(config: &ExperimentConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<RunOutput> {
    config.validate()?;
    let corpus = config.load_corpus()?;
    check_corpus(&corpus, config.training.batch_size)?;
    let state = initial_state(config, &corpus)?;
    let report = evaluate_encoder(&state.encoder, &corpus, config.eval_k)?;
    let m0 = summarize(0, &report, &[]);
    on_epoch(&m0);
    continue_run(config, &corpus, state, 0, vec![m0], on_epoch)
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    run_with(config, |_| {})
}

/// Continues a checkpointed run up to `config.epochs`. The config must hash
/// to the checkpoint's recorded value.
pub fn resume_with(
    checkpoint: Checkpoint,
    config: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutput> {
    config.validate()?;
    let hash = config.hash();
    if hash != checkpoint.config_hash {
        return Err(Error::Checkpoint(format!(
            "config hash {hash} differs from the checkpoint's {}; refusing to resume",
            checkpoint.config_hash
        )));
    }
    if checkpoint.history.len() != checkpoint.epoch + 1 {
        return Err(Error::Checkpoint("history length does not match the recorded epoch".into()));
    }
    let corpus = config.load_corpus()?;
    check_corpus(&corpus, config.training.batch_size)?;
    continue_run(config, &corpus, checkpoint.state, checkpoint.epoch, checkpoint.history, on_epoch)
}

pub fn resume(path: &Path, config: &ExperimentConfig) -> Result<RunOutput> {
    resume_with(Checkpoint::load(path)?, config, |_| {})
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

pub fn write_outputs(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    write_file(&dir.join(METRICS_JSON), &(serde_json::to_string_pretty(&output.metrics)? + "\n"))?;
    let mut csv = vec![METRICS_CSV_HEADER.to_string()];
    csv.extend(output.metrics.csv_rows());
    write_file(&dir.join(METRICS_CSV), &(csv.join("\n") + "\n"))?;
    write_report(dir, &output.report)?;
    write_file(&dir.join(CHECKPOINT_JSON), &serde_json::to_string(&output.checkpoint)?)
}

pub fn write_report(dir: &Path, report: &ReportFile) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    write_file(&dir.join(REPORT_JSON), &(serde_json::to_string_pretty(report)? + "\n"))?;
    write_file(&dir.join(SUMMARY_CSV), &format!("{}\n{}\n", ReportFile::CSV_HEADER, report.csv_summary()))
}

/// Report for a checkpointed encoder on `corpus`.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, corpus: &LabeledCorpus, k: usize) -> Result<ReportFile> {
    if corpus.dim != checkpoint.state.encoder.input_dim() {
        return Err(Error::Shape(format!(
            "corpus dimension {} does not match the encoder input {}",
            corpus.dim,
            checkpoint.state.encoder.input_dim()
        )));
    }
    let report = evaluate_encoder(&checkpoint.state.encoder, corpus, k)?;
    Ok(ReportFile {
        config_hash: checkpoint.config_hash.clone(),
        mode: checkpoint.config.mode,
        seed: checkpoint.config.seed,
        epoch: checkpoint.epoch,
        report,
    })
}

/// Final mAP per mode, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub final_maps: Vec<f64>,
    pub mean_final_map: f64,
}

/// Runs every `(mode, seed)` pair into `<out>/<mode>-seed<seed>` and writes
/// `<out>/ablation.csv` (all epochs) and `<out>/ablation_summary.csv`.
pub fn ablate(
    base: &ExperimentConfig,
    modes: &[Mode],
    seeds: &[u64],
    mut on_run: impl FnMut(Mode, u64, &MetricsFile),
) -> Result<Vec<AblationRow>> {
    let mut csv = vec![METRICS_CSV_HEADER.to_string()];
    let mut rows = Vec::new();
    for &mode in modes {
        let mut finals = Vec::new();
        for &seed in seeds {
            let mut config = base.clone();
            config.mode = mode;
            config.seed = seed;
            config.out = base.out.as_ref().map(|d| d.join(format!("{mode}-seed{seed}")));
            let out = run(&config).map_err(|e| e.context(format!("mode {mode}, seed {seed}")))?;
            csv.extend(out.metrics.csv_rows());
            finals.push(out.metrics.final_map());
            on_run(mode, seed, &out.metrics);
        }
        let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
        rows.push(AblationRow { mode, seeds: seeds.to_vec(), final_maps: finals, mean_final_map: mean });
    }
    if let Some(dir) = &base.out {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("ablation.csv"), &(csv.join("\n") + "\n"))?;
        let mut summary = vec!["mode,seeds,mean_final_map".to_string()];
        summary.extend(rows.iter().map(|r| format!("{},{},{:.6}", r.mode, r.seeds.len(), r.mean_final_map)));
        write_file(&dir.join("ablation_summary.csv"), &(summary.join("\n") + "\n"))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.epochs = 2;
        c.eval_k = 20;
        c.data = DomainSpec {
            class_count: 3,
            photos_per_class: 12,
            sketches_per_class: 10,
            queries_per_class: 2,
            ambient_dim: 8,
            ..Default::default()
        };
        c.data.domain_gap.rotation_planes = 2;
        c.training.batch_size = 8;
        c.training.prototype_count = 3;
        c.training.hidden_dims = vec![12];
        c.training.embedding_dim = 4;
        c
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("v6".parse::<Mode>().is_err());
    }

    #[test]
    fn hash_ignores_epochs_and_out() {
        let a = tiny();
        let mut b = a.clone();
        b.epochs = 99;
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = tiny();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn zero_epochs_is_initial_evaluation() {
        let mut c = tiny();
        c.epochs = 0;
        c.mode = Mode::V1;
        let out = run(&c).unwrap();
        let corpus = c.load_corpus().unwrap();
        let state = initial_state(&c, &corpus).unwrap();
        assert_eq!(out.report.report, evaluate_encoder(&state.encoder, &corpus, 20).unwrap());
        assert_eq!(out.metrics.epochs.len(), 1);
    }

    #[test]
    fn v3_uses_batch_sized_banks() {
        let mut c = tiny();
        c.mode = Mode::V3;
        assert_eq!(c.setup().training.bank_size(), 8);
        c.mode = Mode::V5;
        assert_eq!(c.setup().training.bank_size(), 64);
    }

    #[test]
    fn resume_matches_straight_run() {
        let c = tiny();
        let straight = run(&c).unwrap();
        let mut half = c.clone();
        half.epochs = 1;
        let first = run(&half).unwrap();
        let resumed = resume_with(first.checkpoint, &c, |_| {}).unwrap();
        assert_eq!(resumed.metrics, straight.metrics);
        assert_eq!(resumed.checkpoint.state, straight.checkpoint.state);
    }

    #[test]
    fn resume_refuses_changed_config() {
        let c = tiny();
        let out = run(&ExperimentConfig { epochs: 1, ..c.clone() }).unwrap();
        let mut other = c;
        other.training.mu = 5.0;
        assert!(matches!(resume_with(out.checkpoint, &other, |_| {}), Err(Error::Checkpoint(_))));
    }
}
