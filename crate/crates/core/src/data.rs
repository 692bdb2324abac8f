//! Synthetic two-domain corpus and its CSV file format.
//!
//! Both domains draw Gaussian clouds around shared class means. The photo
//! domain uses the means as-is; the sketch domain rotates them in a few
//! coordinate planes, translates them, and adds extra noise. Labels are
//! written only for the query and gallery splits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::normalize_in_place;

/// Structured shift applied to the sketch domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainGap {
    /// Rotation angle, in radians, applied in each rotated plane.
    pub rotation_angle: f64,
    /// Number of disjoint coordinate planes to rotate.
    pub rotation_planes: usize,
    /// Length of the translation applied to every sketch.
    pub translation: f64,
    /// Extra per-coordinate noise on sketches, added to `noise`.
    pub extra_noise: f64,
}

impl Default for DomainGap {
    fn default() -> Self {
        Self { rotation_angle: 0.8, rotation_planes: 16, translation: 3.0, extra_noise: 0.15 }
    }
}

impl DomainGap {
    pub fn none() -> Self {
        Self { rotation_angle: 0.0, rotation_planes: 0, translation: 0.0, extra_noise: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    pub class_count: usize,
    pub photos_per_class: usize,
    /// Training plus query sketches per class.
    pub sketches_per_class: usize,
    /// Held-out query sketches per class, taken from `sketches_per_class`.
    pub queries_per_class: usize,
    pub ambient_dim: usize,
    /// Length of each class mean.
    pub class_separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub domain_gap: DomainGap,
    pub seed: u64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            class_count: 10,
            photos_per_class: 100,
            sketches_per_class: 60,
            queries_per_class: 10,
            ambient_dim: 32,
            class_separation: 3.0,
            noise: 0.35,
            domain_gap: DomainGap::default(),
            seed: 7,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.ambient_dim == 0 || self.photos_per_class == 0 {
            return Err(Error::invalid("class_count, ambient_dim and photos_per_class must be positive"));
        }
        if self.queries_per_class == 0 || self.queries_per_class >= self.sketches_per_class {
            return Err(Error::invalid("queries_per_class must be positive and below sketches_per_class"));
        }
        if 2 * self.domain_gap.rotation_planes > self.ambient_dim {
            return Err(Error::invalid("too many rotation planes for the ambient dimension"));
        }
        let reals = [self.class_separation, self.noise, self.domain_gap.translation, self.domain_gap.extra_noise];
        if reals.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("separation, noise and gap magnitudes must be nonnegative"));
        }
        Ok(())
    }
}

/// A labeled evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub label: usize,
    pub values: Vec<f64>,
}

/// Unlabeled training sets plus labeled query/gallery sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledCorpus {
    pub dim: usize,
    pub train_sketch: Vec<Vec<f64>>,
    pub train_photo: Vec<Vec<f64>>,
    pub query_sketch: Vec<Labeled>,
    pub gallery_photo: Vec<Labeled>,
}

impl LabeledCorpus {
    pub fn class_count(&self) -> usize {
        self.query_sketch.iter().chain(&self.gallery_photo).map(|r| r.label + 1).max().unwrap_or(0)
    }
}

/// Rounds to the 9 significant digits the file format keeps, so that
/// generated corpora survive a save/load round trip unchanged.
fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().unwrap()
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Builds the corpus described by `spec`; deterministic in `spec.seed`.
pub fn generate(spec: &DomainSpec) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.ambient_dim;
    let gap = &spec.domain_gap;

    let means: Vec<Vec<f64>> = (0..spec.class_count)
        .map(|_| {
            let mut m = gaussian(&mut rng, d);
            normalize_in_place(&mut m);
            m.iter().map(|v| v * spec.class_separation).collect()
        })
        .collect();
    let mut coords: Vec<usize> = (0..d).collect();
    coords.shuffle(&mut rng);
    let planes: Vec<(usize, usize)> = (0..gap.rotation_planes).map(|p| (coords[2 * p], coords[2 * p + 1])).collect();
    let mut shift = gaussian(&mut rng, d);
    normalize_in_place(&mut shift);
    shift.iter_mut().for_each(|v| *v *= gap.translation);
    let (sin, cos) = gap.rotation_angle.sin_cos();
    let sketch_means: Vec<Vec<f64>> = means
        .iter()
        .map(|m| {
            let mut r = m.clone();
            for &(p, q) in &planes {
                let (x, y) = (m[p], m[q]);
                r[p] = cos * x - sin * y;
                r[q] = sin * x + cos * y;
            }
            r.iter().zip(&shift).map(|(a, b)| a + b).collect()
        })
        .collect();

    let sketch_sigma = spec.noise + gap.extra_noise;
    let draw = |mean: &[f64], sigma: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        mean.iter().map(|m| quantize(m + sigma * Distribution::<f64>::sample(&StandardNormal, rng))).collect()
    };

    let mut corpus = LabeledCorpus { dim: d, ..Default::default() };
    let mut photos = Vec::new();
    let mut sketches = Vec::new();
    for c in 0..spec.class_count {
        for _ in 0..spec.photos_per_class {
            photos.push(Labeled { label: c, values: draw(&means[c], spec.noise, &mut rng) });
        }
        for s in 0..spec.sketches_per_class {
            let rec = Labeled { label: c, values: draw(&sketch_means[c], sketch_sigma, &mut rng) };
            if s < spec.queries_per_class {
                corpus.query_sketch.push(rec);
            } else {
                sketches.push(rec);
            }
        }
    }
    // training order carries no class information
    photos.shuffle(&mut rng);
    sketches.shuffle(&mut rng);
    corpus.train_photo = photos.iter().map(|r| r.values.clone()).collect();
    corpus.train_sketch = sketches.into_iter().map(|r| r.values).collect();
    // the gallery is the (labeled) training photo set
    corpus.gallery_photo = photos;
    Ok(corpus)
}

const SPLITS: [&str; 3] = ["train", "query", "gallery"];

/// Writes the corpus as CSV: `split,domain,id,label,v0,...`.
pub fn write_corpus(corpus: &LabeledCorpus, out: &mut impl Write) -> Result<()> {
    let mut header = String::from("split,domain,id,label");
    for k in 0..corpus.dim {
        write!(header, ",v{k}").unwrap();
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    let mut emit = |split: &str, domain: &str, id: usize, label: Option<usize>, values: &[f64]| -> Result<()> {
        line.clear();
        write!(line, "{split},{domain},{id},").unwrap();
        match label {
            Some(l) => write!(line, "{l}").unwrap(),
            None => line.push('-'),
        }
        for v in values {
            write!(line, ",{v:.8e}").unwrap();
        }
        writeln!(out, "{line}")?;
        Ok(())
    };
    for (i, v) in corpus.train_sketch.iter().enumerate() {
        emit("train", "sketch", i, None, v)?;
    }
    for (i, v) in corpus.train_photo.iter().enumerate() {
        emit("train", "photo", i, None, v)?;
    }
    for (i, r) in corpus.query_sketch.iter().enumerate() {
        emit("query", "sketch", i, Some(r.label), &r.values)?;
    }
    for (i, r) in corpus.gallery_photo.iter().enumerate() {
        emit("gallery", "photo", i, Some(r.label), &r.values)?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &LabeledCorpus, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_corpus(corpus, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parses the CSV format. Record indices in errors count data lines from 0.
pub fn read_corpus(input: impl BufRead) -> Result<LabeledCorpus> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::Parse { record: 0, message: "missing header line".into() })??;
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    if columns.len() < 5 || columns[..4] != ["split", "domain", "id", "label"] {
        return Err(Error::Parse { record: 0, message: "header must start with split,domain,id,label".into() });
    }
    for (k, name) in columns[4..].iter().enumerate() {
        if *name != format!("v{k}") {
            return Err(Error::Parse { record: 0, message: format!("unexpected header column {name}") });
        }
    }
    let dim = columns.len() - 4;
    let mut corpus = LabeledCorpus { dim, ..Default::default() };
    for (record, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |message: String| Error::Parse { record, message };
        if fields.len() != dim + 4 {
            return Err(parse_err(format!("expected {} fields, found {}", dim + 4, fields.len())));
        }
        let split = fields[0];
        if !SPLITS.contains(&split) {
            return Err(parse_err(format!("unknown split {split:?}")));
        }
        let domain = fields[1];
        fields[2].parse::<usize>().map_err(|e| parse_err(format!("bad id: {e}")))?;
        let label = match fields[3] {
            "-" => None,
            l => Some(l.parse::<usize>().map_err(|e| parse_err(format!("bad label {l:?}: {e}")))?),
        };
        let values = fields[4..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(format!("bad value {v:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let need_label = |label: Option<usize>| {
            label.ok_or(Error::Validation { record, message: format!("{split} records need a label") })
        };
        match (split, domain) {
            ("train", _) if label.is_some() => {
                return Err(Error::Validation { record, message: "training records must not carry labels".into() })
            }
            ("train", "sketch") => corpus.train_sketch.push(values),
            ("train", "photo") => corpus.train_photo.push(values),
            ("query", "sketch") => corpus.query_sketch.push(Labeled { label: need_label(label)?, values }),
            ("gallery", "photo") => corpus.gallery_photo.push(Labeled { label: need_label(label)?, values }),
            _ => return Err(parse_err(format!("split {split:?} cannot hold domain {domain:?}"))),
        }
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<LabeledCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    read_corpus(std::io::BufReader::new(file))
}
