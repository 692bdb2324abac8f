//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pmjdot::correspondence::{MemoryBank, PrototypeBank};
use pmjdot::eval::{evaluate, LabeledFeature};
use pmjdot::experiment::Checkpoint;
use pmjdot::linalg::{dot, normalized, Matrix};
use pmjdot::ot::{sinkhorn_min, CostMatrix, SinkhornConfig};
use pmjdot::representation::{alignment_loss_domain, swav_loss_domain, Encoder, LossGrad};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform_cost(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CostMatrix {
    CostMatrix::new(Matrix::from_fn(r, c, |_, _| rng.random::<f64>())).unwrap()
}

fn marginal_violation(plan: &Matrix) -> f64 {
    let (r, c) = (plan.rows(), plan.cols());
    let rows = (0..r).map(|i| ((0..c).map(|j| plan.get(i, j)).sum::<f64>() - 1.0 / r as f64).abs());
    let cols = (0..c).map(|j| ((0..r).map(|i| plan.get(i, j)).sum::<f64>() - 1.0 / c as f64).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

fn sinkhorn_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let lambdas = [0.01, 0.05, 0.5];
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut negative = 0;
    for i in 0..200 {
        let (r, c) = (rng.random_range(1..=50), rng.random_range(1..=400));
        let cost = uniform_cost(&mut rng, r, c);
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(lambdas[i % 3])).map_err(|e| e.to_string())?;
        worst = worst.max(marginal_violation(plan.matrix()));
        negative += plan.matrix().as_slice().iter().filter(|&&p| p < 0.0).count();
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && negative == 0 && secs < 10.0,
        format!("200 instances, max violation {worst:.2e}, negative entries {negative}, {secs:.2}s"),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn sinkhorn_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = 2 + i % 5;
        let cost = uniform_cost(&mut rng, n, n);
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(1e-3)).map_err(|e| e.to_string())?;
        worst = worst.max((plan.transport_cost(&cost) - best).abs() / best);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 0.01 && secs < 5.0, format!("50 instances n<=6, max relative gap {worst:.2e}, {secs:.2}s"))
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    normalized(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>())
}

fn positive_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    let m = Matrix::from_fn(r, c, |_, _| rng.random_range(0.1..1.0));
    let total: f64 = m.as_slice().iter().sum();
    m.map(|v| v / total)
}

/// Loss over encoder parameters and prototype entries, with the analytic
/// gradient flattened as `[encoder params.., prototype entries..]`.
fn loss_and_grad(
    encoder: &Encoder,
    protos: &PrototypeBank,
    inputs: &[Vec<Vec<f64>>],
    loss: &dyn Fn(&[Vec<Vec<f64>>], &PrototypeBank) -> Vec<LossGrad>,
) -> (f64, Vec<f64>) {
    let caches: Vec<Vec<_>> = inputs.iter().map(|set| set.iter().map(|x| encoder.forward(x).unwrap()).collect()).collect();
    let feats: Vec<Vec<Vec<f64>>> = caches.iter().map(|set| set.iter().map(|c| c.output.clone()).collect()).collect();
    let parts = loss(&feats, protos);
    let mut grad = vec![0.0; encoder.param_count()];
    let mut proto_grad = vec![0.0; protos.count() * protos.dim()];
    for (part, set) in parts.iter().zip(&caches) {
        for (g, cache) in part.features.iter().zip(set) {
            encoder.backward(cache, g, &mut grad);
        }
        for (acc, g) in proto_grad.iter_mut().zip(part.prototypes.as_slice()) {
            *acc += g;
        }
    }
    grad.extend(proto_grad);
    (parts.iter().map(|p| p.loss).sum(), grad)
}

fn gradient_error(seed: u64, loss: &dyn Fn(&[Vec<Vec<f64>>], &PrototypeBank) -> Vec<LossGrad>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = Encoder::new(&[7, 9, 5], &mut rng).unwrap();
    let protos = PrototypeBank::from_rows(&(0..4).map(|_| unit(&mut rng, 5)).collect::<Vec<_>>()).unwrap();
    let inputs: Vec<Vec<Vec<f64>>> =
        (0..2).map(|_| (0..6).map(|_| (0..7).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()).collect();
    let (_, analytic) = loss_and_grad(&encoder, &protos, &inputs, loss);
    let h = 1e-5;
    let n_enc = encoder.param_count();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let eval = |delta: f64| {
            let mut e = encoder.clone();
            let mut p = protos.clone();
            if i < n_enc {
                e.params_mut()[i] += delta;
            } else {
                p.matrix_mut().as_mut_slice()[i - n_enc] += delta;
            }
            loss_and_grad(&e, &p, &inputs, loss).0
        };
        numeric.push((eval(h) - eval(-h)) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = dot(&analytic, &analytic).sqrt().max(dot(&numeric, &numeric).sqrt()).max(1e-12);
    diff / scale
}

fn gradient_check() -> Outcome {
    let mut worst_align = 0.0f64;
    let mut worst_swav = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let plans = [positive_matrix(&mut rng, 4, 6), positive_matrix(&mut rng, 4, 6)];
        let align = move |feats: &[Vec<Vec<f64>>], protos: &PrototypeBank| {
            (0..2).map(|d| alignment_loss_domain(&plans[d], protos, &feats[d], 1.0, 1.0, 0.1).unwrap()).collect()
        };
        worst_align = worst_align.max(gradient_error(seed, &align));
        let assign = [positive_matrix(&mut rng, 4, 6), positive_matrix(&mut rng, 4, 6)];
        let swav = move |feats: &[Vec<Vec<f64>>], protos: &PrototypeBank| {
            swav_loss_domain(&feats[0], &feats[1], &assign[0], &assign[1], protos, 0.1).unwrap().to_vec()
        };
        worst_swav = worst_swav.max(gradient_error(seed, &swav));
    }
    check(
        worst_align < 1e-4 && worst_swav < 1e-4,
        format!("20 seeds each, max relative error alignment {worst_align:.2e}, swav {worst_swav:.2e}"),
    )
}

struct Naive {
    prec_k: f64,
    ap_k: f64,
    ap: f64,
    top: Vec<usize>,
}

/// Straightforward reference: selection sort by (distance, index), then
/// metrics read off the ranked relevance list.
fn naive_metrics(query: &LabeledFeature, gallery: &[LabeledFeature], k: usize) -> Naive {
    let mut left: Vec<(f64, usize)> = gallery.iter().enumerate().map(|(i, g)| (1.0 - dot(&query.vector, &g.vector), i)).collect();
    let mut ranked = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if left[i].0 < left[best].0 || (left[i].0 == left[best].0 && left[i].1 < left[best].1) {
                best = i;
            }
        }
        ranked.push(left.remove(best).1);
    }
    let rel: Vec<bool> = ranked.iter().map(|&g| gallery[g].label == query.label).collect();
    let precision_at = |r: usize| rel[..=r].iter().filter(|&&b| b).count() as f64 / (r + 1) as f64;
    let hits_k = rel[..k].iter().filter(|&&b| b).count();
    let total = rel.iter().filter(|&&b| b).count();
    let sum_k: f64 = (0..k).filter(|&r| rel[r]).map(precision_at).sum();
    let sum: f64 = (0..rel.len()).filter(|&r| rel[r]).map(precision_at).sum();
    Naive {
        prec_k: hits_k as f64 / k as f64,
        ap_k: if hits_k == 0 { 0.0 } else { sum_k / hits_k as f64 },
        ap: if total == 0 { 0.0 } else { sum / total as f64 },
        top: ranked[..k].to_vec(),
    }
}

fn random_labeled(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Vec<LabeledFeature> {
    (0..n).map(|_| LabeledFeature { label: rng.random_range(0..classes), vector: unit(rng, d) }).collect()
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut mismatches = 0;
    for _ in 0..20 {
        let (nq, ng) = (rng.random_range(1..=50), rng.random_range(10..=200));
        let classes = rng.random_range(2..8);
        let queries = random_labeled(&mut rng, nq, 4, classes);
        // coarse coordinates produce exact distance ties
        let mut gallery = random_labeled(&mut rng, ng, 4, classes);
        for g in gallery.iter_mut().step_by(3) {
            g.vector = normalized(&g.vector.iter().map(|v| v.signum()).collect::<Vec<_>>());
        }
        let k = rng.random_range(1..=ng);
        let report = evaluate(&queries, &gallery, k).map_err(|e| e.to_string())?;
        let naive: Vec<Naive> = queries.iter().map(|q| naive_metrics(q, &gallery, k)).collect();
        for (rec, n) in report.queries.iter().zip(&naive) {
            if rec.top_k != n.top || rec.prec_at_k != n.prec_k || rec.ap_at_k != n.ap_k || rec.ap != n.ap {
                mismatches += 1;
            }
        }
        let mean = |f: fn(&Naive) -> f64| naive.iter().map(f).sum::<f64>() / naive.len() as f64;
        if report.map != mean(|n| n.ap) || report.map_at_k != mean(|n| n.ap_k) || report.prec_at_k != mean(|n| n.prec_k) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("20 instances up to 50x200, {mismatches} mismatches"))
}

fn chance_map() -> Outcome {
    let classes = 10;
    let mut maps = Vec::new();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..classes * 1000).map(|i| i % classes).collect();
        labels.shuffle(&mut rng);
        let gallery: Vec<LabeledFeature> =
            labels.into_iter().map(|label| LabeledFeature { label, vector: unit(&mut rng, 16) }).collect();
        let queries = random_labeled(&mut rng, 100, 16, classes);
        maps.push(evaluate(&queries, &gallery, 200).map_err(|e| e.to_string())?.map);
    }
    let mean = maps.iter().sum::<f64>() / maps.len() as f64;
    let target = 1.0 / classes as f64;
    check((mean - target).abs() <= 0.02, format!("random features, 5 seeds, mean mAP {mean:.4} vs {target:.2}"))
}

fn fifo_replay() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    for _ in 0..1000 {
        let batch = rng.random_range(1..=5);
        let capacity = batch * rng.random_range(1..=6);
        let mut bank = MemoryBank::new(capacity, batch).unwrap();
        let mut history: Vec<Vec<Vec<f64>>> = Vec::new();
        for _ in 0..rng.random_range(0..=20) {
            let b: Vec<Vec<f64>> = (0..batch).map(|_| unit(&mut rng, 3)).collect();
            bank.push(&b).unwrap();
            history.push(b);
        }
        let expected: Vec<Vec<f64>> = history.iter().rev().flatten().take(capacity).cloned().collect();
        let actual: Vec<Vec<f64>> = bank.iter().cloned().collect();
        if actual != expected {
            failures += 1;
        }
    }
    check(failures == 0, format!("1000 push sequences, {failures} disagree with replay"))
}

fn pmjdot(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pmjdot")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("pmjdot {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn end_to_end(dir: &Path) -> Outcome {
    let out = dir.join("ablate");
    let start = Instant::now();
    let stdout = pmjdot(&["ablate", "--seeds", "3", "--epochs", "30", "--out", out.to_str().unwrap()])?;
    let mut means = std::collections::BTreeMap::new();
    for line in stdout.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        means.insert(fields[0].to_string(), fields[2].parse::<f64>().map_err(|e| e.to_string())?);
    }
    let m = |k: &str| means.get(k).copied().unwrap_or(f64::NAN);
    let (v1, v2, v5) = (m("v1"), m("v2"), m("v5"));
    check(
        v5 > v2 && v2 > v1 && v5 >= v1 + 0.10,
        format!(
            "final mAP over seeds 0-2: v1 {v1:.4} v2 {v2:.4} v3 {:.4} v4 {:.4} v5 {v5:.4}, {:.0}s",
            m("v3"),
            m("v4"),
            start.elapsed().as_secs_f64()
        ),
    )
}

const SHORT_EPOCHS: &str = "6";

fn determinism(dir: &Path) -> Outcome {
    let (a, b) = (dir.join("det-a"), dir.join("det-b"));
    for d in [&a, &b] {
        pmjdot(&["train", "--seed", "4", "--epochs", SHORT_EPOCHS, "--quiet", "--out", d.to_str().unwrap()])?;
    }
    let same = read(&a.join("metrics.json"))? == read(&b.join("metrics.json"))?;
    check(same, format!("two {SHORT_EPOCHS}-epoch v5 runs, metrics.json identical: {same}"))
}

fn resume(dir: &Path) -> Outcome {
    let straight = dir.join("det-a");
    let half = dir.join("half");
    let resumed = dir.join("resumed");
    pmjdot(&["train", "--seed", "4", "--epochs", "3", "--quiet", "--out", half.to_str().unwrap()])?;
    let ckpt = half.join("checkpoint.json");
    pmjdot(&[
        "train",
        "--resume",
        ckpt.to_str().unwrap(),
        "--epochs",
        SHORT_EPOCHS,
        "--quiet",
        "--out",
        resumed.to_str().unwrap(),
    ])?;
    let metrics = read(&straight.join("metrics.json"))? == read(&resumed.join("metrics.json"))?;
    let load = |d: &Path| Checkpoint::load(&d.join("checkpoint.json")).map_err(|e| e.to_string());
    let (a, b) = (load(&straight)?, load(&resumed)?);
    let state = a.state == b.state && a.history == b.history && a.config_hash == b.config_hash;
    let refused = Command::new(env!("CARGO_BIN_EXE_pmjdot"))
        .args(["train", "--resume", ckpt.to_str().unwrap(), "--seed", "5", "--quiet"])
        .args(["--out", dir.join("refused").to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    let refused = !refused.status.success();
    check(
        metrics && state && refused,
        format!("resume at epoch 3 of {SHORT_EPOCHS}: metrics identical {metrics}, trained state identical {state}, changed config refused {refused}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("sinkhorn feasibility", Box::new(sinkhorn_feasibility)),
        ("sinkhorn vs exact oracle", Box::new(sinkhorn_vs_oracle)),
        ("finite-difference gradients", Box::new(gradient_check)),
        ("retrieval metrics vs naive reference", Box::new(metric_oracle)),
        ("chance-level mAP", Box::new(chance_map)),
        ("FIFO bank vs replay", Box::new(fifo_replay)),
        ("deterministic training", Box::new(|| determinism(dir.path()))),
        ("exact resume", Box::new(|| resume(dir.path()))),
        ("end-to-end mode ordering", Box::new(|| end_to_end(dir.path()))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
