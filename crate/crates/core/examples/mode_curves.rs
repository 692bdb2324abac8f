//! Prints per-seed mAP curves (every fifth epoch) and mean final mAP per mode.
//!
//! `cargo run --release --example mode_curves [config.toml]`, with optional
//! `SEEDS`, `EPOCHS` and `MODES=v1,v2,v5` environment variables.

use std::time::Instant;

use pmjdot::experiment::{run_with, ExperimentConfig, Mode};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut base = match args.first() {
        Some(p) if p.ends_with(".toml") => ExperimentConfig::load(p.as_ref()).unwrap(),
        _ => ExperimentConfig::default(),
    };
    let seeds: u64 = std::env::var("SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(1);
    if let Ok(e) = std::env::var("EPOCHS") {
        base.epochs = e.parse().unwrap();
    }
    let modes: Vec<Mode> = std::env::var("MODES")
        .unwrap_or_else(|_| "v1,v2,v5".into())
        .split(',')
        .map(|m| m.parse().unwrap())
        .collect();
    for mode in modes {
        let mut finals = Vec::new();
        for seed in 0..seeds {
            let t = Instant::now();
            let mut c = base.clone();
            c.mode = mode;
            c.seed = seed;
            let mut curve = Vec::new();
            let out = run_with(&c, |m| curve.push(format!("{:.3}", m.map))).unwrap();
            let last = out.metrics.epochs.last().unwrap();
            println!(
                "{mode} seed {seed}: {:.1}s loss a={:.3} s={:.3} unconv={} curve {}",
                t.elapsed().as_secs_f64(),
                last.mean_alignment_loss,
                last.mean_semantic_loss,
                last.unconverged_plans,
                curve.iter().step_by(5).cloned().collect::<Vec<_>>().join(" ")
            );
            finals.push(out.metrics.final_map());
        }
        println!("{mode} mean {:.4}", finals.iter().sum::<f64>() / finals.len() as f64);
    }
}
