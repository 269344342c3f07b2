// Scratch harness for watching desk-scale convergence.

use std::time::Instant;
use tempo_core::eval::{evaluate_model, TargetMode};
use tempo_core::model::ModelConfig;
use tempo_core::rng::derive_seed;
use tempo_core::sim::{generate_dataset, ExperimentConfig};
use tempo_core::train::{fit, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let exp_id: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3);
    let n_train: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5);

    let mut cfg = TrainConfig::for_experiment(exp_id, 7).unwrap();
    cfg.n_train_datasets = n_train;
    cfg.n_val_datasets = 5;
    cfg.epochs = epochs;
    let exp = ExperimentConfig::new(exp_id, 12, 1000 + exp_id as u64);
    let model_cfg = ModelConfig::for_biomarkers(12);

    let start = Instant::now();
    let result = fit::<f32>(&cfg, &exp, &model_cfg).unwrap();
    println!(
        "trained exp {exp_id}: {n_train} datasets x {epochs} epochs in {:.1}s (best epoch {})",
        start.elapsed().as_secs_f64(),
        result.best_epoch
    );
    for e in &result.log {
        println!(
            "  epoch {:2}: train {:.4} (seq {:.4} stage {:.4})  val {:.4}",
            e.epoch, e.train_loss, e.train_seq, e.train_stage, e.val_loss
        );
    }

    let mode = TargetMode::for_experiment(exp_id).unwrap();
    let mut taus = Vec::new();
    let mut maes = Vec::new();
    let mut seq_maes = Vec::new();
    for i in 0..10u64 {
        let mut test_cfg = exp.clone();
        test_cfg.seed = derive_seed(9_000_000 + exp_id as u64, i);
        let (cohort, truth) = generate_dataset(&test_cfg).unwrap();
        let e = evaluate_model(&result.model, &cohort, &truth, mode).unwrap();
        taus.push(e.tau);
        maes.push(e.staging_mae);
        seq_maes.push(e.sequence_mae);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "test (10 fresh datasets): tau {:.4}  stage_mae {:.4}  seq_mae {:.4}",
        mean(&taus),
        mean(&maes),
        mean(&seq_maes)
    );
}
