// Scratch probe: fresh dataset per step, so any validation improvement is
// generalization rather than memorization.

use tempo_core::eval::{evaluate_model, TargetMode};
use tempo_core::model::{ModelConfig, TempoModel};
use tempo_core::rng::{derive_seed, Xoshiro256pp};
use tempo_core::sim::{generate_dataset, ExperimentConfig};
use tempo_core::tensor::{Adam, AdamConfig};
use tempo_core::train::{training_step, LossWeights, TrainDataset};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let exp_id: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);

    let exp = ExperimentConfig::new(exp_id, 12, 55);
    let model_cfg = ModelConfig::for_biomarkers(12);
    let mut model = TempoModel::<f32>::new(model_cfg, 1).unwrap();
    let mut adam = Adam::new(AdamConfig::with_lr(lr), model.params());
    let mut pair_rng = Xoshiro256pp::from_seed(2);
    let weights = LossWeights::default();
    let continuous = matches!(exp_id, 8 | 9);
    let mode = TargetMode::for_experiment(exp_id).unwrap();

    let val: Vec<TrainDataset> = (0..10)
        .map(|i| {
            let mut c = exp.clone();
            c.seed = derive_seed(777_000, i);
            let (cohort, truth) = generate_dataset(&c).unwrap();
            TrainDataset::new(cohort, truth, continuous).unwrap()
        })
        .collect();

    for step in 0..steps {
        let mut c = exp.clone();
        c.seed = derive_seed(111_000, step as u64);
        let (cohort, truth) = generate_dataset(&c).unwrap();
        let ds = TrainDataset::new(cohort, truth, continuous).unwrap();
        let losses =
            training_step(&mut model, &mut adam, &ds, &weights, continuous, &mut pair_rng).unwrap();

        if (step + 1) % 100 == 0 {
            let mut tau = 0.0;
            let mut mae = 0.0;
            for ds in &val {
                let e = evaluate_model(&model, &ds.cohort, &ds.truth, mode).unwrap();
                tau += e.tau / val.len() as f64;
                mae += e.staging_mae / val.len() as f64;
            }
            println!(
                "step {:5}: loss {:.4} (direct {:.4} pair {:.4} stage {:.4})  val tau {:.4} mae {:.3}",
                step + 1,
                losses.total,
                losses.direct,
                losses.pair,
                losses.stage,
                tau,
                mae
            );
        }
    }
}
