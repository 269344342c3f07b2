use super::*;
use crate::rng::derive_seed;
use crate::sim::{generate_dataset, Cohort, ExperimentConfig};
use crate::tensor::Tape;

fn small_config() -> ModelConfig {
    ModelConfig {
        n_biomarkers: 5,
        d_model: 16,
        n_heads: 4,
        seq_layers: 2,
        stage_layers: 2,
        ffn_mult: 2,
    }
}

fn small_cohort(seed: u64) -> Cohort {
    let mut cfg = ExperimentConfig::new(3, 5, seed);
    cfg.cohort_size = 24;
    generate_dataset(&cfg).unwrap().0
}

fn permuted(cohort: &Cohort, perm: &[usize]) -> Cohort {
    let b = cohort.n_biomarkers;
    let mut raw = Vec::with_capacity(cohort.raw.len());
    let mut dx = Vec::with_capacity(cohort.diagnosis.len());
    for &p in perm {
        raw.extend_from_slice(&cohort.raw[p * b..(p + 1) * b]);
        dx.push(cohort.diagnosis[p]);
    }
    Cohort::from_raw(raw, dx, b).unwrap()
}

#[test]
fn identical_patients_pool_to_their_shared_encoding() {
    // Every patient identical: pooled token equals any single encoding, and
    // a one-patient cohort pools to exactly its own row.
    let model = TempoModel::<f64>::new(small_config(), 7).unwrap();
    let row = [0.3f32, -1.2, 0.8, 2.0, -0.5];
    let mut raw = Vec::new();
    for _ in 0..6 {
        raw.extend_from_slice(&row);
    }
    let many = Cohort::from_raw(raw, vec![1; 6], 5).unwrap();
    let one = Cohort::from_raw(row.to_vec(), vec![1], 5).unwrap();
    // Identical rows z-score to all zeros either way, so encodings match.
    let mut tape_many = Tape::new();
    let e_many = model.patient_encode_pool(&mut tape_many, &many).unwrap();
    let mut tape_one = Tape::new();
    let e_one = model.patient_encode_pool(&mut tape_one, &one).unwrap();
    for (a, b) in tape_many
        .value(e_many)
        .data()
        .iter()
        .zip(tape_one.value(e_one).data())
    {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pooled_tokens_invariant_under_patient_permutation() {
    let model = TempoModel::<f64>::new(small_config(), 8).unwrap();
    let cohort = small_cohort(100);
    let mut perm: Vec<usize> = (0..cohort.cohort_size).collect();
    perm.reverse();
    perm.swap(0, 5);
    let shuffled = permuted(&cohort, &perm);
    let mut t1 = Tape::new();
    let e1 = model.patient_encode_pool(&mut t1, &cohort).unwrap();
    let mut t2 = Tape::new();
    let e2 = model.patient_encode_pool(&mut t2, &shuffled).unwrap();
    for (a, b) in t1.value(e1).data().iter().zip(t2.value(e2).data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn scores_have_length_b_and_zero_head_gives_bias() {
    let mut model = TempoModel::<f64>::new(small_config(), 9).unwrap();
    // Zero the ranking head weight and set its bias to 0.37.
    let w_slot = model.params().slot_of("ranking_head.weight").unwrap();
    let b_slot = model.params().slot_of("ranking_head.bias").unwrap();
    for v in model.params_mut().get_mut(w_slot).value.data_mut() {
        *v = 0.0;
    }
    model.params_mut().get_mut(b_slot).value.data_mut()[0] = 0.37;
    let out = model.forward(&small_cohort(3)).unwrap();
    assert_eq!(out.scores.len(), 5);
    assert!(out.scores.iter().all(|&s| (s - 0.37).abs() < 1e-12));
}

#[test]
fn abnormality_probabilities_stay_in_unit_interval() {
    let model = TempoModel::<f64>::new(small_config(), 10).unwrap();
    let out = model.forward(&small_cohort(4)).unwrap();
    assert_eq!(out.abnormality.shape(), &[24, 5]);
    assert!(out
        .abnormality
        .data()
        .iter()
        .all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn zero_final_abnormality_layer_gives_one_half() {
    let mut model = TempoModel::<f64>::new(small_config(), 11).unwrap();
    for name in ["abnormality.fc2.weight", "abnormality.fc2.bias"] {
        let slot = model.params().slot_of(name).unwrap();
        for v in model.params_mut().get_mut(slot).value.data_mut() {
            *v = 0.0;
        }
    }
    let out = model.forward(&small_cohort(5)).unwrap();
    assert!(out.abnormality.data().iter().all(|&p| (p - 0.5).abs() < 1e-12));
}

#[test]
fn identical_patients_get_identical_abnormality_rows() {
    let model = TempoModel::<f64>::new(small_config(), 12).unwrap();
    let row = [1.0f32, 2.0, 3.0, 4.0, 5.0];
    let mut raw = Vec::new();
    for _ in 0..4 {
        raw.extend_from_slice(&row);
    }
    raw.extend_from_slice(&[0.0, 1.0, -1.0, 2.5, 0.5]);
    let cohort = Cohort::from_raw(raw, vec![1, 1, 1, 1, 0], 5).unwrap();
    let out = model.forward(&cohort).unwrap();
    let first = out.abnormality.row(0).to_vec();
    for r in 1..4 {
        assert_eq!(out.abnormality.row(r), &first[..], "row {r}");
    }
    assert_ne!(out.abnormality.row(4), &first[..]);
}

#[test]
fn staging_is_permutation_equivariant_and_scores_invariant() {
    let mut rng = crate::rng::Xoshiro256pp::from_seed(777);
    for trial in 0..20 {
        let model = TempoModel::<f64>::new(small_config(), derive_seed(50, trial)).unwrap();
        let cohort = small_cohort(derive_seed(60, trial));
        let j = cohort.cohort_size;
        let mut perm: Vec<usize> = (0..j).collect();
        rng.shuffle(&mut perm);
        let shuffled = permuted(&cohort, &perm);

        let base = model.forward(&cohort).unwrap();
        let alt = model.forward(&shuffled).unwrap();
        for (a, b) in base.scores.iter().zip(&alt.scores) {
            assert!((a - b).abs() < 1e-5, "trial {trial}: scores moved");
        }
        for (out_idx, &src) in perm.iter().enumerate() {
            assert!(
                (alt.stages[out_idx] - base.stages[src]).abs() < 1e-5,
                "trial {trial}: stage {out_idx} not equivariant"
            );
        }
    }
}

#[test]
fn single_patient_cohort_works() {
    let model = TempoModel::<f64>::new(small_config(), 13).unwrap();
    let cohort = Cohort::from_raw(vec![0.5, 1.5, -0.5, 2.0, 0.0], vec![1], 5).unwrap();
    let out = model.forward(&cohort).unwrap();
    assert_eq!(out.stages.len(), 1);
    assert_eq!(out.scores.len(), 5);
}

#[test]
fn forward_is_deterministic() {
    let model = TempoModel::<f32>::new(small_config(), 14).unwrap();
    let cohort = small_cohort(6);
    let a = model.forward(&cohort).unwrap();
    let b = model.forward(&cohort).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    for (x, y) in a.stages.iter().zip(&b.stages) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn all_parameter_gradients_flow_and_are_finite() {
    // Backward from a combined head touching both branches: every
    // parameter (including the sequencing side, which feeds the staging
    // branch through sigmoid(s)) must get a finite gradient.
    let model = TempoModel::<f64>::new(small_config(), 15).unwrap();
    let cohort = small_cohort(7);
    let mut tape = Tape::new();
    let nodes = model.forward_on_tape(&mut tape, &cohort).unwrap();
    let s_sum = tape.sum_all(nodes.scores);
    let y_sum = tape.sum_all(nodes.stages);
    let loss = tape.add(s_sum, y_sum).unwrap();
    let mut params = model.params().clone();
    tape.backward(loss, &mut params).unwrap();
    for p in params.iter() {
        assert!(p.grad.all_finite(), "{}", p.name);
    }
}

#[test]
fn staging_loss_reaches_ranking_head() {
    // Gradient flows from the staging output back into the sequencing
    // branch via sigmoid(s): backprop of a stages-only loss must move the
    // ranking head.
    let model = TempoModel::<f64>::new(small_config(), 16).unwrap();
    let cohort = small_cohort(8);
    let mut tape = Tape::new();
    let nodes = model.forward_on_tape(&mut tape, &cohort).unwrap();
    let loss = tape.sum_all(nodes.stages);
    let mut params = model.params().clone();
    tape.backward(loss, &mut params).unwrap();
    let slot = params.slot_of("ranking_head.weight").unwrap();
    let norm: f64 = params.get(slot).grad.data().iter().map(|g| g * g).sum();
    assert!(norm > 0.0, "ranking head untouched by staging loss");
}

#[test]
fn param_count_depends_on_b_only_through_pos_and_stage_encoder() {
    let mut cfg = small_config();
    let c5 = TempoModel::<f32>::new(cfg, 1).unwrap().param_count();
    cfg.n_biomarkers = 9;
    let c9 = TempoModel::<f32>::new(cfg, 1).unwrap().param_count();
    // Each extra biomarker adds one positional row (d) and one stage-encoder
    // input row (2d).
    assert_eq!(c9 - c5, 4 * (cfg.d_model + 2 * cfg.d_model));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = TempoModel::<f32>::new(small_config(), 17).unwrap();
    let text = checkpoint_to_string(&model, 3).unwrap();
    let (loaded, exp) = checkpoint_from_str(&text).unwrap();
    assert_eq!(exp, 3);
    let cohort = small_cohort(9);
    let a = model.forward(&cohort).unwrap();
    let b = loaded.forward(&cohort).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    for (x, y) in a.stages.iter().zip(&b.stages) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    // Serialization itself is stable.
    assert_eq!(text, checkpoint_to_string(&loaded, 3).unwrap());
}

#[test]
fn checkpoint_rejects_shape_mismatch() {
    let model = TempoModel::<f32>::new(small_config(), 18).unwrap();
    let text = checkpoint_to_string(&model, 1).unwrap();
    let mangled = text.replace("\"n_biomarkers\": 5", "\"n_biomarkers\": 6");
    assert!(checkpoint_from_str(&mangled).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = ModelConfig::for_biomarkers(12);
    assert!(cfg.validate().is_ok());
    cfg.n_heads = 5;
    assert!(cfg.validate().is_err());
    cfg.n_heads = 4;
    cfg.seq_layers = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn mismatched_cohort_width_is_rejected() {
    let model = TempoModel::<f32>::new(small_config(), 19).unwrap();
    let cohort = Cohort::from_raw(vec![0.0; 8], vec![0, 1], 4).unwrap();
    assert!(model.forward(&cohort).is_err());
}
