//! Finite-difference gradient checks for every tape primitive.
//!
//! The oracle is a central difference with step 1e-3 on an f64 tape; each
//! primitive is wrapped in an MSE head so the checked quantity is always a
//! scalar loss. Inputs are uniform in [-2, 2]; piecewise-linear ops (relu)
//! get a small margin pushed around their kink so the difference quotient
//! stays on one linear piece.

use super::{NodeId, ParamSet, Tape, Tensor};
use crate::rng::Xoshiro256pp;

const FD_STEP: f64 = 1e-3;
const REL_TOL: f64 = 1e-3;

fn random_data(rng: &mut Xoshiro256pp, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect()
}

/// Pushes each element at least `margin` away from zero (for relu).
fn with_margin(data: &mut [f64], margin: f64) {
    for x in data.iter_mut() {
        if x.abs() < margin {
            *x = if *x >= 0.0 { margin } else { -margin };
        }
    }
}

struct Check<'a> {
    shapes: Vec<Vec<usize>>,
    build: Box<dyn Fn(&mut Tape<f64>, &[NodeId]) -> NodeId + 'a>,
    relu_margin: bool,
    /// Input scaling. 1.0 for primitives ([-2, 2] per the contract); the
    /// deep composite (attention) uses a smaller scale because the h = 1e-3
    /// difference quotient itself carries O(h^2 f''') truncation error,
    /// which saturated softmax regimes amplify past the tolerance.
    input_scale: f64,
}

fn run_check(rng: &mut Xoshiro256pp, check: &Check) {
    // Draw the inputs once.
    let mut inputs: Vec<Tensor<f64>> = Vec::new();
    for shape in &check.shapes {
        let n = shape.iter().product();
        let mut data = random_data(rng, n);
        for x in data.iter_mut() {
            *x *= check.input_scale;
        }
        if check.relu_margin {
            with_margin(&mut data, 0.05);
        }
        inputs.push(Tensor::new(shape.clone(), data).unwrap());
    }

    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = (check.build)(&mut tape, &ids);
        tape.scalar_value(loss)
    };

    // Analytic gradients: register inputs as parameters.
    let mut params = ParamSet::new();
    for (i, t) in inputs.iter().enumerate() {
        params.add(format!("in{i}"), t.clone()).unwrap();
    }
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = (0..inputs.len()).map(|i| tape.param(&params, i)).collect();
    let loss = (check.build)(&mut tape, &ids);
    tape.backward(loss, &mut params).unwrap();

    // Central differences per element.
    for (pi, t) in inputs.iter().enumerate() {
        for e in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[pi].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[pi].data_mut()[e] -= FD_STEP;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let analytic = params.get(pi).grad.data()[e];
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            let rel = (analytic - fd).abs() / denom;
            assert!(
                rel < REL_TOL,
                "input {pi} elem {e}: analytic {analytic} vs fd {fd} (rel {rel:.2e})"
            );
        }
    }
}

fn mse_head(tape: &mut Tape<f64>, out: NodeId, rng: &mut Xoshiro256pp) -> NodeId {
    let target = Tensor::new(
        tape.value(out).shape().to_vec(),
        random_data(rng, tape.value(out).numel()),
    )
    .unwrap();
    tape.mse_loss(out, target).unwrap()
}

fn dims(rng: &mut Xoshiro256pp) -> (usize, usize, usize) {
    (
        rng.next_below(5) as usize + 1,
        rng.next_below(5) as usize + 1,
        rng.next_below(5) as usize + 1,
    )
}

#[test]
fn fd_matmul() {
    let mut rng = Xoshiro256pp::from_seed(101);
    for trial in 0..25 {
        let (m, k, n) = dims(&mut rng);
        let head_rng = Xoshiro256pp::from_seed(1000 + trial);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![vec![m, k], vec![k, n]],
                build: Box::new(move |tape, ids| {
                    let out = tape.matmul(ids[0], ids[1]).unwrap();
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_elementwise_and_affine() {
    let mut rng = Xoshiro256pp::from_seed(202);
    for trial in 0..25 {
        let (r, c, _) = dims(&mut rng);
        let kind = trial % 5;
        let head_rng = Xoshiro256pp::from_seed(2000 + trial);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: match kind {
                    0 | 1 => vec![vec![r, c], vec![r, c]], // add / sub
                    2 => vec![vec![r, c], vec![c]],        // add_row
                    _ => vec![vec![r, c]],                 // scale / transpose
                },
                build: Box::new(move |tape, ids| {
                    let out = match kind {
                        0 => tape.add(ids[0], ids[1]).unwrap(),
                        1 => tape.sub(ids[0], ids[1]).unwrap(),
                        2 => tape.add_row(ids[0], ids[1]).unwrap(),
                        3 => tape.scale(ids[0], -1.7),
                        _ => tape.transpose(ids[0]),
                    };
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_nonlinearities() {
    let mut rng = Xoshiro256pp::from_seed(303);
    for trial in 0..30 {
        let (r, c, _) = dims(&mut rng);
        let kind = trial % 4;
        let head_rng = Xoshiro256pp::from_seed(3000 + trial);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![vec![r, c]],
                build: Box::new(move |tape, ids| {
                    let out = match kind {
                        0 => tape.relu(ids[0]),
                        1 => tape.sigmoid(ids[0]),
                        2 => tape.softplus(ids[0]),
                        _ => tape.softmax_rows(ids[0]),
                    };
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: kind == 0,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_layer_norm() {
    let mut rng = Xoshiro256pp::from_seed(404);
    for trial in 0..20 {
        let r = rng.next_below(4) as usize + 1;
        let c = rng.next_below(6) as usize + 2; // at least 2 columns
        let head_rng = Xoshiro256pp::from_seed(4000 + trial);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![vec![r, c], vec![c], vec![c]],
                build: Box::new(move |tape, ids| {
                    let out = tape.layer_norm(ids[0], ids[1], ids[2], 1e-5).unwrap();
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_shape_ops_and_reductions() {
    let mut rng = Xoshiro256pp::from_seed(505);
    for trial in 0..30 {
        let (r, c, _) = dims(&mut rng);
        let group = rng.next_below(3) as usize + 1;
        let kind = trial % 6;
        let head_rng = Xoshiro256pp::from_seed(5000 + trial);
        let r_in = if kind == 0 { r * group } else { r };
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![vec![r_in, c]],
                build: Box::new(move |tape, ids| {
                    let out = match kind {
                        0 => tape.mean_pool_rows(ids[0], group).unwrap(),
                        1 => tape.repeat_rows(ids[0], group),
                        2 => {
                            let len = 1 + (c - 1) / 2;
                            tape.slice_cols(ids[0], c - len, len).unwrap()
                        }
                        3 => tape.reshape(ids[0], vec![c, r_in]).unwrap(),
                        4 => return tape.sum_all(ids[0]),
                        _ => {
                            let idx = (r_in * c) / 2;
                            return tape.pick(ids[0], idx).unwrap();
                        }
                    };
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_concat_and_mse() {
    let mut rng = Xoshiro256pp::from_seed(606);
    for trial in 0..20 {
        let (r, c1, c2) = dims(&mut rng);
        let head_rng = Xoshiro256pp::from_seed(6000 + trial);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![vec![r, c1], vec![r, c2]],
                build: Box::new(move |tape, ids| {
                    let out = tape.concat_cols(&[ids[0], ids[1]]).unwrap();
                    mse_head(tape, out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 1.0,
            },
        );
        rng.next_u64();
    }
}

#[test]
fn fd_multi_head_attention() {
    use super::attention::{multi_head_self_attention, AttentionWeights};
    let mut rng = Xoshiro256pp::from_seed(707);
    for trial in 0..6 {
        let t_len = rng.next_below(4) as usize + 1;
        let heads = [1, 2, 4][trial % 3];
        let d = heads * (rng.next_below(3) as usize + 1);
        let head_rng = Xoshiro256pp::from_seed(7000 + trial as u64);
        run_check(
            &mut rng.clone(),
            &Check {
                shapes: vec![
                    vec![t_len, d],
                    vec![d, d],
                    vec![d],
                    vec![d, d],
                    vec![d],
                    vec![d, d],
                    vec![d],
                    vec![d, d],
                    vec![d],
                ],
                build: Box::new(move |tape, ids| {
                    let w = AttentionWeights {
                        wq: ids[1],
                        bq: ids[2],
                        wk: ids[3],
                        bk: ids[4],
                        wv: ids[5],
                        bv: ids[6],
                        wo: ids[7],
                        bo: ids[8],
                    };
                    let nodes = multi_head_self_attention(tape, ids[0], &w, heads).unwrap();
                    mse_head(tape, nodes.out, &mut head_rng.clone())
                }),
                relu_margin: false,
                input_scale: 0.35,
            },
        );
        rng.next_u64();
    }
}
