//! The two-branch network.
//!
//! Sequencing branch: each biomarker's measurements across the cohort are
//! encoded per patient, mean-pooled into one token per biomarker, augmented
//! with learnable positional encodings and passed through a transformer
//! encoder; a ranking head emits one continuous event score per biomarker
//! (sorting them ascending yields the predicted event sequence).
//!
//! Staging branch: a shared abnormality detector maps each
//! `(x_jb, d_j, sigmoid(s_b))` triple to a probability in [0, 1]; each
//! patient's abnormality profile becomes a token, a second transformer
//! lets patients contextualize each other (no positional encodings there,
//! so staging is permutation-equivariant), and a stage head predicts a
//! scalar stage per patient. The score feed `sigmoid(s)` keeps the staging
//! loss differentiable with respect to the sequencing branch.

mod checkpoint;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint,
    CHECKPOINT_FORMAT_VERSION,
};

use crate::error::Error;
use crate::rng::Xoshiro256pp;
use crate::scalar::Scalar;
use crate::sim::Cohort;
use crate::tensor::attention::{multi_head_self_attention, AttentionWeights};
use crate::tensor::{NodeId, ParamSet, Tape, Tensor};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Hidden width of the abnormality-detector MLP.
const ABNORMALITY_HIDDEN: usize = 32;

/// Layer-norm epsilon used across the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_biomarkers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub seq_layers: usize,
    pub stage_layers: usize,
    pub ffn_mult: usize,
}

impl ModelConfig {
    /// Defaults: d_model 64, 4 heads, 4 sequencing layers, 2 staging
    /// layers, feed-forward width 4x.
    pub fn for_biomarkers(n_biomarkers: usize) -> Self {
        ModelConfig {
            n_biomarkers,
            d_model: 64,
            n_heads: 4,
            seq_layers: 4,
            stage_layers: 2,
            ffn_mult: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_biomarkers < 2 {
            return Err(Error::config(format!(
                "need at least 2 biomarkers, got {}",
                self.n_biomarkers
            )));
        }
        if self.d_model == 0
            || self.n_heads == 0
            || self.seq_layers == 0
            || self.stage_layers == 0
            || self.ffn_mult == 0
        {
            return Err(Error::config("model dimensions must be positive".to_string()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// Width of the staging branch (stage encoder output and patient
    /// transformer).
    pub fn stage_width(&self) -> usize {
        2 * self.d_model
    }
}

#[derive(Clone, Copy, Debug)]
struct LinearSlots {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct NormSlots {
    g: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct AttnSlots {
    wq: LinearSlots,
    wk: LinearSlots,
    wv: LinearSlots,
    wo: LinearSlots,
}

#[derive(Clone, Copy, Debug)]
struct BlockSlots {
    ln1: NormSlots,
    attn: AttnSlots,
    ln2: NormSlots,
    ffn1: LinearSlots,
    ffn2: LinearSlots,
}

#[derive(Clone, Debug)]
struct Layout {
    enc_fc1: LinearSlots,
    enc_fc2: LinearSlots,
    pos_encoding: usize,
    seq_blocks: Vec<BlockSlots>,
    ranking_head: LinearSlots,
    abn_fc1: LinearSlots,
    abn_fc2: LinearSlots,
    stage_encoder: LinearSlots,
    stage_encoder_ln: NormSlots,
    stage_blocks: Vec<BlockSlots>,
    stage_head_fc1: LinearSlots,
    stage_head_ln: NormSlots,
    stage_head_fc2: LinearSlots,
}

/// All learnable parameters of both branches, addressed by stable names.
pub struct TempoModel<T> {
    config: ModelConfig,
    params: ParamSet<T>,
    layout: Layout,
}

/// Forward results as tape nodes, for loss construction.
pub struct ForwardNodes {
    /// Event scores, `[B x 1]`.
    pub scores: NodeId,
    /// Abnormality probabilities, `[J x B]`.
    pub abnormality: NodeId,
    /// Predicted stages, `[J x 1]`.
    pub stages: NodeId,
}

/// Forward results as plain values.
pub struct ForwardOutput<T> {
    pub scores: Vec<T>,
    pub abnormality: Tensor<T>,
    pub stages: Vec<T>,
}

struct Builder<'a, T: Scalar> {
    params: &'a mut ParamSet<T>,
    rng: &'a mut Xoshiro256pp,
}

impl<T: Scalar> Builder<'_, T> {
    /// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<LinearSlots> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Tensor::from_fn(vec![fan_in, fan_out], |_| {
            T::from_f64((self.rng.next_f64() * 2.0 - 1.0) * bound)
        });
        let w = self.params.add(format!("{name}.weight"), w)?;
        let b = self.params.add(format!("{name}.bias"), Tensor::zeros(vec![fan_out]))?;
        Ok(LinearSlots { w, b })
    }

    fn norm(&mut self, name: &str, width: usize) -> Result<NormSlots> {
        let ones = Tensor::from_fn(vec![width], |_| T::one());
        let g = self.params.add(format!("{name}.gain"), ones)?;
        let b = self.params.add(format!("{name}.bias"), Tensor::zeros(vec![width]))?;
        Ok(NormSlots { g, b })
    }

    fn block(&mut self, name: &str, width: usize, ffn_mult: usize) -> Result<BlockSlots> {
        let ln1 = self.norm(&format!("{name}.ln1"), width)?;
        let attn = AttnSlots {
            wq: self.linear(&format!("{name}.attn.q"), width, width)?,
            wk: self.linear(&format!("{name}.attn.k"), width, width)?,
            wv: self.linear(&format!("{name}.attn.v"), width, width)?,
            wo: self.linear(&format!("{name}.attn.out"), width, width)?,
        };
        let ln2 = self.norm(&format!("{name}.ln2"), width)?;
        let ffn1 = self.linear(&format!("{name}.ffn.fc1"), width, width * ffn_mult)?;
        let ffn2 = self.linear(&format!("{name}.ffn.fc2"), width * ffn_mult, width)?;
        Ok(BlockSlots {
            ln1,
            attn,
            ln2,
            ffn1,
            ffn2,
        })
    }
}

impl<T: Scalar> TempoModel<T> {
    /// Fresh model with seeded initialization. The init stream is consumed
    /// in registration order, so a (config, seed) pair pins every weight.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut rng = Xoshiro256pp::from_seed(seed);
        let d = config.d_model;
        let b = config.n_biomarkers;
        let sw = config.stage_width();
        let mut builder = Builder {
            params: &mut params,
            rng: &mut rng,
        };

        let enc_fc1 = builder.linear("patient_encoder.fc1", 2, d)?;
        let enc_fc2 = builder.linear("patient_encoder.fc2", d, d)?;
        let pos = Tensor::from_fn(vec![b, d], |_| {
            T::from_f64((builder.rng.next_f64() * 2.0 - 1.0) * 0.1)
        });
        let pos_encoding = builder.params.add("pos_encoding", pos)?;
        let seq_blocks = (0..config.seq_layers)
            .map(|i| builder.block(&format!("seq_block{i}"), d, config.ffn_mult))
            .collect::<Result<Vec<_>>>()?;
        let ranking_head = builder.linear("ranking_head", d, 1)?;

        let abn_fc1 = builder.linear("abnormality.fc1", 3, ABNORMALITY_HIDDEN)?;
        let abn_fc2 = builder.linear("abnormality.fc2", ABNORMALITY_HIDDEN, 1)?;
        let stage_encoder = builder.linear("stage_encoder", b, sw)?;
        let stage_encoder_ln = builder.norm("stage_encoder.ln", sw)?;
        let stage_blocks = (0..config.stage_layers)
            .map(|i| builder.block(&format!("stage_block{i}"), sw, config.ffn_mult))
            .collect::<Result<Vec<_>>>()?;
        let stage_head_fc1 = builder.linear("stage_head.fc1", sw, sw)?;
        let stage_head_ln = builder.norm("stage_head.ln", sw)?;
        let stage_head_fc2 = builder.linear("stage_head.fc2", sw, 1)?;

        Ok(TempoModel {
            config,
            params,
            layout: Layout {
                enc_fc1,
                enc_fc2,
                pos_encoding,
                seq_blocks,
                ranking_head,
                abn_fc1,
                abn_fc2,
                stage_encoder,
                stage_encoder_ln,
                stage_blocks,
                stage_head_fc1,
                stage_head_ln,
                stage_head_fc2,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Total learnable element count; a pure function of the config.
    pub fn param_count(&self) -> usize {
        self.params.element_count()
    }

    fn linear_on(
        &self,
        tape: &mut Tape<T>,
        x: NodeId,
        slots: LinearSlots,
    ) -> Result<NodeId> {
        let w = tape.param(&self.params, slots.w);
        let b = tape.param(&self.params, slots.b);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }

    fn norm_on(&self, tape: &mut Tape<T>, x: NodeId, slots: NormSlots) -> Result<NodeId> {
        let g = tape.param(&self.params, slots.g);
        let b = tape.param(&self.params, slots.b);
        tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }

    /// Pre-norm transformer block: `x + attn(ln1(x))`, then
    /// `x + ffn(ln2(x))`.
    fn block_on(&self, tape: &mut Tape<T>, x: NodeId, block: &BlockSlots) -> Result<NodeId> {
        let normed = self.norm_on(tape, x, block.ln1)?;
        let attn_w = AttentionWeights {
            wq: tape.param(&self.params, block.attn.wq.w),
            bq: tape.param(&self.params, block.attn.wq.b),
            wk: tape.param(&self.params, block.attn.wk.w),
            bk: tape.param(&self.params, block.attn.wk.b),
            wv: tape.param(&self.params, block.attn.wv.w),
            bv: tape.param(&self.params, block.attn.wv.b),
            wo: tape.param(&self.params, block.attn.wo.w),
            bo: tape.param(&self.params, block.attn.wo.b),
        };
        let attn = multi_head_self_attention(tape, normed, &attn_w, self.config.n_heads)?;
        let x = tape.add(x, attn.out)?;
        let normed = self.norm_on(tape, x, block.ln2)?;
        let h = self.linear_on(tape, normed, block.ffn1)?;
        let h = tape.relu(h);
        let f = self.linear_on(tape, h, block.ffn2)?;
        tape.add(x, f)
    }

    /// Encodes each (measurement, diagnosis) pair and mean-pools over
    /// patients: one token per biomarker, positional encodings added.
    /// Returns the `[B x d_model]` token node.
    pub fn patient_encode_pool(&self, tape: &mut Tape<T>, cohort: &Cohort) -> Result<NodeId> {
        let b = self.config.n_biomarkers;
        let j = cohort.cohort_size;
        if j == 0 {
            return Err(Error::config("cohort has no participants".to_string()));
        }
        // Biomarker-major layout: row b*J + j holds (x_jb, d_j).
        let mut data = Vec::with_capacity(b * j * 2);
        for bm in 0..b {
            for p in 0..j {
                data.push(T::from_f64(cohort.x[p * b + bm] as f64));
                data.push(T::from_f64(cohort.diagnosis[p] as f64));
            }
        }
        let z = Tensor::new(vec![b * j, 2], data)?;
        let z = tape.constant(z);
        let h = self.linear_on(tape, z, self.layout.enc_fc1)?;
        let h = tape.relu(h);
        let h = self.linear_on(tape, h, self.layout.enc_fc2)?;
        let pooled = tape.mean_pool_rows(h, j)?;
        let pos = tape.param(&self.params, self.layout.pos_encoding);
        tape.add(pooled, pos)
    }

    /// Biomarker transformer plus ranking head: tokens to event scores
    /// `[B x 1]`.
    pub fn sequencing_forward(&self, tape: &mut Tape<T>, tokens: NodeId) -> Result<NodeId> {
        let mut x = tokens;
        for block in &self.layout.seq_blocks {
            x = self.block_on(tape, x, block)?;
        }
        self.linear_on(tape, x, self.layout.ranking_head)
    }

    /// Shared abnormality detector applied to every
    /// `(x_jb, d_j, sigmoid(s_b))` triple; returns `[J x B]` probabilities.
    pub fn abnormality_detect(
        &self,
        tape: &mut Tape<T>,
        cohort: &Cohort,
        scores: NodeId,
    ) -> Result<NodeId> {
        let b = self.config.n_biomarkers;
        let j = cohort.cohort_size;
        // Patient-major layout: row j*B + b holds (x_jb, d_j); the tiled
        // sigmoid scores supply the third column.
        let mut data = Vec::with_capacity(j * b * 2);
        for p in 0..j {
            for bm in 0..b {
                data.push(T::from_f64(cohort.x[p * b + bm] as f64));
                data.push(T::from_f64(cohort.diagnosis[p] as f64));
            }
        }
        let base = Tensor::new(vec![j * b, 2], data)?;
        let base = tape.constant(base);
        let sig_s = tape.sigmoid(scores);
        let tiled = tape.repeat_rows(sig_s, j);
        let input = tape.concat_cols(&[base, tiled])?;
        let h = self.linear_on(tape, input, self.layout.abn_fc1)?;
        let h = tape.relu(h);
        let out = self.linear_on(tape, h, self.layout.abn_fc2)?;
        let p = tape.sigmoid(out);
        tape.reshape(p, vec![j, b])
    }

    /// Stage encoder, patient transformer and stage head: abnormality
    /// profiles `[J x B]` to predicted stages `[J x 1]`. Patient tokens get
    /// no positional encodings, so this path is permutation-equivariant.
    pub fn staging_forward(&self, tape: &mut Tape<T>, abnormality: NodeId) -> Result<NodeId> {
        let enc = self.linear_on(tape, abnormality, self.layout.stage_encoder)?;
        let enc = self.norm_on(tape, enc, self.layout.stage_encoder_ln)?;
        let mut x = tape.relu(enc);
        for block in &self.layout.stage_blocks {
            x = self.block_on(tape, x, block)?;
        }
        let h = self.linear_on(tape, x, self.layout.stage_head_fc1)?;
        let h = self.norm_on(tape, h, self.layout.stage_head_ln)?;
        let h = tape.relu(h);
        self.linear_on(tape, h, self.layout.stage_head_fc2)
    }

    /// Full two-branch forward on a tape, for training.
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, cohort: &Cohort) -> Result<ForwardNodes> {
        if cohort.n_biomarkers != self.config.n_biomarkers {
            return Err(Error::config(format!(
                "cohort has {} biomarkers but the model expects {}",
                cohort.n_biomarkers, self.config.n_biomarkers
            )));
        }
        let tokens = self.patient_encode_pool(tape, cohort)?;
        tape.check_finite(tokens, "patient encoder / pooling")?;
        let scores = self.sequencing_forward(tape, tokens)?;
        tape.check_finite(scores, "sequencing transformer / ranking head")?;
        let abnormality = self.abnormality_detect(tape, cohort, scores)?;
        tape.check_finite(abnormality, "abnormality detector")?;
        let stages = self.staging_forward(tape, abnormality)?;
        tape.check_finite(stages, "staging transformer / stage head")?;
        Ok(ForwardNodes {
            scores,
            abnormality,
            stages,
        })
    }

    /// Inference-only forward.
    pub fn forward(&self, cohort: &Cohort) -> Result<ForwardOutput<T>> {
        let mut tape = Tape::new();
        let nodes = self.forward_on_tape(&mut tape, cohort)?;
        Ok(ForwardOutput {
            scores: tape.value(nodes.scores).data().to_vec(),
            abnormality: tape.value(nodes.abnormality).clone(),
            stages: tape.value(nodes.stages).data().to_vec(),
        })
    }
}

#[cfg(test)]
mod tests;
