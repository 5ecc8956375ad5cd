//! Student/teacher projection model with trainable attention parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Tape, Tensor, Var};

/// Widths of the embedding spaces. Defaults follow the reference teacher
/// (384) and multilingual student (768) encoders with a 256-wide shared
/// projection; synthetic runs use smaller widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub languages: usize,
    pub dims: usize,
    pub teacher_width: usize,
    pub student_width: usize,
    pub proj_width: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            languages: 5,
            dims: 5,
            teacher_width: 384,
            student_width: 768,
            proj_width: 256,
        }
    }
}

/// Trainable affine map, weight (in×out) plus bias (out).
#[derive(Debug, Clone)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    fn init(in_width: usize, out_width: usize, rng: &mut ChaCha8Rng) -> Self {
        // Uniform fan-in scaling.
        let bound = 1.0 / (in_width as f64).sqrt();
        let weight = Tensor::new(
            &[in_width, out_width],
            (0..in_width * out_width)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        )
        .expect("weight shape is consistent");
        let bias = Tensor::zeros(&[out_width]);
        Affine { weight, bias }
    }

    pub fn in_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Plain (untaped) forward: y = xᵀW + b.
    pub fn forward_plain(&self, x: &[f64]) -> Vec<f64> {
        let (in_w, out_w) = (self.in_width(), self.out_width());
        debug_assert_eq!(x.len(), in_w);
        let mut y = self.bias.values().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight.values()[i * out_w..(i + 1) * out_w];
            for (j, &wij) in row.iter().enumerate() {
                y[j] += xi * wij;
            }
        }
        y
    }
}

/// Learnable attention weight matrices over (language × dimension).
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_l: Tensor,
    pub w_d: Tensor,
}

/// The trainable model: an optional affine encoder over student inputs,
/// student and teacher projections into a shared space, a shared trait
/// head producing per-dimension logits, and the attention parameters.
#[derive(Debug, Clone)]
pub struct CladModel {
    pub dims: ModelDims,
    /// `None` means student inputs are frozen external embeddings used
    /// as-is; `Some` is the small trainable encoder for synthetic data.
    pub encoder: Option<Affine>,
    pub student_proj: Affine,
    pub teacher_proj: Affine,
    pub trait_head: Affine,
    pub attention: AttentionParams,
}

impl CladModel {
    /// Seeded initialization. Attention matrices start at zero so both
    /// attention vectors begin uniform; affine layers use uniform fan-in
    /// scaling.
    pub fn init(dims: ModelDims, trainable_encoder: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = trainable_encoder
            .then(|| Affine::init(dims.student_width, dims.student_width, &mut rng));
        let student_proj = Affine::init(dims.student_width, dims.proj_width, &mut rng);
        let teacher_proj = Affine::init(dims.teacher_width, dims.proj_width, &mut rng);
        let trait_head = Affine::init(dims.proj_width, dims.dims, &mut rng);
        let attention = AttentionParams {
            w_l: Tensor::zeros(&[dims.languages, dims.dims]),
            w_d: Tensor::zeros(&[dims.languages, dims.dims]),
        };
        CladModel {
            dims,
            encoder,
            student_proj,
            teacher_proj,
            trait_head,
            attention,
        }
    }

    /// Canonical (name, tensor) parameter listing; the order is the
    /// checkpoint and optimizer order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("attention.w_l".into(), &self.attention.w_l),
            ("attention.w_d".into(), &self.attention.w_d),
        ];
        if let Some(enc) = &self.encoder {
            out.push(("encoder.weight".into(), &enc.weight));
            out.push(("encoder.bias".into(), &enc.bias));
        }
        out.push(("student_proj.weight".into(), &self.student_proj.weight));
        out.push(("student_proj.bias".into(), &self.student_proj.bias));
        out.push(("teacher_proj.weight".into(), &self.teacher_proj.weight));
        out.push(("teacher_proj.bias".into(), &self.teacher_proj.bias));
        out.push(("trait_head.weight".into(), &self.trait_head.weight));
        out.push(("trait_head.bias".into(), &self.trait_head.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("attention.w_l".into(), &mut self.attention.w_l),
            ("attention.w_d".into(), &mut self.attention.w_d),
        ];
        if let Some(enc) = &mut self.encoder {
            out.push(("encoder.weight".into(), &mut enc.weight));
            out.push(("encoder.bias".into(), &mut enc.bias));
        }
        out.push(("student_proj.weight".into(), &mut self.student_proj.weight));
        out.push(("student_proj.bias".into(), &mut self.student_proj.bias));
        out.push(("teacher_proj.weight".into(), &mut self.teacher_proj.weight));
        out.push(("teacher_proj.bias".into(), &mut self.teacher_proj.bias));
        out.push(("trait_head.weight".into(), &mut self.trait_head.weight));
        out.push(("trait_head.bias".into(), &mut self.trait_head.bias));
        out
    }

    /// Plain student forward to trait logits (no tape).
    pub fn trait_logits_plain(&self, student_embedding: &[f64]) -> Vec<f64> {
        let encoded = match &self.encoder {
            Some(enc) => enc.forward_plain(student_embedding),
            None => student_embedding.to_vec(),
        };
        let proj = self.student_proj.forward_plain(&encoded);
        self.trait_head.forward_plain(&proj)
    }

    /// Plain student forward to per-dimension probabilities.
    pub fn predict_probs(&self, student_embedding: &[f64]) -> Vec<f64> {
        self.trait_logits_plain(student_embedding)
            .iter()
            .map(|&z| 1.0 / (1.0 + (-z).exp()))
            .collect()
    }

    /// Plain student forward to the shared projection space.
    pub fn student_project_plain(&self, student_embedding: &[f64]) -> Vec<f64> {
        let encoded = match &self.encoder {
            Some(enc) => enc.forward_plain(student_embedding),
            None => student_embedding.to_vec(),
        };
        self.student_proj.forward_plain(&encoded)
    }

    pub fn predict_bits(&self, student_embedding: &[f64]) -> Vec<u8> {
        self.predict_probs(student_embedding)
            .iter()
            .map(|&p| u8::from(p > 0.5))
            .collect()
    }

    /// Binds every parameter onto a tape as leaves so a batch loss can
    /// accumulate gradients into them.
    pub fn bind(&self, tape: &Tape) -> Result<BoundModel> {
        let bind = |t: &Tensor| tape.from_tensor(t);
        Ok(BoundModel {
            tape: tape.clone(),
            w_l: bind(&self.attention.w_l)?,
            w_d: bind(&self.attention.w_d)?,
            encoder: match &self.encoder {
                Some(enc) => Some((bind(&enc.weight)?, bind(&enc.bias)?)),
                None => None,
            },
            student_proj: (bind(&self.student_proj.weight)?, bind(&self.student_proj.bias)?),
            teacher_proj: (bind(&self.teacher_proj.weight)?, bind(&self.teacher_proj.bias)?),
            trait_head: (bind(&self.trait_head.weight)?, bind(&self.trait_head.bias)?),
        })
    }
}

/// Model parameters bound to one tape for a loss evaluation.
pub struct BoundModel {
    tape: Tape,
    pub w_l: Var,
    pub w_d: Var,
    pub encoder: Option<(Var, Var)>,
    pub student_proj: (Var, Var),
    pub teacher_proj: (Var, Var),
    pub trait_head: (Var, Var),
}

fn affine_forward(tape: &Tape, weight: &Var, bias: &Var, x: &[f64]) -> Result<Var> {
    let in_w = weight.shape()[0];
    let out_w = weight.shape()[1];
    if x.len() != in_w {
        return Err(Error::shape(format!(
            "affine input has width {}, expected {in_w}",
            x.len()
        )));
    }
    let xv = tape.constant(x.to_vec(), &[1, in_w])?;
    let y = xv.matmul(weight)?.add(&bias.reshape(&[1, out_w])?)?;
    y.reshape(&[out_w])
}

fn affine_forward_var(weight: &Var, bias: &Var, x: &Var) -> Result<Var> {
    let in_w = weight.shape()[0];
    let out_w = weight.shape()[1];
    let y = x
        .reshape(&[1, in_w])?
        .matmul(weight)?
        .add(&bias.reshape(&[1, out_w])?)?;
    y.reshape(&[out_w])
}

impl BoundModel {
    /// Student path: raw embedding → (projected vector, trait logits),
    /// both rank-1.
    pub fn student_path(&self, embedding: &[f64]) -> Result<(Var, Var)> {
        let encoded = match &self.encoder {
            Some((w, b)) => affine_forward(&self.tape, w, b, embedding)?,
            None => {
                let len = embedding.len();
                self.tape.constant(embedding.to_vec(), &[len])?
            }
        };
        let proj = affine_forward_var(&self.student_proj.0, &self.student_proj.1, &encoded)?;
        let logits = affine_forward_var(&self.trait_head.0, &self.trait_head.1, &proj)?;
        Ok((proj, logits))
    }

    /// Teacher path: frozen embedding → projected vector.
    pub fn teacher_project(&self, embedding: &[f64]) -> Result<Var> {
        affine_forward(&self.tape, &self.teacher_proj.0, &self.teacher_proj.1, embedding)
    }

    /// Gradients in [`CladModel::named_params`] order, read after
    /// `backward`.
    pub fn gradients(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = vec![
            ("attention.w_l".into(), self.w_l.grad()),
            ("attention.w_d".into(), self.w_d.grad()),
        ];
        if let Some((w, b)) = &self.encoder {
            out.push(("encoder.weight".into(), w.grad()));
            out.push(("encoder.bias".into(), b.grad()));
        }
        out.push(("student_proj.weight".into(), self.student_proj.0.grad()));
        out.push(("student_proj.bias".into(), self.student_proj.1.grad()));
        out.push(("teacher_proj.weight".into(), self.teacher_proj.0.grad()));
        out.push(("teacher_proj.bias".into(), self.teacher_proj.1.grad()));
        out.push(("trait_head.weight".into(), self.trait_head.0.grad()));
        out.push(("trait_head.bias".into(), self.trait_head.1.grad()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> ModelDims {
        ModelDims {
            languages: 5,
            dims: 5,
            teacher_width: 6,
            student_width: 8,
            proj_width: 4,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = CladModel::init(small_dims(), true, 11);
        let b = CladModel::init(small_dims(), true, 11);
        for ((_, ta), (_, tb)) in a.named_params().iter().zip(b.named_params()) {
            assert_eq!(ta.values(), tb.values());
        }
        let c = CladModel::init(small_dims(), true, 12);
        assert_ne!(
            a.student_proj.weight.values(),
            c.student_proj.weight.values()
        );
    }

    #[test]
    fn attention_starts_at_zero() {
        let m = CladModel::init(small_dims(), false, 0);
        assert!(m.attention.w_l.values().iter().all(|&v| v == 0.0));
        assert!(m.attention.w_d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn taped_and_plain_forward_agree() {
        let m = CladModel::init(small_dims(), true, 3);
        let emb: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let tape = Tape::new();
        let bound = m.bind(&tape).unwrap();
        let (proj, logits) = bound.student_path(&emb).unwrap();
        let plain_logits = m.trait_logits_plain(&emb);
        let plain_proj = m.student_project_plain(&emb);
        for (a, b) in proj.value().iter().zip(&plain_proj) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in logits.value().iter().zip(&plain_logits) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
