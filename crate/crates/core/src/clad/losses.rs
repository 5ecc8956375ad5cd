//! The three CLAD loss components and their weighted combination.

use serde::Serialize;

use crate::clad::pairs::GroupExample;
use crate::clad::{clamp_probs, BoundModel, ContrastiveMode, LossConfig};
use crate::error::{Error, Result};
use crate::grad::{Tape, Var};

/// Probability floor applied to student sigmoid outputs inside the
/// attention loss so saturated logits cannot produce log(0).
const PROB_EPS: f64 = 1e-9;

/// Attention weight vectors over an (s'×d) input matrix.
///
/// Language scores are per-row inner products of `w_l` with `x`, softmaxed
/// over rows; dimension scores are per-column inner products of `w_d` with
/// `x`, softmaxed over columns. Both outputs are valid probability
/// vectors.
pub fn attention_weights(x: &Var, w_l: &Var, w_d: &Var) -> Result<(Var, Var)> {
    let a_l = w_l.mul(x)?.sum_axis(1)?.softmax(0)?;
    let a_d = w_d.mul(x)?.sum_axis(0)?.softmax(0)?;
    Ok((a_l, a_d))
}

/// Attention-weighted binary cross-entropy over per-language trait
/// probabilities.
///
/// Default form: probabilities are pooled across languages by A_L (a
/// convex combination, so the pooled value stays a probability) and each
/// dimension's BCE term is weighted by |d|·A_D[j]. The literal form
/// instead scales the pooled probability by A_D[j] before an unweighted
/// BCE.
pub fn loss_al(tape: &Tape, x_prob: &Var, y: &[u8], w_l: &Var, w_d: &Var, literal: bool) -> Result<Var> {
    let shape = x_prob.shape();
    if shape.len() != 2 {
        return Err(Error::shape(format!(
            "attention loss input must be rank 2, got {shape:?}"
        )));
    }
    let (langs, dims) = (shape[0], shape[1]);
    if y.len() != dims {
        return Err(Error::shape(format!(
            "attention loss got {} labels for {dims} dimensions",
            y.len()
        )));
    }
    if x_prob.value().iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::domain(
            "attention loss probabilities must lie strictly inside (0, 1)",
        ));
    }

    let (a_l, a_d) = attention_weights(x_prob, w_l, w_d)?;
    let pooled = a_l.reshape(&[1, langs])?.matmul(x_prob)?.reshape(&[dims])?;
    let y_pos = tape.constant(y.iter().map(|&b| b as f64).collect(), &[dims])?;
    let y_neg = tape.constant(y.iter().map(|&b| 1.0 - b as f64).collect(), &[dims])?;

    if literal {
        // ŷ[j] = A_D[j] · Σᵢ A_L[i]·X[i,j]; both factors are in (0,1).
        let yhat = pooled.mul(&a_d)?;
        let bce = y_pos
            .mul(&yhat.log()?)?
            .add(&y_neg.mul(&yhat.neg().add_scalar(1.0).log()?)?)?;
        Ok(bce.sum().neg())
    } else {
        let weights = a_d.scale(dims as f64);
        let bce = y_pos
            .mul(&pooled.log()?)?
            .add(&y_neg.mul(&pooled.neg().add_scalar(1.0).log()?)?)?;
        Ok(weights.mul(&bce)?.sum().neg())
    }
}

/// Margin contrastive loss between a projected teacher vector and a set
/// of projected student vectors, averaged over partners.
///
/// Corrected mode scores cosine distance (1 − sim) on positive pairs and
/// hinges it on negatives: max(0, m − dist). Literal mode scores raw
/// similarity on positives and max(0, m − sim) on negatives.
pub fn loss_cl(
    teacher: &Var,
    partners: &[(&Var, bool)],
    margin: f64,
    mode: ContrastiveMode,
) -> Result<Var> {
    if partners.is_empty() {
        return Err(Error::shape("contrastive loss over zero partners"));
    }
    let mut total: Option<Var> = None;
    for &(student, matching) in partners {
        let sim = teacher.cosine_sim(student)?;
        let term = match (mode, matching) {
            (ContrastiveMode::Corrected, true) => sim.neg().add_scalar(1.0),
            (ContrastiveMode::Corrected, false) => {
                // m − dist = m − 1 + sim
                sim.add_scalar(margin - 1.0).clamp_min(0.0)
            }
            (ContrastiveMode::Literal, true) => sim,
            (ContrastiveMode::Literal, false) => sim.neg().add_scalar(margin).clamp_min(0.0),
        };
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("partners nonempty").scale(1.0 / partners.len() as f64))
}

/// Per-trait binary KL divergence between frozen teacher probabilities
/// and temperature-scaled student logits, averaged over dimensions.
///
/// The student probability is sigmoid(z/τ); log-probabilities are
/// computed through softplus so saturated logits stay finite. Teacher
/// probabilities at 0 or 1 are clamped into [1e-7, 1−1e-7].
pub fn loss_kl(tape: &Tape, teacher_probs: &[f64], logits: &Var, tau: f64) -> Result<Var> {
    if tau <= 0.0 {
        return Err(Error::domain(format!("temperature {tau} must be > 0")));
    }
    let dims = logits.shape();
    if dims.len() != 1 || dims[0] != teacher_probs.len() {
        return Err(Error::shape(format!(
            "KL loss over {} teacher probabilities and logits of shape {dims:?}",
            teacher_probs.len()
        )));
    }
    let mut probs = teacher_probs.to_vec();
    let clamped = clamp_probs(&mut probs);
    if clamped > 0 {
        log::warn!("KL loss clamped {clamped} teacher probabilities");
    }
    let d = probs.len();
    let p_t = tape.constant(probs.clone(), &[d])?;
    let p_t_neg = tape.constant(probs.iter().map(|p| 1.0 - p).collect(), &[d])?;
    // Constant entropy part: p·ln p + (1−p)·ln(1−p).
    let entropy = tape.constant(
        probs
            .iter()
            .map(|&p| p * p.ln() + (1.0 - p) * (1.0 - p).ln())
            .collect(),
        &[d],
    )?;
    let u = logits.scale(1.0 / tau);
    // −ln σ(u) = softplus(−u), −ln(1−σ(u)) = softplus(u).
    let cross = p_t
        .mul(&u.neg().softplus())?
        .add(&p_t_neg.mul(&u.softplus())?)?;
    // Floor at zero: cancellation can leave a −1e-17 residue on matching
    // distributions, and the divergence is nonnegative by definition.
    Ok(entropy.add(&cross)?.mean().clamp_min(0.0))
}

/// Pre-weighting component values of one combined-loss evaluation.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LossBreakdown {
    pub kl: f64,
    pub al: f64,
    pub cl: f64,
}

/// The combined objective for one group: φ·L_KL + ψ·L_AL + ρ·L_CL over
/// the enabled components. Returns the scalar loss node plus the
/// pre-weighting component values.
pub fn clad_loss(
    tape: &Tape,
    bound: &BoundModel,
    group: &GroupExample,
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    cfg.validate()?;
    if group.regulars.is_empty() {
        return Err(Error::schema(format!(
            "group {} has no regular student samples",
            group.group_id
        )));
    }

    // Student paths for the per-language regular samples, language order.
    let mut lang_indices = Vec::new();
    let mut logit_rows = Vec::new();
    for (lang, emb) in &group.regulars {
        let (_, logits) = bound.student_path(emb)?;
        lang_indices.push(lang.index());
        logit_rows.push(logits);
    }

    let mut breakdown = LossBreakdown::default();
    let mut total: Option<Var> = None;
    let accumulate = |term: Var, weight: f64, total: &mut Option<Var>| {
        let scaled = term.scale(weight);
        *total = Some(match total.take() {
            Some(t) => t.add(&scaled).expect("scalar shapes match"),
            None => scaled,
        });
    };

    if cfg.ablation.use_kl {
        let mut kl_sum: Option<Var> = None;
        for logits in &logit_rows {
            let term = loss_kl(tape, &group.teacher_probs, logits, cfg.tau)?;
            kl_sum = Some(match kl_sum {
                Some(t) => t.add(&term)?,
                None => term,
            });
        }
        let kl = kl_sum
            .expect("regulars nonempty")
            .scale(1.0 / logit_rows.len() as f64);
        breakdown.kl = kl.scalar_value();
        accumulate(kl, cfg.phi, &mut total);
    }

    if cfg.ablation.use_al {
        let prob_rows: Vec<Var> = logit_rows
            .iter()
            .map(|z| z.sigmoid().clamp(PROB_EPS, 1.0 - PROB_EPS))
            .collect();
        let refs: Vec<&Var> = prob_rows.iter().collect();
        let x_prob = tape.stack_rows(&refs)?;
        let w_l = bound.w_l.select_rows(&lang_indices)?;
        let w_d = bound.w_d.select_rows(&lang_indices)?;
        let al = loss_al(
            tape,
            &x_prob,
            &group.labels,
            &w_l,
            &w_d,
            cfg.attention_literal,
        )?;
        breakdown.al = al.scalar_value();
        accumulate(al, cfg.psi, &mut total);
    }

    if cfg.ablation.use_cl {
        let teacher_proj = bound.teacher_project(&group.teacher_embedding)?;
        let mut partner_vars = Vec::new();
        for p in &group.contrastive {
            let (proj, _) = bound.student_path(&p.embedding)?;
            partner_vars.push((proj, p.y_sim));
        }
        let partner_refs: Vec<(&Var, bool)> =
            partner_vars.iter().map(|(v, y)| (v, *y)).collect();
        let cl = loss_cl(&teacher_proj, &partner_refs, cfg.margin, cfg.contrastive_mode)?;
        breakdown.cl = cl.scalar_value();
        accumulate(cl, cfg.rho, &mut total);
    }

    Ok((total.expect("at least one flag set"), breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clad::pairs::PartnerSample;
    use crate::clad::{AblationFlags, CladModel, ModelDims};
    use crate::corpus::LanguageCode;
    use crate::grad::{finite_diff_check_multi, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
        Tensor::new(
            shape,
            (0..shape.iter().product())
                .map(|_| rng.gen_range(lo..hi))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_attention_params_give_uniform_weights() {
        let tape = Tape::new();
        let x = tape
            .constant((0..20).map(|i| 0.03 * i as f64 + 0.1).collect(), &[5, 4])
            .unwrap();
        let w_l = tape.constant(vec![0.0; 20], &[5, 4]).unwrap();
        let w_d = tape.constant(vec![0.0; 20], &[5, 4]).unwrap();
        let (a_l, a_d) = attention_weights(&x, &w_l, &w_d).unwrap();
        for v in a_l.value() {
            assert!((v - 0.2).abs() < 1e-12);
        }
        for v in a_d.value() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_row_attracts_language_attention() {
        let tape = Tape::new();
        // Row 2 dominates; positive weights concentrate A_L on it.
        let mut x = vec![0.1; 25];
        for j in 0..5 {
            x[2 * 5 + j] = 0.9;
        }
        let xv = tape.constant(x, &[5, 5]).unwrap();
        let w = tape.constant(vec![1.0; 25], &[5, 5]).unwrap();
        let (a_l, _) = attention_weights(&xv, &w, &w).unwrap();
        let v = a_l.value();
        assert!(v[2] > 0.2, "A_L = {v:?}");
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn attention_simplex_property_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let tape = Tape::new();
            let x = tape
                .from_tensor(&rand_tensor(&[5, 5], &mut rng, -3.0, 3.0))
                .unwrap();
            let wl = tape
                .from_tensor(&rand_tensor(&[5, 5], &mut rng, -2.0, 2.0))
                .unwrap();
            let wd = tape
                .from_tensor(&rand_tensor(&[5, 5], &mut rng, -2.0, 2.0))
                .unwrap();
            let (a_l, a_d) = attention_weights(&x, &wl, &wd).unwrap();
            assert!((a_l.value().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((a_d.value().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(a_l.value().iter().all(|&v| v >= 0.0));
            assert!(a_d.value().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = rand_tensor(&[5, 5], &mut rng, 0.05, 0.95);
        let wl = rand_tensor(&[5, 5], &mut rng, -1.0, 1.0);
        let wd = rand_tensor(&[5, 5], &mut rng, -1.0, 1.0);
        // Scalarize both outputs with fixed mixing vectors.
        let err = finite_diff_check_multi(
            |tape, vars| {
                let (a_l, a_d) = attention_weights(&vars[0], &vars[1], &vars[2])?;
                let mix_l = tape.constant(vec![0.3, -0.7, 1.1, 0.2, -0.4], &[5])?;
                let mix_d = tape.constant(vec![-0.8, 0.5, 0.9, -0.1, 0.6], &[5])?;
                a_l.mul(&mix_l)?.sum().add(&a_d.mul(&mix_d)?.sum())
            },
            &[x, wl, wd],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn al_hard_correct_loss_is_tiny() {
        // X rows equal the labels clipped to 1−1e-7 → loss ≤ |d|·1e-6.
        let tape = Tape::new();
        let y = [1u8, 0, 1, 1, 0];
        let eps = 1e-7;
        let mut rows = Vec::new();
        for _ in 0..5 {
            rows.extend(y.iter().map(|&b| if b == 1 { 1.0 - eps } else { eps }));
        }
        let x = tape.constant(rows, &[5, 5]).unwrap();
        let w = tape.constant(vec![0.0; 25], &[5, 5]).unwrap();
        let loss = loss_al(&tape, &x, &y, &w, &w, false).unwrap();
        assert!(loss.scalar_value() <= 5.0 * 1e-6, "loss {}", loss.scalar_value());
    }

    #[test]
    fn al_single_dimension_half_probability_is_ln2() {
        // Uniform attention, |d| = 1, pooled p = 0.5, y = 1 → ln 2.
        let tape = Tape::new();
        let x = tape.constant(vec![0.5; 5], &[5, 1]).unwrap();
        let w = tape.constant(vec![0.0; 5], &[5, 1]).unwrap();
        let loss = loss_al(&tape, &x, &[1], &w, &w, false).unwrap();
        assert!((loss.scalar_value() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn al_rejects_probabilities_outside_open_interval() {
        let tape = Tape::new();
        let x = tape.constant(vec![0.5, 1.0, 0.5, 0.5, 0.5], &[5, 1]).unwrap();
        let w = tape.constant(vec![0.0; 5], &[5, 1]).unwrap();
        assert!(loss_al(&tape, &x, &[1], &w, &w, false).is_err());
    }

    #[test]
    fn al_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..20 {
            let y: Vec<u8> = (0..5).map(|_| rng.gen_range(0..=1)).collect();
            let x = rand_tensor(&[5, 5], &mut rng, 0.05, 0.95);
            let wl = rand_tensor(&[5, 5], &mut rng, -1.0, 1.0);
            let wd = rand_tensor(&[5, 5], &mut rng, -1.0, 1.0);
            let literal = case % 2 == 1;
            let yy = y.clone();
            let err = finite_diff_check_multi(
                |tape, vars| loss_al(tape, &vars[0], &yy, &vars[1], &vars[2], literal),
                &[x, wl, wd],
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "case {case}: relative error {err}");
        }
    }

    #[test]
    fn cl_identical_positive_pair_is_zero_in_corrected_mode() {
        let tape = Tape::new();
        let t = tape.constant(vec![0.3, -0.8, 1.2], &[3]).unwrap();
        let s = tape.constant(vec![0.3, -0.8, 1.2], &[3]).unwrap();
        let loss = loss_cl(&t, &[(&s, true)], 0.5, ContrastiveMode::Corrected).unwrap();
        assert!(loss.scalar_value().abs() < 1e-12);
    }

    #[test]
    fn cl_hinge_boundary_is_zero() {
        // Build vectors with sim = 1 − m exactly: unit vectors at angle
        // arccos(0.5) with m = 0.5.
        let m = 0.5;
        let tape = Tape::new();
        let t = tape.constant(vec![1.0, 0.0], &[2]).unwrap();
        let angle = (1.0f64 - m).acos();
        let s = tape.constant(vec![angle.cos(), angle.sin()], &[2]).unwrap();
        let loss = loss_cl(&t, &[(&s, false)], m, ContrastiveMode::Corrected).unwrap();
        assert!(loss.scalar_value().abs() < 1e-12, "loss {}", loss.scalar_value());
    }

    #[test]
    fn cl_literal_identical_positive_pair_is_one() {
        let tape = Tape::new();
        let t = tape.constant(vec![2.0, 1.0, -0.5], &[3]).unwrap();
        let s = tape.constant(vec![2.0, 1.0, -0.5], &[3]).unwrap();
        let loss = loss_cl(&t, &[(&s, true)], 0.5, ContrastiveMode::Literal).unwrap();
        assert!((loss.scalar_value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cl_corrected_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let tape = Tape::new();
            let t = tape
                .from_tensor(&rand_tensor(&[4], &mut rng, -1.0, 1.0))
                .unwrap();
            let s1 = tape
                .from_tensor(&rand_tensor(&[4], &mut rng, -1.0, 1.0))
                .unwrap();
            let s2 = tape
                .from_tensor(&rand_tensor(&[4], &mut rng, -1.0, 1.0))
                .unwrap();
            let loss = loss_cl(
                &t,
                &[(&s1, true), (&s2, false)],
                0.5,
                ContrastiveMode::Corrected,
            )
            .unwrap();
            assert!(loss.scalar_value() >= 0.0);
        }
    }

    #[test]
    fn cl_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..20 {
            let t = rand_tensor(&[6], &mut rng, -1.5, 1.5);
            let s1 = rand_tensor(&[6], &mut rng, -1.5, 1.5);
            let s2 = rand_tensor(&[6], &mut rng, -1.5, 1.5);
            let mode = if case % 2 == 0 {
                ContrastiveMode::Corrected
            } else {
                ContrastiveMode::Literal
            };
            let err = finite_diff_check_multi(
                |_, vars| loss_cl(&vars[0], &[(&vars[1], true), (&vars[2], false)], 0.5, mode),
                &[t, s1, s2],
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "case {case}: relative error {err}");
        }
    }

    #[test]
    fn kl_of_matching_distributions_is_zero() {
        let tape = Tape::new();
        let tau = 2.0f64;
        let z = vec![0.7, -1.3, 0.2, 2.5, -0.8];
        let probs: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-(v / tau)).exp())).collect();
        let logits = tape.constant(z, &[5]).unwrap();
        let loss = loss_kl(&tape, &probs, &logits, tau).unwrap();
        assert!(loss.scalar_value() <= 1e-12, "KL(p‖p) = {}", loss.scalar_value());
    }

    #[test]
    fn kl_direct_arithmetic_case() {
        // P_T = 0.75, z/τ = 0 → 0.75·ln(1.5) + 0.25·ln(0.5) ≈ 0.13081.
        let tape = Tape::new();
        let logits = tape.constant(vec![0.0], &[1]).unwrap();
        let loss = loss_kl(&tape, &[0.75], &logits, 1.0).unwrap();
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((loss.scalar_value() - expect).abs() < 1e-12);
        assert!((expect - 0.13081).abs() < 1e-5);
    }

    #[test]
    fn kl_is_nonnegative_and_handles_extreme_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let tape = Tape::new();
            let z = rand_tensor(&[4], &mut rng, -60.0, 60.0);
            let probs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let logits = tape.from_tensor(&z).unwrap();
            let loss = loss_kl(&tape, &probs, &logits, 2.0).unwrap();
            assert!(loss.scalar_value() >= 0.0);
            assert!(loss.scalar_value().is_finite());
        }
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for case in 0..20 {
            let z = rand_tensor(&[5], &mut rng, -3.0, 3.0);
            let probs: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..0.95)).collect();
            let pp = probs.clone();
            let err = finite_diff_check_multi(
                |tape, vars| loss_kl(tape, &pp, &vars[0], 2.0),
                &[z],
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "case {case}: relative error {err}");
        }
    }

    fn example_group(rng: &mut ChaCha8Rng, dims: &ModelDims) -> GroupExample {
        let emb = |w: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        GroupExample {
            group_id: "g0".into(),
            teacher_embedding: emb(dims.teacher_width, rng),
            teacher_probs: (0..dims.dims).map(|_| rng.gen_range(0.1..0.9)).collect(),
            labels: (0..dims.dims).map(|_| rng.gen_range(0..=1)).collect(),
            regulars: LanguageCode::ALL
                .iter()
                .map(|&l| (l, emb(dims.student_width, rng)))
                .collect(),
            contrastive: vec![
                PartnerSample {
                    language: LanguageCode::En,
                    embedding: emb(dims.student_width, rng),
                    y_sim: true,
                },
                PartnerSample {
                    language: LanguageCode::Fr,
                    embedding: emb(dims.student_width, rng),
                    y_sim: false,
                },
            ],
        }
    }

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
    fn single_component_reduces_to_that_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 1);
        let group = example_group(&mut rng, &dims);

        let kl_only = LossConfig {
            phi: 1.0,
            ablation: AblationFlags {
                use_kl: true,
                use_al: false,
                use_cl: false,
            },
            ..LossConfig::default()
        };
        let tape = Tape::new();
        let bound = model.bind(&tape).unwrap();
        let (total, parts) = clad_loss(&tape, &bound, &group, &kl_only).unwrap();
        assert!((total.scalar_value() - parts.kl).abs() < 1e-12);
        assert_eq!(parts.al, 0.0);
        assert_eq!(parts.cl, 0.0);
    }

    #[test]
    fn zero_weights_zero_the_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 1);
        let group = example_group(&mut rng, &dims);
        let cfg = LossConfig {
            phi: 0.0,
            psi: 0.0,
            rho: 0.0,
            ..LossConfig::default()
        };
        let tape = Tape::new();
        let bound = model.bind(&tape).unwrap();
        let (total, _) = clad_loss(&tape, &bound, &group, &cfg).unwrap();
        assert_eq!(total.scalar_value(), 0.0);
    }

    #[test]
    fn total_equals_hand_summed_components() {
        // Recompute each component independently and sum with the weights.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 2);
        let group = example_group(&mut rng, &dims);
        let cfg = LossConfig {
            phi: 0.7,
            psi: 1.3,
            rho: 0.4,
            ..LossConfig::default()
        };
        let tape = Tape::new();
        let bound = model.bind(&tape).unwrap();
        let (total, parts) = clad_loss(&tape, &bound, &group, &cfg).unwrap();
        let expect = cfg.phi * parts.kl + cfg.psi * parts.al + cfg.rho * parts.cl;
        assert!((total.scalar_value() - expect).abs() < 1e-12);

        // And each component matches a solo evaluation.
        for (flags, value) in [
            ((true, false, false), parts.kl),
            ((false, true, false), parts.al),
            ((false, false, true), parts.cl),
        ] {
            let solo = LossConfig {
                ablation: AblationFlags {
                    use_kl: flags.0,
                    use_al: flags.1,
                    use_cl: flags.2,
                },
                phi: 1.0,
                psi: 1.0,
                rho: 1.0,
                ..cfg.clone()
            };
            let tape = Tape::new();
            let bound = model.bind(&tape).unwrap();
            let (t, _) = clad_loss(&tape, &bound, &group, &solo).unwrap();
            assert!((t.scalar_value() - value).abs() < 1e-12);
        }
    }

    #[test]
    fn disabled_flags_error_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 2);
        let group = example_group(&mut rng, &dims);
        let cfg = LossConfig {
            ablation: AblationFlags {
                use_kl: false,
                use_al: false,
                use_cl: false,
            },
            ..LossConfig::default()
        };
        let tape = Tape::new();
        let bound = model.bind(&tape).unwrap();
        assert!(clad_loss(&tape, &bound, &group, &cfg).is_err());
    }

    #[test]
    fn disabled_component_is_input_independent() {
        // With use_cl off, perturbing contrastive inputs leaves the total
        // unchanged; with use_kl off, perturbing teacher probs does.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 5);
        let mut group = example_group(&mut rng, &dims);
        let cfg = LossConfig {
            ablation: AblationFlags {
                use_kl: false,
                use_al: true,
                use_cl: false,
            },
            ..LossConfig::default()
        };
        let eval = |group: &GroupExample| {
            let tape = Tape::new();
            let bound = model.bind(&tape).unwrap();
            clad_loss(&tape, &bound, group, &cfg).unwrap().0.scalar_value()
        };
        let base = eval(&group);
        group.teacher_probs = vec![0.9, 0.1, 0.5, 0.3, 0.7];
        group.contrastive[0].embedding.iter_mut().for_each(|v| *v += 1.0);
        group.teacher_embedding.iter_mut().for_each(|v| *v -= 0.5);
        assert_eq!(base, eval(&group));
    }

    #[test]
    fn scaling_all_weights_scales_loss_and_keeps_gradient_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dims = small_dims();
        let model = CladModel::init(dims, true, 7);
        let group = example_group(&mut rng, &dims);
        let base_cfg = LossConfig {
            phi: 1.0,
            psi: 1.0,
            rho: 1.0,
            ..LossConfig::default()
        };
        let scaled_cfg = LossConfig {
            phi: 3.0,
            psi: 3.0,
            rho: 3.0,
            ..LossConfig::default()
        };
        let run = |cfg: &LossConfig| -> (f64, Vec<f64>) {
            let tape = Tape::new();
            let bound = model.bind(&tape).unwrap();
            let (total, _) = clad_loss(&tape, &bound, &group, cfg).unwrap();
            total.backward().unwrap();
            let grads: Vec<f64> = bound
                .gradients()
                .into_iter()
                .flat_map(|(_, g)| g)
                .collect();
            (total.scalar_value(), grads)
        };
        let (l1, g1) = run(&base_cfg);
        let (l3, g3) = run(&scaled_cfg);
        assert!((l3 - 3.0 * l1).abs() < 1e-9 * l1.abs().max(1.0));
        let dot: f64 = g1.iter().zip(&g3).map(|(a, b)| a * b).sum();
        let n1: f64 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n3: f64 = g3.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((dot / (n1 * n3) - 1.0).abs() <= 1e-9);
    }
}
