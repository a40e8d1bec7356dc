//! Training objectives: per-mode task cross-entropy, the bilinear
//! prompt/classifier coupling loss, the stop-gradient retention loss, and
//! their weighted combination.

use serde::{Deserialize, Serialize};

use crate::autodiff::{no_grad, ops, Tensor};
use crate::config::AblationFlags;
use crate::data::Example;
use crate::encoder::{self, ClassifierHead, EncoderWeights};
use crate::error::{Error, Result};
use crate::prompts::PromptBank;

/// Input construction / trainability regime for the task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No prompts, the whole backbone trains sequentially.
    Finetune,
    /// One shared prompt trains across all tasks: input [S, X].
    SharedPrompt,
    /// A fresh prompt per task, frozen afterwards: input [P_k, X].
    PerTaskPrompt,
    /// Growing frozen prompt list: input [P_k, ..., P_1, X].
    Progprompt,
    /// Complementary prompts with the auxiliary losses: input [P_k, S, X].
    Infocomp,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Finetune,
        Mode::SharedPrompt,
        Mode::PerTaskPrompt,
        Mode::Progprompt,
        Mode::Infocomp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Finetune => "finetune",
            Mode::SharedPrompt => "shared_prompt",
            Mode::PerTaskPrompt => "per_task_prompt",
            Mode::Progprompt => "progprompt",
            Mode::Infocomp => "infocomp",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "finetune" => Ok(Mode::Finetune),
            "shared_prompt" => Ok(Mode::SharedPrompt),
            "per_task_prompt" => Ok(Mode::PerTaskPrompt),
            "progprompt" => Ok(Mode::Progprompt),
            "infocomp" => Ok(Mode::Infocomp),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

/// Scalar view of one optimization step's loss terms.
/// total = task_loss + lambda1 * p_info + lambda2 * s_info, on the same
/// arithmetic path the gradients flow through.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task_loss: f64,
    pub p_info: f64,
    pub s_info: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// The prompt prefix each mode prepends for task `k`, built from the bank.
/// Ablation flags drop the corresponding component in infocomp mode.
pub fn prompt_prefix(
    mode: Mode,
    task_id: usize,
    bank: &PromptBank,
    flags: &AblationFlags,
) -> Result<Option<Tensor>> {
    match mode {
        Mode::Finetune => Ok(None),
        Mode::SharedPrompt => Ok(Some(bank.s_prompt().clone())),
        Mode::PerTaskPrompt => Ok(Some(bank.p_prompt(task_id)?.clone())),
        Mode::Progprompt => Ok(Some(bank.progprompt_concat(task_id)?)),
        Mode::Infocomp => {
            let p = if flags.no_p_prompt {
                None
            } else {
                Some(bank.p_prompt(task_id)?)
            };
            let s = if flags.no_s_prompt {
                None
            } else {
                Some(bank.s_prompt())
            };
            match (p, s) {
                (None, None) => Ok(None),
                (Some(p), None) => Ok(Some(p.clone())),
                (None, Some(s)) => Ok(Some(s.clone())),
                (Some(p), Some(s)) => Ok(Some(ops::concat_rows(&[p, s])?)),
            }
        }
    }
}

/// Encode one example behind an optional prompt prefix and pool the
/// classification-token row. Text that would overflow max_len is truncated
/// (never the prompts); truncations are counted into `truncated`.
pub fn encode_pooled(
    token_ids: &[usize],
    prefix: Option<&Tensor>,
    weights: &EncoderWeights,
    truncated: &mut usize,
) -> Result<Tensor> {
    let prefix_len = prefix.map_or(0, Tensor::rows);
    let max_len = weights.config.max_len;
    if prefix_len + 1 > max_len {
        return Err(Error::Config(format!(
            "prompt prefix length {prefix_len} leaves no room in max_len {max_len}"
        )));
    }
    let budget = max_len - prefix_len - 1;
    let ids = if token_ids.len() > budget {
        *truncated += 1;
        &token_ids[..budget]
    } else {
        token_ids
    };
    let mut with_cls = Vec::with_capacity(ids.len() + 1);
    with_cls.push(encoder::CLS_TOKEN_ID);
    with_cls.extend_from_slice(ids);
    let text_rows = encoder::embed_sequence(&with_cls, weights, prefix_len)?;
    let full = encoder::prepend_prompts(prefix, None, &text_rows)?;
    let hidden = encoder::encode(&full, weights)?;
    encoder::pool_representation(&hidden, prefix_len)
}

/// Pooled representations for a batch, stacked [B × d_model].
///
/// Equal-length batches (the common case on the synthetic suites) run as one
/// stacked encode; mixed lengths fall back to per-example encoding. The two
/// paths produce identical rows.
pub fn encode_batch_pooled(
    batch: &[&Example],
    prefix: Option<&Tensor>,
    weights: &EncoderWeights,
    truncated: &mut usize,
) -> Result<Tensor> {
    let prefix_len = prefix.map_or(0, Tensor::rows);
    let max_len = weights.config.max_len;
    if prefix_len + 1 > max_len {
        return Err(Error::Config(format!(
            "prompt prefix length {prefix_len} leaves no room in max_len {max_len}"
        )));
    }
    let budget = max_len - prefix_len - 1;
    let mut ids_per: Vec<&[usize]> = Vec::with_capacity(batch.len());
    for ex in batch {
        if ex.token_ids.len() > budget {
            *truncated += 1;
            ids_per.push(&ex.token_ids[..budget]);
        } else {
            ids_per.push(&ex.token_ids);
        }
    }
    let l_x = ids_per[0].len();
    if batch.len() == 1 || ids_per.iter().any(|ids| ids.len() != l_x) {
        let mut rows = Vec::with_capacity(batch.len());
        for ids in &ids_per {
            rows.push(encode_pooled_trimmed(ids, prefix, weights)?);
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        return ops::concat_rows(&refs);
    }

    let text_rows = 1 + l_x;
    let block_len = prefix_len + text_rows;
    let mut ids_all = Vec::with_capacity(batch.len() * text_rows);
    for ids in &ids_per {
        ids_all.push(encoder::CLS_TOKEN_ID);
        ids_all.extend_from_slice(ids);
    }
    let tok = ops::gather_rows(&weights.token_emb, &ids_all)?;

    let stacked = match prefix {
        Some(prefix) => {
            let mut slices = Vec::with_capacity(batch.len());
            for b in 0..batch.len() {
                slices.push(ops::slice_rows(&tok, b * text_rows, text_rows)?);
            }
            let mut parts: Vec<&Tensor> = Vec::with_capacity(batch.len() * 2);
            for slice in &slices {
                parts.push(prefix);
                parts.push(slice);
            }
            ops::concat_rows(&parts)?
        }
        None => tok,
    };
    // position embeddings cover the whole composed sequence, prompts
    // included, matching the geometry warmup pretraining saw
    let mut positions = Vec::with_capacity(batch.len() * block_len);
    for _ in 0..batch.len() {
        positions.extend(0..block_len);
    }
    let pos = ops::gather_rows(&weights.pos_emb, &positions)?;
    let seq = ops::add(&stacked, &pos)?;
    let hidden = encoder::encode_batch(&seq, block_len, weights)?;
    let pool_at: Vec<usize> = (0..batch.len())
        .map(|b| b * block_len + prefix_len)
        .collect();
    ops::gather_rows(&hidden, &pool_at)
}

/// Per-example path over already-truncated ids.
fn encode_pooled_trimmed(
    ids: &[usize],
    prefix: Option<&Tensor>,
    weights: &EncoderWeights,
) -> Result<Tensor> {
    let prefix_len = prefix.map_or(0, Tensor::rows);
    let mut with_cls = Vec::with_capacity(ids.len() + 1);
    with_cls.push(encoder::CLS_TOKEN_ID);
    with_cls.extend_from_slice(ids);
    let tok = ops::gather_rows(&weights.token_emb, &with_cls)?;
    let full = encoder::prepend_prompts(prefix, None, &tok)?;
    let positions: Vec<usize> = (0..full.rows()).collect();
    let pos = ops::gather_rows(&weights.pos_emb, &positions)?;
    let seq = ops::add(&full, &pos)?;
    let hidden = encoder::encode(&seq, weights)?;
    encoder::pool_representation(&hidden, prefix_len)
}

/// Mean task cross-entropy for a batch under the given mode's input
/// construction.
pub fn task_loss(
    batch: &[&Example],
    mode: Mode,
    task_id: usize,
    bank: &PromptBank,
    weights: &EncoderWeights,
    flags: &AblationFlags,
    truncated: &mut usize,
) -> Result<Tensor> {
    let prefix = prompt_prefix(mode, task_id, bank, flags)?;
    let pooled = encode_batch_pooled(batch, prefix.as_ref(), weights, truncated)?;
    let logits = encoder::classify(&pooled, bank.head(task_id)?)?;
    let labels: Vec<usize> = batch.iter().map(|ex| ex.label).collect();
    ops::cross_entropy_mean(&logits, &labels)
}

/// Bilinear coupling -hᵀ·W1·p between the flattened classifier parameters
/// h = [weight rows, bias] and the flattened P-Prompt p.
pub fn p_info_loss(head: &ClassifierHead, p_prompt: &Tensor, w1: &Tensor) -> Result<Tensor> {
    let d_h = head.weight.numel() + head.bias.numel();
    let d_p = p_prompt.numel();
    if w1.rows() != d_h || w1.cols() != d_p {
        return Err(Error::ShapeMismatch {
            op: "p_info_loss",
            lhs: w1.shape(),
            rhs: vec![d_h, d_p],
        });
    }
    let w_flat = ops::reshape(&head.weight, &[1, head.weight.numel()])?;
    let b_flat = ops::reshape(&head.bias, &[1, head.bias.numel()])?;
    let h = ops::concat_cols(&[&w_flat, &b_flat])?;
    let hw = ops::matmul(&h, w1)?;
    let p = ops::reshape(p_prompt, &[d_p, 1])?;
    let inner = ops::matmul(&hw, &p)?;
    Ok(ops::scale(&ops::reshape(&inner, &[1])?, -1.0))
}

/// Retention loss: negative cosine between q = normalize(W_q · v) and the
/// detached u = normalize(v_prev), averaged over the batch. `v_prev` must be
/// computed under `no_grad` so the previous-snapshot branch is a fixed
/// target.
pub fn s_info_loss(v: &Tensor, v_prev: &Tensor, w_q: &Tensor) -> Result<Tensor> {
    if v.shape() != v_prev.shape() {
        return Err(Error::ShapeMismatch {
            op: "s_info_loss",
            lhs: v.shape(),
            rhs: v_prev.shape(),
        });
    }
    let q = ops::l2_normalize_rows(&ops::matmul_nt(v, w_q)?);
    let u = ops::l2_normalize_rows(v_prev);
    let dots = ops::mul(&q, &u)?;
    let batch = v.rows() as f64;
    Ok(ops::scale(&ops::sum_all(&dots), -1.0 / batch))
}

/// The combined infocomp objective with its scalar breakdown.
///
/// The retention term contributes zero for the first task (no snapshot
/// exists) and whenever the S-Prompt cannot drift (`freeze_s_after_first`
/// past task 1). Ablation flags zero the individual terms.
#[allow(clippy::too_many_arguments)]
pub fn overall_loss(
    batch: &[&Example],
    task_id: usize,
    bank: &PromptBank,
    weights: &EncoderWeights,
    lambda1: f64,
    lambda2: f64,
    flags: &AblationFlags,
    truncated: &mut usize,
) -> Result<(Tensor, LossBreakdown)> {
    let task = task_loss(batch, Mode::Infocomp, task_id, bank, weights, flags, truncated)?;

    let p_term = if flags.no_p_prompt || flags.no_p_info {
        Tensor::scalar(0.0)
    } else {
        p_info_loss(bank.head(task_id)?, bank.p_prompt(task_id)?, bank.w1(task_id)?)?
    };

    let s_frozen = flags.freeze_s_after_first && task_id > 1;
    let s_term = match bank.s_snapshot() {
        Some(snapshot) if !flags.no_s_prompt && !flags.no_s_info && !s_frozen => {
            let s_prefix = bank.s_prompt().clone();
            let v = encode_batch_pooled(batch, Some(&s_prefix), weights, truncated)?;
            // same truncation budget as the v branch, so no extra counting
            let mut shadow = 0usize;
            let v_prev =
                no_grad(|| encode_batch_pooled(batch, Some(snapshot), weights, &mut shadow))?;
            s_info_loss(&v, &v_prev, bank.w_q())?
        }
        _ => Tensor::scalar(0.0),
    };

    let total = ops::add(
        &task,
        &ops::add(&ops::scale(&p_term, lambda1), &ops::scale(&s_term, lambda2))?,
    )?;
    let breakdown = LossBreakdown {
        task_loss: task.item(),
        p_info: p_term.item(),
        s_info: s_term.item(),
        total: total.item(),
        lambda1,
        lambda2,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::backward_all;
    use crate::encoder::{EncoderConfig, EncoderWeights};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (EncoderWeights, PromptBank, Vec<Example>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let weights = EncoderWeights::init(&EncoderConfig::tiny(), &mut rng).unwrap();
        weights.set_trainable(false);
        let mut bank = PromptBank::new(&weights, 3, 2);
        bank.new_p_prompt(1, 4, &weights, 3).unwrap();
        bank.new_head(1, &["a".into(), "b".into()], 4).unwrap();
        let d_h = 2 * 16 + 2;
        let d_p = 4 * 16;
        bank.new_w1(1, d_h, d_p, 5).unwrap();
        let batch: Vec<Example> = (0..2)
            .map(|i| Example {
                text: String::new(),
                token_ids: vec![3 + i, 7, 11],
                label: i % 2,
            })
            .collect();
        (weights, bank, batch)
    }

    #[test]
    fn mode_strings_roundtrip() {
        for mode in Mode::ALL {
            let parsed: Mode = mode.as_str().parse().unwrap();
            assert_eq!(parsed, mode);
        }
        assert!("bogus".parse::<Mode>().is_err());
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let (weights, bank, batch) = setup();
        // zero head => uniform logits => ln 2 for 2 classes
        bank.head(1).unwrap().weight.set_values(&vec![0.0; 32]);
        bank.head(1).unwrap().bias.set_values(&[0.0, 0.0]);
        let refs: Vec<&Example> = batch.iter().collect();
        let mut trunc = 0;
        let loss = task_loss(
            &refs,
            Mode::PerTaskPrompt,
            1,
            &bank,
            &weights,
            &AblationFlags::default(),
            &mut trunc,
        )
        .unwrap();
        assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn infocomp_input_length_is_constant() {
        let (weights, bank, _) = setup();
        let flags = AblationFlags::default();
        let prefix = prompt_prefix(Mode::Infocomp, 1, &bank, &flags)
            .unwrap()
            .unwrap();
        assert_eq!(prefix.rows(), 4 + 3);
        let mut trunc = 0;
        let pooled = encode_pooled(&[5, 6], Some(&prefix), &weights, &mut trunc).unwrap();
        assert_eq!(pooled.shape(), vec![1, 16]);
        assert_eq!(trunc, 0);
    }

    #[test]
    fn backbone_gradients_only_in_finetune() {
        let (weights, mut bank, batch) = setup();
        bank.new_p_prompt(2, 4, &weights, 8).unwrap();
        bank.new_head(2, &["a".into(), "b".into()], 9).unwrap();
        let refs: Vec<&Example> = batch.iter().collect();
        let flags = AblationFlags::default();

        for (mode, expect_backbone_grad) in [
            (Mode::Finetune, true),
            (Mode::SharedPrompt, false),
            (Mode::PerTaskPrompt, false),
            (Mode::Infocomp, false),
        ] {
            weights.set_trainable(mode == Mode::Finetune);
            let mut trunc = 0;
            let loss =
                task_loss(&refs, mode, 1, &bank, &weights, &flags, &mut trunc).unwrap();
            backward_all(&loss).unwrap();
            let got = weights
                .named_tensors()
                .iter()
                .any(|(_, t)| t.grad().is_some());
            assert_eq!(got, expect_backbone_grad, "mode {mode}");
            for (_, t) in weights.named_tensors() {
                t.zero_grad();
            }
        }
        weights.set_trainable(false);
    }

    #[test]
    fn p_info_zero_matrix_and_forced_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // h = [1, 0] via weight [1×1]=1, bias [1]=0; p = [2, 3]
        let head = ClassifierHead::new(0, 1, 1, &mut rng);
        head.weight.set_values(&[1.0]);
        head.bias.set_values(&[0.0]);
        let p = Tensor::param(vec![2.0, 3.0], &[2, 1]).unwrap();

        let w1_zero = Tensor::zeros(&[2, 2]);
        let loss = p_info_loss(&head, &p, &w1_zero).unwrap();
        assert_eq!(loss.item(), 0.0);

        let w1_eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let loss = p_info_loss(&head, &p, &w1_eye).unwrap();
        assert_eq!(loss.item(), -2.0);
    }

    #[test]
    fn p_info_matches_brute_force_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = ClassifierHead::new(0, 1, 4, &mut rng); // d_h = 5
        let p = Tensor::randn(&[3, 2], 1.0, &mut rng); // d_p = 6
        let w1 = Tensor::randn(&[5, 6], 1.0, &mut rng);
        let loss = p_info_loss(&head, &p, &w1).unwrap().item();

        let mut h = head.weight.to_vec();
        h.extend(head.bias.to_vec());
        let pv = p.to_vec();
        let wv = w1.to_vec();
        let mut brute = 0.0;
        for i in 0..5 {
            for j in 0..6 {
                brute += h[i] * wv[i * 6 + j] * pv[j];
            }
        }
        assert!(crate::autodiff::rel_err(loss, -brute) <= 1e-12);
    }

    #[test]
    fn p_info_is_bilinear_in_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let head = ClassifierHead::new(0, 2, 3, &mut rng);
        head.bias.set_values(&[0.3, -0.4]);
        let p = Tensor::randn(&[2, 3], 1.0, &mut rng);
        let w1 = Tensor::randn(&[8, 6], 1.0, &mut rng);
        let base = p_info_loss(&head, &p, &w1).unwrap().item();

        let c = 2.5;
        let scaled_w: Vec<f64> = head.weight.to_vec().iter().map(|v| v * c).collect();
        let scaled_b: Vec<f64> = head.bias.to_vec().iter().map(|v| v * c).collect();
        head.weight.set_values(&scaled_w);
        head.bias.set_values(&scaled_b);
        let scaled = p_info_loss(&head, &p, &w1).unwrap().item();
        assert!(crate::autodiff::rel_err(scaled, c * base) <= 1e-12);
    }

    #[test]
    fn s_info_identical_directions_give_minus_one() {
        let v = Tensor::param(vec![0.3, -0.7, 1.1], &[1, 3]).unwrap();
        let v_prev = Tensor::from_vec(vec![0.3, -0.7, 1.1], &[1, 3]).unwrap();
        let eye = Tensor::from_vec(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[3, 3],
        )
        .unwrap();
        let loss = s_info_loss(&v, &v_prev, &eye).unwrap();
        assert!((loss.item() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn s_info_orthogonal_gives_zero() {
        let v = Tensor::param(vec![1.0, 0.0], &[1, 2]).unwrap();
        let v_prev = Tensor::from_vec(vec![0.0, 1.0], &[1, 2]).unwrap();
        let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let loss = s_info_loss(&v, &v_prev, &eye).unwrap();
        assert!(loss.item().abs() < 1e-15);
    }

    #[test]
    fn s_info_is_bounded_by_normalization() {
        // each batch element contributes a unit-vector dot product, so the
        // mean is always inside [-1, 1] no matter the inputs
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let v = Tensor::randn(&[4, 6], 2.0, &mut rng);
            let v_prev = Tensor::randn(&[4, 6], 2.0, &mut rng);
            let w_q = Tensor::randn(&[6, 6], 1.0, &mut rng);
            let loss = s_info_loss(&v, &v_prev, &w_q).unwrap().item();
            assert!(loss.abs() <= 1.0 + 1e-12, "loss {loss}");
        }
        // aligned targets sit at the optimum end of the range
        let v = Tensor::from_vec(vec![2.0, 1.0], &[1, 2]).unwrap();
        let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let loss = s_info_loss(&v, &v, &eye).unwrap().item();
        assert!((loss + 1.0).abs() < 1e-12);
    }

    #[test]
    fn stop_gradient_blocks_the_snapshot_branch() {
        let (weights, mut bank, batch) = setup();
        bank.snapshot_s_prompt();
        let refs: Vec<&Example> = batch.iter().collect();
        let flags = AblationFlags::default();
        let (total, _) = overall_loss(
            &refs, 1, &bank, &weights, 0.05, 0.1, &flags, &mut 0,
        )
        .unwrap();
        backward_all(&total).unwrap();
        // the snapshot is frozen and detached: no gradient, ever
        assert!(bank.s_snapshot().unwrap().grad().is_none());
        // the live S-Prompt gets one (task path + retention path)
        assert!(bank.s_prompt().grad().is_some());
    }

    #[test]
    fn lambda_zero_collapses_to_task_loss() {
        let (weights, mut bank, batch) = setup();
        bank.snapshot_s_prompt();
        let refs: Vec<&Example> = batch.iter().collect();
        let flags = AblationFlags::default();
        let mut trunc = 0;
        let (total, breakdown) = overall_loss(
            &refs, 1, &bank, &weights, 0.0, 0.0, &flags, &mut trunc,
        )
        .unwrap();
        assert_eq!(total.item(), breakdown.task_loss);
        assert_eq!(breakdown.total, breakdown.task_loss);
    }

    #[test]
    fn breakdown_records_lambdas_and_sums_exactly() {
        let (weights, mut bank, batch) = setup();
        bank.snapshot_s_prompt();
        let refs: Vec<&Example> = batch.iter().collect();
        let flags = AblationFlags::default();
        let (_, b) = overall_loss(
            &refs, 1, &bank, &weights, 0.05, 0.1, &flags, &mut 0,
        )
        .unwrap();
        assert_eq!(b.lambda1, 0.05);
        assert_eq!(b.lambda2, 0.1);
        assert_eq!(b.total, b.task_loss + 0.05 * b.p_info + 0.1 * b.s_info);
    }

    #[test]
    fn gradient_of_total_is_sum_of_term_gradients() {
        let (weights, mut bank, batch) = setup();
        bank.snapshot_s_prompt();
        let refs: Vec<&Example> = batch.iter().collect();
        let flags = AblationFlags::default();
        let (lambda1, lambda2) = (0.05, 0.1);

        let trainables = [
            bank.p_prompt(1).unwrap().clone(),
            bank.s_prompt().clone(),
            bank.head(1).unwrap().weight.clone(),
            bank.head(1).unwrap().bias.clone(),
            bank.w1(1).unwrap().clone(),
            bank.w_q().clone(),
        ];

        // one pass over the combined objective
        let (total, _) =
            overall_loss(&refs, 1, &bank, &weights, lambda1, lambda2, &flags, &mut 0).unwrap();
        backward_all(&total).unwrap();
        let combined: Vec<Vec<f64>> = trainables
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        for t in &trainables {
            t.zero_grad();
        }

        // three separate passes, scaled, accumulating into the same grads
        let task =
            task_loss(&refs, Mode::Infocomp, 1, &bank, &weights, &flags, &mut 0).unwrap();
        backward_all(&ops::scale(&task, 1.0)).unwrap();
        let p = p_info_loss(
            bank.head(1).unwrap(),
            bank.p_prompt(1).unwrap(),
            bank.w1(1).unwrap(),
        )
        .unwrap();
        backward_all(&ops::scale(&p, lambda1)).unwrap();
        let s_prefix = bank.s_prompt().clone();
        let v = encode_batch_pooled(&refs, Some(&s_prefix), &weights, &mut 0).unwrap();
        let v_prev = no_grad(|| {
            encode_batch_pooled(&refs, Some(bank.s_snapshot().unwrap()), &weights, &mut 0)
        })
        .unwrap();
        let s = s_info_loss(&v, &v_prev, bank.w_q()).unwrap();
        backward_all(&ops::scale(&s, lambda2)).unwrap();

        for (t, expect) in trainables.iter().zip(&combined) {
            let got = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            for (g, e) in got.iter().zip(expect) {
                assert!(
                    crate::autodiff::rel_err(*g, *e) <= 1e-9,
                    "gradient mismatch {g} vs {e}"
                );
            }
            t.zero_grad();
        }
    }
}
