//! The full finite-difference verification battery: every primitive op and
//! every loss mode, on a d_model = 16 model, across several seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_check, no_grad, ops, FdReport, Tensor};
use crate::config::AblationFlags;
use crate::data::Example;
use crate::encoder::{self, EncoderConfig, EncoderWeights};
use crate::error::Result;
use crate::objectives::{self, Mode};
use crate::prompts::PromptBank;

/// One named check outcome.
pub struct SuiteCheck {
    pub name: String,
    pub report: FdReport,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Weighted sum against fixed coefficients turns any tensor-valued op into a
/// scalar probe with informative gradients everywhere.
fn weighted_sum(out: &Tensor, coefficients: &Tensor) -> Result<Tensor> {
    Ok(ops::sum_all(&ops::mul(out, coefficients)?))
}

fn param<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let t = Tensor::randn(shape, 0.8, rng);
    t.set_requires_grad(true);
    t
}

fn coeffs<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

macro_rules! check {
    ($checks:ident, $name:expr, $seed:expr, $params:expr, $f:expr, $h:expr, $tol:expr) => {{
        let report = finite_difference_check($f, &$params, $h, $tol)?;
        $checks.push(SuiteCheck {
            name: format!("{}[seed={}]", $name, $seed),
            report,
        });
    }};
}

fn primitive_checks(
    checks: &mut Vec<SuiteCheck>,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // matmul
    {
        let a = param(&[3, 4], &mut rng);
        let b = param(&[4, 2], &mut rng);
        let c = coeffs(&[3, 2], &mut rng);
        let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
        check!(
            checks,
            "matmul",
            seed,
            vec![("a".to_string(), a), ("b".to_string(), b)],
            move || weighted_sum(&ops::matmul(&af, &bf)?, &cf),
            h,
            tol
        );
    }
    // matmul_nt
    {
        let a = param(&[3, 4], &mut rng);
        let b = param(&[2, 4], &mut rng);
        let c = coeffs(&[3, 2], &mut rng);
        let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
        check!(
            checks,
            "matmul_nt",
            seed,
            vec![("a".to_string(), a), ("b".to_string(), b)],
            move || weighted_sum(&ops::matmul_nt(&af, &bf)?, &cf),
            h,
            tol
        );
    }
    // add + mul + scale chained
    {
        let a = param(&[2, 3], &mut rng);
        let b = param(&[2, 3], &mut rng);
        let c = coeffs(&[2, 3], &mut rng);
        let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
        check!(
            checks,
            "add_mul_scale",
            seed,
            vec![("a".to_string(), a), ("b".to_string(), b)],
            move || {
                let sum = ops::add(&af, &bf)?;
                let prod = ops::mul(&sum, &af)?;
                weighted_sum(&ops::scale(&prod, 1.7), &cf)
            },
            h,
            tol
        );
    }
    // add_row_broadcast
    {
        let x = param(&[3, 4], &mut rng);
        let row = param(&[1, 4], &mut rng);
        let c = coeffs(&[3, 4], &mut rng);
        let (xf, rf, cf) = (x.clone(), row.clone(), c.clone());
        check!(
            checks,
            "add_row_broadcast",
            seed,
            vec![("x".to_string(), x), ("row".to_string(), row)],
            move || weighted_sum(&ops::add_row_broadcast(&xf, &rf)?, &cf),
            h,
            tol
        );
    }
    // concat_rows + slice_rows
    {
        let a = param(&[2, 3], &mut rng);
        let b = param(&[2, 3], &mut rng);
        let c = coeffs(&[3, 3], &mut rng);
        let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
        check!(
            checks,
            "concat_slice_rows",
            seed,
            vec![("a".to_string(), a), ("b".to_string(), b)],
            move || {
                let cat = ops::concat_rows(&[&af, &bf])?;
                weighted_sum(&ops::slice_rows(&cat, 1, 3)?, &cf)
            },
            h,
            tol
        );
    }
    // concat_cols + slice_cols
    {
        let a = param(&[2, 2], &mut rng);
        let b = param(&[2, 3], &mut rng);
        let c = coeffs(&[2, 3], &mut rng);
        let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
        check!(
            checks,
            "concat_slice_cols",
            seed,
            vec![("a".to_string(), a), ("b".to_string(), b)],
            move || {
                let cat = ops::concat_cols(&[&af, &bf])?;
                weighted_sum(&ops::slice_cols(&cat, 1, 3)?, &cf)
            },
            h,
            tol
        );
    }
    // reshape
    {
        let x = param(&[2, 6], &mut rng);
        let c = coeffs(&[3, 4], &mut rng);
        let (xf, cf) = (x.clone(), c.clone());
        check!(
            checks,
            "reshape",
            seed,
            vec![("x".to_string(), x)],
            move || weighted_sum(&ops::reshape(&xf, &[3, 4])?, &cf),
            h,
            tol
        );
    }
    // softmax_rows (full Jacobian through a weighted sum)
    {
        let x = param(&[2, 3], &mut rng);
        let c = coeffs(&[2, 3], &mut rng);
        let (xf, cf) = (x.clone(), c.clone());
        check!(
            checks,
            "softmax_rows",
            seed,
            vec![("x".to_string(), x)],
            move || weighted_sum(&ops::softmax_rows(&xf), &cf),
            h,
            tol
        );
    }
    // layer_norm, including gain and bias gradients
    {
        let x = param(&[2, 4], &mut rng);
        let gain = param(&[4], &mut rng);
        let bias = param(&[4], &mut rng);
        let c = coeffs(&[2, 4], &mut rng);
        let (xf, gf, bf, cf) = (x.clone(), gain.clone(), bias.clone(), c.clone());
        check!(
            checks,
            "layer_norm",
            seed,
            vec![
                ("x".to_string(), x),
                ("gain".to_string(), gain),
                ("bias".to_string(), bias)
            ],
            move || weighted_sum(&ops::layer_norm(&xf, &gf, &bf, 1e-5)?, &cf),
            h,
            tol
        );
    }
    // gelu
    {
        let x = param(&[1, 6], &mut rng);
        let c = coeffs(&[1, 6], &mut rng);
        let (xf, cf) = (x.clone(), c.clone());
        check!(
            checks,
            "gelu",
            seed,
            vec![("x".to_string(), x)],
            move || weighted_sum(&ops::gelu(&xf), &cf),
            h,
            tol
        );
    }
    // cross_entropy_mean
    {
        let logits = param(&[4, 3], &mut rng);
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
        let lf = logits.clone();
        check!(
            checks,
            "cross_entropy_mean",
            seed,
            vec![("logits".to_string(), logits)],
            move || ops::cross_entropy_mean(&lf, &labels),
            h,
            tol
        );
    }
    // gather_rows with repeated ids (scatter-add path)
    {
        let table = param(&[6, 3], &mut rng);
        let ids = vec![0usize, 2, 2, 5];
        let c = coeffs(&[4, 3], &mut rng);
        let (tf, cf) = (table.clone(), c.clone());
        check!(
            checks,
            "gather_rows",
            seed,
            vec![("table".to_string(), table)],
            move || weighted_sum(&ops::gather_rows(&tf, &ids)?, &cf),
            h,
            tol
        );
    }
    // l2_normalize_rows
    {
        let x = param(&[2, 4], &mut rng);
        let c = coeffs(&[2, 4], &mut rng);
        let (xf, cf) = (x.clone(), c.clone());
        check!(
            checks,
            "l2_normalize_rows",
            seed,
            vec![("x".to_string(), x)],
            move || weighted_sum(&ops::l2_normalize_rows(&xf), &cf),
            h,
            tol
        );
    }
    // mean_all
    {
        let x = param(&[2, 3], &mut rng);
        let xf = x.clone();
        check!(
            checks,
            "mean_all",
            seed,
            vec![("x".to_string(), x)],
            move || Ok(ops::mean_all(&xf)),
            h,
            tol
        );
    }
    Ok(())
}

/// A tiny two-task model at d_model = 16: task 1 completed and frozen with a
/// snapshot in place, task 2 live. The loss-mode checks run against task 2.
struct LossFixture {
    weights: EncoderWeights,
    bank: PromptBank,
    batch: Vec<Example>,
}

impl LossFixture {
    fn new(seed: u64) -> Result<LossFixture> {
        let config = EncoderConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = EncoderWeights::init(&config, &mut rng)?;
        weights.set_trainable(false);
        let mut bank = PromptBank::new(&weights, 3, seed ^ 0x5ca1e);
        let labels = vec!["a".to_string(), "b".to_string()];
        let (l_p, d) = (4usize, config.d_model);
        for task in 1..=2 {
            bank.new_p_prompt(task, l_p, &weights, seed ^ task as u64)?;
            bank.new_head(task, &labels, seed ^ (10 + task as u64))?;
            let d_h = 2 * d + 2;
            bank.new_w1(task, d_h, l_p * d, seed ^ (20 + task as u64))?;
        }
        bank.freeze_task_artifacts(1)?;
        bank.snapshot_s_prompt();
        // Drift the live S-Prompt and the alignment matrix off the snapshot,
        // as mid-task-2 training would have; at an exact snapshot match the
        // retention loss sits at its optimum where the true gradient is zero
        // and finite differences only measure curvature noise.
        let drift = |t: &Tensor, rng: &mut ChaCha8Rng| {
            let noisy: Vec<f64> = t
                .to_vec()
                .iter()
                .map(|v| v + 0.05 * (rng.gen::<f64>() - 0.5))
                .collect();
            t.set_values(&noisy);
        };
        drift(bank.s_prompt(), &mut rng);
        drift(bank.w_q(), &mut rng);

        let vocab = config.vocab_size;
        let batch: Vec<Example> = (0..2)
            .map(|i| Example {
                text: String::new(),
                token_ids: (0..5).map(|_| rng.gen_range(1..vocab)).collect(),
                label: i % 2,
            })
            .collect();
        Ok(LossFixture {
            weights,
            bank,
            batch,
        })
    }

    fn task2_trainables(&self) -> Vec<(String, Tensor)> {
        vec![
            ("p_prompt.2".into(), self.bank.p_prompt(2).unwrap().clone()),
            (
                "head.2.weight".into(),
                self.bank.head(2).unwrap().weight.clone(),
            ),
            (
                "head.2.bias".into(),
                self.bank.head(2).unwrap().bias.clone(),
            ),
            ("w1.2".into(), self.bank.w1(2).unwrap().clone()),
            ("s_prompt".into(), self.bank.s_prompt().clone()),
            ("w_q".into(), self.bank.w_q().clone()),
        ]
    }
}

fn loss_mode_checks(
    checks: &mut Vec<SuiteCheck>,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<()> {
    let flags = AblationFlags::default();

    // encoder gradients w.r.t. prompt rows
    {
        let fixture = LossFixture::new(seed)?;
        let weights = fixture.weights.clone();
        let p = fixture.bank.p_prompt(2)?.clone();
        let s = fixture.bank.s_prompt().clone();
        let ids = fixture.batch[0].token_ids.clone();
        let c = coeffs(
            &[p.rows() + s.rows() + ids.len(), 16],
            &mut ChaCha8Rng::seed_from_u64(seed ^ 99),
        );
        let (pf, sf) = (p.clone(), s.clone());
        check!(
            checks,
            "encode_prompt_grads",
            seed,
            vec![("p_prompt".to_string(), p), ("s_prompt".to_string(), s)],
            move || {
                let x = encoder::embed_sequence(&ids, &weights, pf.rows() + sf.rows())?;
                let seq = encoder::prepend_prompts(Some(&pf), Some(&sf), &x)?;
                weighted_sum(&encoder::encode(&seq, &weights)?, &c)
            },
            h,
            tol
        );
    }

    // task loss under each mode
    for mode in [
        Mode::SharedPrompt,
        Mode::PerTaskPrompt,
        Mode::Progprompt,
        Mode::Infocomp,
    ] {
        let fixture = LossFixture::new(seed)?;
        let params: Vec<(String, Tensor)> = match mode {
            Mode::SharedPrompt => vec![
                ("s_prompt".into(), fixture.bank.s_prompt().clone()),
                (
                    "head.2.weight".into(),
                    fixture.bank.head(2)?.weight.clone(),
                ),
                ("head.2.bias".into(), fixture.bank.head(2)?.bias.clone()),
            ],
            Mode::PerTaskPrompt | Mode::Progprompt => vec![
                ("p_prompt.2".into(), fixture.bank.p_prompt(2)?.clone()),
                (
                    "head.2.weight".into(),
                    fixture.bank.head(2)?.weight.clone(),
                ),
                ("head.2.bias".into(), fixture.bank.head(2)?.bias.clone()),
            ],
            _ => vec![
                ("p_prompt.2".into(), fixture.bank.p_prompt(2)?.clone()),
                ("s_prompt".into(), fixture.bank.s_prompt().clone()),
                (
                    "head.2.weight".into(),
                    fixture.bank.head(2)?.weight.clone(),
                ),
                ("head.2.bias".into(), fixture.bank.head(2)?.bias.clone()),
            ],
        };
        let name = format!("task_loss_{mode}");
        check!(
            checks,
            name,
            seed,
            params,
            move || {
                let refs: Vec<&Example> = fixture.batch.iter().collect();
                objectives::task_loss(
                    &refs,
                    mode,
                    2,
                    &fixture.bank,
                    &fixture.weights,
                    &flags,
                    &mut 0,
                )
            },
            h,
            tol
        );
    }

    // finetune mode: gradients reach every backbone tensor
    {
        let fixture = LossFixture::new(seed)?;
        fixture.weights.set_trainable(true);
        let mut params: Vec<(String, Tensor)> = fixture
            .weights
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        params.push((
            "head.2.weight".into(),
            fixture.bank.head(2)?.weight.clone(),
        ));
        params.push(("head.2.bias".into(), fixture.bank.head(2)?.bias.clone()));
        check!(
            checks,
            "task_loss_finetune",
            seed,
            params,
            move || {
                let refs: Vec<&Example> = fixture.batch.iter().collect();
                objectives::task_loss(
                    &refs,
                    Mode::Finetune,
                    2,
                    &fixture.bank,
                    &fixture.weights,
                    &flags,
                    &mut 0,
                )
            },
            h,
            tol
        );
    }

    // p-info bilinear coupling
    {
        let fixture = LossFixture::new(seed)?;
        let params = vec![
            (
                "head.2.weight".into(),
                fixture.bank.head(2)?.weight.clone(),
            ),
            ("head.2.bias".into(), fixture.bank.head(2)?.bias.clone()),
            ("p_prompt.2".into(), fixture.bank.p_prompt(2)?.clone()),
            ("w1.2".into(), fixture.bank.w1(2)?.clone()),
        ];
        check!(
            checks,
            "p_info_loss",
            seed,
            params,
            move || {
                objectives::p_info_loss(
                    fixture.bank.head(2)?,
                    fixture.bank.p_prompt(2)?,
                    fixture.bank.w1(2)?,
                )
            },
            h,
            tol
        );
    }

    // s-info retention (v branch live, v_prev branch detached)
    {
        let fixture = LossFixture::new(seed)?;
        let params = vec![
            ("s_prompt".into(), fixture.bank.s_prompt().clone()),
            ("w_q".into(), fixture.bank.w_q().clone()),
        ];
        check!(
            checks,
            "s_info_loss",
            seed,
            params,
            move || {
                let refs: Vec<&Example> = fixture.batch.iter().collect();
                let s = fixture.bank.s_prompt().clone();
                let mut rows = Vec::new();
                for ex in &refs {
                    rows.push(objectives::encode_pooled(
                        &ex.token_ids,
                        Some(&s),
                        &fixture.weights,
                        &mut 0,
                    )?);
                }
                let row_refs: Vec<&Tensor> = rows.iter().collect();
                let v = ops::concat_rows(&row_refs)?;
                let snapshot = fixture.bank.s_snapshot().unwrap();
                let v_prev = no_grad(|| -> Result<Tensor> {
                    let mut rows = Vec::new();
                    for ex in &refs {
                        rows.push(objectives::encode_pooled(
                            &ex.token_ids,
                            Some(snapshot),
                            &fixture.weights,
                            &mut 0,
                        )?);
                    }
                    let row_refs: Vec<&Tensor> = rows.iter().collect();
                    ops::concat_rows(&row_refs)
                })?;
                objectives::s_info_loss(&v, &v_prev, fixture.bank.w_q())
            },
            h,
            tol
        );
    }

    // combined objective over every live trainable
    {
        let fixture = LossFixture::new(seed)?;
        let params = fixture.task2_trainables();
        check!(
            checks,
            "overall_loss",
            seed,
            params,
            move || {
                let refs: Vec<&Example> = fixture.batch.iter().collect();
                let (total, _) = objectives::overall_loss(
                    &refs,
                    2,
                    &fixture.bank,
                    &fixture.weights,
                    0.05,
                    0.1,
                    &flags,
                    &mut 0,
                )?;
                Ok(total)
            },
            h,
            tol
        );
    }
    Ok(())
}

/// Run the whole battery. Defaults: h = 1e-4, tol = 1e-4, seeds 0..3.
pub fn run_suite(tol: f64, h: f64, seeds: &[u64]) -> Result<Vec<SuiteCheck>> {
    let mut checks = Vec::new();
    for &seed in seeds {
        primitive_checks(&mut checks, seed, h, tol)?;
        loss_mode_checks(&mut checks, seed, h, tol)?;
    }
    Ok(checks)
}

pub fn suite_passes(checks: &[SuiteCheck]) -> bool {
    checks.iter().all(SuiteCheck::passed)
}
