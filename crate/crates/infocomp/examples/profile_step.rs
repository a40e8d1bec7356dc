//! Scratch timing probe for one training step's pieces.

use infocomp::autodiff::{backward_all, no_grad, ops, Tensor};
use infocomp::bench;
use infocomp::config::AblationFlags;
use infocomp::data::Example;
use infocomp::encoder::EncoderWeights;
use infocomp::objectives;
use infocomp::prompts::PromptBank;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> infocomp::Result<()> {
    let config = bench::bench_config(infocomp::Mode::Infocomp, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let weights = EncoderWeights::init(&config.encoder, &mut rng)?;
    weights.set_trainable(false);
    let mut bank = PromptBank::new(&weights, 5, 1);
    bank.new_p_prompt(1, 35, &weights, 2)?;
    bank.new_head(1, &["a".into(), "b".into()], 3)?;
    bank.new_w1(1, 2 * 32 + 2, 35 * 32, 4)?;
    bank.snapshot_s_prompt();

    let batch: Vec<Example> = (0..8)
        .map(|i| Example {
            text: String::new(),
            token_ids: (0..8).map(|_| rng.gen_range(1..512)).collect(),
            label: i % 2,
        })
        .collect();
    let refs: Vec<&Example> = batch.iter().collect();
    let flags = AblationFlags::default();

    // raw kernel throughput
    let a = Tensor::randn(&[49, 32], 1.0, &mut rng);
    let b = Tensor::randn(&[32, 32], 1.0, &mut rng);
    let n = 20000;
    let t0 = std::time::Instant::now();
    no_grad(|| {
        for _ in 0..n {
            let _ = ops::matmul(&a, &b).unwrap();
        }
    });
    let per = t0.elapsed().as_secs_f64() / n as f64;
    println!(
        "matmul 49x32x32: {:.1} us  ({:.2} Gmuladd/s)",
        per * 1e6,
        49.0 * 32.0 * 32.0 / per / 1e9
    );

    // forward only
    let t0 = std::time::Instant::now();
    let n = 200;
    no_grad(|| -> infocomp::Result<()> {
        for _ in 0..n {
            let mut trunc = 0;
            let _ = objectives::task_loss(
                &refs,
                infocomp::Mode::Infocomp,
                1,
                &bank,
                &weights,
                &flags,
                &mut trunc,
            )?;
        }
        Ok(())
    })?;
    println!(
        "task_loss forward (batch 8): {:.1} ms",
        t0.elapsed().as_secs_f64() / n as f64 * 1e3
    );

    // forward + backward
    let n = 100;
    let t0 = std::time::Instant::now();
    for _ in 0..n {
        let mut trunc = 0;
        let loss = objectives::task_loss(
            &refs,
            infocomp::Mode::Infocomp,
            1,
            &bank,
            &weights,
            &flags,
            &mut trunc,
        )?;
        backward_all(&loss)?;
    }
    println!(
        "task_loss fwd+bwd (batch 8): {:.1} ms",
        t0.elapsed().as_secs_f64() / n as f64 * 1e3
    );

    // full overall_loss step
    let n = 100;
    let t0 = std::time::Instant::now();
    for _ in 0..n {
        let (loss, _) =
            objectives::overall_loss(&refs, 1, &bank, &weights, 0.05, 0.1, &flags, &mut 0)?;
        backward_all(&loss)?;
    }
    println!(
        "overall_loss fwd+bwd (batch 8): {:.1} ms",
        t0.elapsed().as_secs_f64() / n as f64 * 1e3
    );

    // finer probes
    {
        use infocomp::encoder;
        let seq = Tensor::randn(&[392, 32], 1.0, &mut rng);
        let n = 500;
        let t0 = std::time::Instant::now();
        no_grad(|| -> infocomp::Result<()> {
            for _ in 0..n {
                let _ = encoder::encode_batch(&seq, 49, &weights)?;
            }
            Ok(())
        })?;
        println!("encode_batch [392x32] no_grad: {:.2} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

        let p = bank.p_prompt(1)?.clone();
        let n = 500;
        let t0 = std::time::Instant::now();
        for _ in 0..n {
            let q = ops::matmul(&seq, &weights.layers[0].attn_q).unwrap();
            let kk = ops::matmul(&seq, &weights.layers[0].attn_k).unwrap();
            let vv = ops::matmul(&seq, &weights.layers[0].attn_v).unwrap();
            let _ = ops::multi_head_attention(&q, &kk, &vv, 4, 49).unwrap();
            infocomp::autodiff::clear_graph();
        }
        let _ = p;
        println!("qkv+mha recorded: {:.2} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

        let n = 2000;
        let t0 = std::time::Instant::now();
        no_grad(|| {
            for _ in 0..n {
                let _ = ops::layer_norm(&seq, &weights.layers[0].ln1_gain, &weights.layers[0].ln1_bias, 1e-5).unwrap();
            }
        });
        println!("layer_norm [392x32]: {:.3} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

        let big = Tensor::randn(&[392, 64], 1.0, &mut rng);
        let n = 2000;
        let t0 = std::time::Instant::now();
        no_grad(|| {
            for _ in 0..n {
                let _ = ops::gelu(&big);
            }
        });
        println!("gelu [392x64]: {:.3} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);
    }
    Ok(())
}


