//! Train the default desk-scale model and compare it with zero-filling.
//!
//! `cargo run --release -p dualcascade --example desk_trend -- [steps] [on|off] [seed]`

use std::time::Instant;

use dualcascade::metrics::{evaluate, evaluate_zero_filling};
use dualcascade::phantom::{generate_dataset, undersample_dataset, DatasetConfig};
use dualcascade::training::{train_with, TrainConfig};
use dualcascade::{CascadeConfig, MaskPattern};

fn main() -> dualcascade::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let cir = args.get(2).map_or(true, |s| s != "off");
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(17);

    let data = generate_dataset(&DatasetConfig { cases: 32, ..Default::default() })?;
    let samples = undersample_dataset(&data, 4.0, 0.08, MaskPattern::RandomLines, seed)?;
    let (train, val) = samples.split_at(24);
    let mut ccfg = CascadeConfig::for_coils(4);
    ccfg.cir_enabled = cir;
    let cfg = TrainConfig {
        epochs: 1000,
        seed,
        max_steps: Some(steps),
        validate_every: Some(25),
        ..Default::default()
    };

    let t0 = Instant::now();
    let out = train_with(train, val, &cfg, &ccfg, None, &mut |r| {
        if r.step % 10 == 0 {
            println!("step={} loss={:.6} t={:.1}s", r.step, r.loss, t0.elapsed().as_secs_f64());
        }
    })?;
    for (step, nmse) in &out.validation {
        println!("validation step={step} nmse%={nmse:.4}");
    }
    let zf = evaluate_zero_filling(val)?.image_nmse_summary().mean;
    let report = evaluate(val, &out.params, &ccfg)?;
    let trained = report.image_nmse_summary().mean;
    println!("zero-filling={zf:.4} trained={trained:.4} ratio={:.4}", trained / zf);
    print!("{}", report.to_table());
    Ok(())
}
