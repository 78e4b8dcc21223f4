//! Train a value-expansion agent on point_mass and print the learning curve.
//!
//!   cargo run --release --example train_pointmass

use mve::harness::{run_experiment, ExperimentConfig, MetricsRow};

fn main() -> mve::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.env_name = "point_mass".into();
    cfg.mve.mode = mve::mve::MveMode::Tdk;
    cfg.mve.h = 3;
    cfg.hidden = vec![32, 32];
    cfg.model_hidden = vec![32, 32];
    cfg.batch_size = 32;
    cfg.model_batch_size = 64;
    cfg.gradient_steps = 1;
    cfg.total_steps = 8000;
    cfg.eval_interval = 1000;
    cfg.seeds = vec![0];
    cfg.out_dir = "out/train_pointmass".into();

    let dirs = run_experiment(&cfg)?;
    let text = std::fs::read_to_string(dirs[0].join("metrics.csv"))?;
    for row in MetricsRow::parse_csv(&text)? {
        println!(
            "step {:>6}  return {:>9.2} +- {:>6.2}  bellman {:.4e}  model mse {:.2e}",
            row.env_step,
            row.eval_return_mean,
            row.eval_return_std,
            row.critic_bellman_error,
            row.model_one_step_mse
        );
    }
    println!("artifacts in {}", dirs[0].display());
    Ok(())
}
