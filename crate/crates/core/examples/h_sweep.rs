//! Sweep the imagination horizon H with oracle dynamics on point_mass and
//! compare final evaluation returns.
//!
//!   cargo run --release --example h_sweep

use mve::harness::analysis::sweep;
use mve::harness::ExperimentConfig;
use mve::mve::MveMode;

fn main() -> mve::Result<()> {
    let mut configs = Vec::new();
    for h in [0usize, 2, 5, 10] {
        let mut cfg = ExperimentConfig::default();
        cfg.env_name = "point_mass".into();
        cfg.mve.mode = MveMode::Tdk;
        cfg.mve.h = h;
        cfg.oracle_dynamics = true;
        cfg.hidden = vec![32, 32];
        cfg.total_steps = 6000;
        cfg.eval_interval = 1000;
        cfg.batch_size = 16;
        cfg.gradient_steps = 1;
        cfg.seeds = vec![0, 1];
        cfg.out_dir = format!("out/h_sweep/h{h}");
        configs.push((format!("h{h}"), cfg));
    }
    let csv = sweep(&configs, std::path::Path::new("out/h_sweep"))?;
    // last row per config_id is the final evaluation
    let mut finals: Vec<(String, String)> = Vec::new();
    for line in csv.lines().skip(1) {
        let (id, rest) = line.split_once(',').unwrap();
        match finals.iter_mut().find(|(i, _)| i == id) {
            Some(e) => e.1 = rest.to_string(),
            None => finals.push((id.to_string(), rest.to_string())),
        }
    }
    for (id, row) in &finals {
        println!("{id}: final (step,mean,std) = {row}");
    }
    println!("curves in out/h_sweep/sweep.csv, chart in out/h_sweep/sweep.svg");
    Ok(())
}
