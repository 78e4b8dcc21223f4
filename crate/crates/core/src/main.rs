//! Experiment CLI: run configured training, sweep config directories,
//! run the theory verification checks, and export run analyses.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mve::ddpg::{Agent, AgentConfig};
use mve::envs::Env;
use mve::error::{Error, Result};
use mve::harness::analysis::qdensity_csv;
use mve::harness::{load_run, qdensity_export, run_experiment, sweep, ExperimentConfig};
use mve::model::{open_loop_error_curve, Dynamics};
use mve::verify;

#[derive(Parser)]
#[command(name = "mve", about = "Value-expansion actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment config.
    Run { config: PathBuf },
    /// Run all .cfg files in a directory and aggregate their curves.
    Sweep {
        config_dir: PathBuf,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
    /// Numerical checks of the method's theory.
    Verify {
        /// bound | ascent | counterexample | mismatch
        check: String,
        #[arg(long, default_value = "hillclimb")]
        env: String,
        #[arg(long, default_value_t = 3)]
        h: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 200)]
        n_states: usize,
        #[arg(long, default_value_t = 0.03)]
        scale: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Export critic-prediction vs observed-return pairs for a run.
    Qdensity {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export the open-loop model error curve for a run.
    ModelError {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        horizon: usize,
        #[arg(long, default_value_t = 50)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::parse(&fs::read_to_string(&config)?)?;
            let dirs = run_experiment(&cfg)?;
            for d in dirs {
                println!("wrote {}", d.display());
            }
            Ok(())
        }
        Command::Sweep { config_dir, out } => {
            let mut configs = Vec::new();
            let mut entries: Vec<PathBuf> = fs::read_dir(&config_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
                .collect();
            entries.sort();
            for path in entries {
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("config")
                    .to_string();
                configs.push((id, ExperimentConfig::parse(&fs::read_to_string(&path)?)?));
            }
            if configs.is_empty() {
                return Err(Error::Config(format!(
                    "no .cfg files in {}",
                    config_dir.display()
                )));
            }
            sweep(&configs, &out)?;
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }
        Command::Verify {
            check,
            env,
            h,
            gamma,
            trials,
            n_states,
            scale,
            delta,
            epsilon_s,
            seed,
            out,
        } => match check.as_str() {
            "bound" => verify_bound(&env, h, gamma, trials, n_states, scale, seed, &out),
            "ascent" => verify_ascent(&env, seed),
            "counterexample" => {
                verify_counterexample(delta, epsilon_s);
                Ok(())
            }
            "mismatch" => verify_mismatch(&env, h, seed),
            other => Err(Error::Config(format!(
                "unknown check `{other}` (bound | ascent | counterexample | mismatch)"
            ))),
        },
        Command::Qdensity {
            run_dir,
            episodes,
            seed,
        } => {
            let (cfg, agent, _) = load_run(&run_dir)?;
            let env = Env::by_name(&cfg.env_name)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = qdensity_export(&agent, &env, episodes, env.spec.gamma, &mut rng);
            fs::write(run_dir.join("qdensity.csv"), qdensity_csv(&result))?;
            if result.degenerate {
                println!("degenerate: zero-variance predicted column");
            }
            println!(
                "wrote {} ({} pairs, pearson {:.4})",
                run_dir.join("qdensity.csv").display(),
                result.pairs.len(),
                result.pearson
            );
            Ok(())
        }
        Command::ModelError {
            run_dir,
            horizon,
            starts,
            seed,
        } => {
            let (cfg, agent, model) = load_run(&run_dir)?;
            let env = Env::by_name(&cfg.env_name)?;
            let dynamics = match model {
                Some(m) => Dynamics::Learned(m),
                None => Dynamics::Oracle(env.clone()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let curve = open_loop_error_curve(
                &dynamics,
                &env,
                |s| agent.policy(s),
                horizon,
                starts,
                &mut rng,
            );
            let mut csv = String::from("depth,mean_l2,std_l2\n");
            for (i, (mean, std)) in curve.iter().enumerate() {
                csv.push_str(&format!("{},{mean},{std}\n", i + 1));
            }
            fs::write(run_dir.join("model_error.csv"), csv)?;
            println!("wrote {}", run_dir.join("model_error.csv").display());
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn verify_bound(
    env_name: &str,
    h: usize,
    gamma: f64,
    trials: usize,
    n_states: usize,
    scale: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let env = Env::by_name(env_name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("term,name,value\n");
    let mut all_hold = true;
    for trial in 0..trials {
        use rand::Rng;
        let pm = verify::PerturbedModel::new(env.clone(), scale, seed.wrapping_add(trial as u64));
        // random bounded-error critic around a random affine map
        let w: Vec<f64> = (0..env.spec.state_dim)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let b: f64 = rng.gen_range(-2.0..2.0);
        let critic = |s: &[f64]| s.iter().zip(w.iter()).map(|(x, wi)| x * wi).sum::<f64>() + b;
        let act: Vec<f64> = env
            .spec
            .action_low
            .iter()
            .zip(env.spec.action_high.iter())
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        let policy = |_s: &[f64]| act.clone();
        let report = verify::check_mve_error_decomposition(
            &pm, critic, policy, h, gamma, n_states, 1e-8, &mut rng,
        );
        all_hold &= report.holds;
        for (term, name, value) in report.csv_rows() {
            csv.push_str(&format!("{term},trial{trial}.{name},{value}\n"));
        }
        println!(
            "trial {trial}: eps^2 {:.3e}  mse_mve {:.3e}  holds {}  applicable {}",
            report.epsilon_sq, report.mse_mve, report.holds, report.assumption_holds
        );
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("bound_report.csv"), csv)?;
    println!(
        "wrote {} (all steps hold: {all_hold})",
        out.join("bound_report.csv").display()
    );
    Ok(())
}

fn verify_ascent(env_name: &str, seed: u64) -> Result<()> {
    let env = Env::by_name(env_name)?;
    let gamma = env.spec.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_cfg = AgentConfig::for_env(&env.spec);
    // small networks keep alpha |g| inside the linear regime at the tested
    // step sizes; larger critics overshoot even though ascent holds as
    // alpha -> 0
    agent_cfg.hidden = vec![8, 8];
    let mut agent = Agent::new(&agent_cfg, seed);
    let mse = verify::fit_critic_to_true_q(
        &mut agent, &env, gamma, 1500, 0.3, 4000, 64, 1e-3, &mut rng,
    );
    let beta: Vec<Vec<f64>> = (0..256).map(|_| env.reset(&mut rng)).collect();
    let report =
        verify::check_ascent_direction(&env, &agent, &beta, &[1e-4, 1e-3, 1e-2], gamma, 1e-6);
    println!("critic regression mse: {mse:.4e}");
    println!("gradient norm: {:.4e}", report.grad_norm);
    for e in &report.entries {
        println!(
            "alpha {:.0e}: mean dJ {:+.4e} (se {:.2e}) improved {}",
            e.alpha, e.mean_diff, e.std_err, e.improved
        );
    }
    match report.largest_improving_alpha {
        Some(a) => println!("largest improving step size: {a:.0e}"),
        None => println!("no tested step size improved J"),
    }
    Ok(())
}

fn verify_counterexample(delta: f64, epsilon_s: f64) {
    let report = verify::check_hillclimb_counterexample(delta, epsilon_s, &[1e-3, 1e-2]);
    println!(
        "delta {} epsilon_s {} gamma {}",
        report.delta, report.epsilon_s, report.gamma
    );
    println!("g(0)            = {:+.6e}  (claimed 0: {})", report.g_at_zero, report.g_zero_ok);
    println!(
        "g(1+eps)        = {:+.6e}  (claimed < 0: {})",
        report.g_at_offset, report.g_offset_negative
    );
    println!("mean direction  = {:+.6e}", report.mean_g);
    for e in &report.entries {
        println!(
            "alpha {:.0e}: J {:+.6} -> {:+.6}  (claimed decrease: {})",
            e.alpha, e.j_before, e.j_after, e.decreased
        );
    }
}

fn verify_mismatch(env_name: &str, h: usize, seed: u64) -> Result<()> {
    let env = Env::by_name(env_name)?;
    let gamma = env.spec.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // drift policy pushing states away from the init region
    let act: Vec<f64> = env.spec.action_high.clone();
    let policy = |_s: &[f64]| act.clone();
    let beta: Vec<Vec<f64>> = (0..200).map(|_| env.reset(&mut rng)).collect();
    // critic: small net regressed on V^pi over beta only
    let mut agent_cfg = AgentConfig::for_env(&env.spec);
    agent_cfg.hidden = vec![32, 32];
    let mut agent = Agent::new(&agent_cfg, seed);
    let pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = beta
        .iter()
        .map(|s| {
            (
                s.clone(),
                policy(s),
                env.discounted_value(policy, s, gamma, 1e-4),
            )
        })
        .collect();
    for _ in 0..2000 {
        use rand::Rng;
        let batch: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..64)
            .map(|_| pairs[rng.gen_range(0..pairs.len())].clone())
            .collect();
        let (_, grad) = mve::ddpg::critic_regression_grad(&agent.critic, &batch)?;
        agent.critic_apply_grad(&grad)?;
    }
    let critic = |s: &[f64]| agent.q_value(s, &policy(s));
    let (mse_beta, mse_pf) =
        verify::measure_distribution_mismatch(&env, critic, policy, &beta, h, gamma, 1e-4);
    println!("mse on beta:        {mse_beta:.6e}");
    println!("mse on pushforward: {mse_pf:.6e}");
    println!("mismatch (pf > beta): {}", mse_pf > mse_beta);
    Ok(())
}
