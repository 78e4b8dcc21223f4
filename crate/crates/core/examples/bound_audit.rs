//! Audit the value-expansion error decomposition numerically: perturb the
//! true dynamics by a bounded offset, roll out, and check every inequality
//! in the chain from the empirical target error to the closed-form bound.
//!
//!   cargo run --release --example bound_audit

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mve::envs::Env;
use mve::verify::{check_mve_error_decomposition, PerturbedModel};

fn main() -> mve::Result<()> {
    let env = Env::by_name("hillclimb")?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for h in [1usize, 3, 5] {
        for trial in 0..3u64 {
            let pm = PerturbedModel::new(env.clone(), 0.03, trial);
            let w = rng.gen_range(-2.0..2.0);
            let b = rng.gen_range(-2.0..2.0);
            let critic = |s: &[f64]| w * s[0] + b;
            let a = rng.gen_range(-1.0..2.0);
            let policy = move |_s: &[f64]| vec![a];
            let rep =
                check_mve_error_decomposition(&pm, critic, policy, h, 0.9, 200, 1e-8, &mut rng);
            println!(
                "h {h} trial {trial}: eps^2 {:.2e}  mse {:.3e}  bound holds {}  applicable {}",
                rep.epsilon_sq, rep.mse_mve, rep.holds, rep.assumption_holds
            );
            for s in &rep.steps {
                println!("    {:<22} {:.4e} <= {:.4e} : {}", s.name, s.lhs, s.rhs, s.holds);
            }
        }
    }
    Ok(())
}
