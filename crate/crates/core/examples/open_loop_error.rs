//! Fit a dynamics model to random-policy pendulum transitions and print how
//! the open-loop prediction error compounds with rollout depth.
//!
//!   cargo run --release --example open_loop_error

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mve::envs::Env;
use mve::model::{open_loop_error_curve, Dynamics, LearnedModel};

fn main() -> mve::Result<()> {
    let env = Env::by_name("pendulum")?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut transitions = Vec::new();
    let mut s = env.reset(&mut rng);
    for t in 0..5000 {
        let a = env.random_action(&mut rng);
        let tr = env.step(&s, &a)?;
        let s2 = tr.next_state.clone();
        transitions.push(tr);
        s = if t % env.spec.episode_length == env.spec.episode_length - 1 {
            env.reset(&mut rng)
        } else {
            s2
        };
    }

    let mut model = LearnedModel::new(
        env.spec.state_dim,
        env.spec.action_dim,
        &[64, 64, 64, 64],
        1e-3,
        9,
    );
    let loss = model.fit(&transitions, 4000, 256, &mut rng)?;
    println!("final training loss {loss:.4e}");

    let dyn_ = Dynamics::Learned(model);
    let curve = open_loop_error_curve(&dyn_, &env, |_s| vec![0.0], 30, 50, &mut rng);
    for (depth, (mean, std)) in curve.iter().enumerate() {
        println!("depth {:>2}: mean L2 error {mean:.4e} +- {std:.4e}", depth + 1);
    }
    Ok(())
}
