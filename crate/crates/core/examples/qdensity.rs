//! Compare critic predictions against tail-corrected observed returns. The
//! exact Q function correlates near-perfectly; an untrained critic does not.
//!
//!   cargo run --release --example qdensity

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mve::ddpg::{Agent, AgentConfig};
use mve::envs::Env;
use mve::harness::analysis::qdensity_pairs;
use mve::harness::qdensity_export;

fn main() -> mve::Result<()> {
    let env = Env::by_name("point_mass")?;
    let gamma = env.spec.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let cfg = AgentConfig::for_env(&env.spec);
    let agent = Agent::new(&cfg, 11);
    let untrained = qdensity_export(&agent, &env, 10, gamma, &mut rng);
    println!("untrained critic: pearson {:.4}", untrained.pearson);

    // exact Q under the same (untrained) policy: correlation should be ~1
    let policy = |s: &[f64]| agent.policy(s);
    let oracle = qdensity_pairs(
        |s, a| env.true_q(policy, s, a, gamma, 1e-4),
        policy,
        &env,
        10,
        gamma,
        &mut rng,
    );
    println!("exact Q:          pearson {:.6}", oracle.pearson);
    Ok(())
}
