//! Model-based value expansion: H-step expanded critic targets built from
//! imagined rollouts, the TD-k regression pairs at every imagined depth,
//! the no-TD-k ablation, and the imagination-buffer baseline that persists
//! imagined transitions as extra training data.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddpg::{critic_regression_grad, Agent, ReplayBuffer};
use crate::envs::Transition;
use crate::error::Result;
use crate::model::{imagine_rollout, Dynamics, ImaginedRollout};
use crate::nn::Vec64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MveMode {
    /// Plain DDPG.
    Off,
    /// Expanded targets at every imagined depth (the TD-k trick).
    Tdk,
    /// Expanded target on the real pair only.
    Naive,
    /// Persist imagined transitions and train on them as extra data.
    ImaginationBuffer,
}

impl MveMode {
    pub fn parse(s: &str) -> Option<MveMode> {
        match s {
            "off" => Some(MveMode::Off),
            "tdk" => Some(MveMode::Tdk),
            "naive" => Some(MveMode::Naive),
            "imagination_buffer" => Some(MveMode::ImaginationBuffer),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MveMode::Off => "off",
            MveMode::Tdk => "tdk",
            MveMode::Naive => "naive",
            MveMode::ImaginationBuffer => "imagination_buffer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MveConfig {
    pub mode: MveMode,
    pub h: usize,
    /// Imaginary-to-real gradient-batch ratio (imagination_buffer only).
    pub ib_ratio: usize,
}

/// One critic regression pair. origin_depth -1 marks the real transition's
/// pair; depths 0..H-1 are imagined.
#[derive(Clone, Debug)]
pub struct CriticTarget {
    pub state: Vec64,
    pub action: Vec64,
    pub target_value: f64,
    pub origin_depth: i64,
}

/// H-step expanded state value: sum of discounted imagined rewards plus the
/// discounted critic value at the rollout tail. A truncated rollout uses
/// its usable depth H' with exponent gamma^{H'}.
pub fn mve_state_value(rollout: &ImaginedRollout, critic_value_at_tail: f64, gamma: f64) -> f64 {
    let mut value = 0.0;
    let mut disc = 1.0;
    for r in &rollout.rewards {
        value += disc * r;
        disc *= gamma;
    }
    value + disc * critic_value_at_tail
}

/// Expanded critic targets from one real transition. Imagination starts at
/// tau0.next_state and uses the TARGET actor throughout; the tail value is
/// the TARGET critic at (s_H, a_H). Emits H+1 regression pairs, one per
/// depth t in {-1, 0..H-1}: the pair at depth t gets the (H-t)-step
/// expanded label sum_{k=t}^{H-1} gamma^{k-t} r_k + gamma^{H-t} Q'(s_H,
/// a_H), where the k=-1 "imagined" reward is the real one. Targets are
/// computed entirely with target networks and treated as constants. A
/// truncated imagination emits targets for the usable prefix only.
pub fn build_tdk_targets<R>(
    agent: &Agent,
    model: &Dynamics,
    tau0: &Transition,
    h: usize,
    gamma: f64,
    reward_fn: R,
) -> Vec<CriticTarget>
where
    R: Fn(&[f64], &[f64]) -> f64,
{
    let rollout = imagine_rollout(
        model,
        |s| agent.target_policy(s),
        &tau0.next_state,
        h,
        reward_fn,
    );
    let hu = rollout.depth();
    let tail = agent.target_q_value(&rollout.states[hu], &rollout.actions[hu]);
    let mut targets = Vec::with_capacity(hu + 1);
    // Build labels from the tail inward: label(t) = r_t + gamma * label(t+1)
    // with label(H) = Q'(s_H, a_H).
    let mut label = tail;
    for t in (0..hu).rev() {
        label = rollout.rewards[t] + gamma * label;
        targets.push(CriticTarget {
            state: rollout.states[t].clone(),
            action: rollout.actions[t].clone(),
            target_value: label,
            origin_depth: t as i64,
        });
    }
    targets.push(CriticTarget {
        state: tau0.state.clone(),
        action: tau0.action.clone(),
        target_value: tau0.reward + gamma * label_or_tail(hu, label, tail),
        origin_depth: -1,
    });
    targets.reverse();
    targets
}

fn label_or_tail(hu: usize, label: f64, tail: f64) -> f64 {
    // With H=0 there are no imagined rewards and the loop above never ran.
    if hu == 0 {
        tail
    } else {
        label
    }
}

/// The no-TD-k ablation: only the real pair, carrying the full H-step
/// expanded label. Exactly the t=-1 element of [`build_tdk_targets`].
pub fn naive_targets<R>(
    agent: &Agent,
    model: &Dynamics,
    tau0: &Transition,
    h: usize,
    gamma: f64,
    reward_fn: R,
) -> Vec<CriticTarget>
where
    R: Fn(&[f64], &[f64]) -> f64,
{
    let all = build_tdk_targets(agent, model, tau0, h, gamma, reward_fn);
    all.into_iter().filter(|t| t.origin_depth == -1).collect()
}

/// Loss and gradient of the mean squared error of the LIVE critic against
/// the fixed target labels.
pub fn tdk_critic_grad(agent: &Agent, targets: &[CriticTarget]) -> Result<(f64, Vec64)> {
    let pairs: Vec<(Vec64, Vec64, f64)> = targets
        .iter()
        .map(|t| (t.state.clone(), t.action.clone(), t.target_value))
        .collect();
    critic_regression_grad(&agent.critic, &pairs)
}

/// What one imagination-buffer step did, for invariant checks.
pub struct IbStepReport {
    /// The real state the rollout was seeded from.
    pub start_state: Vec64,
    pub imagined_added: usize,
}

/// Imagination-buffer baseline update. Imagines one H-step rollout seeded
/// from a real state sampled from the replay buffer (never from imagined
/// data), appends its transitions to `imag_buffer`, then performs one
/// actor+critic update on a real batch and `ib_ratio` actor+critic updates
/// on imagined batches, all with the standard DDPG losses.
#[allow(clippy::too_many_arguments)]
pub fn imagination_buffer_step<R>(
    agent: &mut Agent,
    model: &Dynamics,
    real_buffer: &ReplayBuffer,
    imag_buffer: &mut Vec<Transition>,
    h: usize,
    ib_ratio: usize,
    batch_size: usize,
    gamma: f64,
    reward_fn: R,
    rng: &mut ChaCha8Rng,
) -> Result<IbStepReport>
where
    R: Fn(&[f64], &[f64]) -> f64,
{
    let seed_tr = real_buffer.sample(1, rng)[0];
    let start = seed_tr.next_state.clone();
    let rollout = imagine_rollout(model, |s| agent.target_policy(s), &start, h, &reward_fn);
    let mut added = 0;
    for t in 0..rollout.depth() {
        imag_buffer.push(Transition {
            state: rollout.states[t].clone(),
            action: rollout.actions[t].clone(),
            reward: rollout.rewards[t],
            next_state: rollout.states[t + 1].clone(),
        });
        added += 1;
    }

    let real_batch = real_buffer.sample(batch_size, rng);
    let states: Vec<Vec64> = real_batch.iter().map(|tr| tr.state.clone()).collect();
    agent.actor_update(&states)?;
    let (_, grad) = agent.critic_loss_grad(&real_batch, gamma)?;
    agent.critic_apply_grad(&grad)?;

    if !imag_buffer.is_empty() {
        for _ in 0..ib_ratio {
            let batch: Vec<&Transition> = (0..batch_size)
                .map(|_| {
                    use rand::Rng;
                    &imag_buffer[rng.gen_range(0..imag_buffer.len())]
                })
                .collect();
            let states: Vec<Vec64> = batch.iter().map(|tr| tr.state.clone()).collect();
            agent.actor_update(&states)?;
            let (_, grad) = agent.critic_loss_grad(&batch, gamma)?;
            agent.critic_apply_grad(&grad)?;
        }
    }
    Ok(IbStepReport {
        start_state: start,
        imagined_added: added,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::AgentConfig;
    use crate::envs::Env;
    use rand::SeedableRng;

    fn hill_agent(seed: u64) -> Agent {
        let env = Env::hillclimb();
        let mut cfg = AgentConfig::for_env(&env.spec);
        cfg.hidden = vec![8, 8];
        Agent::new(&cfg, seed)
    }

    fn hill_transition(agent: &Agent, env: &Env, s: f64) -> Transition {
        let a = agent.policy(&[s]);
        env.step(&[s], &a).unwrap()
    }

    #[test]
    fn state_value_h_zero_is_tail() {
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let ro = imagine_rollout(&model, |_s| vec![0.0], &[0.3], 0, |s, a| env.reward(s, a));
        assert_eq!(mve_state_value(&ro, 4.2, 0.9), 4.2);
    }

    #[test]
    fn state_value_matches_hand_arithmetic() {
        // H=2, gamma=0.5, rewards (1, 1), tail 4 -> 1 + 0.5 + 0.25*4 = 2.5
        let ro = ImaginedRollout {
            states: vec![vec![0.0]; 3],
            actions: vec![vec![0.0]; 3],
            rewards: vec![1.0, 1.0],
            truncated: false,
        };
        assert_eq!(mve_state_value(&ro, 4.0, 0.5), 2.5);
    }

    #[test]
    fn state_value_with_perfect_tail_telescopes_to_true_value() {
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let policy = |_s: &[f64]| vec![0.9];
        let tol = 1e-9;
        for s0 in [-0.5, 0.2, 1.4] {
            let ro = imagine_rollout(&model, policy, &[s0], 7, |s, a| env.reward(s, a));
            let tail = env.true_value(policy, ro.states.last().unwrap(), tol);
            let got = mve_state_value(&ro, tail, env.spec.gamma);
            let want = env.true_value(policy, &[s0], tol);
            assert!((got - want).abs() < 1e-7, "{got} vs {want}");
        }
    }

    #[test]
    fn h_zero_targets_reduce_to_ddpg() {
        let agent = hill_agent(0);
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let tau0 = hill_transition(&agent, &env, 0.4);
        let gamma = 0.99;
        let targets = build_tdk_targets(&agent, &model, &tau0, 0, gamma, |s, a| env.reward(s, a));
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].origin_depth, -1);
        assert_eq!(targets[0].state, tau0.state);
        assert_eq!(targets[0].action, tau0.action);
        let a_next = agent.target_policy(&tau0.next_state);
        let want = tau0.reward + gamma * agent.target_q_value(&tau0.next_state, &a_next);
        assert!((targets[0].target_value - want).abs() < 1e-15);
    }

    #[test]
    fn h_one_targets_match_hand_expansion() {
        let agent = hill_agent(1);
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let tau0 = hill_transition(&agent, &env, -0.3);
        let gamma = 0.9;
        let targets = build_tdk_targets(&agent, &model, &tau0, 1, gamma, |s, a| env.reward(s, a));
        assert_eq!(targets.len(), 2);

        // hand-expand: s_hat_0 = tau0.next_state, a_hat_0 = pi'(s_hat_0),
        // r_hat_0 = r(s_hat_0, a_hat_0), s_hat_1 = f(s_hat_0, a_hat_0)
        let s0 = tau0.next_state.clone();
        let a0 = agent.target_policy(&s0);
        let r0 = env.reward(&s0, &a0);
        let s1 = env.step(&s0, &a0).unwrap().next_state;
        let a1 = agent.target_policy(&s1);
        let q1 = agent.target_q_value(&s1, &a1);

        let t_minus1 = tau0.reward + gamma * r0 + gamma * gamma * q1;
        let t_zero = r0 + gamma * q1;
        assert_eq!(targets[0].origin_depth, -1);
        assert!((targets[0].target_value - t_minus1).abs() < 1e-12);
        assert_eq!(targets[1].origin_depth, 0);
        assert!((targets[1].target_value - t_zero).abs() < 1e-12);
        assert_eq!(targets[1].state, s0);
        assert_eq!(targets[1].action, a0);
    }

    #[test]
    fn targets_are_consistent_with_suffix_state_values() {
        // Discount-exponent consistency: the label at depth t equals
        // mve_state_value on the suffix rollout starting at s_hat_t.
        let agent = hill_agent(2);
        let env = Env::point_mass();
        let mut cfg = AgentConfig::for_env(&env.spec);
        cfg.hidden = vec![8, 8];
        let agent = {
            let _ = agent;
            Agent::new(&cfg, 2)
        };
        let model = Dynamics::Oracle(env.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gamma = 0.99;
        for _ in 0..10 {
            let s = env.reset(&mut rng);
            let a = agent.policy(&s);
            let tau0 = env.step(&s, &a).unwrap();
            let h = 5;
            let targets =
                build_tdk_targets(&agent, &model, &tau0, h, gamma, |s, a| env.reward(s, a));
            let full = imagine_rollout(
                &model,
                |s| agent.target_policy(s),
                &tau0.next_state,
                h,
                |s, a| env.reward(s, a),
            );
            let tail = agent.target_q_value(&full.states[h], &full.actions[h]);
            for tgt in &targets {
                let t = tgt.origin_depth;
                let start = t.max(0) as usize;
                let suffix = ImaginedRollout {
                    states: full.states[start..].to_vec(),
                    actions: full.actions[start..].to_vec(),
                    rewards: full.rewards[start..].to_vec(),
                    truncated: false,
                };
                let mut want = mve_state_value(&suffix, tail, gamma);
                if t == -1 {
                    want = tau0.reward + gamma * want;
                }
                assert!(
                    (tgt.target_value - want).abs() < 1e-12,
                    "depth {t}: {} vs {want}",
                    tgt.target_value
                );
            }
        }
    }

    #[test]
    fn naive_is_the_real_pair_element_of_tdk() {
        let agent = hill_agent(4);
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let tau0 = hill_transition(&agent, &env, 0.7);
        for h in [0, 1, 3, 8] {
            let tdk = build_tdk_targets(&agent, &model, &tau0, h, 0.95, |s, a| env.reward(s, a));
            let naive = naive_targets(&agent, &model, &tau0, h, 0.95, |s, a| env.reward(s, a));
            assert_eq!(naive.len(), 1);
            assert_eq!(naive[0].origin_depth, -1);
            assert_eq!(naive[0].state, tdk[0].state);
            assert_eq!(naive[0].target_value, tdk[0].target_value);
        }
    }

    #[test]
    fn tdk_grad_zero_when_critic_matches_targets() {
        let agent = hill_agent(5);
        let env = Env::hillclimb();
        let targets: Vec<CriticTarget> = [-0.5, 0.1, 1.3]
            .iter()
            .map(|&s| {
                let a = agent.policy(&[s]);
                let _ = &env;
                CriticTarget {
                    target_value: agent.q_value(&[s], &a),
                    state: vec![s],
                    action: a,
                    origin_depth: 0,
                }
            })
            .collect();
        let (loss, grad) = tdk_critic_grad(&agent, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tdk_grad_matches_finite_differences() {
        let agent = hill_agent(6);
        let env = Env::hillclimb();
        let model = Dynamics::Oracle(env.clone());
        let tau0 = hill_transition(&agent, &env, 0.2);
        let targets = build_tdk_targets(&agent, &model, &tau0, 3, 0.9, |s, a| env.reward(s, a));
        let (_, grad) = tdk_critic_grad(&agent, &targets).unwrap();
        let loss_of = |critic: &crate::nn::Mlp| -> f64 {
            targets
                .iter()
                .map(|t| {
                    let mut x = t.state.clone();
                    x.extend_from_slice(&t.action);
                    let q = critic.forward(&x).unwrap()[0];
                    (q - t.target_value) * (q - t.target_value)
                })
                .sum::<f64>()
                / targets.len() as f64
        };
        let flat = agent.critic.flatten();
        let step = 1e-5;
        for i in (0..flat.len()).step_by(9) {
            let mut plus = agent.critic.clone();
            let mut fp = flat.clone();
            fp[i] += step;
            plus.set_from_flat(&fp);
            let mut minus = agent.critic.clone();
            fp[i] -= 2.0 * step;
            minus.set_from_flat(&fp);
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn imagination_buffer_counts_and_provenance() {
        let env = Env::hillclimb();
        let mut cfg = AgentConfig::for_env(&env.spec);
        cfg.hidden = vec![8, 8];
        let mut agent = Agent::new(&cfg, 7);
        let model = Dynamics::Oracle(env.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut real = ReplayBuffer::new(1000);
        let mut s = env.reset(&mut rng);
        for _ in 0..50 {
            let a = env.random_action(&mut rng);
            let tr = env.step(&s, &a).unwrap();
            s = tr.next_state.clone();
            real.push(tr);
        }
        let mut imag: Vec<Transition> = Vec::new();
        let h = 2;
        let n_steps = 20;
        for _ in 0..n_steps {
            let report = imagination_buffer_step(
                &mut agent,
                &model,
                &real,
                &mut imag,
                h,
                1,
                4,
                0.99,
                |s, a| env.reward(s, a),
                &mut rng,
            )
            .unwrap();
            // rollout starts must be real next_states, never imagined data
            assert!(
                real.iter().any(|tr| tr.next_state == report.start_state),
                "start state not from real buffer"
            );
            assert_eq!(report.imagined_added, h);
        }
        assert_eq!(imag.len(), h * n_steps);
    }

    #[test]
    fn ib_ratio_zero_reduces_to_plain_ddpg() {
        let env = Env::hillclimb();
        let mut cfg = AgentConfig::for_env(&env.spec);
        cfg.hidden = vec![8, 8];
        let model = Dynamics::Oracle(env.clone());
        let mut rng_data = ChaCha8Rng::seed_from_u64(9);
        let mut real = ReplayBuffer::new(1000);
        let mut s = env.reset(&mut rng_data);
        for _ in 0..50 {
            let a = env.random_action(&mut rng_data);
            let tr = env.step(&s, &a).unwrap();
            s = tr.next_state.clone();
            real.push(tr);
        }

        let mut agent_ib = Agent::new(&cfg, 10);
        let mut rng_ib = ChaCha8Rng::seed_from_u64(11);
        imagination_buffer_step(
            &mut agent_ib,
            &model,
            &real,
            &mut Vec::new(),
            3,
            0,
            8,
            0.99,
            |s, a| env.reward(s, a),
            &mut rng_ib,
        )
        .unwrap();

        // manual plain-DDPG update with identical RNG consumption
        let mut agent_pd = Agent::new(&cfg, 10);
        let mut rng_pd = ChaCha8Rng::seed_from_u64(11);
        let _seed_tr = real.sample(1, &mut rng_pd);
        let batch = real.sample(8, &mut rng_pd);
        let states: Vec<Vec64> = batch.iter().map(|tr| tr.state.clone()).collect();
        agent_pd.actor_update(&states).unwrap();
        let (_, grad) = agent_pd.critic_loss_grad(&batch, 0.99).unwrap();
        agent_pd.critic_apply_grad(&grad).unwrap();

        assert_eq!(agent_ib.actor.flatten(), agent_pd.actor.flatten());
        assert_eq!(agent_ib.critic.flatten(), agent_pd.critic.flatten());
    }
}
