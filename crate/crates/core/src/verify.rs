//! Numerical verification of the method's theory: the H-step value
//! expansion error decomposition audited term by term on constructed
//! model-error instances, the off-policy ascent property of the
//! deterministic policy gradient, the 1-D hill-climbing counterexample
//! where the averaged gradient direction is claimed to reduce J_beta, and
//! the critic's train/evaluation distribution mismatch.

use rand_chacha::ChaCha8Rng;

use crate::ddpg::Agent;
use crate::envs::Env;
use crate::nn::{Activation, Mlp, OutputActivation, Vec64};

/// Empirical Lipschitz constant of `g`: max slope over all state pairs.
/// A lower bound on the true constant.
pub fn lipschitz_of<F>(g: F, states: &[Vec64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut best: f64 = 0.0;
    for i in 0..states.len() {
        let gi = g(&states[i]);
        for j in (i + 1)..states.len() {
            let d: f64 = states[i]
                .iter()
                .zip(states[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > 1e-12 {
                best = best.max((gi - g(&states[j])).abs() / d);
            }
        }
    }
    best
}

/// Empirical Lipschitz constants of the on-policy reward s -> r(s, pi(s))
/// and the value function V^pi, over sampled initial states.
pub fn estimate_lipschitz<P>(
    env: &Env,
    policy: P,
    gamma: f64,
    n_pairs: usize,
    value_tol: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64)
where
    P: Fn(&[f64]) -> Vec64 + Copy,
{
    assert!(n_pairs >= 2);
    let states: Vec<Vec64> = (0..n_pairs).map(|_| env.reset(rng)).collect();
    let l_r = lipschitz_of(|s| env.reward(s, &policy(s)), &states);
    let l_v = lipschitz_of(
        |s| env.discounted_value(policy, s, gamma, value_tol),
        &states,
    );
    (l_r, l_v)
}

/// True dynamics plus a bounded smooth offset: f_hat(s, a) = f(s, a) +
/// scale * tanh(net(s)). With scale = 0 this is the oracle model. The
/// rollout deviation bound epsilon is measured, not set.
#[derive(Clone, Debug)]
pub struct PerturbedModel {
    pub env: Env,
    offset_net: Mlp,
    pub scale: f64,
}

impl PerturbedModel {
    pub fn new(env: Env, scale: f64, seed: u64) -> PerturbedModel {
        let sd = env.spec.state_dim;
        let offset_net = Mlp::init(&[sd, 8, sd], Activation::Tanh, OutputActivation::Tanh, seed);
        PerturbedModel {
            env,
            offset_net,
            scale,
        }
    }

    pub fn predict_next(&self, state: &[f64], action: &[f64]) -> Vec64 {
        let base = self.env.step(state, action).expect("perturbed base step").next_state;
        if self.scale == 0.0 {
            return base;
        }
        let off = self.offset_net.forward(state).expect("offset forward");
        base.iter().zip(off.iter()).map(|(b, o)| b + self.scale * o).collect()
    }
}

/// One audited inequality: name, left side, right side, and whether
/// lhs <= rhs held (with a tiny floating-point slack).
#[derive(Clone, Debug)]
pub struct BoundStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn step(name: &str, lhs: f64, rhs: f64) -> BoundStep {
    BoundStep {
        name: name.into(),
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * rhs.abs().max(1.0),
    }
}

/// Every term of the error decomposition, stored so each inequality can be
/// re-checked from the report alone.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub h: usize,
    pub gamma: f64,
    pub n_states: usize,
    /// max over depths t of the empirical mean squared rollout deviation.
    pub epsilon_sq: f64,
    /// MSE of the H-step expanded estimate against V^pi, over nu.
    pub mse_mve: f64,
    /// MSE of the critic against V^pi over the model pushforward of nu.
    pub mse_critic_pushforward: f64,
    /// E (Mhat - M)^2, the model-based reward component error.
    pub model_term: f64,
    /// 2 gamma^H E[(Mhat - M)(Vhat(shat_H) - V^pi(s_H))].
    pub cross_term: f64,
    /// E (Vhat(shat_H) - V^pi(s_H))^2.
    pub tail_term: f64,
    /// E (V^pi(shat_H) - V^pi(s_H))^2, bounded via L_V.
    pub value_shift_term: f64,
    pub c1: f64,
    pub c2: f64,
    pub lipschitz_lr: f64,
    pub lipschitz_lv: f64,
    /// The theorem's simplifying assumption mse_pushforward >= epsilon^2.
    pub assumption_holds: bool,
    pub steps: Vec<BoundStep>,
    /// All steps hold (true also when the assumption fails and the final
    /// bound is skipped as inapplicable).
    pub holds: bool,
}

impl BoundReport {
    /// Rows for the `term,name,value` CSV.
    pub fn csv_rows(&self) -> Vec<(String, String, f64)> {
        let mut rows: Vec<(String, String, f64)> = vec![
            ("term".into(), "h".into(), self.h as f64),
            ("term".into(), "gamma".into(), self.gamma),
            ("term".into(), "n_states".into(), self.n_states as f64),
            ("term".into(), "epsilon_sq".into(), self.epsilon_sq),
            ("term".into(), "mse_mve".into(), self.mse_mve),
            (
                "term".into(),
                "mse_critic_pushforward".into(),
                self.mse_critic_pushforward,
            ),
            ("term".into(), "model_term".into(), self.model_term),
            ("term".into(), "cross_term".into(), self.cross_term),
            ("term".into(), "tail_term".into(), self.tail_term),
            ("term".into(), "value_shift_term".into(), self.value_shift_term),
            ("term".into(), "c1".into(), self.c1),
            ("term".into(), "c2".into(), self.c2),
            ("term".into(), "lipschitz_lr".into(), self.lipschitz_lr),
            ("term".into(), "lipschitz_lv".into(), self.lipschitz_lv),
            (
                "term".into(),
                "assumption_holds".into(),
                if self.assumption_holds { 1.0 } else { 0.0 },
            ),
        ];
        for s in &self.steps {
            rows.push(("step_lhs".into(), s.name.clone(), s.lhs));
            rows.push(("step_rhs".into(), s.name.clone(), s.rhs));
            rows.push((
                "step_holds".into(),
                s.name.clone(),
                if s.holds { 1.0 } else { 0.0 },
            ));
        }
        rows
    }
}

/// Audits the error-decomposition chain on one constructed instance.
///
/// Samples n_states initial states, rolls the true and perturbed dynamics
/// H steps under the policy, and evaluates every term of the chain on the
/// resulting empirical measure:
///
///   MSE(Vhat_H) = E (A + gamma^H B)^2                      (identity)
///             <= EA^2 + 2 gamma^H sqrt(EA^2 EB^2) + gamma^{2H} EB^2
///   EA^2      <= c1^2 eps^2,  c1 = L_r sum_{t<H} gamma^t   (Lipschitz)
///   EB^2      <= (sqrt(MSE_pf) + L_V eps)^2                (triangle)
///   MSE(Vhat_H) <= c1^2 eps^2 + (1 + c2 eps) gamma^{2H} MSE_pf
///
/// with A = Mhat - M and B = Vhat(shat_H) - V^pi(s_H). The Lipschitz
/// estimates are augmented with the rollout pairs themselves, so the
/// Lipschitz steps hold on the empirical measure by construction. c2 is
/// the explicit instance constant
///   c2 = 2 c1 (C + L_V eps) / (gamma^H C^2) + (2 L_V C + L_V^2 eps) / C^2
/// with C = sqrt(MSE_pf), valid whenever C > 0.
pub fn check_mve_error_decomposition<C, P>(
    perturbed: &PerturbedModel,
    critic: C,
    policy: P,
    h: usize,
    gamma: f64,
    n_states: usize,
    value_tol: f64,
    rng: &mut ChaCha8Rng,
) -> BoundReport
where
    C: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> Vec64 + Copy,
{
    let env = &perturbed.env;
    let n = n_states as f64;

    // Base Lipschitz estimates from a handful of initial-state pairs.
    let mut aux_rng = rng.clone();
    let (mut l_r, mut l_v) = estimate_lipschitz(env, policy, gamma, 20, value_tol, &mut aux_rng);

    let mut mean_dev_sq = vec![0.0; h + 1];
    let mut sq_a = 0.0;
    let mut sq_b = 0.0;
    let mut cross_ab = 0.0;
    let mut mse_mve = 0.0;
    let mut mse_pf = 0.0;
    let mut value_shift = 0.0;

    for _ in 0..n_states {
        let s0 = env.reset(rng);
        // paired rollouts
        let true_states = env.rollout_states(policy, &s0, h);
        let mut pert_states = Vec::with_capacity(h + 1);
        pert_states.push(s0.clone());
        for t in 0..h {
            let s = &pert_states[t];
            let next = perturbed.predict_next(s, &policy(s));
            pert_states.push(next);
        }
        for t in 1..=h {
            let d2: f64 = true_states[t]
                .iter()
                .zip(pert_states[t].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            mean_dev_sq[t] += d2 / n;
        }
        // augment L_r with the rollout pairs so the model-term bound holds
        // on this empirical measure
        for t in 0..h {
            let (st, sh) = (&true_states[t], &pert_states[t]);
            let d: f64 = st
                .iter()
                .zip(sh.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > 1e-12 {
                let dr = (env.reward(st, &policy(st)) - env.reward(sh, &policy(sh))).abs();
                l_r = l_r.max(dr / d);
            }
        }

        let r_of = |s: &Vec64| env.reward(s, &policy(s));
        let m_true: f64 = (0..h).map(|t| gamma.powi(t as i32) * r_of(&true_states[t])).sum();
        let m_hat: f64 = (0..h).map(|t| gamma.powi(t as i32) * r_of(&pert_states[t])).sum();

        let s_h = &true_states[h];
        let sh_h = &pert_states[h];
        let v_true_sh = env.discounted_value(policy, s_h, gamma, value_tol);
        let v_true_shat = env.discounted_value(policy, sh_h, gamma, value_tol);
        // exact Bellman identity saves an oracle call
        let v_true_s0 = m_true + gamma.powi(h as i32) * v_true_sh;
        let v_hat_tail = critic(sh_h);

        let d_h: f64 = s_h
            .iter()
            .zip(sh_h.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d_h > 1e-12 {
            l_v = l_v.max((v_true_sh - v_true_shat).abs() / d_h);
        }

        let a = m_hat - m_true;
        let b = v_hat_tail - v_true_sh;
        let v_h_est = m_hat + gamma.powi(h as i32) * v_hat_tail;
        sq_a += a * a / n;
        sq_b += b * b / n;
        cross_ab += a * b / n;
        mse_mve += (v_h_est - v_true_s0).powi(2) / n;
        mse_pf += (v_hat_tail - v_true_shat).powi(2) / n;
        value_shift += (v_true_shat - v_true_sh).powi(2) / n;
    }

    let epsilon_sq = mean_dev_sq.iter().cloned().fold(0.0, f64::max);
    let eps = epsilon_sq.sqrt();
    let gh = gamma.powi(h as i32);
    let c1 = l_r * (0..h).map(|t| gamma.powi(t as i32)).sum::<f64>();
    let c = mse_pf.sqrt();
    let c2 = if c > 0.0 {
        2.0 * c1 * (c + l_v * eps) / (gh * c * c) + (2.0 * l_v * c + l_v * l_v * eps) / (c * c)
    } else {
        f64::INFINITY
    };

    let mut steps = Vec::new();
    // identity: MSE(Vhat_H) = E (A + gamma^H B)^2, both from the sample
    let recomposed = sq_a + 2.0 * gh * cross_ab + gh * gh * sq_b;
    steps.push(BoundStep {
        name: "decomposition_identity".into(),
        lhs: mse_mve,
        rhs: recomposed,
        holds: (mse_mve - recomposed).abs() <= 1e-9 * recomposed.abs().max(1e-12),
    });
    steps.push(step(
        "cauchy_schwarz",
        mse_mve,
        sq_a + 2.0 * gh * (sq_a * sq_b).sqrt() + gh * gh * sq_b,
    ));
    steps.push(step("model_term_bound", sq_a, c1 * c1 * epsilon_sq));
    steps.push(step(
        "tail_triangle",
        sq_b,
        (mse_pf.sqrt() + value_shift.sqrt()).powi(2),
    ));
    steps.push(step(
        "lipschitz_tail_bound",
        value_shift,
        l_v * l_v * epsilon_sq,
    ));

    let assumption_holds = mse_pf + 1e-15 >= epsilon_sq || epsilon_sq == 0.0;
    if assumption_holds && c2.is_finite() {
        steps.push(step(
            "final_bound",
            mse_mve,
            c1 * c1 * epsilon_sq + (1.0 + c2 * eps) * gh * gh * mse_pf,
        ));
    } else if epsilon_sq == 0.0 {
        // oracle collapse: MSE(Vhat_H) = gamma^{2H} MSE_pf exactly
        steps.push(BoundStep {
            name: "oracle_collapse".into(),
            lhs: mse_mve,
            rhs: gh * gh * mse_pf,
            holds: (mse_mve - gh * gh * mse_pf).abs() <= 1e-9 * mse_pf.max(1e-12),
        });
    }

    let holds = steps.iter().all(|s| s.holds);
    BoundReport {
        h,
        gamma,
        n_states,
        epsilon_sq,
        mse_mve,
        mse_critic_pushforward: mse_pf,
        model_term: sq_a,
        cross_term: 2.0 * gh * cross_ab,
        tail_term: sq_b,
        value_shift_term: value_shift,
        c1,
        c2,
        lipschitz_lr: l_r,
        lipschitz_lv: l_v,
        assumption_holds,
        steps,
        holds,
    }
}

/// One tested step size in the ascent check.
#[derive(Clone, Debug)]
pub struct AscentEntry {
    pub alpha: f64,
    /// mean over beta states of V^{theta + alpha g} - V^{theta}.
    pub mean_diff: f64,
    pub std_err: f64,
    /// mean_diff > 3 standard errors.
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct AscentReport {
    pub grad_norm: f64,
    /// zero gradient direction: the theorem's nondegeneracy condition fails.
    pub degenerate: bool,
    pub entries: Vec<AscentEntry>,
    pub largest_improving_alpha: Option<f64>,
}

/// Checks that a small step along the averaged deterministic policy
/// gradient improves J_beta, the beta-averaged true value of the policy.
/// J is evaluated by exact discounted rollout on the SAME states for both
/// parameter vectors (paired comparison).
pub fn check_ascent_direction(
    env: &Env,
    agent: &Agent,
    beta_states: &[Vec64],
    step_sizes: &[f64],
    gamma: f64,
    value_tol: f64,
) -> AscentReport {
    let g = agent.actor_loss_grad(beta_states).expect("actor gradient");
    let grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if grad_norm == 0.0 {
        return AscentReport {
            grad_norm,
            degenerate: true,
            entries: Vec::new(),
            largest_improving_alpha: None,
        };
    }

    let j_of = |actor: &Mlp| -> Vec<f64> {
        beta_states
            .iter()
            .map(|s| {
                let policy = |st: &[f64]| {
                    let raw = actor.forward(st).expect("actor forward");
                    crate::ddpg::scale_action(&raw, &agent.action_low, &agent.action_high)
                };
                env.discounted_value(policy, s, gamma, value_tol)
            })
            .collect()
    };
    let base_values = j_of(&agent.actor);

    let mut entries = Vec::new();
    let mut largest = None;
    for &alpha in step_sizes {
        let mut stepped = agent.actor.clone();
        let mut params = stepped.flatten();
        for (p, gi) in params.iter_mut().zip(g.iter()) {
            *p += alpha * gi;
        }
        stepped.set_from_flat(&params);
        let new_values = j_of(&stepped);
        let diffs: Vec<f64> = new_values
            .iter()
            .zip(base_values.iter())
            .map(|(n, b)| n - b)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let improved = mean > 3.0 * se;
        if improved {
            largest = Some(largest.map_or(alpha, |l: f64| l.max(alpha)));
        }
        entries.push(AscentEntry {
            alpha,
            mean_diff: mean,
            std_err: se,
            improved,
        });
    }
    AscentReport {
        grad_norm,
        degenerate: false,
        entries,
        largest_improving_alpha: largest,
    }
}

/// Supervised regression of the agent's critic onto exact Q^pi values at
/// states from the reset distribution, actions jittered around pi(s) so
/// the critic's action derivative is trained too. Returns the final
/// training MSE. Used to construct the "critic trained to low Bellman
/// error" premise of the ascent check without a full training run.
#[allow(clippy::too_many_arguments)]
pub fn fit_critic_to_true_q(
    agent: &mut Agent,
    env: &Env,
    gamma: f64,
    n_samples: usize,
    action_jitter: f64,
    steps: usize,
    batch_size: usize,
    value_tol: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    use rand::Rng;
    let policy_actor = agent.actor.clone();
    let policy = |s: &[f64]| {
        let raw = policy_actor.forward(s).expect("actor forward");
        crate::ddpg::scale_action(&raw, &agent.action_low, &agent.action_high)
    };
    let mut dataset: Vec<(Vec64, Vec64, f64)> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let s = env.reset(rng);
        let mut a = policy(&s);
        for (ai, (lo, hi)) in a
            .iter_mut()
            .zip(env.spec.action_low.iter().zip(env.spec.action_high.iter()))
        {
            *ai = (*ai + rng.gen_range(-action_jitter..action_jitter)).clamp(*lo, *hi);
        }
        let q = env.true_q(policy, &s, &a, gamma, value_tol);
        dataset.push((s, a, q));
    }
    // Standardize the labels so the regression resolves the (small) action
    // slope instead of spending its budget on the large value offset; the
    // affine de-standardization is folded back into the critic's linear
    // output layer afterwards, which preserves gradient directions exactly.
    let n = dataset.len() as f64;
    let mean = dataset.iter().map(|d| d.2).sum::<f64>() / n;
    let std = (dataset.iter().map(|d| (d.2 - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-12);
    for d in dataset.iter_mut() {
        d.2 = (d.2 - mean) / std;
    }
    let mut last = f64::INFINITY;
    for _ in 0..steps {
        let batch: Vec<(Vec64, Vec64, f64)> = (0..batch_size)
            .map(|_| dataset[rng.gen_range(0..dataset.len())].clone())
            .collect();
        let (loss, grad) =
            crate::ddpg::critic_regression_grad(&agent.critic, &batch).expect("critic grad");
        agent.critic_apply_grad(&grad).expect("critic step");
        last = loss;
    }
    let out = agent.critic.weights.len() - 1;
    for w in agent.critic.weights[out].iter_mut() {
        *w *= std;
    }
    for b in agent.critic.biases[out].iter_mut() {
        *b = *b * std + mean;
    }
    // the ascent premise is about the live critic; keep targets in sync
    agent.target_critic = agent.critic.clone();
    agent.target_actor = agent.actor.clone();
    last * std * std
}

#[derive(Clone, Debug)]
pub struct CounterexampleEntry {
    pub alpha: f64,
    pub j_before: f64,
    pub j_after: f64,
    pub decreased: bool,
}

/// Outcome of the 1-D hill-climbing counterexample check. The claims are
/// evaluated exactly (deterministic rollouts); each flag records whether
/// the corresponding claim held.
#[derive(Clone, Debug)]
pub struct CounterexampleReport {
    pub delta: f64,
    pub epsilon_s: f64,
    pub gamma: f64,
    /// gradient integrand at state 0 (claimed = 0).
    pub g_at_zero: f64,
    /// gradient integrand at state 1 + epsilon_s (claimed < 0).
    pub g_at_offset: f64,
    /// averaged direction over beta = (delta_0 + delta_{1+eps})/2.
    pub mean_g: f64,
    pub entries: Vec<CounterexampleEntry>,
    pub g_zero_ok: bool,
    pub g_offset_negative: bool,
    pub j_decreases_at_all_alphas: bool,
}

/// The hill-climbing MDP with the constant policy class pi_theta(s) =
/// theta at theta = 0. beta places half its mass at s = 0 and half at
/// s = 1 + epsilon_s. g(s) is the deterministic-policy-gradient integrand
/// dQ^pi(s, a)/da at a = theta, computed by central differences on exact
/// truncated rollouts; J_beta is evaluated the same way.
pub fn check_hillclimb_counterexample(
    delta: f64,
    epsilon_s: f64,
    alphas: &[f64],
) -> CounterexampleReport {
    let gamma = 0.99;
    let env = Env::hillclimb_with_delta(delta);
    let tol = 1e-12;
    let fd = 1e-4;
    let theta = 0.0;
    let policy = move |_s: &[f64]| vec![theta];

    let g_at = |s: f64| -> f64 {
        let qp = env.true_q(policy, &[s], &[theta + fd], gamma, tol);
        let qm = env.true_q(policy, &[s], &[theta - fd], gamma, tol);
        (qp - qm) / (2.0 * fd)
    };
    let g0 = g_at(0.0);
    let g1 = g_at(1.0 + epsilon_s);
    let mean_g = 0.5 * (g0 + g1);

    let j_of = |th: f64| -> f64 {
        let p = move |_s: &[f64]| vec![th];
        0.5 * env.discounted_value(p, &[0.0], gamma, tol)
            + 0.5 * env.discounted_value(p, &[1.0 + epsilon_s], gamma, tol)
    };
    let j_before = j_of(theta);
    let entries: Vec<CounterexampleEntry> = alphas
        .iter()
        .map(|&alpha| {
            let j_after = j_of(theta + alpha * mean_g);
            CounterexampleEntry {
                alpha,
                j_before,
                j_after,
                decreased: j_after < j_before,
            }
        })
        .collect();
    CounterexampleReport {
        delta,
        epsilon_s,
        gamma,
        g_at_zero: g0,
        g_at_offset: g1,
        mean_g,
        g_zero_ok: g0.abs() < 1e-6,
        g_offset_negative: g1 < 0.0,
        j_decreases_at_all_alphas: entries.iter().all(|e| e.decreased),
        entries,
    }
}

/// MSE of the critic against V^pi on beta states, and on their H-step
/// pushforward under the true dynamics and the given policy.
pub fn measure_distribution_mismatch<C, P>(
    env: &Env,
    critic: C,
    policy: P,
    beta_states: &[Vec64],
    h: usize,
    gamma: f64,
    value_tol: f64,
) -> (f64, f64)
where
    C: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> Vec64 + Copy,
{
    let n = beta_states.len() as f64;
    let mut mse_beta = 0.0;
    let mut mse_pf = 0.0;
    for s in beta_states {
        let v = env.discounted_value(policy, s, gamma, value_tol);
        mse_beta += (critic(s) - v).powi(2) / n;
        let states = env.rollout_states(policy, s, h);
        let s_h = states.last().unwrap();
        let v_h = env.discounted_value(policy, s_h, gamma, value_tol);
        mse_pf += (critic(s_h) - v_h).powi(2) / n;
    }
    (mse_beta, mse_pf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::AgentConfig;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn lipschitz_of_constant_is_zero() {
        let states: Vec<Vec64> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        assert_eq!(lipschitz_of(|_s| 3.7, &states), 0.0);
    }

    #[test]
    fn lipschitz_of_linear_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states: Vec<Vec64> = (0..100).map(|_| vec![rng.gen_range(-5.0..5.0)]).collect();
        let l = lipschitz_of(|s| 2.0 * s[0], &states);
        assert!((l - 2.0).abs() / 2.0 < 0.01, "{l}");
    }

    #[test]
    fn lipschitz_of_hillclimb_reward_tracks_grid_derivative() {
        // states clustered near the bump's steep left flank
        let states: Vec<Vec64> = (0..400).map(|i| vec![0.2 + i as f64 * 0.004]).collect();
        let l = lipschitz_of(|s| crate::envs::hillclimb_reward(s[0]), &states);
        // dense-grid central-difference maximum of |r'| on the same interval
        let mut grid_max: f64 = 0.0;
        let h = 1e-6;
        let mut x = 0.2;
        while x <= 1.8 {
            let d = (crate::envs::hillclimb_reward(x + h) - crate::envs::hillclimb_reward(x - h))
                / (2.0 * h);
            grid_max = grid_max.max(d.abs());
            x += 1e-3;
        }
        assert!(l <= grid_max * 1.001, "estimate {l} above grid max {grid_max}");
        assert!(l > 0.5 * grid_max, "estimate {l} far below grid max {grid_max}");
    }

    #[test]
    fn perturbed_model_scale_zero_is_oracle() {
        let env = Env::point_mass();
        let pm = PerturbedModel::new(env.clone(), 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = env.reset(&mut rng);
        let a = env.random_action(&mut rng);
        assert_eq!(pm.predict_next(&s, &a), env.step(&s, &a).unwrap().next_state);
    }

    #[test]
    fn bound_audit_epsilon_zero_collapses_exactly() {
        let env = Env::hillclimb();
        let pm = PerturbedModel::new(env, 0.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // a deliberately wrong critic so MSE_pf is nonzero
        let report = check_mve_error_decomposition(
            &pm,
            |s: &[f64]| 0.3 * s[0] - 1.0,
            |_s: &[f64]| vec![0.5],
            3,
            0.9,
            50,
            1e-9,
            &mut rng,
        );
        assert_eq!(report.epsilon_sq, 0.0);
        assert!(report.holds, "steps: {:?}", report.steps);
        let gh2 = 0.9f64.powi(6);
        assert!(
            (report.mse_mve - gh2 * report.mse_critic_pushforward).abs()
                < 1e-9 * report.mse_critic_pushforward,
            "{} vs {}",
            report.mse_mve,
            gh2 * report.mse_critic_pushforward
        );
    }

    #[test]
    fn bound_audit_h_zero_is_trivial_identity() {
        let env = Env::hillclimb();
        let pm = PerturbedModel::new(env, 0.05, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let report = check_mve_error_decomposition(
            &pm,
            |s: &[f64]| s[0],
            |_s: &[f64]| vec![0.2],
            0,
            0.9,
            30,
            1e-9,
            &mut rng,
        );
        // H=0: no imagination, so eps = 0 and MSE_mve = MSE_pf = MSE_beta
        assert_eq!(report.epsilon_sq, 0.0);
        assert!((report.mse_mve - report.mse_critic_pushforward).abs() < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn bound_audit_holds_on_perturbed_instance() {
        let env = Env::hillclimb();
        let pm = PerturbedModel::new(env, 0.03, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let report = check_mve_error_decomposition(
            &pm,
            |s: &[f64]| 10.0 * s[0] * s[0] - 3.0,
            |s: &[f64]| vec![0.5 * s[0] + 0.3],
            3,
            0.9,
            200,
            1e-9,
            &mut rng,
        );
        assert!(report.epsilon_sq > 0.0);
        assert!(report.assumption_holds, "assumption: {report:?}");
        assert!(report.holds, "steps: {:?}", report.steps);
        // report is self-consistent: re-check every stored step
        for s in &report.steps {
            assert!(s.holds, "{} failed: {} > {}", s.name, s.lhs, s.rhs);
        }
    }

    #[test]
    fn ascent_zero_critic_is_degenerate() {
        let env = Env::point_mass();
        let mut cfg = AgentConfig::for_env(&env.spec);
        cfg.hidden = vec![8, 8];
        let mut agent = Agent::new(&cfg, 9);
        for w in agent.critic.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let beta: Vec<Vec64> = (0..5).map(|_| env.reset(&mut rng)).collect();
        let report = check_ascent_direction(&env, &agent, &beta, &[1e-3], 0.99, 1e-6);
        assert!(report.degenerate);
        assert!(report.entries.is_empty());
    }

    #[test]
    fn counterexample_gradient_vanishes_at_zero() {
        let report = check_hillclimb_counterexample(0.1, 0.05, &[1e-3]);
        assert!(report.g_zero_ok, "g(0) = {}", report.g_at_zero);
        // structural sanity: entries carry the exact J evaluations
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.entries[0].alpha, 1e-3);
        assert_eq!(
            report.entries[0].decreased,
            report.entries[0].j_after < report.entries[0].j_before
        );
    }

    #[test]
    fn mismatch_h_zero_is_identity_and_oracle_critic_is_zero() {
        let env = Env::hillclimb();
        let policy = |_s: &[f64]| vec![0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beta: Vec<Vec64> = (0..20).map(|_| env.reset(&mut rng)).collect();
        let tol = 1e-8;
        let gamma = env.spec.gamma;
        let oracle_critic = |s: &[f64]| env.discounted_value(policy, s, gamma, tol);
        let (b0, p0) =
            measure_distribution_mismatch(&env, oracle_critic, policy, &beta, 0, gamma, tol);
        assert!((b0 - p0).abs() < 1e-15);
        assert!(b0 < 1e-12, "oracle critic mse {b0}");
        let (b5, p5) =
            measure_distribution_mismatch(&env, oracle_critic, policy, &beta, 5, gamma, tol);
        assert!(b5 < 1e-12 && p5 < 1e-12);
    }
}
