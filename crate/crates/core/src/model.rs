//! Learned dynamics model predicting the state difference s' - s from
//! (s, a), trained by regression on replay transitions, plus open-loop
//! rollout diagnostics. An oracle variant wraps the true environment step
//! so model error can be switched off entirely.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, Transition};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, OutputActivation, Vec64};

const STD_FLOOR: f64 = 1e-6;
/// Imagined states beyond this norm mark the rollout truncated.
const BLOWUP_NORM: f64 = 1e6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedModel {
    pub net: Mlp,
    pub opt: Adam,
    pub input_mean: Vec64,
    pub input_std: Vec64,
    pub delta_mean: Vec64,
    pub delta_std: Vec64,
    pub trained_on: usize,
}

/// Dynamics used for imagination: either a learned delta model or the true
/// environment step function.
#[derive(Clone, Debug)]
pub enum Dynamics {
    Learned(LearnedModel),
    Oracle(Env),
}

impl LearnedModel {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        learning_rate: f64,
        seed: u64,
    ) -> LearnedModel {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let net = Mlp::init(&sizes, Activation::Tanh, OutputActivation::Identity, seed);
        let n = net.param_count();
        LearnedModel {
            net,
            opt: Adam::new(n, learning_rate),
            input_mean: vec![0.0; state_dim + action_dim],
            input_std: vec![1.0; state_dim + action_dim],
            delta_mean: vec![0.0; state_dim],
            delta_std: vec![1.0; state_dim],
            trained_on: 0,
        }
    }

    fn state_dim(&self) -> usize {
        self.delta_mean.len()
    }

    fn normalize_input(&self, state: &[f64], action: &[f64]) -> Vec64 {
        state
            .iter()
            .chain(action.iter())
            .enumerate()
            .map(|(i, x)| (x - self.input_mean[i]) / self.input_std[i])
            .collect()
    }

    /// Recompute z-score statistics from the buffer, with a floored std so
    /// constant coordinates do not produce NaN.
    pub fn refresh_normalization(&mut self, buffer: &[Transition]) {
        let n = buffer.len() as f64;
        let in_dim = self.input_mean.len();
        let sd = self.state_dim();
        let mut in_mean = vec![0.0; in_dim];
        let mut delta_mean = vec![0.0; sd];
        for tr in buffer {
            for (i, x) in tr.state.iter().chain(tr.action.iter()).enumerate() {
                in_mean[i] += x / n;
            }
            for i in 0..sd {
                delta_mean[i] += (tr.next_state[i] - tr.state[i]) / n;
            }
        }
        let mut in_var = vec![0.0; in_dim];
        let mut delta_var = vec![0.0; sd];
        for tr in buffer {
            for (i, x) in tr.state.iter().chain(tr.action.iter()).enumerate() {
                in_var[i] += (x - in_mean[i]).powi(2) / n;
            }
            for i in 0..sd {
                let d = tr.next_state[i] - tr.state[i];
                delta_var[i] += (d - delta_mean[i]).powi(2) / n;
            }
        }
        self.input_mean = in_mean;
        self.input_std = in_var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        self.delta_mean = delta_mean;
        self.delta_std = delta_var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
    }

    pub fn predict_next(&self, state: &[f64], action: &[f64]) -> Vec64 {
        let x = self.normalize_input(state, action);
        let out = self.net.forward(&x).expect("model forward");
        state
            .iter()
            .enumerate()
            .map(|(i, s)| s + out[i] * self.delta_std[i] + self.delta_mean[i])
            .collect()
    }

    /// Mean squared error over normalized deltas, and its parameter gradient.
    pub fn loss_grad(&self, batch: &[&Transition]) -> Result<(f64, Vec64)> {
        let mut grad = vec![0.0; self.net.param_count()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for tr in batch {
            let x = self.normalize_input(&tr.state, &tr.action);
            let target: Vec64 = (0..self.state_dim())
                .map(|i| {
                    (tr.next_state[i] - tr.state[i] - self.delta_mean[i]) / self.delta_std[i]
                })
                .collect();
            let out = self.net.forward(&x)?;
            let mut out_grad = vec![0.0; out.len()];
            for i in 0..out.len() {
                let e = out[i] - target[i];
                loss += e * e / n;
                out_grad[i] = 2.0 * e / n;
            }
            let (pg, _) = self.net.backward(&x, &out_grad)?;
            for (g, p) in grad.iter_mut().zip(pg.iter()) {
                *g += p;
            }
        }
        Ok((loss, grad))
    }

    /// `steps` Adam updates on minibatches sampled uniformly from the buffer.
    /// Normalization statistics are recomputed from the buffer first.
    pub fn fit(
        &mut self,
        buffer: &[Transition],
        steps: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if buffer.is_empty() {
            return Err(Error::Config("fit_dynamics: empty buffer".into()));
        }
        self.refresh_normalization(buffer);
        self.fit_more(buffer, steps, batch_size, rng)
    }

    /// Gradient steps without recomputing normalization (incremental
    /// training inside the main loop).
    pub fn fit_more(
        &mut self,
        buffer: &[Transition],
        steps: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut last_loss = 0.0;
        let mut params = self.net.flatten();
        for _ in 0..steps {
            let batch: Vec<&Transition> = (0..batch_size)
                .map(|_| &buffer[rng.gen_range(0..buffer.len())])
                .collect();
            let (loss, grad) = self.loss_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged("dynamics loss is non-finite".into()));
            }
            self.opt.step(&mut params, &grad)?;
            self.net.set_from_flat(&params);
            last_loss = loss;
        }
        self.trained_on = buffer.len();
        Ok(last_loss)
    }

    /// One-step prediction MSE (unnormalized state units) over transitions.
    pub fn one_step_mse(&self, transitions: &[Transition]) -> f64 {
        if transitions.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for tr in transitions {
            let pred = self.predict_next(&tr.state, &tr.action);
            total += pred
                .iter()
                .zip(tr.next_state.iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
        }
        total / transitions.len() as f64
    }
}

impl Dynamics {
    pub fn predict_next(&self, state: &[f64], action: &[f64]) -> Vec64 {
        match self {
            Dynamics::Learned(m) => m.predict_next(state, action),
            Dynamics::Oracle(env) => env.step(state, action).expect("oracle step").next_state,
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Dynamics::Oracle(_))
    }
}

/// H-step model-generated trajectory seeded from a real state. Contains
/// states s_0..s_H and actions a_0..a_H (one trailing pair past the last
/// reward), with rewards r_0..r_{H-1} computed by the true reward function.
#[derive(Clone, Debug)]
pub struct ImaginedRollout {
    pub states: Vec<Vec64>,
    pub actions: Vec<Vec64>,
    pub rewards: Vec<f64>,
    /// Set when an imagined state blew up; the rollout holds the usable
    /// prefix only.
    pub truncated: bool,
}

impl ImaginedRollout {
    pub fn depth(&self) -> usize {
        self.rewards.len()
    }
}

/// Imagine `h` steps from `start` under `policy`, rewarding with the true
/// reward function. Non-finite or blown-up states truncate the rollout.
pub fn imagine_rollout<P, R>(
    model: &Dynamics,
    policy: P,
    start: &[f64],
    h: usize,
    reward_fn: R,
) -> ImaginedRollout
where
    P: Fn(&[f64]) -> Vec64,
    R: Fn(&[f64], &[f64]) -> f64,
{
    let mut states = Vec::with_capacity(h + 1);
    let mut actions = Vec::with_capacity(h + 1);
    let mut rewards = Vec::with_capacity(h);
    states.push(start.to_vec());
    actions.push(policy(start));
    let mut truncated = false;
    for t in 0..h {
        let s = &states[t];
        let a = &actions[t];
        let next = model.predict_next(s, a);
        let norm2: f64 = next.iter().map(|x| x * x).sum();
        if !norm2.is_finite() || norm2.sqrt() > BLOWUP_NORM {
            truncated = true;
            break;
        }
        rewards.push(reward_fn(s, a));
        actions.push(policy(&next));
        states.push(next);
    }
    ImaginedRollout {
        states,
        actions,
        rewards,
        truncated,
    }
}

/// Paired true/imagined rollouts from `n_starts` reset states; returns
/// (mean, std) of the open-loop L2 state error per depth t = 1..=horizon.
pub fn open_loop_error_curve<P>(
    model: &Dynamics,
    env: &Env,
    policy: P,
    horizon: usize,
    n_starts: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)>
where
    P: Fn(&[f64]) -> Vec64,
{
    assert!(n_starts >= 2, "need at least 2 starts");
    let mut per_depth: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    for _ in 0..n_starts {
        let start = env.reset(rng);
        let mut s_true = start.clone();
        let mut s_imag = start.clone();
        for t in 0..horizon {
            let a_true = policy(&s_true);
            s_true = env.step(&s_true, &a_true).expect("true rollout").next_state;
            let a_imag = policy(&s_imag);
            s_imag = model.predict_next(&s_imag, &a_imag);
            let err: f64 = s_true
                .iter()
                .zip(s_imag.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            per_depth[t].push(err);
        }
    }
    per_depth
        .iter()
        .map(|errs| {
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}
