//! Post-run analysis: critic-vs-return density export, correlation
//! statistics, multi-config sweeps with cross-seed aggregation, and a
//! small SVG line-chart writer.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::ddpg::Agent;
use crate::envs::Env;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::trainer::run_experiment;
use crate::harness::MetricsRow;
use crate::nn::Vec64;

/// Pearson correlation; 0 when either column has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

#[derive(Clone, Debug)]
pub struct QdensityResult {
    /// (predicted_q, observed_return), both z-score normalized unless the
    /// result is degenerate.
    pub pairs: Vec<(f64, f64)>,
    pub pearson: f64,
    /// Zero variance in the predicted column (e.g. a constant critic).
    pub degenerate: bool,
}

fn zscore(xs: &[f64]) -> Option<Vec<f64>> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return None;
    }
    let std = var.sqrt();
    Some(xs.iter().map(|x| (x - mean) / std).collect())
}

/// Greedy rollouts recording the critic's prediction against the realized
/// discounted return from each visited pair. Returns truncate at episode
/// end with no bootstrapping.
pub fn qdensity_pairs<Q, P>(
    q: Q,
    policy: P,
    env: &Env,
    n_episodes: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> QdensityResult
where
    Q: Fn(&[f64], &[f64]) -> f64,
    P: Fn(&[f64]) -> Vec64,
{
    let mut preds = Vec::new();
    let mut observed = Vec::new();
    for _ in 0..n_episodes {
        let mut s = env.reset(rng);
        let mut rewards = Vec::with_capacity(env.spec.episode_length);
        for _ in 0..env.spec.episode_length {
            let a = policy(&s);
            preds.push(q(&s, &a));
            let tr = env.step(&s, &a).expect("qdensity rollout");
            rewards.push(tr.reward);
            s = tr.next_state;
        }
        // discounted suffix sums, backward, then tail-corrected for the
        // episode truncation: rescaling by the missing geometric mass is
        // exact for constant tail rewards and needs no critic bootstrap
        let l = rewards.len();
        let mut g = 0.0;
        let mut returns = vec![0.0; l];
        for t in (0..l).rev() {
            g = rewards[t] + gamma * g;
            returns[t] = g / (1.0 - gamma.powi((l - t) as i32));
        }
        observed.extend(returns);
    }
    match (zscore(&preds), zscore(&observed)) {
        (Some(p), Some(o)) => {
            let r = pearson(&p, &o);
            QdensityResult {
                pairs: p.into_iter().zip(o).collect(),
                pearson: r,
                degenerate: false,
            }
        }
        _ => QdensityResult {
            pairs: preds.into_iter().zip(observed).collect(),
            pearson: 0.0,
            degenerate: true,
        },
    }
}

pub fn qdensity_export(
    agent: &Agent,
    env: &Env,
    n_episodes: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> QdensityResult {
    qdensity_pairs(
        |s, a| agent.q_value(s, a),
        |s| agent.policy(s),
        env,
        n_episodes,
        gamma,
        rng,
    )
}

pub fn qdensity_csv(result: &QdensityResult) -> String {
    let mut out = String::from("predicted_q,observed_return\n");
    for (p, o) in &result.pairs {
        out.push_str(&format!("{p},{o}\n"));
    }
    out
}

/// Mean and std of eval returns across seeds, per evaluation step.
pub fn aggregate_seeds(per_seed: &[Vec<MetricsRow>]) -> Vec<(usize, f64, f64)> {
    let n_rows = per_seed.iter().map(|r| r.len()).min().unwrap_or(0);
    let k = per_seed.len() as f64;
    (0..n_rows)
        .map(|i| {
            let step = per_seed[0][i].env_step;
            let vals: Vec<f64> = per_seed.iter().map(|r| r[i].eval_return_mean).collect();
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
            (step, mean, var.sqrt())
        })
        .collect()
}

/// Runs each (id, config) pair, aggregates across seeds, writes
/// `sweep.csv` (config_id, env_step, mean, std) and a line chart of the
/// mean curves. A failed run is skipped with a note; aggregation proceeds
/// over survivors.
pub fn sweep(configs: &[(String, ExperimentConfig)], out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("config_id,env_step,mean,std\n");
    let mut series = Vec::new();
    for (id, cfg) in configs {
        let mut cfg = cfg.clone();
        cfg.out_dir = out_dir.join(id).to_str().unwrap().to_string();
        let dirs = run_experiment(&cfg)?;
        let mut per_seed = Vec::new();
        for d in &dirs {
            let meta = fs::read_to_string(d.join("meta.txt"))?;
            if !meta.contains("status = ok") {
                eprintln!("sweep: skipping failed run {}", d.display());
                continue;
            }
            per_seed.push(MetricsRow::parse_csv(&fs::read_to_string(
                d.join("metrics.csv"),
            )?)?);
        }
        let agg = aggregate_seeds(&per_seed);
        let mut points = Vec::new();
        for (step, mean, std) in &agg {
            csv.push_str(&format!("{id},{step},{mean},{std}\n"));
            points.push((*step as f64, *mean));
        }
        series.push((id.clone(), points));
    }
    fs::write(out_dir.join("sweep.csv"), &csv)?;
    write_line_chart(&out_dir.join("sweep.svg"), &series)?;
    Ok(csv)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Minimal multi-series SVG line chart with axis extent labels.
pub fn write_line_chart(path: &Path, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let (w, h, m) = (800.0, 500.0, 60.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - m,
        w - m,
        h - m,
        h - m,
    );
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{}\" font-size=\"12\">{x0}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{x1}</text>\n\
         <text x=\"5\" y=\"{}\" font-size=\"12\">{y0}</text>\n\
         <text x=\"5\" y=\"{m}\" font-size=\"12\">{y1}</text>\n",
        h - m + 20.0,
        w - m,
        h - m + 20.0,
        h - m,
    ));
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            w - m + 5.0,
            m + 15.0 * i as f64,
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn pearson_perfect_line_and_degenerate() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 7.0).collect();
        assert!((pearson(&xs, &ys) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&xs, &vec![2.0; 50]), 0.0);
    }

    #[test]
    fn spearman_is_rank_based() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64).collect();
        // monotone but nonlinear
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
        let zs: Vec<f64> = xs.iter().map(|x| -x.powi(3)).collect();
        assert!((spearman(&xs, &zs) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn qdensity_with_oracle_q_concentrates_on_the_line() {
        let env = Env::hillclimb();
        let gamma = 0.9;
        let policy = |_s: &[f64]| vec![0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let result = qdensity_pairs(
            |s, a| env.true_q(policy, s, a, gamma, 1e-9),
            policy,
            &env,
            3,
            gamma,
            &mut rng,
        );
        assert!(!result.degenerate);
        assert_eq!(result.pairs.len(), 3 * env.spec.episode_length);
        assert!(result.pearson > 0.999, "pearson {}", result.pearson);
    }

    #[test]
    fn qdensity_constant_critic_is_degenerate() {
        let env = Env::hillclimb();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let result = qdensity_pairs(
            |_s, _a| 5.0,
            |_s| vec![0.0],
            &env,
            2,
            env.spec.gamma,
            &mut rng,
        );
        assert!(result.degenerate);
        assert_eq!(result.pearson, 0.0);
    }

    #[test]
    fn aggregate_single_seed_is_identity() {
        let rows = vec![
            MetricsRow {
                env_step: 10,
                eval_return_mean: -3.0,
                eval_return_std: 0.1,
                critic_bellman_error: 0.0,
                model_one_step_mse: 0.0,
            },
            MetricsRow {
                env_step: 20,
                eval_return_mean: -1.0,
                eval_return_std: 0.1,
                critic_bellman_error: 0.0,
                model_one_step_mse: 0.0,
            },
        ];
        let agg = aggregate_seeds(std::slice::from_ref(&rows));
        assert_eq!(agg, vec![(10, -3.0, 0.0), (20, -1.0, 0.0)]);
        // duplicated identical seeds: same means, zero std
        let agg2 = aggregate_seeds(&[rows.clone(), rows]);
        assert_eq!(agg2, vec![(10, -3.0, 0.0), (20, -1.0, 0.0)]);
    }

    #[test]
    fn line_chart_is_written() {
        let tmp = std::env::temp_dir().join(format!("mve_chart_{}.svg", std::process::id()));
        let series = vec![
            ("a".to_string(), vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)]),
            ("b".to_string(), vec![(0.0, 0.0), (1.0, -1.0)]),
        ];
        write_line_chart(&tmp, &series).unwrap();
        let text = std::fs::read_to_string(&tmp).unwrap();
        assert!(text.starts_with("<svg"));
        assert_eq!(text.matches("<polyline").count(), 2);
        std::fs::remove_file(&tmp).unwrap();
    }
}
