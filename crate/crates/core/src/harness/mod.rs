//! Experiment orchestration: config parsing, the training loop, metric
//! logging, curve smoothing, sweeps, and analysis exports.

pub mod analysis;
pub mod config;
pub mod trainer;

pub use analysis::{pearson, qdensity_export, spearman, sweep, write_line_chart, QdensityResult};
pub use config::ExperimentConfig;
pub use trainer::{load_run, run_experiment, Trainer};

/// One evaluation-time log record. Wall-clock time is logged separately
/// (timing.csv) so this row is a pure function of (config, seed).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub env_step: usize,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub critic_bellman_error: f64,
    pub model_one_step_mse: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "env_step,eval_return_mean,eval_return_std,critic_bellman_error,model_one_step_mse\n";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.env_step,
            self.eval_return_mean,
            self.eval_return_std,
            self.critic_bellman_error,
            self.model_one_step_mse
        )
    }

    pub fn parse_csv(text: &str) -> crate::error::Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(crate::error::Error::Config(format!(
                    "bad metrics row `{line}`"
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| crate::error::Error::Config(format!("bad number `{s}`")))
            };
            rows.push(MetricsRow {
                env_step: f[0]
                    .parse()
                    .map_err(|_| crate::error::Error::Config(format!("bad step `{}`", f[0])))?,
                eval_return_mean: num(f[1])?,
                eval_return_std: num(f[2])?,
                critic_bellman_error: num(f[3])?,
                model_one_step_mse: num(f[4])?,
            });
        }
        Ok(rows)
    }
}

/// Centered moving average with shrinking windows at the boundaries. An
/// even window of size w covers (w/2 - 1) points behind and w/2 ahead.
pub fn smooth_curve(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    let n = values.len();
    let behind = (window - 1) / 2;
    let ahead = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(behind);
            let hi = (i + ahead).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Short content-derived run identifier (FNV-1a over the canonical config
/// text and the seed).
pub fn run_id(canonical_config: &str, seed: u64) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical_config.bytes().chain(seed.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_window_one_is_identity() {
        let v = vec![3.0, -1.0, 4.0, 1.0];
        assert_eq!(smooth_curve(&v, 1), v);
    }

    #[test]
    fn smooth_constant_series_unchanged() {
        let v = vec![2.5; 50];
        assert_eq!(smooth_curve(&v, 20), v);
    }

    #[test]
    fn smooth_ramp_interior_point() {
        // ramp 0..99, window 20, point i=50 -> mean of 41..60 = 50.5
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = smooth_curve(&v, 20);
        assert_eq!(s[50], 50.5);
    }

    #[test]
    fn metrics_csv_round_trips() {
        let rows = vec![
            MetricsRow {
                env_step: 500,
                eval_return_mean: -12.25,
                eval_return_std: 0.5,
                critic_bellman_error: 0.001953125,
                model_one_step_mse: 1e-300,
            },
            MetricsRow {
                env_step: 1000,
                eval_return_mean: -0.1,
                eval_return_std: 0.3333333333333333,
                critic_bellman_error: 0.0,
                model_one_step_mse: 7.0,
            },
        ];
        let mut text = MetricsRow::CSV_HEADER.to_string();
        for r in &rows {
            text.push_str(&r.csv_line());
        }
        assert_eq!(MetricsRow::parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn run_ids_differ_across_seeds_and_configs() {
        let a = run_id("x = 1\n", 0);
        assert_eq!(a, run_id("x = 1\n", 0));
        assert_ne!(a, run_id("x = 1\n", 1));
        assert_ne!(a, run_id("x = 2\n", 0));
        assert_eq!(a.len(), 16);
    }
}
