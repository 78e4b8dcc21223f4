//! Probe the hillclimb construction: a constant policy trained against the
//! exact Q function under a shifted evaluation distribution. Reports the
//! ascent direction at both distribution atoms and whether small gradient
//! steps raise or lower the evaluation objective.
//!
//!   cargo run --release --example counterexample

use mve::verify::check_hillclimb_counterexample;

fn main() {
    for (delta, eps) in [(0.1, 0.05), (0.1, 0.2), (0.5, 0.05)] {
        let r = check_hillclimb_counterexample(delta, eps, &[1e-3, 1e-2]);
        println!("delta {delta} eps {eps}:");
        println!("  g(0)       {:+.3e} (zero: {})", r.g_at_zero, r.g_zero_ok);
        println!(
            "  g(1+eps)   {:+.3e} (negative: {})",
            r.g_at_offset, r.g_offset_negative
        );
        for e in &r.entries {
            println!(
                "  alpha {:.0e}: J {:+.5} -> {:+.5} ({})",
                e.alpha,
                e.j_before,
                e.j_after,
                if e.decreased { "decreased" } else { "increased" }
            );
        }
    }
}
