//! Repeatedly simulates and refits data to check that the quadratic form
//! of the estimation error behaves like a chi-square variable.
//!
//! Run with `cargo run --release --example consistency_study`.

use cmm::diagnostics::{run_consistency_study, StudyConfig, LARGE_Q};
use cmm::dist::CmmParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (m, n, nu) in [(5, 200, 0.0), (2, 10, -3.0)] {
        let params = CmmParams::new(m, vec![1.0 / 3.0; 3], nu)?;
        let result = run_consistency_study(&StudyConfig::new(params, n, 200, 1)?)?;
        let s = &result.summary;
        let mut q: Vec<f64> = result.q_values();
        q.sort_by(f64::total_cmp);
        println!(
            "m = {m}, n = {n}, nu = {nu}: median Q {:.2}, KS vs chi-square({}) {:.3}, Q >= {LARGE_Q}: {}/{}, failed fits {}",
            q[q.len() / 2],
            s.df,
            s.ks_chi_square,
            s.n_large_q,
            s.replicates,
            s.n_failed
        );
    }
    Ok(())
}
