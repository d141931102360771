//! Exact means, covariances, trial-level correlations and generating
//! functions.
//!
//! Run with `cargo run --example moments`.

use cmm::dist::{mgf, moments, pgf, trial_correlation, CmmParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for nu in [-1.0, 0.5, 1.0, 2.0] {
        let params = CmmParams::new(20, vec![1.0 / 3.0; 3], nu)?;
        let mo = moments(&params)?;
        let tc = trial_correlation(&params)?;
        println!(
            "nu = {nu:>4}: E(Y_1) = {:.3}  Var(Y_1) = {:>7.3}  Corr(Z_1, Z_2) for category 1 = {:>7.4}",
            mo.mean[0],
            mo.covariance[(0, 0)],
            tc.corr[(0, 0)]
        );
    }

    let params = CmmParams::new(5, vec![0.5, 0.3, 0.2], 0.7)?;
    let mo = moments(&params)?;
    println!("\nm = 5, p = (0.5, 0.3, 0.2), nu = 0.7");
    println!("mean {:.4?}", mo.mean.as_slice());
    for r in 0..3 {
        let row: Vec<f64> = mo.covariance.row(r).iter().copied().collect();
        println!("cov  {row:>8.4?}");
    }
    println!("pgf(0.5, 1, 1) = E(0.5^Y_1) = {:.6}", pgf(&[0.5, 1.0, 1.0], &params)?);
    println!("mgf(0.1, 0, -0.1) = {:.6}", mgf(&[0.1, 0.0, -0.1], &params)?);
    Ok(())
}
