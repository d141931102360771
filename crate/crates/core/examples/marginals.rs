//! Marginal, grouped and conditional distributions in closed form.
//!
//! Run with `cargo run --example marginals`.

use cmm::dist::{conditional_params, grouped_log_pmf, marginal_log_pmf, CmmParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CmmParams::new(6, vec![0.4, 0.3, 0.2, 0.1], 0.6)?;

    println!("marginal of Y_1:");
    for y1 in 0..=6 {
        println!("  P(Y_1 = {y1}) = {:.5}", marginal_log_pmf(&[0], &[y1], &params)?.exp());
    }

    let partition = vec![vec![0, 1], vec![2, 3]];
    println!("\ngrouped totals (Y_1 + Y_2, Y_3 + Y_4):");
    for a in 0..=6 {
        println!("  P({a}, {}) = {:.5}", 6 - a, grouped_log_pmf(&partition, &[a, 6 - a], &params)?.exp());
    }

    let cond = conditional_params(&[0, 1, 2], &[2], &params)?;
    println!(
        "\n(Y_1, Y_2, Y_3) given Y_4 = 2 is CMM with m = {}, p = {:.4?}, nu = {}",
        cond.m(),
        cond.p(),
        cond.nu()
    );
    Ok(())
}
