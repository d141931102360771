//! Draws from CMM with the exact sampler and the Gibbs sampler and
//! compares the empirical frequencies with the exact pmf.
//!
//! Run with `cargo run --release --example sampling`.

use cmm::dist::{Cmm, CmmParams};
use cmm::sampler::{ExactSampler, GibbsConfig, GibbsSampler, RandomSource};
use cmm::CountVector;

fn total_variation(exact: &[(CountVector, f64)], draws: &[CountVector]) -> f64 {
    let n = draws.len() as f64;
    exact
        .iter()
        .map(|(y, p)| (draws.iter().filter(|d| *d == y).count() as f64 / n - p).abs())
        .sum::<f64>()
        / 2.0
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CmmParams::new(4, vec![0.5, 0.3, 0.2], 2.0)?;
    let exact = Cmm::new(params.clone())?.pmf_table()?;
    let mut rng = RandomSource::new(2024);

    let direct = ExactSampler::new(&params)?.draw_n(50_000, &mut rng);
    let chain = GibbsSampler::new(&params)?.chain(50_000, GibbsConfig { burn_in: 1000, thin: 2 }, &mut rng)?;
    println!("exact sampler: TV = {:.4}", total_variation(&exact, &direct));
    println!("Gibbs sampler: TV = {:.4}", total_variation(&exact, &chain.draws));

    // large spaces are out of reach for enumeration; independent chains still work
    let big = CmmParams::new(500, vec![0.25; 4], 0.5)?;
    let draws = GibbsSampler::new(&big)?.independent_draws(5, 500, &mut rng)?;
    println!("\nfive draws at m = 500, k = 4, nu = 0.5:");
    for d in draws {
        println!("  {d}");
    }
    Ok(())
}
