//! Fits an intercept-only CMM to simulated clusters and compares it with
//! the multinomial fit.
//!
//! Run with `cargo run --release --example fit_iid`.

use cmm::dist::CmmParams;
use cmm::inference::{fit_cmm, fit_multinomial, Dataset, FitOptions};
use cmm::sampler::{GibbsSampler, RandomSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = CmmParams::new(10, vec![0.5, 0.3, 0.2], 0.4)?;
    let mut rng = RandomSource::new(17);
    let draws = GibbsSampler::new(&truth)?.independent_draws(200, 2000, &mut rng)?;
    let data = Dataset::iid(draws)?;

    let fit = fit_cmm(&data, &FitOptions::default())?;
    let mult = fit_multinomial(&data, &FitOptions::default())?;
    let se = fit.std_errors.clone().unwrap_or_default();
    println!("truth: logits {:.3?}, nu {}", truth.phi(), truth.nu());
    println!("CMM fit after {} Newton steps (converged: {}):", fit.iterations.len(), fit.converged);
    for (name, (est, s)) in ["phi_1", "phi_2", "nu"].iter().zip(fit.psi_hat().iter().zip(&se)) {
        println!("  {name:<6} {est:>7.3}  (se {s:.3})");
    }
    println!("CMM loglik {:.3}, AIC {:.3}", fit.loglik, fit.aic);
    println!("multinomial loglik {:.3}, AIC {:.3}", mult.loglik, mult.aic);
    println!("fitted distribution: {:?}", fit.fitted_params(&data.observations()[0])?);
    Ok(())
}
