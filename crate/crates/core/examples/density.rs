//! Evaluates CMM probabilities and shows how the dispersion parameter moves
//! mass between the vertex and center points of the sample space.
//!
//! Run with `cargo run --example density`.

use cmm::dist::{Cmm, CmmParams};
use cmm::space::{distinguished_subsets, space_size};
use cmm::CountVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m, p) = (6, vec![0.5, 0.3, 0.2]);
    println!("m = {m}, p = {p:?}, {} outcomes", space_size(m, p.len())?);

    let y = CountVector::new(vec![2, 2, 2])?;
    for nu in [-2.0, 0.0, 1.0, 3.0] {
        let d = Cmm::new(CmmParams::new(m, p.clone(), nu)?)?;
        println!("nu = {nu:>4}: ln C = {:>8.4}  P(Y = {y}) = {:.5}", d.log_norm_const(), d.log_pmf(&y)?.exp());
    }

    let subsets = distinguished_subsets(m, p.len())?;
    println!("\nnu     P(vertices)  P(centers)");
    for nu in [-20.0, -3.0, 0.0, 1.0, 3.0, 20.0] {
        let d = Cmm::new(CmmParams::new(m, p.clone(), nu)?)?;
        let mass = |pts: &[CountVector]| -> Result<f64, cmm::CmmError> {
            pts.iter().map(|y| d.log_pmf(y).map(f64::exp)).sum()
        };
        println!("{nu:>5}  {:>11.6}  {:>10.6}", mass(&subsets.vertices)?, mass(&subsets.centers)?);
    }

    println!("\nfull table at nu = 0.5:");
    let d = Cmm::new(CmmParams::new(3, vec![0.5, 0.3, 0.2], 0.5)?)?;
    for (y, pr) in d.pmf_table()? {
        println!("  {y}  {pr:.5}");
    }
    Ok(())
}
