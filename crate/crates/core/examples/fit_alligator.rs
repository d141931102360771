//! Fits the alligator food-choice data: multinomial logit, CMM with a
//! constant dispersion, and CMM with dispersion depending on size.
//!
//! Run with `cargo run --example fit_alligator [path/to/alligator.csv]`.

use cmm::inference::{fit_cmm, fit_multinomial, FitOptions};
use cmm::io::{load_csv, CsvOptions, FitReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/alligator.csv").to_string());
    let constant = CsvOptions { w_columns: Some(vec![]), ..CsvOptions::default() };
    let by_size = CsvOptions { w_columns: Some(vec!["size".into()]), ..CsvOptions::default() };
    let data_a = load_csv(&path, &constant)?;
    let data_b = load_csv(&path, &by_size)?;
    let opts = FitOptions { baseline: data_a.category_index("fish"), ..FitOptions::default() };

    let mult = fit_multinomial(&data_a, &opts)?;
    let model_a = fit_cmm(&data_a, &opts)?;
    let model_b = fit_cmm(&data_b, &opts)?;

    for (label, fit, data) in [("multinomial", &mult, &data_a), ("CMM, model A", &model_a, &data_a), ("CMM, model B", &model_b, &data_b)] {
        let report = FitReport::new(fit, data)?;
        println!("{label}: loglik {:.3}  AIC {:.3}  parameters {}  RSS {:.2}", report.loglik, report.aic, report.n_parameters, report.rss);
        for c in report.coefficients.iter().filter(|c| c.category.is_none()) {
            let se = c.std_error.map_or("n/a".to_string(), |s| format!("{s:.3}"));
            println!("    {:<18} {:>8.3}  (se {se})", c.name, c.estimate);
        }
    }
    if let Some(dti) = &model_b.se_drop_then_invert {
        let n = dti.len();
        println!("model B dispersion SEs with intercept rows dropped before inversion: {:.3}, {:.3}", dti[n - 2], dti[n - 1]);
    }
    Ok(())
}
