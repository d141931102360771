//! Round-trips a dataset through CSV and writes a JSON fit report.
//!
//! Run with `cargo run --example csv_report`.

use cmm::inference::{fit_cmm, FitOptions};
use cmm::io::{read_csv, write_csv, CsvOptions, FitReport};

const DATA: &str = "\
cluster,y_red,y_green,y_blue,x_dose,w_dose
a,3,1,0,0.0,0.0
b,2,1,1,0.0,0.0
c,0,4,0,1.0,1.0
d,1,2,1,1.0,1.0
e,4,0,0,0.0,0.0
f,0,1,3,1.0,1.0
g,1,1,2,0.5,0.5
h,2,2,0,0.5,0.5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = CsvOptions { w_columns: Some(vec![]), ..CsvOptions::default() };
    let data = read_csv(DATA.as_bytes(), &opts)?;
    let mut out = Vec::new();
    write_csv(&data, &mut out)?;
    println!("normalized CSV:\n{}", String::from_utf8(out)?);

    let fit = fit_cmm(&data, &FitOptions { baseline: data.category_index("blue"), ..FitOptions::default() })?;
    println!("{}", FitReport::new(&fit, &data)?.to_json()?);
    Ok(())
}
