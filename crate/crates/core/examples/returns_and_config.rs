//! Turning a price file into log-returns and building a run configuration
//! in code.

use pmcmc::io::{parse_returns_csv, DataMode, ModelName, RunConfig};

fn main() -> pmcmc::error::Result<()> {
    let csv = "date,A,B\n2024-01-02,100,50\n2024-01-03,110,55\n2024-01-04,99,52\n";
    let prices = parse_returns_csv(csv.as_bytes(), DataMode::Prices)?;
    let returns = prices.to_returns()?;
    for (name, col) in returns.names.iter().zip(&returns.values) {
        println!("{name}: {col:?}");
    }

    let mut cfg = RunConfig::new(ModelName::SvLeverage);
    cfg.particles = 50;
    cfg.sweeps = 5000;
    cfg.burn_in = 500;
    print!("{}", cfg.to_toml()?);
    Ok(())
}
