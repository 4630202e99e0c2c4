//! Desk-scale simulation study: run a few replications of each scenario and
//! report median relative integrated squared error, mean pointwise coverage
//! of the 95% bands, and out-of-sample prediction error.

use funcreg::simlab::{run_scenario, ScenarioConfig, ScenarioModel};

fn main() -> funcreg::Result<()> {
    println!("{:<16} {:>4} {:>6}  {:>11} {:>10} {:>11}", "scenario", "n", "signal", "median RISE", "coverage%", "pred. error");
    for (model, n, tau) in [
        (ScenarioModel::SofrGaussian, 200, 2.0),
        (ScenarioModel::SofrGaussian, 200, 5.0),
        (ScenarioModel::SofrBernoulli, 300, 5.0),
        (ScenarioModel::Cox, 200, 3.0),
    ] {
        let mut config = ScenarioConfig::new(model, n, tau);
        config.replications = 5;
        let report = run_scenario(&config)?;
        println!(
            "{:<16} {:>4} {:>6.1}  {:>11.3} {:>10.1} {:>11.4}",
            format!("{model:?}"),
            n,
            tau,
            report.median_rise,
            report.mean_coverage,
            report.prediction_error
        );
    }
    Ok(())
}
