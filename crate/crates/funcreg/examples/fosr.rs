//! Function-on-scalar regression: a functional response driven by a scalar
//! predictor through a time-varying coefficient curve, with a principal
//! component residual process.

use funcreg::basis::SplineKind;
use funcreg::sampler::SamplerConfig;
use funcreg::simlab::{
    design_with_intercept, fit_fosr, gen_fosr, rise, true_beta, ScenarioConfig, ScenarioModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> funcreg::Result<()> {
    let config = ScenarioConfig::new(ScenarioModel::Fosr, 100, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let sim = gen_fosr(&config, &mut rng)?;
    println!(
        "simulated {} response curves on {} grid points",
        sim.y.nrows(),
        sim.grid.len()
    );

    let sampler = SamplerConfig {
        iter: 300,
        warmup: 300,
        chains: 2,
        seed: 55,
        ..SamplerConfig::default()
    };
    let x = design_with_intercept(&sim.x);
    let fit = fit_fosr(
        &x,
        &sim.y,
        &sim.grid,
        10,
        SplineKind::OpenCubic,
        0.99,
        &sampler,
    )?;

    let truth = true_beta(&sim.grid, config.tau);
    let slope = fit.betas[1].mean();
    println!("\n    t    truth    slope curve");
    for t in (0..sim.grid.len()).step_by(7) {
        println!("{:>6.2} {:>8.3} {:>8.3}", sim.grid[t], truth[t], slope[t]);
    }
    println!(
        "\nslope curve RISE: {:.4}",
        rise(&slope, &truth, &sim.grid)?
    );
    let sigma_eps = fit.draws.extract("log_sigma_eps").mapv(f64::exp);
    println!(
        "residual scale posterior mean: {:.2} (simulated with 5)",
        sigma_eps.mean().unwrap()
    );
    Ok(())
}
