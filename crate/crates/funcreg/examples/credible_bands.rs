//! Pointwise versus simultaneous credible bands, plus sampler diagnostics.
//! The simultaneous band scales the pointwise spread by the posterior
//! quantile of the maximum standardized deviation, so it always contains the
//! pointwise band and its joint coverage holds across the whole domain.

use funcreg::analysis::{cma_interval, pointwise_interval};
use funcreg::basis::SplineKind;
use funcreg::posteriors::SofrFamily;
use funcreg::sampler::SamplerConfig;
use funcreg::simlab::{fit_sofr, gen_sofr, ScenarioConfig, ScenarioModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> funcreg::Result<()> {
    let config = ScenarioConfig::new(ScenarioModel::SofrGaussian, 250, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let sim = gen_sofr(&config, &mut rng)?;

    let sampler = SamplerConfig {
        iter: 500,
        warmup: 500,
        chains: 4,
        seed: 66,
        ..SamplerConfig::default()
    };
    let fit = fit_sofr(
        &sim.data,
        SofrFamily::Gaussian,
        10,
        SplineKind::OpenCubic,
        &sampler,
    )?;

    let pw = pointwise_interval(&fit.beta, 0.05)?;
    let cma = cma_interval(&fit.beta, 0.05)?;
    let mut pw_width = 0.0;
    let mut cma_width = 0.0;
    for t in 0..sim.data.grid.len() {
        assert!(cma.0[t] <= pw.0[t] && cma.1[t] >= pw.1[t]);
        pw_width += pw.1[t] - pw.0[t];
        cma_width += cma.1[t] - cma.0[t];
    }
    println!(
        "simultaneous band is {:.2}x the pointwise width on average",
        cma_width / pw_width
    );

    // Convergence diagnostics across the whole parameter vector.
    let mut max_rhat: f64 = 0.0;
    let mut min_ess = f64::INFINITY;
    for idx in 0..fit.draws.dim() {
        max_rhat = max_rhat.max(fit.draws.rhat(idx));
        min_ess = min_ess.min(fit.draws.ess_bulk(idx));
    }
    println!("max split rank-normalized R-hat: {max_rhat:.3}");
    println!("min bulk effective sample size:  {min_ess:.0}");
    println!(
        "divergent transitions: {} across {} chains",
        fit.draws.divergences.iter().sum::<usize>(),
        fit.draws.n_chains()
    );
    println!(
        "adapted step sizes: {:?}",
        fit.draws
            .step_sizes
            .iter()
            .map(|s| (s * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    Ok(())
}
