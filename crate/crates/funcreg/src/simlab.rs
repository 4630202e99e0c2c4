//! Simulation harness: synthetic data generators for every model family,
//! RISE/coverage/prediction metrics, end-to-end fit pipelines, and a
//! scenario runner that aggregates replications.

use crate::analysis::{cma_interval, pointwise_interval, reconstruct_beta, CurveDraws};
use crate::basis::{build_hazard_basis, build_spline_system, HazardBasis, SplineKind, SplineSpec, SplineSystem};
use crate::design::{functional_design, fpca_spline_crossproduct, quadrature_weights, FunctionalDataset};
use crate::error::{Error, Result};
use crate::fpca::fit_fpca;
use crate::posteriors::{
    CoxPosterior, FosrPosterior, JointCoxFpcaPosterior, SofrFamily, SofrPosterior,
};
use crate::reparam::{build_reparam, ReparamMap};
use crate::sampler::{run_nuts, PosteriorDraws, SamplerConfig};
use ndarray::{s, Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Which data-generating process and model to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioModel {
    SofrGaussian,
    SofrBernoulli,
    Cox,
    JointCox,
    Fosr,
}

/// Full description of one simulation scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: ScenarioModel,
    pub n: usize,
    /// Signal strength multiplying the true coefficient curve.
    pub tau: f64,
    /// Measurement-noise standard deviation for the joint model.
    pub noise_sd: f64,
    pub replications: usize,
    pub seed: u64,
    /// Number of equally spaced grid points.
    pub grid_len: usize,
    /// Spline basis dimension for the coefficient curve.
    pub basis_dim: usize,
    /// Baseline-hazard spline dimension.
    pub hazard_df: usize,
    /// Proportion-of-variance target for score truncation.
    pub pve: f64,
    pub sampler: SamplerConfig,
}

impl ScenarioConfig {
    pub fn new(model: ScenarioModel, n: usize, tau: f64) -> Self {
        ScenarioConfig {
            model,
            n,
            tau,
            noise_sd: 5.0,
            replications: 30,
            seed: 1,
            grid_len: 50,
            basis_dim: 10,
            hazard_df: 5,
            pve: 0.99,
            sampler: SamplerConfig {
                iter: 300,
                warmup: 300,
                chains: 2,
                seed: 1,
                ..SamplerConfig::default()
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.replications == 0 {
            return Err(Error::Spec("need n > 0 and replications >= 1".into()));
        }
        Ok(())
    }
}

/// Residual noise scale of the scalar-outcome generator.
pub const SOFR_NOISE_SD: f64 = 1.5;
/// Residual noise scale of the functional-response generator.
pub const FOSR_NOISE_SD: f64 = 5.0;
/// Scalar predictor distribution in the functional-response generator.
pub const FOSR_X_MEAN: f64 = 20.0;
pub const FOSR_X_SD: f64 = 10.0;

/// Scale weights of the four stored principal-component shapes that drive
/// the synthetic functional covariates (smooth orthonormal sinusoids with
/// geometrically decaying weights, standing in for empirical components).
pub const PC_WEIGHTS: [f64; 4] = [3.0, 2.0, 1.5, 1.0];

const TAU2: f64 = 2.0 * std::f64::consts::PI;

/// Equally spaced grid on [0, 1].
pub fn standard_grid(m: usize) -> Array1<f64> {
    Array1::from_iter((0..m).map(|i| i as f64 / (m - 1) as f64))
}

/// The four orthonormal generator shapes evaluated on `grid` (4 x M).
pub fn pc_shapes(grid: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((4, grid.len()), |(j, t)| {
        let x = grid[t];
        let s2 = std::f64::consts::SQRT_2;
        match j {
            0 => s2 * (TAU2 * x).cos(),
            1 => 1.0,
            2 => s2 * (2.0 * TAU2 * x).cos(),
            _ => s2 * (TAU2 * x).sin(),
        }
    })
}

/// The scenario's true coefficient curve: a downward parabola peaking at
/// t = 1/2, scaled by the signal strength.
pub fn true_beta(grid: &Array1<f64>, tau: f64) -> Array1<f64> {
    grid.mapv(|t| (0.084 - (t - 0.5) * (t - 0.5)) * tau)
}

/// Draw an n x M matrix of functional covariates from the stored shapes.
fn gen_curves(n: usize, grid: &Array1<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let shapes = pc_shapes(grid);
    let mut w = Array2::zeros((n, grid.len()));
    for i in 0..n {
        for (j, &scale) in PC_WEIGHTS.iter().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            for t in 0..grid.len() {
                w[[i, t]] += scale * xi * shapes[[j, t]];
            }
        }
    }
    w
}

/// Riemann-sum linear predictor of each curve against the true curve.
fn curve_predictor(w: &Array2<f64>, beta: &Array1<f64>, grid: &Array1<f64>) -> Result<Array1<f64>> {
    let lw = quadrature_weights(grid)?;
    let weighted = beta * &lw;
    Ok(w.dot(&weighted))
}

/// A generated scalar-outcome dataset with its noiseless linear predictor.
#[derive(Debug, Clone)]
pub struct SimulatedScalar {
    pub data: FunctionalDataset,
    pub eta: Array1<f64>,
}

/// Generate a scalar-on-function dataset (Gaussian or Bernoulli outcome).
pub fn gen_sofr(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SimulatedScalar> {
    config.validate()?;
    let grid = standard_grid(config.grid_len);
    let beta = true_beta(&grid, config.tau);
    let w = gen_curves(config.n, &grid, rng);
    let eta = curve_predictor(&w, &beta, &grid)?;
    let y = match config.model {
        ScenarioModel::SofrGaussian => Array1::from_shape_fn(config.n, |i| {
            eta[i] + SOFR_NOISE_SD * rng.sample::<f64, _>(StandardNormal)
        }),
        ScenarioModel::SofrBernoulli => Array1::from_shape_fn(config.n, |i| {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            f64::from(rng.gen::<f64>() < p)
        }),
        _ => return Err(Error::Spec("gen_sofr needs a scalar-outcome model".into())),
    };
    Ok(SimulatedScalar {
        data: FunctionalDataset {
            y,
            censor: None,
            z: Array2::zeros((0, config.n)),
            w,
            grid,
        },
        eta,
    })
}

/// A generated survival dataset: observed follow-up with censoring flags,
/// the noiseless predictor, the uncensored event times, and (for the joint
/// model) the noise-free curves.
#[derive(Debug, Clone)]
pub struct SimulatedSurvival {
    pub data: FunctionalDataset,
    pub eta: Array1<f64>,
    pub event_times: Vec<f64>,
    pub clean_w: Array2<f64>,
}

/// Generate a proportional-hazards dataset with unit constant baseline
/// hazard. The joint variant overlays Gaussian measurement noise on the
/// observed curves.
pub fn gen_cox(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SimulatedSurvival> {
    config.validate()?;
    if !matches!(config.model, ScenarioModel::Cox | ScenarioModel::JointCox) {
        return Err(Error::Spec("gen_cox needs a survival model".into()));
    }
    let grid = standard_grid(config.grid_len);
    let beta = true_beta(&grid, config.tau);
    let clean_w = gen_curves(config.n, &grid, rng);
    let eta = curve_predictor(&clean_w, &beta, &grid)?;

    // With H0(t) = t, inverting H(t) e^eta = -log U gives the event time.
    let event_times: Vec<f64> = (0..config.n)
        .map(|i| -rng.gen::<f64>().ln() * (-eta[i]).exp())
        .collect();
    // Censoring times drawn with replacement from the realized event times.
    let mut y = Array1::zeros(config.n);
    let mut censor = vec![0u8; config.n];
    for i in 0..config.n {
        let c = event_times[rng.gen_range(0..config.n)];
        if c < event_times[i] {
            y[i] = c;
            censor[i] = 1;
        } else {
            y[i] = event_times[i];
        }
    }

    let mut w = clean_w.clone();
    if config.model == ScenarioModel::JointCox {
        for v in w.iter_mut() {
            *v += config.noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(SimulatedSurvival {
        data: FunctionalDataset {
            y,
            censor: Some(censor),
            z: Array2::zeros((0, config.n)),
            w,
            grid,
        },
        eta,
        event_times,
        clean_w,
    })
}

/// A generated functional-response dataset.
#[derive(Debug, Clone)]
pub struct SimulatedFosr {
    /// Scalar predictor, one per subject.
    pub x: Array1<f64>,
    /// n x M response curves.
    pub y: Array2<f64>,
    pub grid: Array1<f64>,
}

/// Generate a function-on-scalar dataset: Y_i(t) = X_i beta(t) + W_i(t) +
/// noise.
pub fn gen_fosr(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SimulatedFosr> {
    config.validate()?;
    if config.model != ScenarioModel::Fosr {
        return Err(Error::Spec("gen_fosr needs the functional-response model".into()));
    }
    let grid = standard_grid(config.grid_len);
    let beta = true_beta(&grid, config.tau);
    let w = gen_curves(config.n, &grid, rng);
    let x = Array1::from_shape_fn(config.n, |_| {
        FOSR_X_MEAN + FOSR_X_SD * rng.sample::<f64, _>(StandardNormal)
    });
    let mut y = w;
    for i in 0..config.n {
        for t in 0..grid.len() {
            y[[i, t]] += x[i] * beta[t] + FOSR_NOISE_SD * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(SimulatedFosr { x, y, grid })
}

/// Relative integrated squared error of an estimated curve, via Riemann sums
/// on the shared grid.
pub fn rise(beta_hat: &Array1<f64>, beta_true: &Array1<f64>, grid: &Array1<f64>) -> Result<f64> {
    if beta_hat.len() != beta_true.len() || beta_hat.len() != grid.len() {
        return Err(Error::Shape("curves and grid must share a length".into()));
    }
    let lw = quadrature_weights(grid)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..grid.len() {
        let d = beta_hat[t] - beta_true[t];
        num += lw[t] * d * d;
        den += lw[t] * beta_true[t] * beta_true[t];
    }
    if den <= 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Fit pipelines
// ---------------------------------------------------------------------------

/// A fitted functional-coefficient model: posterior draws plus everything
/// needed to reconstruct and summarize the coefficient curve.
pub struct FunctionalFit {
    pub draws: PosteriorDraws,
    pub system: SplineSystem,
    pub map: ReparamMap,
    pub beta: CurveDraws,
}

/// Fit scalar-on-function regression.
pub fn fit_sofr(
    data: &FunctionalDataset,
    family: SofrFamily,
    k: usize,
    kind: SplineKind,
    sampler: &SamplerConfig,
) -> Result<FunctionalFit> {
    data.validate()?;
    let (system, map, xr, xf) = functional_blocks(data, k, kind)?;
    let model = SofrPosterior::new(family, xr, xf, data.z.clone(), data.y.clone())?;
    let draws = run_nuts(&model, sampler)?;
    let beta = reconstruct_beta(&draws, &system, &map)?;
    Ok(FunctionalFit {
        draws,
        system,
        map,
        beta,
    })
}

/// Fit the proportional-hazards model with observed curves.
pub fn fit_cox(
    data: &FunctionalDataset,
    k: usize,
    kind: SplineKind,
    hazard_df: usize,
    sampler: &SamplerConfig,
) -> Result<(FunctionalFit, HazardBasis)> {
    data.validate()?;
    let censor = data
        .censor
        .clone()
        .ok_or_else(|| Error::Spec("survival fit needs censoring flags".into()))?;
    let (system, map, xr, xf) = functional_blocks(data, k, kind)?;
    let hazard = hazard_for_times(&data.y, hazard_df)?;
    let model = CoxPosterior::new(
        xr,
        xf,
        data.z.clone(),
        censor,
        hazard.m_eval.clone(),
        hazard.i_eval.clone(),
    )?;
    let draws = run_nuts(&model, sampler)?;
    let beta = reconstruct_beta(&draws, &system, &map)?;
    Ok((
        FunctionalFit {
            draws,
            system,
            map,
            beta,
        },
        hazard,
    ))
}

/// Fit the joint score-uncertainty proportional-hazards model: FPCA on the
/// noisy curves, then simultaneous sampling of scores and regression.
pub fn fit_joint(
    data: &FunctionalDataset,
    k: usize,
    kind: SplineKind,
    hazard_df: usize,
    pve: f64,
    sampler: &SamplerConfig,
) -> Result<(FunctionalFit, HazardBasis)> {
    data.validate()?;
    let censor = data
        .censor
        .clone()
        .ok_or_else(|| Error::Spec("survival fit needs censoring flags".into()))?;
    let (system, map, fpca, xr, xf) = joint_geometry(data, k, kind, pve)?;
    let hazard = hazard_for_times(&data.y, hazard_df)?;
    let centered = &data.w - &fpca.mean.clone().insert_axis(Axis(0));
    let model = JointCoxFpcaPosterior::new(
        xr,
        xf,
        data.z.clone(),
        censor,
        hazard.m_eval.clone(),
        hazard.i_eval.clone(),
        fpca.efunctions.clone(),
        centered,
        fpca.scores.clone(),
    )?;
    let draws = run_nuts(&model, sampler)?;
    let beta = reconstruct_beta(&draws, &system, &map)?;
    Ok((
        FunctionalFit {
            draws,
            system,
            map,
            beta,
        },
        hazard,
    ))
}

/// A fitted function-on-scalar model.
pub struct FosrFit {
    pub draws: PosteriorDraws,
    pub system: SplineSystem,
    /// Coefficient-curve draws, one per scalar covariate column.
    pub betas: Vec<CurveDraws>,
}

/// Fit function-on-scalar regression with an intercept curve plus one curve
/// per predictor column. Residual principal components are estimated from
/// pointwise least-squares residuals.
pub fn fit_fosr(
    x: &Array2<f64>,
    y: &Array2<f64>,
    grid: &Array1<f64>,
    k: usize,
    kind: SplineKind,
    pve: f64,
    sampler: &SamplerConfig,
) -> Result<FosrFit> {
    let (n, p) = x.dim();
    if y.nrows() != n || y.ncols() != grid.len() {
        return Err(Error::Shape("responses must be n x M on the grid".into()));
    }
    let spec = SplineSpec::new(kind, k, (grid[0], grid[grid.len() - 1]))?;
    let system = build_spline_system(spec, grid.as_slice().unwrap())?;

    // Pointwise least squares for residual curves, then FPCA.
    let xtx = x.t().dot(x);
    let xtx_inv = invert_small(&xtx)?;
    let b_ols = xtx_inv.dot(&x.t()).dot(y); // P x M
    let resid = y - &x.dot(&b_ols);
    let fpca = fit_fpca(&resid, pve)?;

    let model = FosrPosterior::new(
        x.clone(),
        y.clone(),
        system.eval.clone(),
        system.penalty.clone(),
        system.rank,
        fpca.efunctions.clone(),
    )?;
    let draws = run_nuts(&model, sampler)?;

    let flat = draws.flat();
    let b_range = draws.layout.range("b");
    let mut betas = Vec::with_capacity(p);
    for pi in 0..p {
        let cols = b_range.start + pi * k..b_range.start + (pi + 1) * k;
        let coef = flat.slice(s![.., cols]).to_owned();
        betas.push(CurveDraws {
            grid: grid.clone(),
            curves: coef.dot(&system.eval.t()),
        });
    }
    Ok(FosrFit {
        draws,
        system,
        betas,
    })
}

/// Spline system and reparametrization map implied by a dataset's observed
/// curves, as used by the scalar-outcome and survival fits. Deterministic,
/// so saved draws can be re-summarized against the original data.
pub fn coefficient_geometry(
    data: &FunctionalDataset,
    k: usize,
    kind: SplineKind,
) -> Result<(SplineSystem, ReparamMap)> {
    let (system, map, _, _) = functional_blocks(data, k, kind)?;
    Ok((system, map))
}

/// Geometry for the joint model, where the design is the FPCA eigenfunction
/// cross-product: spline system, reparametrization map, the FPCA fit, and
/// the transformed score-to-predictor design blocks.
pub fn joint_geometry(
    data: &FunctionalDataset,
    k: usize,
    kind: SplineKind,
    pve: f64,
) -> Result<(SplineSystem, ReparamMap, crate::fpca::FpcaFit, Array2<f64>, Array2<f64>)> {
    let fpca = fit_fpca(&data.w, pve)?;
    let spec = SplineSpec::new(kind, k, (data.grid[0], data.grid[data.grid.len() - 1]))?;
    let system = build_spline_system(spec, data.grid.as_slice().unwrap())?;
    let cross = fpca_spline_crossproduct(&fpca.efunctions, &system, &data.grid)?;
    let raw_design = cross.t().to_owned(); // K x J
    let map = build_reparam(&system, &raw_design)?;
    let (xr, xf) = map.transform_design(&raw_design)?;
    Ok((system, map, fpca, xr, xf))
}

fn functional_blocks(
    data: &FunctionalDataset,
    k: usize,
    kind: SplineKind,
) -> Result<(SplineSystem, ReparamMap, Array2<f64>, Array2<f64>)> {
    let spec = SplineSpec::new(kind, k, (data.grid[0], data.grid[data.grid.len() - 1]))?;
    let system = build_spline_system(spec, data.grid.as_slice().unwrap())?;
    let design = functional_design(data, &system)?;
    let map = build_reparam(&system, &design)?;
    let (xr, xf) = map.transform_design(&design)?;
    Ok((system, map, xr, xf))
}

fn hazard_for_times(y: &Array1<f64>, df: usize) -> Result<HazardBasis> {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateData("no positive follow-up times".into()));
    }
    build_hazard_basis(y.as_slice().unwrap(), df, (0.0, max * 1.001))
}

/// Gauss-Jordan inverse for the small cross-product matrices used in the
/// two-step residual fit.
fn invert_small(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::numerical("x", "singular scalar design"))?;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| inv[(i, j)]))
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

/// Aggregated metrics over the replications of a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub median_rise: f64,
    /// Mean pointwise 95% interval coverage, in percent.
    pub mean_coverage: f64,
    /// Median squared prediction error on 500 fresh subjects.
    pub prediction_error: f64,
    pub replications: usize,
}

struct RepMetrics {
    rise: f64,
    coverage: f64,
    prediction: f64,
}

/// Run every replication of a scenario and aggregate median RISE, mean
/// pointwise coverage, and median prediction error.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let metrics: Vec<Result<RepMetrics>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            run_replication(config, rep).map_err(|e| match e {
                Error::Init(n) => Error::Spec(format!(
                    "replication {rep}: initialization failed after {n} attempts"
                )),
                other => other,
            })
        })
        .collect();
    let mut rises = Vec::new();
    let mut coverages = Vec::new();
    let mut predictions = Vec::new();
    for m in metrics {
        let m = m?;
        rises.push(m.rise);
        coverages.push(m.coverage);
        predictions.push(m.prediction);
    }
    Ok(ScenarioReport {
        median_rise: median(&mut rises),
        mean_coverage: 100.0 * coverages.iter().sum::<f64>() / coverages.len() as f64,
        prediction_error: median(&mut predictions),
        replications: config.replications,
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn rep_rng(config: &ScenarioConfig, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0x5151_0000 + rep as u64);
    rng
}

fn rep_sampler(config: &ScenarioConfig, rep: usize) -> SamplerConfig {
    SamplerConfig {
        seed: config
            .sampler
            .seed
            .wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        ..config.sampler.clone()
    }
}

fn coverage_fraction(beta: &CurveDraws, truth: &Array1<f64>) -> Result<f64> {
    let (lo, hi) = pointwise_interval(beta, 0.05)?;
    let hits = (0..truth.len())
        .filter(|&t| truth[t] >= lo[t] && truth[t] <= hi[t])
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

fn run_replication(config: &ScenarioConfig, rep: usize) -> Result<RepMetrics> {
    let mut rng = rep_rng(config, rep);
    let sampler = rep_sampler(config, rep);
    let grid = standard_grid(config.grid_len);
    let truth = true_beta(&grid, config.tau);
    let test_config = ScenarioConfig {
        n: 500,
        ..config.clone()
    };

    match config.model {
        ScenarioModel::SofrGaussian | ScenarioModel::SofrBernoulli => {
            let family = if config.model == ScenarioModel::SofrGaussian {
                SofrFamily::Gaussian
            } else {
                SofrFamily::BernoulliLogit
            };
            let train = gen_sofr(config, &mut rng)?;
            let test = gen_sofr(&test_config, &mut rng)?;
            let fit = fit_sofr(&train.data, family, config.basis_dim, SplineKind::OpenCubic, &sampler)?;
            let beta_hat = fit.beta.mean();
            let rise_val = rise(&beta_hat, &truth, &grid)?;
            let coverage = coverage_fraction(&fit.beta, &truth)?;

            let eta0_hat = fit.draws.mean(fit.draws.layout.range("eta0").start);
            let eta_hat = curve_predictor(&test.data.w, &beta_hat, &grid)? + eta0_hat;
            let prediction = match family {
                SofrFamily::Gaussian => mse(&eta_hat, &test.eta),
                SofrFamily::BernoulliLogit => {
                    let p_hat = eta_hat.mapv(|e| 1.0 / (1.0 + (-e).exp()));
                    let p_true = test.eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
                    mse(&p_hat, &p_true)
                }
            };
            Ok(RepMetrics {
                rise: rise_val,
                coverage,
                prediction,
            })
        }
        ScenarioModel::Cox => {
            let train = gen_cox(config, &mut rng)?;
            let test = gen_cox(&test_config, &mut rng)?;
            let (fit, _) = fit_cox(
                &train.data,
                config.basis_dim,
                SplineKind::OpenCubic,
                config.hazard_df,
                &sampler,
            )?;
            let beta_hat = fit.beta.mean();
            let rise_val = rise(&beta_hat, &truth, &grid)?;
            let coverage = coverage_fraction(&fit.beta, &truth)?;
            // Relative risks are identified only up to a constant shift, so
            // compare centred predictors.
            let eta_hat = centered(&curve_predictor(&test.data.w, &beta_hat, &grid)?);
            let prediction = mse(&eta_hat, &centered(&test.eta));
            Ok(RepMetrics {
                rise: rise_val,
                coverage,
                prediction,
            })
        }
        ScenarioModel::JointCox => {
            let train = gen_cox(config, &mut rng)?;
            let test = gen_cox(&test_config, &mut rng)?;
            let (fit, _) = fit_joint(
                &train.data,
                config.basis_dim,
                SplineKind::OpenCubic,
                config.hazard_df,
                config.pve,
                &sampler,
            )?;
            let beta_hat = fit.beta.mean();
            let rise_val = rise(&beta_hat, &truth, &grid)?;
            let coverage = coverage_fraction(&fit.beta, &truth)?;
            let eta_hat = centered(&curve_predictor(&test.data.w, &beta_hat, &grid)?);
            let prediction = mse(&eta_hat, &centered(&test.eta));
            Ok(RepMetrics {
                rise: rise_val,
                coverage,
                prediction,
            })
        }
        ScenarioModel::Fosr => {
            let train = gen_fosr(config, &mut rng)?;
            let test = gen_fosr(&test_config, &mut rng)?;
            // Design: intercept column plus the scalar predictor.
            let x = design_with_intercept(&train.x);
            let fit = fit_fosr(
                &x,
                &train.y,
                &grid,
                config.basis_dim,
                SplineKind::OpenCubic,
                config.pve,
                &sampler,
            )?;
            let slope = &fit.betas[1];
            let beta_hat = slope.mean();
            let rise_val = rise(&beta_hat, &truth, &grid)?;
            let coverage = coverage_fraction(slope, &truth)?;
            // Predict the mean surface for fresh subjects.
            let intercept_hat = fit.betas[0].mean();
            let mut err = 0.0;
            for i in 0..test.x.len() {
                for t in 0..grid.len() {
                    let mu = intercept_hat[t] + test.x[i] * beta_hat[t];
                    let d = mu - test.x[i] * truth[t];
                    err += d * d;
                }
            }
            let prediction = err / (test.x.len() * grid.len()) as f64;
            Ok(RepMetrics {
                rise: rise_val,
                coverage,
                prediction,
            })
        }
    }
}

/// Stack an all-ones intercept column in front of a scalar predictor.
pub fn design_with_intercept(x: &Array1<f64>) -> Array2<f64> {
    let n = x.len();
    let mut out = Array2::ones((n, 2));
    out.column_mut(1).assign(x);
    out
}

fn mse(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

fn centered(x: &Array1<f64>) -> Array1<f64> {
    let m = x.sum() / x.len() as f64;
    x.mapv(|v| v - m)
}

/// Simultaneous-band width relative to the pointwise band, averaged over the
/// grid. Used by reporting code; always at least 1 in exact arithmetic.
pub fn band_width_ratio(beta: &CurveDraws, alpha: f64) -> Result<f64> {
    let (plo, phi) = pointwise_interval(beta, alpha)?;
    let (clo, chi) = cma_interval(beta, alpha)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..beta.grid.len() {
        num += chi[t] - clo[t];
        den += phi[t] - plo[t];
    }
    if den <= 0.0 {
        return Err(Error::DegenerateDraws);
    }
    Ok(num / den)
}
