//! Adaptive Hamiltonian Monte Carlo: a No-U-Turn sampler with dual-averaging
//! step-size tuning, windowed diagonal mass-matrix adaptation, and
//! rank-normalized convergence diagnostics.

use crate::error::{Error, Result};
use crate::posteriors::{ModelPosterior, ParamLayout};
use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Knobs for a sampling run.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Retained draws per chain, after warmup.
    pub iter: usize,
    /// Adaptation iterations per chain, discarded.
    pub warmup: usize,
    pub chains: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iter: 1000,
            warmup: 1000,
            chains: 4,
            seed: 0,
            target_accept: 0.8,
            max_tree_depth: 10,
        }
    }
}

/// Posterior sample from one run: per-chain draw matrices plus adaptation
/// and divergence records.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub layout: ParamLayout,
    /// One (iter x dim) matrix per chain.
    pub chains: Vec<Array2<f64>>,
    /// Post-warmup divergent transitions per chain.
    pub divergences: Vec<usize>,
    /// Adapted step sizes per chain.
    pub step_sizes: Vec<f64>,
    /// Mean post-warmup acceptance statistic per chain.
    pub accept_rates: Vec<f64>,
    /// Set when more than 10% of post-warmup transitions diverged.
    pub divergence_warning: bool,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.nrows())
    }

    pub fn dim(&self) -> usize {
        self.chains.first().map_or(0, |c| c.ncols())
    }

    /// All chains stacked into one (chains * iter) x dim matrix.
    pub fn flat(&self) -> Array2<f64> {
        let views: Vec<_> = self.chains.iter().map(|c| c.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("chains share a dimension")
    }

    /// Stacked draws of one named parameter block.
    pub fn extract(&self, name: &str) -> Array2<f64> {
        let range = self.layout.range(name);
        self.flat().slice(ndarray::s![.., range]).to_owned()
    }

    /// Split rank-normalized potential scale reduction for one coordinate.
    pub fn rhat(&self, index: usize) -> f64 {
        let per_chain: Vec<Vec<f64>> = self
            .chains
            .iter()
            .map(|c| c.column(index).to_vec())
            .collect();
        split_rank_rhat(&per_chain)
    }

    /// Bulk effective sample size for one coordinate.
    pub fn ess_bulk(&self, index: usize) -> f64 {
        let per_chain: Vec<Vec<f64>> = self
            .chains
            .iter()
            .map(|c| c.column(index).to_vec())
            .collect();
        bulk_ess(&per_chain)
    }

    pub fn mean(&self, index: usize) -> f64 {
        let flat = self.flat();
        flat.column(index).mean().unwrap_or(f64::NAN)
    }
}

const MAX_INIT_ATTEMPTS: usize = 100;
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Run the sampler: `chains` independent adaptive NUTS chains, in parallel,
/// each with its own deterministic random stream derived from the seed.
pub fn run_nuts<M: ModelPosterior>(model: &M, config: &SamplerConfig) -> Result<PosteriorDraws> {
    if config.chains == 0 || config.iter == 0 {
        return Err(Error::Spec("need at least one chain and one draw".into()));
    }
    let results: Vec<Result<ChainResult>> = (0..config.chains)
        .into_par_iter()
        .map(|chain_idx| run_chain(model, config, chain_idx))
        .collect();

    let mut chains = Vec::with_capacity(config.chains);
    let mut divergences = Vec::new();
    let mut step_sizes = Vec::new();
    let mut accept_rates = Vec::new();
    for r in results {
        let r = r?;
        chains.push(r.draws);
        divergences.push(r.divergences);
        step_sizes.push(r.step_size);
        accept_rates.push(r.accept_rate);
    }
    let total_div: usize = divergences.iter().sum();
    let total_draws = config.chains * config.iter;
    Ok(PosteriorDraws {
        layout: model.layout().clone(),
        chains,
        divergences,
        step_sizes,
        accept_rates,
        divergence_warning: total_div * 10 > total_draws,
    })
}

struct ChainResult {
    draws: Array2<f64>,
    divergences: usize,
    step_size: f64,
    accept_rate: f64,
}

struct State {
    q: Array1<f64>,
    logp: f64,
    grad: Array1<f64>,
}

fn run_chain<M: ModelPosterior>(
    model: &M,
    config: &SamplerConfig,
    chain_idx: usize,
) -> Result<ChainResult> {
    let dim = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_idx as u64 + 1);

    // Jittered initialization until the density and gradient are finite.
    let mut state = None;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let q = Array1::from_shape_fn(dim, |_| rng.gen_range(-2.0..2.0));
        if let Ok((logp, grad)) = model.log_density_grad(q.view()) {
            if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
                state = Some(State { q, logp, grad });
                break;
            }
        }
    }
    let mut state = state.ok_or(Error::Init(MAX_INIT_ATTEMPTS))?;

    let mut inv_mass = Array1::from_elem(dim, 1.0);
    let mut step = find_initial_step(model, &state, &inv_mass, &mut rng);
    let mut dual = DualAverage::new(step, config.target_accept);
    let schedule = AdaptSchedule::new(config.warmup);
    let mut welford = Welford::new(dim);

    let mut draws = Array2::zeros((config.iter, dim));
    let mut divergences = 0usize;
    let mut accept_sum = 0.0;

    for it in 0..config.warmup + config.iter {
        let warm = it < config.warmup;
        let (next, alpha, divergent) =
            nuts_transition(model, &state, step, &inv_mass, config.max_tree_depth, &mut rng);
        state = next;

        if warm {
            step = dual.update(alpha);
            if schedule.in_slow_window(it) {
                welford.push(&state.q);
            }
            if schedule.ends_slow_window(it) {
                inv_mass = welford.regularized_variance();
                welford = Welford::new(dim);
                dual = DualAverage::new(step, config.target_accept);
            }
            if it + 1 == config.warmup {
                step = dual.final_step();
            }
        } else {
            if divergent {
                divergences += 1;
            }
            accept_sum += alpha;
            draws.row_mut(it - config.warmup).assign(&state.q);
        }
    }

    Ok(ChainResult {
        draws,
        divergences,
        step_size: step,
        accept_rate: accept_sum / config.iter as f64,
    })
}

/// One leapfrog step; pub(crate) so tests can probe energy conservation.
pub(crate) fn leapfrog<M: ModelPosterior>(
    model: &M,
    q: &Array1<f64>,
    p: &Array1<f64>,
    grad: &Array1<f64>,
    inv_mass: &Array1<f64>,
    eps: f64,
) -> Option<(Array1<f64>, Array1<f64>, f64, Array1<f64>)> {
    let mut p_half = p.clone();
    p_half.zip_mut_with(grad, |pi, &g| *pi += 0.5 * eps * g);
    let mut q_new = q.clone();
    for i in 0..q.len() {
        q_new[i] += eps * inv_mass[i] * p_half[i];
    }
    let (logp, grad_new) = model.log_density_grad(q_new.view()).ok()?;
    if !logp.is_finite() {
        return None;
    }
    let mut p_new = p_half;
    p_new.zip_mut_with(&grad_new, |pi, &g| *pi += 0.5 * eps * g);
    Some((q_new, p_new, logp, grad_new))
}

fn kinetic(p: &Array1<f64>, inv_mass: &Array1<f64>) -> f64 {
    0.5 * p.iter().zip(inv_mass.iter()).map(|(pi, mi)| pi * pi * mi).sum::<f64>()
}

fn sample_momentum(inv_mass: &Array1<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(inv_mass.len(), |i| {
        let z: f64 = rng.sample(StandardNormal);
        z / inv_mass[i].sqrt()
    })
}

/// Coarse bracketing of a reasonable starting step size: double or halve
/// until the one-step acceptance probability crosses one half.
fn find_initial_step<M: ModelPosterior>(
    model: &M,
    state: &State,
    inv_mass: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut eps = 1.0;
    let p = sample_momentum(inv_mass, rng);
    let h0 = state.logp - kinetic(&p, inv_mass);
    let accept_at = |eps: f64| -> f64 {
        match leapfrog(model, &state.q, &p, &state.grad, inv_mass, eps) {
            Some((_, p1, logp1, _)) => (logp1 - kinetic(&p1, inv_mass) - h0).exp().min(1.0),
            None => 0.0,
        }
    };
    let dir: f64 = if accept_at(eps) > 0.5 { 2.0 } else { 0.5 };
    for _ in 0..50 {
        let next = eps * dir;
        let a = accept_at(next);
        let keep_going = if dir > 1.0 { a > 0.5 } else { a < 0.5 };
        if !keep_going || !(1e-10..=1e10).contains(&next) {
            if dir < 1.0 {
                eps = next; // step back below the 0.5 crossing
            }
            break;
        }
        eps = next;
    }
    eps
}

struct Tree {
    q_minus: Array1<f64>,
    p_minus: Array1<f64>,
    grad_minus: Array1<f64>,
    q_plus: Array1<f64>,
    p_plus: Array1<f64>,
    grad_plus: Array1<f64>,
    proposal: State,
    n_valid: f64,
    stop: bool,
    divergent: bool,
    alpha_sum: f64,
    n_alpha: f64,
}

#[allow(clippy::too_many_arguments)]
fn build_tree<M: ModelPosterior>(
    model: &M,
    q: &Array1<f64>,
    p: &Array1<f64>,
    grad: &Array1<f64>,
    log_u: f64,
    dir: f64,
    depth: usize,
    h0: f64,
    eps: f64,
    inv_mass: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Tree {
    if depth == 0 {
        // Base case: a single leapfrog step in the chosen direction.
        match leapfrog(model, q, p, grad, inv_mass, dir * eps) {
            Some((q1, p1, logp1, grad1)) => {
                let h = logp1 - kinetic(&p1, inv_mass);
                let divergent = log_u > h + DIVERGENCE_THRESHOLD;
                let n_valid = f64::from(log_u <= h);
                let alpha = (h - h0).exp().min(1.0);
                Tree {
                    q_minus: q1.clone(),
                    p_minus: p1.clone(),
                    grad_minus: grad1.clone(),
                    q_plus: q1.clone(),
                    p_plus: p1.clone(),
                    grad_plus: grad1.clone(),
                    proposal: State {
                        q: q1,
                        logp: logp1,
                        grad: grad1,
                    },
                    n_valid,
                    stop: divergent,
                    divergent,
                    alpha_sum: alpha,
                    n_alpha: 1.0,
                }
            }
            None => Tree {
                q_minus: q.clone(),
                p_minus: p.clone(),
                grad_minus: grad.clone(),
                q_plus: q.clone(),
                p_plus: p.clone(),
                grad_plus: grad.clone(),
                proposal: State {
                    q: q.clone(),
                    logp: f64::NEG_INFINITY,
                    grad: grad.clone(),
                },
                n_valid: 0.0,
                stop: true,
                divergent: true,
                alpha_sum: 0.0,
                n_alpha: 1.0,
            },
        }
    } else {
        let mut inner = build_tree(model, q, p, grad, log_u, dir, depth - 1, h0, eps, inv_mass, rng);
        if inner.stop {
            return inner;
        }
        let outer = if dir < 0.0 {
            let t = build_tree(
                model,
                &inner.q_minus,
                &inner.p_minus,
                &inner.grad_minus,
                log_u,
                dir,
                depth - 1,
                h0,
                eps,
                inv_mass,
                rng,
            );
            inner.q_minus = t.q_minus.clone();
            inner.p_minus = t.p_minus.clone();
            inner.grad_minus = t.grad_minus.clone();
            t
        } else {
            let t = build_tree(
                model,
                &inner.q_plus,
                &inner.p_plus,
                &inner.grad_plus,
                log_u,
                dir,
                depth - 1,
                h0,
                eps,
                inv_mass,
                rng,
            );
            inner.q_plus = t.q_plus.clone();
            inner.p_plus = t.p_plus.clone();
            inner.grad_plus = t.grad_plus.clone();
            t
        };
        let total = inner.n_valid + outer.n_valid;
        if total > 0.0 && rng.gen::<f64>() < outer.n_valid / total {
            inner.proposal = outer.proposal;
        }
        inner.alpha_sum += outer.alpha_sum;
        inner.n_alpha += outer.n_alpha;
        inner.n_valid = total;
        inner.divergent = inner.divergent || outer.divergent;
        inner.stop = outer.stop
            || u_turn(&inner.q_minus, &inner.q_plus, &inner.p_minus, &inner.p_plus, inv_mass);
        inner
    }
}

fn u_turn(
    q_minus: &Array1<f64>,
    q_plus: &Array1<f64>,
    p_minus: &Array1<f64>,
    p_plus: &Array1<f64>,
    inv_mass: &Array1<f64>,
) -> bool {
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for i in 0..q_minus.len() {
        let dq = q_plus[i] - q_minus[i];
        fwd += dq * inv_mass[i] * p_plus[i];
        bwd += dq * inv_mass[i] * p_minus[i];
    }
    fwd < 0.0 || bwd < 0.0
}

fn nuts_transition<M: ModelPosterior>(
    model: &M,
    state: &State,
    eps: f64,
    inv_mass: &Array1<f64>,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> (State, f64, bool) {
    let p0 = sample_momentum(inv_mass, rng);
    let h0 = state.logp - kinetic(&p0, inv_mass);
    // Slice variable on the log scale: log u = h0 - Exp(1).
    let log_u = h0 + rng.gen::<f64>().ln();

    let mut q_minus = state.q.clone();
    let mut p_minus = p0.clone();
    let mut grad_minus = state.grad.clone();
    let mut q_plus = state.q.clone();
    let mut p_plus = p0.clone();
    let mut grad_plus = state.grad.clone();
    let mut proposal = State {
        q: state.q.clone(),
        logp: state.logp,
        grad: state.grad.clone(),
    };
    let mut n_valid = 1.0;
    let mut alpha_sum = 0.0;
    let mut n_alpha = 0.0;
    let mut divergent = false;

    for depth in 0..max_depth {
        let dir: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let tree = if dir < 0.0 {
            let t = build_tree(
                model, &q_minus, &p_minus, &grad_minus, log_u, dir, depth, h0, eps, inv_mass, rng,
            );
            q_minus = t.q_minus.clone();
            p_minus = t.p_minus.clone();
            grad_minus = t.grad_minus.clone();
            t
        } else {
            let t = build_tree(
                model, &q_plus, &p_plus, &grad_plus, log_u, dir, depth, h0, eps, inv_mass, rng,
            );
            q_plus = t.q_plus.clone();
            p_plus = t.p_plus.clone();
            grad_plus = t.grad_plus.clone();
            t
        };
        alpha_sum += tree.alpha_sum;
        n_alpha += tree.n_alpha;
        divergent = divergent || tree.divergent;
        if !tree.stop && tree.n_valid > 0.0 && rng.gen::<f64>() < (tree.n_valid / n_valid).min(1.0)
        {
            proposal = tree.proposal;
        }
        n_valid += tree.n_valid;
        if tree.stop || u_turn(&q_minus, &q_plus, &p_minus, &p_plus, inv_mass) {
            break;
        }
    }
    let alpha = if n_alpha > 0.0 { alpha_sum / n_alpha } else { 0.0 };
    (proposal, alpha, divergent)
}

/// Nesterov dual averaging of the log step size.
struct DualAverage {
    mu: f64,
    target: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: u64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAverage {
            mu: (10.0 * eps0).ln(),
            target,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0,
        }
    }

    fn update(&mut self, alpha: f64) -> f64 {
        self.count += 1;
        let m = self.count as f64;
        let frac = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - alpha);
        self.log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let w = m.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Warmup phase boundaries: a fast start, doubling slow windows for mass
/// adaptation, and a fast tail for step-size polishing.
struct AdaptSchedule {
    window_ends: Vec<usize>,
    slow_start: usize,
    slow_end: usize,
}

impl AdaptSchedule {
    fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return AdaptSchedule {
                window_ends: Vec::new(),
                slow_start: warmup,
                slow_end: warmup,
            };
        }
        let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
        if init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.10 * warmup as f64) as usize;
            base = warmup - init - term;
        }
        let slow_start = init;
        let slow_end = warmup - term;
        let mut window_ends = Vec::new();
        let mut start = slow_start;
        let mut width = base;
        loop {
            let end = start + width;
            if end + 2 * width > slow_end {
                window_ends.push(slow_end);
                break;
            }
            window_ends.push(end);
            start = end;
            width *= 2;
        }
        AdaptSchedule {
            window_ends,
            slow_start,
            slow_end,
        }
    }

    fn in_slow_window(&self, it: usize) -> bool {
        it >= self.slow_start && it < self.slow_end
    }

    fn ends_slow_window(&self, it: usize) -> bool {
        self.window_ends.contains(&(it + 1))
    }
}

/// Online mean and variance.
struct Welford {
    n: usize,
    mean: Array1<f64>,
    m2: Array1<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: Array1::zeros(dim),
            m2: Array1::zeros(dim),
        }
    }

    fn push(&mut self, x: &Array1<f64>) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Sample variance shrunk toward unit scale, floored away from zero.
    fn regularized_variance(&self) -> Array1<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return Array1::from_elem(self.mean.len(), 1.0);
        }
        self.m2.mapv(|m2| {
            let var = m2 / (n - 1.0);
            (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        })
    }
}

// ---------------------------------------------------------------------------
// Convergence diagnostics
// ---------------------------------------------------------------------------

/// Split rank-normalized potential scale reduction factor.
///
/// Returns NaN when any split half has zero variance.
pub fn split_rank_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split_chains(chains);
    let z = rank_normalize(&halves);
    basic_rhat(&z)
}

/// Bulk effective sample size on rank-normalized split chains.
pub fn bulk_ess(chains: &[Vec<f64>]) -> f64 {
    let halves = split_chains(chains);
    let z = rank_normalize(&halves);
    basic_ess(&z)
}

fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Pooled fractional ranks mapped through the standard normal quantile
/// function, with average ranks for ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut flat_idx = 0;
    for c in chains {
        for &v in c {
            indexed.push((v, flat_idx));
            flat_idx += 1;
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for item in indexed.iter().take(j + 1).skip(i) {
            ranks[item.1] = avg;
        }
        i = j + 1;
    }
    let s = total as f64;
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        let mut z = Vec::with_capacity(c.len());
        for _ in c {
            let frac = (ranks[k] - 0.375) / (s + 0.25);
            z.push(inverse_normal_cdf(frac));
            k += 1;
        }
        out.push(z);
    }
    out
}

fn chain_moments(chains: &[Vec<f64>]) -> Option<(f64, f64, f64)> {
    let m = chains.len();
    let n = chains.first()?.len();
    if m < 2 || n < 2 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 / (m as f64 - 1.0)
        * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let w = chains
        .iter()
        .zip(means.iter())
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m as f64;
    Some((b, w, n as f64))
}

fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    match chain_moments(chains) {
        Some((b, w, n)) if w > 1e-15 => {
            let var_plus = (n - 1.0) / n * w + b / n;
            (var_plus / w).sqrt()
        }
        _ => f64::NAN,
    }
}

/// Effective sample size via Geyer's initial monotone positive sequence.
fn basic_ess(chains: &[Vec<f64>]) -> f64 {
    let (b, w, n) = match chain_moments(chains) {
        Some(v) => v,
        None => return f64::NAN,
    };
    if w <= 1e-15 {
        return f64::NAN;
    }
    let m = chains.len();
    let n_us = n as usize;
    let var_plus = (n - 1.0) / n * w + b / n;

    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    // Mean autocovariance across chains at each lag.
    let acov = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (c, mu) in chains.iter().zip(means.iter()) {
            let mut s = 0.0;
            for t in 0..n_us - lag {
                s += (c[t] - mu) * (c[t + lag] - mu);
            }
            total += s / n;
        }
        total / m as f64
    };

    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
    let mut tau = 1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 1;
    while lag + 1 < n_us {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair); // enforce monotone decrease
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    (m as f64 * n / tau).max(0.0)
}

/// Standard normal quantile function (Acklam's rational approximation with
/// one Halley refinement step).
pub(crate) fn inverse_normal_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement against the erf-based CDF.
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Complementary error function (Numerical-Recipes-style Chebyshev fit).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayView1;
    use crate::posteriors::ParamLayout;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    /// Multivariate normal with diagonal-plus-correlation precision, used as
    /// a known target for sampler checks.
    struct MvNormal {
        mean: Array1<f64>,
        precision: Array2<f64>,
        layout: ParamLayout,
    }

    impl MvNormal {
        fn standard(dim: usize) -> Self {
            MvNormal {
                mean: Array1::zeros(dim),
                precision: Array2::eye(dim),
                layout: ParamLayout::new().push("x", dim),
            }
        }

        fn correlated_pair(rho: f64) -> Self {
            let det = 1.0 - rho * rho;
            let mut prec = Array2::zeros((2, 2));
            prec[[0, 0]] = 1.0 / det;
            prec[[1, 1]] = 1.0 / det;
            prec[[0, 1]] = -rho / det;
            prec[[1, 0]] = -rho / det;
            MvNormal {
                mean: Array1::zeros(2),
                precision: prec,
                layout: ParamLayout::new().push("x", 2),
            }
        }
    }

    impl ModelPosterior for MvNormal {
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }

        fn log_density_grad(&self, theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
            let d = &theta.to_owned() - &self.mean;
            let pd = self.precision.dot(&d);
            let value = -0.5 * d.dot(&pd);
            Ok((value, -pd))
        }
    }

    /// A target that never has finite density.
    struct Hopeless {
        layout: ParamLayout,
    }

    impl ModelPosterior for Hopeless {
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }

        fn log_density_grad(&self, _theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
            Ok((f64::NEG_INFINITY, Array1::zeros(1)))
        }
    }

    fn quick_config(seed: u64) -> SamplerConfig {
        SamplerConfig {
            iter: 1000,
            warmup: 500,
            chains: 2,
            seed,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let model = MvNormal::standard(3);
        let cfg = SamplerConfig {
            iter: 50,
            warmup: 50,
            chains: 2,
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = run_nuts(&model, &cfg).unwrap();
        let b = run_nuts(&model, &cfg).unwrap();
        for (ca, cb) in a.chains.iter().zip(b.chains.iter()) {
            assert_eq!(ca, cb, "same seed must give bit-identical draws");
        }
        let c = run_nuts(&model, &SamplerConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.chains[0], c.chains[0]);
    }

    #[test]
    fn standard_normal_moments() {
        let dim = 10;
        let model = MvNormal::standard(dim);
        let out = run_nuts(&model, &quick_config(7)).unwrap();
        let flat = out.flat();
        let n = flat.nrows() as f64;
        for i in 0..dim {
            let mean = flat.column(i).mean().unwrap();
            assert!(mean.abs() < 0.15, "mean[{i}] = {mean}");
            let var = flat.column(i).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (n - 1.0);
            assert!((var - 1.0).abs() < 0.2, "var[{i}] = {var}");
        }
        // Off-diagonal covariances near zero.
        for i in 0..dim {
            for j in 0..i {
                let mi = flat.column(i).mean().unwrap();
                let mj = flat.column(j).mean().unwrap();
                let cov = flat
                    .column(i)
                    .iter()
                    .zip(flat.column(j).iter())
                    .map(|(a, b)| (a - mi) * (b - mj))
                    .sum::<f64>()
                    / (n - 1.0);
                assert!(cov.abs() < 0.15, "cov[{i},{j}] = {cov}");
            }
        }
    }

    #[test]
    fn correlated_gaussian_marginals_pass_ks() {
        let model = MvNormal::correlated_pair(0.8);
        let out = run_nuts(&model, &quick_config(11)).unwrap();
        let flat = out.flat();
        // Thin to reduce autocorrelation before the KS comparison.
        for col in 0..2 {
            let mut xs: Vec<f64> = flat.column(col).iter().copied().step_by(10).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let mut d: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let cdf = 0.5 * erfc(-x / std::f64::consts::SQRT_2);
                let lo = i as f64 / n;
                let hi = (i + 1) as f64 / n;
                d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
            }
            // 1% critical value ~ 1.63 / sqrt(n); allow slack for residual
            // autocorrelation.
            assert!(d < 2.2 / n.sqrt(), "KS statistic {d} too large for n {n}");
        }
    }

    #[test]
    fn energy_conserved_at_small_step() {
        let model = MvNormal::correlated_pair(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inv_mass = Array1::from_elem(2, 1.0);
        let q0 = Array1::from(vec![0.3, -0.4]);
        let (logp, grad) = model.log_density_grad(q0.view()).unwrap();
        let p0 = sample_momentum(&inv_mass, &mut rng);
        let h0 = logp - kinetic(&p0, &inv_mass);
        let (mut q, mut p, mut g) = (q0, p0, grad);
        for _ in 0..1000 {
            let (q1, p1, _, g1) = leapfrog(&model, &q, &p, &g, &inv_mass, 1e-3).unwrap();
            q = q1;
            p = p1;
            g = g1;
        }
        let (logp1, _) = model.log_density_grad(q.view()).unwrap();
        let h1 = logp1 - kinetic(&p, &inv_mass);
        assert!((h1 - h0).abs() < 1e-4, "energy drift {}", (h1 - h0).abs());
    }

    #[test]
    fn acceptance_near_target() {
        let model = MvNormal::standard(5);
        let out = run_nuts(&model, &quick_config(13)).unwrap();
        for (i, &a) in out.accept_rates.iter().enumerate() {
            assert!(
                (a - 0.8).abs() < 0.1,
                "chain {i} acceptance {a} far from target 0.8"
            );
        }
        assert!(!out.divergence_warning);
        assert_eq!(out.divergences.iter().sum::<usize>(), 0);
    }

    #[test]
    fn diagnostics_on_synthetic_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let iid = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let chains: Vec<Vec<f64>> = (0..4).map(|_| iid(&mut rng)).collect();
        let r = split_rank_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "iid rhat {r}");
        let e = bulk_ess(&chains);
        assert!(e > 4000.0, "iid ess {e}");

        // One chain shifted far away must blow up rhat.
        let mut shifted = chains.clone();
        for v in shifted[0].iter_mut() {
            *v += 10.0;
        }
        let r = split_rank_rhat(&shifted);
        assert!(r > 1.5, "shifted rhat {r}");

        // Zero-variance chains give NaN.
        let constant: Vec<Vec<f64>> = vec![vec![2.0; 100], vec![2.0; 100]];
        assert!(split_rank_rhat(&constant).is_nan());
        assert!(bulk_ess(&constant).is_nan());
    }

    #[test]
    fn sticky_chain_has_low_ess() {
        // Strong AR(1) dependence: ESS far below the raw draw count.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut chains = Vec::new();
        for _ in 0..2 {
            let mut x = 0.0;
            let mut c = Vec::with_capacity(2000);
            for _ in 0..2000 {
                let z: f64 = rng.sample(StandardNormal);
                x = 0.95 * x + z * (1.0 - 0.95f64 * 0.95).sqrt();
                c.push(x);
            }
            chains.push(c);
        }
        let e = bulk_ess(&chains);
        assert!(e < 600.0, "AR(1) ess {e} should be far below 4000");
    }

    #[test]
    fn inverse_normal_cdf_accuracy() {
        for (p, expect) in [
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (0.025, -1.959963984540054),
            (0.84134474606854293, 1.0),
            (1e-6, -4.753424308822899),
        ] {
            assert_abs_diff_eq!(inverse_normal_cdf(p), expect, epsilon = 1e-7);
        }
        assert!(inverse_normal_cdf(-0.1).is_nan());
    }

    #[test]
    fn init_failure_reported() {
        let model = Hopeless {
            layout: ParamLayout::new().push("x", 1),
        };
        match run_nuts(&model, &quick_config(1)) {
            Err(Error::Init(n)) => assert_eq!(n, 100),
            other => panic!("expected init error, got {other:?}"),
        }
    }

    #[test]
    fn extract_named_block() {
        let model = MvNormal::standard(3);
        let cfg = SamplerConfig {
            iter: 20,
            warmup: 30,
            chains: 2,
            seed: 9,
            ..SamplerConfig::default()
        };
        let out = run_nuts(&model, &cfg).unwrap();
        let x = out.extract("x");
        assert_eq!(x.dim(), (40, 3));
        assert_eq!(out.n_draws(), 20);
        assert_eq!(out.dim(), 3);
    }
}

