//! Spline bases: cubic B-splines (open and cyclic) with the exact
//! second-derivative penalty, and the M-/I-spline basis for baseline hazards.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

/// 3-point Gauss-Legendre rule on [-1, 1]. Exact through degree 5, which is
/// more than enough for the piecewise-quadratic penalty integrand.
const GL3: [(f64, f64); 3] = [
    (-0.774596669241483_4, 0.555555555555555_6),
    (0.0, 0.888888888888888_9),
    (0.774596669241483_4, 0.555555555555555_6),
];

/// 5-point Gauss-Legendre rule on [-1, 1]; used for piecewise-cubic integrals.
const GL5: [(f64, f64); 5] = [
    (-0.906179845938664_0, 0.236926885056189_1),
    (-0.538469310105683_1, 0.478628670499366_5),
    (0.0, 0.568888888888888_9),
    (0.538469310105683_1, 0.478628670499366_5),
    (0.906179845938664_0, 0.236926885056189_1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplineKind {
    OpenCubic,
    CyclicCubic,
}

#[derive(Debug, Clone, Copy)]
pub struct SplineSpec {
    pub kind: SplineKind,
    pub num_basis: usize,
    pub domain: (f64, f64),
}

impl SplineSpec {
    pub fn new(kind: SplineKind, num_basis: usize, domain: (f64, f64)) -> Result<Self> {
        let min = match kind {
            SplineKind::OpenCubic => 4,
            SplineKind::CyclicCubic => 3,
        };
        if num_basis < min {
            return Err(Error::Spec(format!(
                "need at least {min} basis functions for {kind:?}, got {num_basis}"
            )));
        }
        if !(domain.0 < domain.1) {
            return Err(Error::Spec(format!(
                "domain lower bound {} must be below upper bound {}",
                domain.0, domain.1
            )));
        }
        Ok(SplineSpec {
            kind,
            num_basis,
            domain,
        })
    }
}

/// A spline basis evaluated on a grid, together with its roughness penalty.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    pub spec: SplineSpec,
    pub grid: Array1<f64>,
    /// M x K matrix of basis values at the grid points.
    pub eval: Array2<f64>,
    /// K x K penalty matrix, the integral of outer products of second derivatives.
    pub penalty: Array2<f64>,
    /// Rank of the penalty: K-2 for open cubic, K-1 for cyclic cubic.
    pub rank: usize,
    kind_impl: BasisImpl,
}

#[derive(Debug, Clone)]
enum BasisImpl {
    Open { knots: Vec<f64> },
    Cyclic { breaks: Vec<f64> },
}

impl SplineSystem {
    /// Evaluate every basis function at `t`.
    pub fn eval_row(&self, t: f64) -> Result<Array1<f64>> {
        let (a, b) = self.spec.domain;
        if t < a || t > b {
            return Err(Error::Domain(format!("t = {t} outside domain [{a}, {b}]")));
        }
        let row = match &self.kind_impl {
            BasisImpl::Open { knots } => eval_all(knots, 3, self.spec.num_basis, t, 0),
            BasisImpl::Cyclic { breaks } => cyclic_eval_all(breaks, t, 0),
        };
        Ok(Array1::from(row))
    }

    fn second_deriv_row(&self, t: f64) -> Vec<f64> {
        match &self.kind_impl {
            BasisImpl::Open { knots } => eval_all(knots, 3, self.spec.num_basis, t, 2),
            BasisImpl::Cyclic { breaks } => cyclic_eval_all(breaks, t, 2),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind_impl {
            BasisImpl::Open { knots } => {
                let mut b: Vec<f64> = knots.to_vec();
                b.dedup();
                b
            }
            BasisImpl::Cyclic { breaks } => breaks.clone(),
        }
    }
}

/// Build a spline system on a strictly increasing grid inside the domain.
///
/// Interior knots are placed at equally spaced quantiles of the grid. The
/// penalty is assembled by per-interval Gauss-Legendre quadrature, which is
/// exact because the product of two second derivatives of cubic splines is
/// piecewise quadratic.
pub fn build_spline_system(spec: SplineSpec, grid: &[f64]) -> Result<SplineSystem> {
    let (a, b) = spec.domain;
    if grid.len() < 2 {
        return Err(Error::Shape("grid needs at least 2 points".into()));
    }
    for w in grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Domain("grid values must be strictly increasing".into()));
        }
    }
    if grid[0] < a || *grid.last().unwrap() > b {
        return Err(Error::Domain(format!(
            "grid not contained in domain [{a}, {b}]"
        )));
    }

    let k = spec.num_basis;
    let kind_impl = match spec.kind {
        SplineKind::OpenCubic => {
            let n_interior = k - 4;
            let interior = quantile_knots(grid, n_interior, a, b)?;
            let mut knots = vec![a; 4];
            knots.extend(interior);
            knots.extend(vec![b; 4]);
            BasisImpl::Open { knots }
        }
        SplineKind::CyclicCubic => {
            // k intervals, so k-1 interior breakpoints.
            let interior = quantile_knots(grid, k - 1, a, b)?;
            let mut breaks = vec![a];
            breaks.extend(interior);
            breaks.push(b);
            BasisImpl::Cyclic { breaks }
        }
    };

    let rank = match spec.kind {
        SplineKind::OpenCubic => k - 2,
        SplineKind::CyclicCubic => k - 1,
    };

    let mut system = SplineSystem {
        spec,
        grid: Array1::from(grid.to_vec()),
        eval: Array2::zeros((grid.len(), k)),
        penalty: Array2::zeros((k, k)),
        rank,
        kind_impl,
    };

    for (m, &t) in grid.iter().enumerate() {
        let row = system.eval_row(t)?;
        system.eval.row_mut(m).assign(&row);
    }

    // Exact penalty assembly.
    let breaks = system.breakpoints();
    let mut s = Array2::<f64>::zeros((k, k));
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for &(x, wt) in GL3.iter() {
            let d2 = system.second_deriv_row(mid + half * x);
            let scale = wt * half;
            for i in 0..k {
                if d2[i] == 0.0 {
                    continue;
                }
                for j in 0..k {
                    s[[i, j]] += scale * d2[i] * d2[j];
                }
            }
        }
    }
    // Symmetrize away accumulation round-off.
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    system.penalty = s;
    Ok(system)
}

/// Place `n` interior knots at equally spaced quantiles (type 7) of the grid.
fn quantile_knots(grid: &[f64], n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut prev = a;
    for i in 1..=n {
        let p = i as f64 / (n + 1) as f64;
        let q = quantile_type7(grid, p);
        if q <= prev || q >= b {
            return Err(Error::Spec(format!(
                "grid resolution too coarse for {n} interior knots"
            )));
        }
        out.push(q);
        prev = q;
    }
    Ok(out)
}

pub(crate) fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

// ---------------------------------------------------------------------------
// B-spline evaluation (Cox-de Boor, triangular scheme with derivatives).
// ---------------------------------------------------------------------------

/// Index of the knot span containing `t`: largest i with knots[i] <= t,
/// clamped so the span is a valid non-empty interval.
fn find_span(knots: &[f64], degree: usize, n_basis: usize, t: f64) -> usize {
    if t >= knots[n_basis] {
        // Right end of the evaluable range.
        let mut i = n_basis - 1;
        while knots[i] >= knots[i + 1] {
            i -= 1;
        }
        return i;
    }
    let mut lo = degree;
    let mut hi = n_basis;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero basis functions and derivatives at `t` (rows: derivative order 0..=nders,
/// cols: the degree+1 basis functions with indices span-degree ..= span).
/// This is the standard derivative extension of the Cox-de Boor triangle.
fn ders_basis_funs(knots: &[f64], degree: usize, span: usize, t: f64, nders: usize) -> Vec<Vec<f64>> {
    let p = degree;
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; nders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let mut s1 = 0;
        let mut s2 = 1;
        a[0][0] = 1.0;
        for kk in 1..=nders.min(p) {
            let mut d = 0.0;
            let rk = r as isize - kk as isize;
            let pk = p - kk;
            if r >= kk {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize {
                kk - 1
            } else {
                p - r
            };
            for j in j1..=j2 {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
            }
            if r <= pk {
                a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                d += a[s2][kk] * ndu[r][pk];
            }
            ders[kk][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for kk in 1..=nders.min(p) {
        for j in 0..=p {
            ders[kk][j] *= factor;
        }
        factor *= (p - kk) as f64;
    }
    ders
}

/// Values (or `deriv`-th derivatives) of all `n_basis` basis functions at `t`.
fn eval_all(knots: &[f64], degree: usize, n_basis: usize, t: f64, deriv: usize) -> Vec<f64> {
    let span = find_span(knots, degree, n_basis, t);
    let ders = ders_basis_funs(knots, degree, span, t, deriv);
    let mut out = vec![0.0; n_basis];
    for j in 0..=degree {
        let idx = span - degree + j;
        if idx < n_basis {
            out[idx] = ders[deriv][j];
        }
    }
    out
}

/// Periodic cubic basis on breakpoints tau_0 < ... < tau_C: plain B-splines on a
/// periodically extended knot vector, folded modulo C.
fn cyclic_eval_all(breaks: &[f64], t: f64, deriv: usize) -> Vec<f64> {
    let c = breaks.len() - 1; // number of intervals == number of basis functions
    let period = breaks[c] - breaks[0];
    let mut ext = Vec::with_capacity(c + 7);
    for j in 0..(c + 7) {
        let idx = j as isize - 3;
        let v = if idx < 0 {
            breaks[(c as isize + idx) as usize] - period
        } else if idx as usize > c {
            breaks[idx as usize - c] + period
        } else {
            breaks[idx as usize]
        };
        ext.push(v);
    }
    let raw = eval_all(&ext, 3, c + 3, t, deriv);
    let mut out = vec![0.0; c];
    for (j, v) in raw.iter().enumerate() {
        out[j % c] += v;
    }
    out
}

// ---------------------------------------------------------------------------
// M-spline / I-spline basis for the baseline hazard.
// ---------------------------------------------------------------------------

/// M-spline and I-spline evaluations at a set of event/censoring times.
///
/// M-splines are B-splines rescaled to integrate to one over their support;
/// I-splines are their running integrals, so each column is nondecreasing and
/// reaches one at the upper boundary.
#[derive(Debug, Clone)]
pub struct HazardBasis {
    pub df: usize,
    pub boundary: (f64, f64),
    /// n x L matrix of M-spline values at the input times.
    pub m_eval: Array2<f64>,
    /// n x L matrix of I-spline values at the input times.
    pub i_eval: Array2<f64>,
    knots: Vec<f64>,
    order: usize,
    /// Normalizing factor order / (knot span width) per basis function.
    scale: Vec<f64>,
    /// Cumulative integral of each raw B-spline up to each breakpoint.
    cum_at_breaks: Vec<Vec<f64>>,
    breaks: Vec<f64>,
}

pub fn build_hazard_basis(times: &[f64], df: usize, boundary: (f64, f64)) -> Result<HazardBasis> {
    if df < 3 {
        return Err(Error::Spec(format!("hazard basis needs df >= 3, got {df}")));
    }
    let (lo, hi) = boundary;
    if !(lo < hi) {
        return Err(Error::Spec("boundary interval is empty".into()));
    }
    for &t in times {
        if t <= lo || t >= hi {
            return Err(Error::Domain(format!(
                "time {t} not strictly inside boundary ({lo}, {hi})"
            )));
        }
    }
    // Cubic (order 4) when df allows it; df = 3 falls back to quadratic.
    let order = 4.min(df);
    let degree = order - 1;
    let n_interior = df - order;
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let interior = if n_interior > 0 {
        quantile_knots(&sorted, n_interior, lo, hi)?
    } else {
        vec![]
    };
    let mut knots = vec![lo; order];
    knots.extend(interior);
    knots.extend(vec![hi; order]);

    let scale: Vec<f64> = (0..df)
        .map(|l| order as f64 / (knots[l + order] - knots[l]))
        .collect();

    let mut breaks: Vec<f64> = knots.clone();
    breaks.dedup();

    // Exact cumulative integrals of the raw B-splines at every breakpoint.
    let mut cum_at_breaks = vec![vec![0.0; breaks.len()]; df];
    for j in 1..breaks.len() {
        let (a, b) = (breaks[j - 1], breaks[j]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut seg = vec![0.0; df];
        for &(x, w) in GL5.iter() {
            let vals = eval_all(&knots, degree, df, mid + half * x, 0);
            for l in 0..df {
                seg[l] += w * half * vals[l];
            }
        }
        for l in 0..df {
            cum_at_breaks[l][j] = cum_at_breaks[l][j - 1] + seg[l];
        }
    }

    let mut basis = HazardBasis {
        df,
        boundary,
        m_eval: Array2::zeros((times.len(), df)),
        i_eval: Array2::zeros((times.len(), df)),
        knots,
        order,
        scale,
        cum_at_breaks,
        breaks,
    };
    for (i, &t) in times.iter().enumerate() {
        let (m, cum) = basis.rows_at(t)?;
        basis.m_eval.row_mut(i).assign(&m);
        basis.i_eval.row_mut(i).assign(&cum);
    }
    Ok(basis)
}

impl HazardBasis {
    /// M-spline and I-spline values at an arbitrary point in the closed boundary.
    pub fn rows_at(&self, t: f64) -> Result<(Array1<f64>, Array1<f64>)> {
        let (lo, hi) = self.boundary;
        if t < lo || t > hi {
            return Err(Error::Domain(format!(
                "time {t} outside boundary [{lo}, {hi}]"
            )));
        }
        let degree = self.order - 1;
        let raw = eval_all(&self.knots, degree, self.df, t, 0);
        let m: Array1<f64> = (0..self.df).map(|l| self.scale[l] * raw[l]).collect();

        // Integral = exact cumulative up to the containing breakpoint, plus a
        // partial Gauss-Legendre segment.
        let mut j = 0;
        while j + 1 < self.breaks.len() && self.breaks[j + 1] <= t {
            j += 1;
        }
        let mut cum: Vec<f64> = (0..self.df).map(|l| self.cum_at_breaks[l][j]).collect();
        if t > self.breaks[j] {
            let half = 0.5 * (t - self.breaks[j]);
            let mid = 0.5 * (t + self.breaks[j]);
            for &(x, w) in GL5.iter() {
                let vals = eval_all(&self.knots, degree, self.df, mid + half * x, 0);
                for l in 0..self.df {
                    cum[l] += w * half * vals[l];
                }
            }
        }
        let i: Array1<f64> = (0..self.df).map(|l| self.scale[l] * cum[l]).collect();
        Ok((m, i))
    }
}
