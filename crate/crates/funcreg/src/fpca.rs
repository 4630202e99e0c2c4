//! Functional principal component analysis of a curve ensemble: mean,
//! eigenfunctions, scores, and the proportion-of-variance truncation rule.

use crate::error::{Error, Result};
use crate::reparam::sym_eigen_sorted;
use ndarray::{Array1, Array2, Axis};

/// Result of an FPCA fit.
///
/// Eigenfunction rows are orthonormal under the grid inner product
/// `(1/M) sum_m f(t_m) g(t_m)`, so scores carry the data's scale and
/// eigenvalues are score variances.
#[derive(Debug, Clone)]
pub struct FpcaFit {
    pub mean: Array1<f64>,
    /// J x M eigenfunctions.
    pub efunctions: Array2<f64>,
    /// Score variances, nonincreasing.
    pub evalues: Array1<f64>,
    /// n x J least-squares score estimates of the demeaned rows.
    pub scores: Array2<f64>,
    /// Cumulative eigenvalue fraction actually captured by the retained J.
    pub pve: f64,
    /// Mean squared residual after projecting onto the retained components.
    pub noise_var: f64,
}

/// Fit FPCA by eigendecomposition of the sample covariance, keeping the
/// smallest J whose cumulative eigenvalue fraction reaches `pve_target`.
pub fn fit_fpca(w: &Array2<f64>, pve_target: f64) -> Result<FpcaFit> {
    let (n, m) = w.dim();
    if n < 2 {
        return Err(Error::Shape("FPCA needs at least 2 curves".into()));
    }
    if !(pve_target > 0.0 && pve_target <= 1.0) {
        return Err(Error::Spec(format!("pve_target {pve_target} not in (0, 1]")));
    }
    let mean = w.mean_axis(Axis(0)).unwrap();
    let centered = w - &mean.clone().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let total: f64 = (0..m).map(|j| cov[[j, j]]).sum();
    if total <= 1e-12 {
        return Err(Error::DegenerateData(
            "curves are constant; covariance is zero".into(),
        ));
    }
    let (values, vectors) = sym_eigen_sorted(&cov);

    // White measurement noise adds its variance to every eigenvalue, with
    // sampling spread up to the Marchenko-Pastur upper edge. Estimate the
    // noise variance by iterating between "eigenvalues below the edge are
    // noise" and "the noise variance is their mean", then apply the
    // variance-explained rule to the noise-corrected eigenvalues above the
    // edge; otherwise noisy ensembles retain components that only describe
    // noise. If nothing clears the edge the ensemble has no detectable noise
    // floor (or is pure noise) and the raw rule applies.
    let edge_factor = (1.0 + (m as f64 / n as f64).sqrt()).powi(2);
    let positive: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let mut sigma2 = positive.iter().sum::<f64>() / m as f64;
    for _ in 0..200 {
        let edge = sigma2 * edge_factor;
        let noise: Vec<f64> = positive.iter().copied().filter(|&v| v <= edge).collect();
        if noise.is_empty() {
            break;
        }
        let new = noise.iter().sum::<f64>() / noise.len() as f64;
        if (new - sigma2).abs() <= 1e-12 * sigma2.max(1e-300) {
            sigma2 = new;
            break;
        }
        sigma2 = new;
    }
    let edge = sigma2 * edge_factor;
    let signal_count = positive.iter().filter(|&&v| v > edge).count();
    let corrected: Vec<f64> = if signal_count == 0 {
        positive.clone()
    } else {
        positive
            .iter()
            .enumerate()
            .map(|(idx, &v)| if idx < signal_count { v - sigma2 } else { 0.0 })
            .collect()
    };
    let corrected_total: f64 = corrected.iter().sum();
    if corrected_total <= 1e-12 {
        return Err(Error::DegenerateData(
            "no eigenvalue rises above the noise floor".into(),
        ));
    }
    let mut j = 0;
    let mut cum = 0.0;
    while j < m && corrected[j] > 0.0 {
        cum += corrected[j];
        j += 1;
        if cum / corrected_total >= pve_target {
            break;
        }
    }
    let pve = cum / corrected_total;

    // Rescale to unit norm under the (1/M) inner product and fix signs so the
    // largest-magnitude entry is positive.
    let scale = (m as f64).sqrt();
    let mut efunctions = Array2::zeros((j, m));
    let mut evalues = Array1::zeros(j);
    for comp in 0..j {
        let col = vectors.column(comp);
        let (mut sign, mut best) = (1.0, 0.0);
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        for t in 0..m {
            efunctions[[comp, t]] = sign * scale * col[t];
        }
        evalues[comp] = values[comp].max(0.0) / m as f64;
    }

    // Least-squares projection; rows are orthogonal with squared norm M.
    let scores = centered.dot(&efunctions.t()) / m as f64;
    let recon = scores.dot(&efunctions);
    let resid = &centered - &recon;
    let noise_var = resid.iter().map(|r| r * r).sum::<f64>() / (n * m) as f64;

    Ok(FpcaFit {
        mean,
        efunctions,
        evalues,
        scores,
        pve,
        noise_var,
    })
}
