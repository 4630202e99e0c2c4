//! Function-on-scalar regression posterior: a matrix of spline coefficient
//! rows (one per scalar covariate) with quadratic roughness penalties, plus
//! principal-component residual processes.

use super::{check_finite, inv_gamma_on_log_scale, ModelPosterior, ParamLayout};
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView1};

/// Function-on-scalar regression model.
///
/// Parameter layout: `b` (P x K coefficient matrix, row-major; raw basis
/// coefficients penalized directly by the roughness matrix), `xi` (n x J
/// residual-process scores, row-major), `log_lambda` (score scales),
/// `log_sigma_eps` (residual scale), `log_sigma_p` (one smoothing scale per
/// covariate).
#[derive(Debug, Clone)]
pub struct FosrPosterior {
    /// n x P scalar design (include a ones column for the intercept curve).
    pub x: Array2<f64>,
    /// n x M observed response curves.
    pub y: Array2<f64>,
    /// M x K spline basis evaluations.
    pub psi: Array2<f64>,
    /// K x K roughness penalty.
    pub penalty: Array2<f64>,
    /// Rank of the penalty, for the smoothing-prior normalization.
    pub penalty_rank: usize,
    /// J x M residual eigenfunctions.
    pub phi: Array2<f64>,
    layout: ParamLayout,
}

impl FosrPosterior {
    pub fn new(
        x: Array2<f64>,
        y: Array2<f64>,
        psi: Array2<f64>,
        penalty: Array2<f64>,
        penalty_rank: usize,
        phi: Array2<f64>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        let (m, k) = psi.dim();
        let j = phi.nrows();
        if y.dim() != (n, m) {
            return Err(Error::Shape(format!(
                "responses must be {n}x{m}, got {:?}",
                y.dim()
            )));
        }
        if penalty.dim() != (k, k) {
            return Err(Error::Shape("penalty must be K x K".into()));
        }
        if phi.ncols() != m {
            return Err(Error::Shape("eigenfunctions must live on the response grid".into()));
        }
        if p == 0 {
            return Err(Error::Spec("need at least one scalar covariate column".into()));
        }
        let layout = ParamLayout::new()
            .push("b", p * k)
            .push("xi", n * j)
            .push("log_lambda", j)
            .push("log_sigma_eps", 1)
            .push("log_sigma_p", p);
        Ok(FosrPosterior {
            x,
            y,
            psi,
            penalty,
            penalty_rank,
            phi,
            layout,
        })
    }

    /// Log-likelihood (data term only) at `theta`.
    pub fn log_likelihood(&self, theta: ArrayView1<f64>) -> Result<f64> {
        check_finite(&self.layout, theta)?;
        let (n, m) = self.y.dim();
        let mu = self.mean_surface(theta);
        let log_sigma_eps = theta[self.layout.range("log_sigma_eps").start];
        let var = (2.0 * log_sigma_eps).exp();
        let ss: f64 = mu
            .iter()
            .zip(self.y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let nm = (n * m) as f64;
        Ok(-nm * log_sigma_eps - 0.5 * ss / var - 0.5 * nm * (2.0 * std::f64::consts::PI).ln())
    }

    fn b_matrix(&self, theta: ArrayView1<f64>) -> Array2<f64> {
        let p = self.x.ncols();
        let k = self.psi.ncols();
        theta
            .slice(s![self.layout.range("b")])
            .to_shape((p, k))
            .expect("b slice reshapes to P x K")
            .to_owned()
    }

    fn xi_matrix(&self, theta: ArrayView1<f64>) -> Array2<f64> {
        let n = self.x.nrows();
        let j = self.phi.nrows();
        theta
            .slice(s![self.layout.range("xi")])
            .to_shape((n, j))
            .expect("xi slice reshapes to n x J")
            .to_owned()
    }

    /// n x M fitted mean surface.
    pub fn mean_surface(&self, theta: ArrayView1<f64>) -> Array2<f64> {
        let b = self.b_matrix(theta);
        let xi = self.xi_matrix(theta);
        self.x.dot(&b).dot(&self.psi.t()) + xi.dot(&self.phi)
    }
}

impl ModelPosterior for FosrPosterior {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        check_finite(&self.layout, theta)?;
        let layout = &self.layout;
        let (n, m) = self.y.dim();
        let p = self.x.ncols();
        let k = self.psi.ncols();
        let j = self.phi.nrows();

        let b = self.b_matrix(theta);
        let xi = self.xi_matrix(theta);
        let log_lambda = theta.slice(s![layout.range("log_lambda")]);
        let log_sigma_eps = theta[layout.range("log_sigma_eps").start];
        let log_sigma_p = theta.slice(s![layout.range("log_sigma_p")]);

        let mu = self.x.dot(&b).dot(&self.psi.t()) + xi.dot(&self.phi);
        let var_eps = (2.0 * log_sigma_eps).exp();
        let resid = &mu - &self.y;
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let nm = (n * m) as f64;

        let mut value =
            -nm * log_sigma_eps - 0.5 * ss / var_eps - 0.5 * nm * (2.0 * std::f64::consts::PI).ln();
        let mut grad = Array1::zeros(theta.len());

        // d log-likelihood / d mu.
        let r = resid.mapv(|v| -v / var_eps);
        let grad_b_lik = self.x.t().dot(&r).dot(&self.psi); // P x K
        let grad_xi_lik = r.dot(&self.phi.t()); // n x J

        // Smoothing prior per coefficient row.
        let b_off = layout.range("b").start;
        let sp_off = layout.range("log_sigma_p").start;
        let sb = self.penalty.dot(&b.t()); // K x P
        for pi in 0..p {
            let var_p = (2.0 * log_sigma_p[pi]).exp();
            let quad: f64 = (0..k).map(|a| b[[pi, a]] * sb[[a, pi]]).sum();
            value += -(self.penalty_rank as f64) * log_sigma_p[pi] - 0.5 * quad / var_p;
            for a in 0..k {
                grad[b_off + pi * k + a] = grad_b_lik[[pi, a]] - sb[[a, pi]] / var_p;
            }
            let (igv, igg) = inv_gamma_on_log_scale(log_sigma_p[pi]);
            value += igv;
            grad[sp_off + pi] = -(self.penalty_rank as f64) + quad / var_p + igg;
        }

        // Residual-process scores.
        let xi_off = layout.range("xi").start;
        let ll_off = layout.range("log_lambda").start;
        for q in 0..j {
            let var_q = (2.0 * log_lambda[q]).exp();
            let mut ss_q = 0.0;
            for i in 0..n {
                let v = xi[[i, q]];
                ss_q += v * v;
                grad[xi_off + i * j + q] = grad_xi_lik[[i, q]] - v / var_q;
            }
            value += -(n as f64) * log_lambda[q] - 0.5 * ss_q / var_q;
            let (igv, igg) = inv_gamma_on_log_scale(log_lambda[q]);
            value += igv;
            grad[ll_off + q] = -(n as f64) + ss_q / var_q + igg;
        }

        let (igv, igg) = inv_gamma_on_log_scale(log_sigma_eps);
        value += igv;
        grad[layout.range("log_sigma_eps").start] = -nm + ss / var_eps + igg;

        Ok((value, grad))
    }
}
