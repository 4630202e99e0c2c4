//! Scalar-on-function regression posterior: Gaussian or Bernoulli-logit
//! outcome, linear predictor through the reparametrized functional design.

use super::{
    check_finite, inv_gamma_on_log_scale, log1p_exp, normal_prior, ModelPosterior, ParamLayout,
};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SofrFamily {
    Gaussian,
    BernoulliLogit,
}

/// Scalar-on-function regression model with penalized (reparametrized)
/// spline coefficients.
///
/// Parameter layout: `eta0` (intercept), `b_r` (penalized block), `b_f`
/// (null-space block), `gamma` (scalar covariates), `log_sigma_b` (spline
/// scale), and for the Gaussian family `log_sigma` (residual scale).
#[derive(Debug, Clone)]
pub struct SofrPosterior {
    pub family: SofrFamily,
    /// K0 x n penalized design block.
    pub xr: Array2<f64>,
    /// Kf x n null-space design block.
    pub xf: Array2<f64>,
    /// p x n scalar covariates.
    pub z: Array2<f64>,
    pub y: Array1<f64>,
    layout: ParamLayout,
}

impl SofrPosterior {
    pub fn new(
        family: SofrFamily,
        xr: Array2<f64>,
        xf: Array2<f64>,
        z: Array2<f64>,
        y: Array1<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if xr.ncols() != n || xf.ncols() != n || z.ncols() != n {
            return Err(Error::Shape(format!(
                "design columns ({}, {}, {}) must all equal n = {n}",
                xr.ncols(),
                xf.ncols(),
                z.ncols()
            )));
        }
        if family == SofrFamily::BernoulliLogit && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Spec("logit outcomes must be 0 or 1".into()));
        }
        let mut layout = ParamLayout::new()
            .push("eta0", 1)
            .push("b_r", xr.nrows())
            .push("b_f", xf.nrows())
            .push("gamma", z.nrows())
            .push("log_sigma_b", 1);
        if family == SofrFamily::Gaussian {
            layout = layout.push("log_sigma", 1);
        }
        Ok(SofrPosterior {
            family,
            xr,
            xf,
            z,
            y,
            layout,
        })
    }

    fn linear_predictor(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let eta0 = theta[self.layout.range("eta0").start];
        let br = theta.slice(ndarray::s![self.layout.range("b_r")]);
        let bf = theta.slice(ndarray::s![self.layout.range("b_f")]);
        let gamma = theta.slice(ndarray::s![self.layout.range("gamma")]);
        let mut eta = Array1::from_elem(self.y.len(), eta0);
        eta += &self.xr.t().dot(&br);
        eta += &self.xf.t().dot(&bf);
        eta += &self.z.t().dot(&gamma);
        eta
    }

    /// Log-likelihood (data term only) at `theta`.
    pub fn log_likelihood(&self, theta: ArrayView1<f64>) -> Result<f64> {
        check_finite(&self.layout, theta)?;
        let eta = self.linear_predictor(theta);
        let n = self.y.len() as f64;
        Ok(match self.family {
            SofrFamily::Gaussian => {
                let log_sigma = theta[self.layout.range("log_sigma").start];
                let var = (2.0 * log_sigma).exp();
                let ssr: f64 = eta
                    .iter()
                    .zip(self.y.iter())
                    .map(|(e, y)| (e - y) * (e - y))
                    .sum();
                -n * log_sigma - 0.5 * ssr / var - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            }
            SofrFamily::BernoulliLogit => eta
                .iter()
                .zip(self.y.iter())
                .map(|(&e, &y)| y * e - log1p_exp(e))
                .sum(),
        })
    }
}

impl ModelPosterior for SofrPosterior {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        check_finite(&self.layout, theta)?;
        let layout = &self.layout;
        let br = theta.slice(ndarray::s![layout.range("b_r")]);
        let log_sigma_b = theta[layout.range("log_sigma_b").start];
        let eta = self.linear_predictor(theta);
        let n = self.y.len() as f64;

        let mut value = 0.0;
        let mut grad = Array1::zeros(theta.len());

        // Likelihood and its derivative with respect to eta.
        let mut dl_deta = Array1::zeros(self.y.len());
        match self.family {
            SofrFamily::Gaussian => {
                let log_sigma = theta[layout.range("log_sigma").start];
                let var = (2.0 * log_sigma).exp();
                let mut ssr = 0.0;
                for (i, (&e, &y)) in eta.iter().zip(self.y.iter()).enumerate() {
                    let r = e - y;
                    ssr += r * r;
                    dl_deta[i] = -r / var;
                }
                value += -n * log_sigma - 0.5 * ssr / var
                    - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
                // Flat prior on sigma plus the log-scale Jacobian contributes
                // +log_sigma.
                value += log_sigma;
                grad[layout.range("log_sigma").start] = -n + ssr / var + 1.0;
            }
            SofrFamily::BernoulliLogit => {
                for (i, (&e, &y)) in eta.iter().zip(self.y.iter()).enumerate() {
                    value += y * e - log1p_exp(e);
                    dl_deta[i] = y - super::sigmoid(e);
                }
            }
        }

        grad[layout.range("eta0").start] = dl_deta.sum();
        grad.slice_mut(ndarray::s![layout.range("b_r")])
            .assign(&self.xr.dot(&dl_deta));
        grad.slice_mut(ndarray::s![layout.range("b_f")])
            .assign(&self.xf.dot(&dl_deta));
        grad.slice_mut(ndarray::s![layout.range("gamma")])
            .assign(&self.z.dot(&dl_deta));

        // Weakly informative prior on the unpenalized block keeps null-space
        // directions the design barely touches from drifting.
        {
            let bf = theta.slice(ndarray::s![layout.range("b_f")]);
            let (pv, dgrad) = super::null_block_prior(&bf);
            value += pv;
            let mut g = grad.slice_mut(ndarray::s![layout.range("b_f")]);
            g += &dgrad;
        }

        // Gaussian smoothing prior on the penalized block.
        let var_b = (2.0 * log_sigma_b).exp();
        let (pv, dscale) = normal_prior(br, log_sigma_b);
        value += pv;
        {
            let mut g = grad.slice_mut(ndarray::s![layout.range("b_r")]);
            g.zip_mut_with(&br, |gi, &bi| *gi -= bi / var_b);
        }
        let (igv, igg) = inv_gamma_on_log_scale(log_sigma_b);
        value += igv;
        grad[layout.range("log_sigma_b").start] = dscale + igg;

        Ok((value, grad))
    }
}
