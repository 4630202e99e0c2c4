//! Proportional-hazards posterior with a monotone-spline baseline hazard
//! whose coefficients live on the simplex via stick-breaking.

use super::{
    check_finite, inv_gamma_on_log_scale, ln_gamma, normal_prior, simplex_grad_pullback,
    simplex_transform, ModelPosterior, ParamLayout,
};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};

/// Functional proportional-hazards model.
///
/// Parameter layout: `eta0`, `b_r`, `b_f`, `gamma`, `log_sigma_b`, and
/// `c_raw` (unconstrained stick-breaking coordinates of the baseline-hazard
/// mixture weights).
#[derive(Debug, Clone)]
pub struct CoxPosterior {
    /// K0 x n penalized design block.
    pub xr: Array2<f64>,
    /// Kf x n null-space design block.
    pub xf: Array2<f64>,
    /// p x n scalar covariates.
    pub z: Array2<f64>,
    /// Censoring flags: 0 observed event, 1 censored.
    pub censor: Vec<u8>,
    /// n x L density-spline values at each follow-up time.
    pub m_eval: Array2<f64>,
    /// n x L cumulative-spline values at each follow-up time.
    pub i_eval: Array2<f64>,
    layout: ParamLayout,
}

impl CoxPosterior {
    pub fn new(
        xr: Array2<f64>,
        xf: Array2<f64>,
        z: Array2<f64>,
        censor: Vec<u8>,
        m_eval: Array2<f64>,
        i_eval: Array2<f64>,
    ) -> Result<Self> {
        let n = censor.len();
        if xr.ncols() != n || xf.ncols() != n || z.ncols() != n {
            return Err(Error::Shape("design columns must equal n".into()));
        }
        if m_eval.dim() != i_eval.dim() || m_eval.nrows() != n {
            return Err(Error::Shape(format!(
                "hazard basis evaluations must be n x L, got {:?} and {:?}",
                m_eval.dim(),
                i_eval.dim()
            )));
        }
        if m_eval.ncols() < 2 {
            return Err(Error::Spec("baseline hazard needs at least 2 basis terms".into()));
        }
        if censor.iter().any(|&d| d > 1) {
            return Err(Error::Spec("censor flags must be 0 or 1".into()));
        }
        let layout = ParamLayout::new()
            .push("eta0", 1)
            .push("b_r", xr.nrows())
            .push("b_f", xf.nrows())
            .push("gamma", z.nrows())
            .push("log_sigma_b", 1)
            .push("c_raw", m_eval.ncols() - 1);
        Ok(CoxPosterior {
            xr,
            xf,
            z,
            censor,
            m_eval,
            i_eval,
            layout,
        })
    }

    fn linear_predictor(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let eta0 = theta[self.layout.range("eta0").start];
        let br = theta.slice(ndarray::s![self.layout.range("b_r")]);
        let bf = theta.slice(ndarray::s![self.layout.range("b_f")]);
        let gamma = theta.slice(ndarray::s![self.layout.range("gamma")]);
        let mut eta = Array1::from_elem(self.censor.len(), eta0);
        eta += &self.xr.t().dot(&br);
        eta += &self.xf.t().dot(&bf);
        eta += &self.z.t().dot(&gamma);
        eta
    }

    /// Log-likelihood (data term only) at `theta`.
    pub fn log_likelihood(&self, theta: ArrayView1<f64>) -> Result<f64> {
        check_finite(&self.layout, theta)?;
        let eta = self.linear_predictor(theta);
        let raw = theta.slice(ndarray::s![self.layout.range("c_raw")]);
        let (c, _, _) = simplex_transform(raw.as_slice().unwrap());
        self.likelihood_terms(&eta, &c).map(|(v, _, _)| v)
    }

    /// Likelihood value, d/d eta, and d/d c.
    fn likelihood_terms(
        &self,
        eta: &Array1<f64>,
        c: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>, Array1<f64>)> {
        let n = self.censor.len();
        let bhaz = self.m_eval.dot(c);
        let cbhaz = self.i_eval.dot(c);
        let mut value = 0.0;
        let mut dl_deta = Array1::zeros(n);
        let mut dl_dc = Array1::zeros(c.len());
        for i in 0..n {
            let e_eta = eta[i].exp();
            let hexp = cbhaz[i] * e_eta;
            if self.censor[i] == 0 {
                if bhaz[i] <= 0.0 {
                    return Err(Error::numerical(
                        "c_raw",
                        format!("nonpositive baseline hazard {} at event {i}", bhaz[i]),
                    ));
                }
                value += bhaz[i].ln() + eta[i] - hexp;
                dl_deta[i] = 1.0 - hexp;
                for l in 0..c.len() {
                    dl_dc[l] += self.m_eval[[i, l]] / bhaz[i] - self.i_eval[[i, l]] * e_eta;
                }
            } else {
                value -= hexp;
                dl_deta[i] = -hexp;
                for l in 0..c.len() {
                    dl_dc[l] -= self.i_eval[[i, l]] * e_eta;
                }
            }
        }
        Ok((value, dl_deta, dl_dc))
    }
}

impl ModelPosterior for CoxPosterior {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, theta: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        check_finite(&self.layout, theta)?;
        let layout = &self.layout;
        let br = theta.slice(ndarray::s![layout.range("b_r")]);
        let log_sigma_b = theta[layout.range("log_sigma_b").start];
        let raw = theta.slice(ndarray::s![layout.range("c_raw")]);
        let eta = self.linear_predictor(theta);

        let (c, zf, log_jac) = simplex_transform(raw.as_slice().unwrap());
        let (ll, dl_deta, dl_dc) = self.likelihood_terms(&eta, &c)?;

        let mut value = ll + log_jac;
        let mut grad = Array1::zeros(theta.len());
        grad[layout.range("eta0").start] = dl_deta.sum();
        grad.slice_mut(ndarray::s![layout.range("b_r")])
            .assign(&self.xr.dot(&dl_deta));
        grad.slice_mut(ndarray::s![layout.range("b_f")])
            .assign(&self.xf.dot(&dl_deta));
        grad.slice_mut(ndarray::s![layout.range("gamma")])
            .assign(&self.z.dot(&dl_deta));
        grad.slice_mut(ndarray::s![layout.range("c_raw")])
            .assign(&simplex_grad_pullback(&c, &zf, &dl_dc));

        // Uniform Dirichlet prior on the simplex: a constant log Gamma(L).
        value += ln_gamma(c.len() as f64);

        // Weakly informative prior on the unpenalized block keeps null-space
        // directions the design barely touches from drifting.
        {
            let bf = theta.slice(ndarray::s![layout.range("b_f")]);
            let (pv, dgrad) = super::null_block_prior(&bf);
            value += pv;
            let mut g = grad.slice_mut(ndarray::s![layout.range("b_f")]);
            g += &dgrad;
        }

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
