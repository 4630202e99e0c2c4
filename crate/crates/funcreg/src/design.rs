//! Functional-covariate design matrices via Riemann-sum integration against
//! the spline basis, plus the eigenfunction-by-spline cross-product.

use crate::basis::SplineSystem;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

/// A regression dataset with one functional covariate on a shared grid.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    /// Outcomes: reals, {0,1} labels, or follow-up times.
    pub y: Array1<f64>,
    /// Right-censoring flags for time-to-event outcomes: 0 marks an observed
    /// event, 1 a censored observation.
    pub censor: Option<Vec<u8>>,
    /// p x n scalar covariate design.
    pub z: Array2<f64>,
    /// n x M functional covariate.
    pub w: Array2<f64>,
    /// M strictly increasing time points.
    pub grid: Array1<f64>,
}

impl FunctionalDataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        let m = self.grid.len();
        if self.w.nrows() != n || self.w.ncols() != m {
            return Err(Error::Shape(format!(
                "W is {}x{}, expected {n}x{m}",
                self.w.nrows(),
                self.w.ncols()
            )));
        }
        if self.z.ncols() != n {
            return Err(Error::Shape(format!(
                "Z has {} columns, expected {n}",
                self.z.ncols()
            )));
        }
        if let Some(c) = &self.censor {
            if c.len() != n {
                return Err(Error::Shape("censor flag length mismatch".into()));
            }
            if c.iter().any(|&d| d > 1) {
                return Err(Error::Spec("censor flags must be 0 or 1".into()));
            }
        }
        for w in self.grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Domain("grid must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Riemann-sum weights: forward differences, last weight replicating the
/// penultimate interval so an equally spaced grid gets constant weights.
pub fn quadrature_weights(grid: &Array1<f64>) -> Result<Array1<f64>> {
    let m = grid.len();
    if m < 2 {
        return Err(Error::Shape("need at least 2 grid points".into()));
    }
    let mut w = Array1::zeros(m);
    for i in 0..m - 1 {
        w[i] = grid[i + 1] - grid[i];
    }
    w[m - 1] = w[m - 2];
    Ok(w)
}

/// K x n design matrix with entries X[k, i] = sum_m L_m W_i(t_m) psi_k(t_m).
pub fn functional_design(data: &FunctionalDataset, system: &SplineSystem) -> Result<Array2<f64>> {
    if system.grid.len() != data.grid.len()
        || system
            .grid
            .iter()
            .zip(data.grid.iter())
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Shape("spline system grid differs from data grid".into()));
    }
    let weights = quadrature_weights(&data.grid)?;
    // X' = (W .* L) * Psi, so X = Psi' * (W .* L)'.
    let mut weighted = data.w.clone();
    for mut row in weighted.outer_iter_mut() {
        row.zip_mut_with(&weights, |x, &l| *x *= l);
    }
    Ok(system.eval.t().dot(&weighted.t()))
}

/// J x K cross-product of eigenfunctions with the spline basis, using the
/// equal-spacing 1/M weight convention regardless of the actual grid.
pub fn fpca_spline_crossproduct(
    efunctions: &Array2<f64>,
    system: &SplineSystem,
    grid: &Array1<f64>,
) -> Result<Array2<f64>> {
    let m = grid.len();
    if efunctions.ncols() != m || system.eval.nrows() != m {
        return Err(Error::Shape(format!(
            "eigenfunctions ({}x{}) and basis ({}x{}) must share the grid of length {m}",
            efunctions.nrows(),
            efunctions.ncols(),
            system.eval.nrows(),
            system.eval.ncols()
        )));
    }
    Ok(efunctions.dot(&system.eval) / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_spline_system, SplineKind, SplineSpec};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn equal_grid(m: usize) -> Array1<f64> {
        Array1::from_iter((0..m).map(|i| i as f64 / m as f64))
    }

    fn dataset(w: Array2<f64>, grid: Array1<f64>) -> FunctionalDataset {
        let n = w.nrows();
        FunctionalDataset {
            y: Array1::zeros(n),
            censor: None,
            z: Array2::zeros((0, n)),
            w,
            grid,
        }
    }

    #[test]
    fn weights_equal_spacing() {
        let grid = equal_grid(1440);
        let w = quadrature_weights(&grid).unwrap();
        for &v in w.iter() {
            assert_abs_diff_eq!(v, 1.0 / 1440.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_uneven_and_tiny() {
        let grid = Array1::from(vec![0.0, 0.1, 0.4, 1.0]);
        let w = quadrature_weights(&grid).unwrap();
        let expected = [0.1, 0.3, 0.6, 0.6];
        for i in 0..4 {
            assert_abs_diff_eq!(w[i], expected[i], epsilon = 1e-12);
        }
        let w = quadrature_weights(&Array1::from(vec![0.0, 1.0])).unwrap();
        assert_eq!(w.to_vec(), vec![1.0, 1.0]);
        assert!(quadrature_weights(&Array1::from(vec![0.5])).is_err());
    }

    #[test]
    fn design_zero_and_constant_covariate() {
        let grid = equal_grid(50);
        let spec = SplineSpec::new(SplineKind::OpenCubic, 6, (0.0, 1.0)).unwrap();
        let sys = build_spline_system(spec, grid.as_slice().unwrap()).unwrap();

        let zero = dataset(Array2::zeros((5, 50)), grid.clone());
        let x = functional_design(&zero, &sys).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));

        let ones = dataset(Array2::from_elem((3, 50), 1.0), grid.clone());
        let x = functional_design(&ones, &sys).unwrap();
        // Partition of unity: summing over k recovers total weight 1.
        for i in 0..3 {
            let col_sum: f64 = x.column(i).sum();
            assert_abs_diff_eq!(col_sum, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn design_matches_brute_force() {
        let grid = equal_grid(30);
        let spec = SplineSpec::new(SplineKind::OpenCubic, 4, (0.0, 1.0)).unwrap();
        let sys = build_spline_system(spec, grid.as_slice().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Array2::from_shape_fn((6, 30), |_| rng.gen_range(-2.0..2.0));
        let data = dataset(w.clone(), grid.clone());
        let x = functional_design(&data, &sys).unwrap();
        let lw = quadrature_weights(&grid).unwrap();
        for i in 0..6 {
            for k in 0..4 {
                let mut brute = 0.0;
                for m in 0..30 {
                    brute += lw[m] * w[[i, m]] * sys.eval[[m, k]];
                }
                assert_abs_diff_eq!(x[[k, i]], brute, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn design_linearity() {
        let grid = equal_grid(40);
        let spec = SplineSpec::new(SplineKind::OpenCubic, 7, (0.0, 1.0)).unwrap();
        let sys = build_spline_system(spec, grid.as_slice().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = Array2::from_shape_fn((4, 40), |_| rng.gen_range(-1.0..1.0));
        let w2 = Array2::from_shape_fn((4, 40), |_| rng.gen_range(-1.0..1.0));
        let (a, b) = (1.7, -0.4);
        let x1 = functional_design(&dataset(w1.clone(), grid.clone()), &sys).unwrap();
        let x2 = functional_design(&dataset(w2.clone(), grid.clone()), &sys).unwrap();
        let combo = functional_design(&dataset(&w1 * a + &w2 * b, grid.clone()), &sys).unwrap();
        let lin = &x1 * a + &x2 * b;
        for (u, v) in combo.iter().zip(lin.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
    }

    #[test]
    fn refinement_converges_to_integral() {
        // W(t) = sin(2 pi t), beta(t) = t: the Riemann sum should approach the
        // analytic integral -1/(2 pi) as the grid doubles.
        let analytic = -1.0 / (2.0 * std::f64::consts::PI);
        let mut errs = Vec::new();
        for m in [50usize, 100, 200, 400] {
            let grid = equal_grid(m);
            let lw = quadrature_weights(&grid).unwrap();
            let mut sum = 0.0;
            for j in 0..m {
                let t = grid[j];
                sum += lw[j] * (2.0 * std::f64::consts::PI * t).sin() * t;
            }
            errs.push((sum - analytic).abs());
        }
        for i in 1..errs.len() {
            assert!(errs[i] <= 0.51 * errs[i - 1], "errors {errs:?}");
        }
    }

    #[test]
    fn crossproduct_cases() {
        let grid = equal_grid(24);
        let spec = SplineSpec::new(SplineKind::OpenCubic, 5, (0.0, 1.0)).unwrap();
        let sys = build_spline_system(spec, grid.as_slice().unwrap()).unwrap();

        let zero = Array2::zeros((2, 24));
        let x = fpca_spline_crossproduct(&zero, &sys, &grid).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));

        let ones = Array2::from_elem((1, 24), 1.0);
        let x = fpca_spline_crossproduct(&ones, &sys, &grid).unwrap();
        for k in 0..5 {
            let mean = sys.eval.column(k).sum() / 24.0;
            assert_abs_diff_eq!(x[[0, k]], mean, epsilon = 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = Array2::from_shape_fn((3, 24), |_| rng.gen_range(-1.0..1.0));
        let x = fpca_spline_crossproduct(&phi, &sys, &grid).unwrap();
        for j in 0..3 {
            for k in 0..5 {
                let mut brute = 0.0;
                for m in 0..24 {
                    brute += phi[[j, m]] * sys.eval[[m, k]];
                }
                brute /= 24.0;
                assert_abs_diff_eq!(x[[j, k]], brute, epsilon = 1e-12);
            }
        }

        assert!(fpca_spline_crossproduct(&Array2::zeros((2, 10)), &sys, &grid).is_err());
    }
}
