//! Spectral reparametrization of the penalty: transform spline coefficients so
//! the penalized block carries an identity penalty, and map back for curve
//! reconstruction.

use crate::basis::SplineSystem;
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2};

/// Orthogonal eigenvector matrix, diagonal scaling, and penalty rank.
///
/// Coefficients transform as `b_tilde = diag(v) * U' * b` and back as
/// `b = U * diag(1/v) * b_tilde`; designs as `X_tilde = diag(1/v) * U' * X`.
#[derive(Debug, Clone)]
pub struct ReparamMap {
    /// K x K orthogonal matrix of penalty eigenvectors, eigenvalues decreasing.
    pub u: Array2<f64>,
    /// Diagonal of the square-root scaling matrix; first `rank` entries are
    /// square roots of the positive eigenvalues.
    pub v_diag: Array1<f64>,
    pub rank: usize,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted decreasing,
/// each eigenvector's first nonzero component made positive.
pub(crate) fn sym_eigen_sorted(mat: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let k = mat.nrows();
    let m = nalgebra::DMatrix::from_fn(k, k, |i, j| mat[[i, j]]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut values = Array1::zeros(k);
    let mut vectors = Array2::zeros((k, k));
    for (col, &idx) in order.iter().enumerate() {
        values[col] = eig.eigenvalues[idx];
        let v = eig.eigenvectors.column(idx);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map(|x| x.signum())
            .unwrap_or(1.0);
        for row in 0..k {
            vectors[[row, col]] = sign * v[row];
        }
    }
    (values, vectors)
}

/// Build the reparametrization from a penalty matrix and the raw design.
///
/// The unpenalized block of the scaling diagonal follows the column-norm
/// convention: column norms of `X'U`, divided by the squared scaling, averaged
/// over the penalized columns, with the remaining entries set to the square
/// root of their ratio against that average.
pub fn build_reparam_from_penalty(
    penalty: &Array2<f64>,
    expected_rank: usize,
    raw_design: &Array2<f64>,
) -> Result<ReparamMap> {
    let k = penalty.nrows();
    if penalty.ncols() != k {
        return Err(Error::Shape("penalty must be square".into()));
    }
    if raw_design.nrows() != k {
        return Err(Error::Shape(format!(
            "design has {} rows, penalty dimension is {k}",
            raw_design.nrows()
        )));
    }
    let (values, u) = sym_eigen_sorted(penalty);
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("penalty", "eigendecomposition not finite"));
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let rank = values.iter().filter(|&&v| v > 1e-10 * max).count();
    if rank != expected_rank {
        return Err(Error::numerical(
            "penalty",
            format!("computed penalty rank {rank}, expected {expected_rank}"),
        ));
    }

    let mut v_diag = Array1::from_elem(k, 1.0);
    for j in 0..rank {
        v_diag[j] = values[j].sqrt();
    }
    if rank < k {
        // X'U column norms relative to the current scaling.
        let xtu = raw_design.t().dot(&u); // n x K
        let mut col_norm: Vec<f64> = (0..k)
            .map(|j| xtu.column(j).iter().map(|x| x * x).sum::<f64>())
            .collect();
        for j in 0..k {
            col_norm[j] /= v_diag[j] * v_diag[j];
        }
        let av: f64 = col_norm[..rank].iter().sum::<f64>() / rank as f64;
        for j in rank..k {
            let ratio = if av > 0.0 { col_norm[j] / av } else { 0.0 };
            // A zero design column gives no scale information; keep the unit
            // scaling there.
            v_diag[j] = if ratio > 0.0 { ratio.sqrt() } else { 1.0 };
        }
    }
    Ok(ReparamMap { u, v_diag, rank })
}

/// Build the reparametrization for a spline system's penalty.
pub fn build_reparam(system: &SplineSystem, raw_design: &Array2<f64>) -> Result<ReparamMap> {
    build_reparam_from_penalty(&system.penalty, system.rank, raw_design)
}

impl ReparamMap {
    pub fn dim(&self) -> usize {
        self.v_diag.len()
    }

    /// `b_tilde = diag(v) U' b`.
    pub fn to_transformed(&self, b: &Array1<f64>) -> Array1<f64> {
        &self.u.t().dot(b) * &self.v_diag
    }

    /// `b = U diag(1/v) b_tilde`.
    pub fn from_transformed(&self, b_tilde: &Array1<f64>) -> Array1<f64> {
        self.u.dot(&(b_tilde / &self.v_diag))
    }

    /// Transform a K x n design and split it into the penalized block (first
    /// `rank` rows) and the unpenalized remainder.
    pub fn transform_design(&self, raw_design: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let k = self.dim();
        if raw_design.nrows() != k {
            return Err(Error::Shape(format!(
                "design has {} rows, expected {k}",
                raw_design.nrows()
            )));
        }
        let mut xt = self.u.t().dot(raw_design);
        for j in 0..k {
            let scale = 1.0 / self.v_diag[j];
            xt.row_mut(j).mapv_inplace(|x| x * scale);
        }
        let xr = xt.slice(s![..self.rank, ..]).to_owned();
        let xf = xt.slice(s![self.rank.., ..]).to_owned();
        Ok((xr, xf))
    }

    /// Map a Q x K matrix of transformed draws back to raw spline coefficients.
    pub fn untransform_coeffs(&self, draws: &Array2<f64>) -> Result<Array2<f64>> {
        let k = self.dim();
        if draws.ncols() != k {
            return Err(Error::Shape(format!(
                "draws have {} columns, expected {k}",
                draws.ncols()
            )));
        }
        let mut out = Array2::zeros(draws.raw_dim());
        for (q, row) in draws.outer_iter().enumerate() {
            let b = self.from_transformed(&row.to_owned());
            out.row_mut(q).assign(&b);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_spline_system, SplineKind, SplineSpec};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    fn random_design(k: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((k, n), |_| rng.gen_range(-1.0..1.0))
    }

    fn k10_system() -> SplineSystem {
        let spec = SplineSpec::new(SplineKind::OpenCubic, 10, (0.0, 1.0)).unwrap();
        build_spline_system(spec, &grid(50)).unwrap()
    }

    #[test]
    fn identity_penalty_gives_unit_scaling() {
        let eye = Array2::eye(6);
        let x = random_design(6, 12, 1);
        let map = build_reparam_from_penalty(&eye, 6, &x).unwrap();
        // U must be a signed permutation of the identity and v all ones.
        for j in 0..6 {
            assert_abs_diff_eq!(map.v_diag[j], 1.0, epsilon = 1e-12);
            let col = map.u.column(j);
            let ones = col.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-10).count();
            let zeros = col.iter().filter(|x| x.abs() < 1e-10).count();
            assert_eq!(ones, 1);
            assert_eq!(zeros, 5);
        }
    }

    /// Line-by-line transcription of the column-norm scaling procedure,
    /// written directly against nalgebra as an independent oracle.
    fn column_norm_oracle(penalty: &Array2<f64>, design_t: &Array2<f64>) -> (usize, Vec<f64>) {
        let k = penalty.nrows();
        let m = nalgebra::DMatrix::from_fn(k, k, |i, j| penalty[[i, j]]);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let max = order.iter().map(|&i| eig.eigenvalues[i]).fold(0.0, f64::max);
        let rank = order
            .iter()
            .filter(|&&i| eig.eigenvalues[i] > 1e-10 * max)
            .count();
        let mut v = vec![1.0; k];
        for j in 0..rank {
            v[j] = eig.eigenvalues[order[j]].sqrt();
        }
        let n = design_t.nrows();
        let xu = nalgebra::DMatrix::from_fn(n, k, |i, j| design_t[[i, j]])
            * nalgebra::DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
        let mut col_norm: Vec<f64> = (0..k)
            .map(|j| xu.column(j).iter().map(|x| x * x).sum::<f64>())
            .collect();
        for j in 0..k {
            col_norm[j] /= v[j] * v[j];
        }
        let av = col_norm[..rank].iter().sum::<f64>() / rank as f64;
        for j in rank..k {
            v[j] = (col_norm[j] / av).sqrt();
        }
        (rank, v)
    }

    #[test]
    fn k10_rank_and_null_block_match_transcription_oracle() {
        let sys = k10_system();
        let x = random_design(10, 40, 7);
        let map = build_reparam(&sys, &x).unwrap();
        assert_eq!(map.rank, 8);
        let (rank, v) = column_norm_oracle(&sys.penalty, &x.t().to_owned());
        assert_eq!(rank, 8);
        for j in 8..10 {
            assert_abs_diff_eq!(map.v_diag[j], v[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn coefficient_roundtrip() {
        let sys = k10_system();
        let x = random_design(10, 30, 3);
        let map = build_reparam(&sys, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b: Array1<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let bt = map.to_transformed(&b);
            let back = map.from_transformed(&bt);
            for j in 0..10 {
                assert_abs_diff_eq!(back[j], b[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn predictor_invariance_and_penalty_equivalence() {
        let sys = k10_system();
        let x = random_design(10, 25, 5);
        let map = build_reparam(&sys, &x).unwrap();
        let (xr, xf) = map.transform_design(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let b: Array1<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let bt = map.to_transformed(&b);
            let btr = bt.slice(s![..8]).to_owned();
            let btf = bt.slice(s![8..]).to_owned();
            let eta_raw = x.t().dot(&b);
            let eta_trans = xr.t().dot(&btr) + xf.t().dot(&btf);
            for i in 0..25 {
                assert_abs_diff_eq!(eta_raw[i], eta_trans[i], epsilon = 1e-10);
            }
            let quad = b.dot(&sys.penalty.dot(&b));
            let norm = btr.dot(&btr);
            assert!((quad - norm).abs() <= 1e-8 * quad.abs().max(1.0));
        }
    }

    #[test]
    fn beta_curve_invariance() {
        let sys = k10_system();
        let x = random_design(10, 25, 9);
        let map = build_reparam(&sys, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b: Array1<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let bt = map.to_transformed(&b);
        let back = map.from_transformed(&bt);
        let direct = sys.eval.dot(&b);
        let reconstructed = sys.eval.dot(&back);
        let sup = direct
            .iter()
            .zip(reconstructed.iter())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-9, "sup-norm {sup}");
    }

    #[test]
    fn zero_design_transforms_to_zero() {
        let sys = k10_system();
        let x = random_design(10, 25, 21);
        let map = build_reparam(&sys, &x).unwrap();
        let zero = Array2::zeros((10, 25));
        let (xr, xf) = map.transform_design(&zero).unwrap();
        assert!(xr.iter().all(|&v| v == 0.0));
        assert!(xf.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_draws_untransform() {
        let sys = k10_system();
        let x = random_design(10, 25, 23);
        let map = build_reparam(&sys, &x).unwrap();
        let empty = Array2::zeros((0, 10));
        let out = map.untransform_coeffs(&empty).unwrap();
        assert_eq!(out.nrows(), 0);
    }

    #[test]
    fn shape_errors() {
        let sys = k10_system();
        let x = random_design(10, 25, 29);
        let map = build_reparam(&sys, &x).unwrap();
        assert!(map.transform_design(&Array2::zeros((7, 5))).is_err());
        assert!(map.untransform_coeffs(&Array2::zeros((3, 7))).is_err());
    }
}
