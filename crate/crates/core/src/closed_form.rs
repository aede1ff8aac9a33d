//! Location-scale plug-in estimator.
//!
//! Between `N(m_P, Σ_P)` and `N(m_Q, Σ_Q)` (and any location-scale pair) the
//! Brenier map is affine, `x ↦ m_Q + A(x − m_P)`, with the Monge matrix
//! `A = Σ_P^{-1/2}(Σ_P^{1/2} Σ_Q Σ_P^{1/2})^{1/2}Σ_P^{-1/2}`. The estimator plugs
//! empirical moments into that formula.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::potential::{Potential, Quadratic};
use crate::sample::SampleSet;
use crate::semidual::EmpiricalPair;
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_CLAMP_TOL: f64 = 1e-10;
/// Covariances whose smallest eigenvalue is at or below this are not inverted.
pub const DEFINITENESS_GATE: f64 = 1e-10;

/// Sample mean and biased (`1/n`) covariance.
pub fn empirical_moments(s: &SampleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "empirical moments need at least 2 points, got {n}"
        )));
    }
    let d = s.dim();
    let mut mean = DVector::zeros(d);
    for x in s.iter() {
        mean += x;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in s.iter() {
        let c = x - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= n as f64;
    Ok((mean, linalg::symmetrize(&cov)))
}

fn check_symmetric_psd(s: &DMatrix<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(Error::InvalidInput(format!("{what} must be a nonempty square matrix")));
    }
    let scale = s.norm().max(1.0);
    let asym = linalg::asymmetry(s);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!("{what} is not symmetric (asymmetry {asym:e})")));
    }
    let (values, vectors) = linalg::sym_eigen(&linalg::symmetrize(s));
    if values[0] < -EIGEN_CLAMP_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "{what} is indefinite (smallest eigenvalue {:e})",
            values[0]
        )));
    }
    Ok((values.map(|v| v.max(0.0)), vectors))
}

/// Symmetric PSD square root through an eigendecomposition; tiny negative
/// eigenvalues are clamped to zero.
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = check_symmetric_psd(s, "matrix")?;
    Ok(linalg::spectral_map(&values, &vectors, f64::sqrt))
}

/// The Monge matrix `Σ_P^{-1/2}(Σ_P^{1/2} Σ_Q Σ_P^{1/2})^{1/2}Σ_P^{-1/2}`.
pub fn monge_matrix(cov_p: &DMatrix<f64>, cov_q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cov_p.shape() != cov_q.shape() {
        return Err(Error::DimensionMismatch {
            expected: cov_p.nrows(),
            got: cov_q.nrows(),
        });
    }
    let (values, vectors) = check_symmetric_psd(cov_p, "source covariance")?;
    if values[0] <= DEFINITENESS_GATE {
        return Err(Error::RankDeficient {
            min_eigenvalue: values[0],
        });
    }
    check_symmetric_psd(cov_q, "target covariance")?;
    let root = linalg::spectral_map(&values, &vectors, f64::sqrt);
    let inv_root = linalg::spectral_map(&values, &vectors, |v| 1.0 / v.sqrt());
    let middle = linalg::symmetrize(&(&root * cov_q * &root));
    let middle_root = spd_sqrt(&middle)?;
    Ok(linalg::symmetrize(&(&inv_root * middle_root * &inv_root)))
}

/// Fitted affine map `x ↦ mean_q + A(x − mean_p)` with its moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScaleEstimate {
    pub mean_p: DVector<f64>,
    pub mean_q: DVector<f64>,
    pub cov_p: DMatrix<f64>,
    pub cov_q: DMatrix<f64>,
    pub monge_matrix: DMatrix<f64>,
}

impl LocationScaleEstimate {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean_q + &self.monge_matrix * (x - &self.mean_p)
    }

    /// Quadratic potential with gradient equal to the fitted map, normalized to vanish at 0.
    pub fn potential(&self) -> Result<Potential> {
        let shift = &self.mean_q - &self.monge_matrix * &self.mean_p;
        Ok(Potential::Quadratic(Quadratic::new(self.monge_matrix.clone(), shift)?))
    }
}

/// Plug-in location-scale estimate. A positive `ridge` adds `ridge·I` to both
/// empirical covariances before forming the Monge matrix.
pub fn fit_location_scale(data: &EmpiricalPair, ridge: f64) -> Result<LocationScaleEstimate> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
    }
    let (mean_p, mut cov_p) = empirical_moments(data.source())?;
    let (mean_q, mut cov_q) = empirical_moments(data.target())?;
    if ridge > 0.0 {
        let d = cov_p.nrows();
        cov_p += DMatrix::identity(d, d) * ridge;
        cov_q += DMatrix::identity(d, d) * ridge;
    }
    let monge = monge_matrix(&cov_p, &cov_q)?;
    Ok(LocationScaleEstimate {
        mean_p,
        mean_q,
        cov_p,
        cov_q,
        monge_matrix: monge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn moments_examples() {
        let s = SampleSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let (m, c) = empirical_moments(&s).unwrap();
        assert_eq!(m, dvector![0.0, 0.0]);
        assert_eq!(c, dmatrix![1.0, 0.0; 0.0, 0.0]);

        let s = SampleSet::from_rows(&vec![vec![2.5, 2.5]; 7]).unwrap();
        let (m, c) = empirical_moments(&s).unwrap();
        assert!((m - dvector![2.5, 2.5]).norm() < 1e-15);
        assert!(c.norm() < 1e-15);

        assert!(empirical_moments(&SampleSet::from_rows(&[vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn sqrt_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((spd_sqrt(&i).unwrap() - &i).norm() < 1e-14);
        let r = spd_sqrt(&dmatrix![4.0, 0.0; 0.0, 9.0]).unwrap();
        assert!((r - dmatrix![2.0, 0.0; 0.0, 3.0]).norm() < 1e-14);

        let s = dmatrix![2.0, 1.0; 1.0, 2.0];
        let r = spd_sqrt(&s).unwrap();
        let r3 = 3f64.sqrt();
        let expected = dmatrix![r3 + 1.0, r3 - 1.0; r3 - 1.0, r3 + 1.0] * 0.5;
        assert!((&r - expected).norm() < 1e-14);
        assert!((&r * &r - &s).norm() <= 1e-10 * s.norm());
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        assert!(spd_sqrt(&dmatrix![1.0, 0.5; 0.0, 1.0]).is_err());
        assert!(spd_sqrt(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_err());
        // tiny negative eigenvalue is clamped
        let r = spd_sqrt(&dmatrix![1.0, 0.0; 0.0, -1e-13]).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn monge_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!((monge_matrix(&i, &(&i * 4.0)).unwrap() - &i * 2.0).norm() < 1e-14);
        let s = dmatrix![2.0, 0.3; 0.3, 1.0];
        assert!((monge_matrix(&s, &s).unwrap() - &i).norm() < 1e-12);
        let a = monge_matrix(&dmatrix![1.0, 0.0; 0.0, 4.0], &dmatrix![9.0, 0.0; 0.0, 1.0]).unwrap();
        assert!((a - dmatrix![3.0, 0.0; 0.0, 0.5]).norm() < 1e-14);
    }

    #[test]
    fn monge_transports_covariance() {
        let p = dmatrix![2.0, 0.5, 0.1; 0.5, 1.0, -0.2; 0.1, -0.2, 0.7];
        let q = dmatrix![1.0, -0.3, 0.0; -0.3, 3.0, 0.4; 0.0, 0.4, 0.5];
        let a = monge_matrix(&p, &q).unwrap();
        assert!(rel_frob(&(&a * &p * &a), &q) < 1e-8);
        let back = monge_matrix(&q, &p).unwrap();
        assert!((&a * &back - DMatrix::<f64>::identity(3, 3)).norm() < 1e-8);
    }

    #[test]
    fn singular_source_needs_ridge() {
        let x = SampleSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let y = SampleSet::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let data = EmpiricalPair::new(x, y).unwrap();
        assert!(matches!(fit_location_scale(&data, 0.0), Err(Error::RankDeficient { .. })));
        let est = fit_location_scale(&data, 1e-3).unwrap();
        assert!(est.monge_matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn translation_family() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 2.0, (1.3 * t).cos(), (0.7 * t).sin() * t.cos()]
            })
            .collect();
        let shift = dvector![1.0, -2.0, 0.5];
        let x = SampleSet::from_rows(&rows).unwrap();
        let y = x.map(|p| p + &shift).unwrap();
        let est = fit_location_scale(&EmpiricalPair::new(x.clone(), y).unwrap(), 0.0).unwrap();
        assert!((&est.monge_matrix - DMatrix::<f64>::identity(3, 3)).norm() < 1e-8);
        let p = est.potential().unwrap();
        for pt in x.iter() {
            assert!((p.grad(pt).unwrap() - (pt + &shift)).norm() < 1e-8);
            assert!((est.apply(pt) - (pt + &shift)).norm() < 1e-8);
        }

        let same = fit_location_scale(&EmpiricalPair::new(x.clone(), x.clone()).unwrap(), 0.0).unwrap();
        let err: f64 = x.iter().map(|pt| (same.apply(pt) - pt).norm_squared()).sum::<f64>() / x.len() as f64;
        assert!(err <= 1e-10);
    }
}
