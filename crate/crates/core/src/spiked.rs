//! Spike-direction recovery by brute force over a grid of axes.
//!
//! For a fixed unit direction `u` the spiked class with quadratic profile
//! separates: `S_n` splits into a one-dimensional location-scale problem along
//! `u` plus terms that do not depend on the profile. The best profile for each
//! grid direction is therefore available in closed form, and the direction is
//! picked by comparing the resulting semidual values.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conjugate::OracleConfig;
use crate::potential::{Potential, Spiked};
use crate::semidual::{select_finite, EmpiricalPair};
use crate::{Error, Result};

const GOLDEN: f64 = 1.618_033_988_749_895;
// Super-Fibonacci spiral constants for S³.
const SF_PHI: f64 = std::f64::consts::SQRT_2;
const SF_PSI: f64 = 1.533_751_168_755_204_3;

/// Makes the first nonzero coordinate positive so `u` and `−u` coincide.
fn canonical_axis(mut u: DVector<f64>) -> DVector<f64> {
    if let Some(&first) = u.iter().find(|v| **v != 0.0) {
        if first < 0.0 {
            u.neg_mut();
        }
    }
    u
}

/// `count` axes (unit vectors modulo sign) spread over the sphere in `R^dim`.
///
/// Deterministic low-discrepancy constructions are used in dimensions 2, 3
/// and 4 (half-circle, Fibonacci hemisphere, super-Fibonacci spiral); higher
/// dimensions fall back to normalized Gaussian draws from `seed`.
pub fn sphere_grid(dim: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("direction grid needs at least one point".into()));
    }
    let m = count as f64;
    let grid = match dim {
        0 => return Err(Error::InvalidInput("direction grid needs dim > 0".into())),
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..count)
            .map(|i| {
                let t = PI * (i as f64 + 0.5) / m;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => (0..count)
            .map(|i| {
                let z = (i as f64 + 0.5) / m;
                let r = (1.0 - z * z).sqrt();
                let t = 2.0 * PI * i as f64 / GOLDEN;
                DVector::from_vec(vec![r * t.cos(), r * t.sin(), z])
            })
            .collect(),
        4 => (0..count)
            .map(|i| {
                let s = i as f64 + 0.5;
                let r = (s / m).sqrt();
                let big_r = (1.0 - s / m).sqrt();
                let a = 2.0 * PI * s / SF_PHI;
                let b = 2.0 * PI * s / SF_PSI;
                DVector::from_vec(vec![r * a.sin(), r * a.cos(), big_r * b.sin(), big_r * b.cos()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| loop {
                    let g: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                    let n = g.norm();
                    if n > 1e-12 {
                        break g / n;
                    }
                })
                .collect()
        }
    };
    Ok(grid.into_iter().map(canonical_axis).collect())
}

/// Angle between the lines spanned by `u` and `v`, in `[0, π/2]`.
pub fn axis_angle(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = u.dot(v).abs() / (u.norm() * v.norm());
    c.min(1.0).acos()
}

/// Semidual-optimal quadratic profile along `u`: the one-dimensional
/// location-scale map between the projected samples.
pub fn fit_spiked_profile(direction: &DVector<f64>, data: &EmpiricalPair) -> Result<Spiked> {
    if direction.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: direction.len(),
        });
    }
    let u = direction.normalize();
    let moments = |s: &crate::sample::SampleSet| {
        let t: Vec<f64> = s.iter().map(|x| u.dot(x)).collect();
        let m = t.len() as f64;
        let mean = t.iter().sum::<f64>() / m;
        let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        (mean, var)
    };
    let (mean_x, var_x) = moments(data.source());
    let (mean_y, var_y) = moments(data.target());
    if !(var_x > 1e-300) || !(var_y > 1e-300) {
        return Err(Error::RankDeficient {
            min_eigenvalue: var_x.min(var_y),
        });
    }
    let curvature = (var_y / var_x).sqrt();
    Spiked::new(u, curvature, mean_y - curvature * mean_x)
}

/// Result of the brute-force direction search.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedFit {
    pub potential: Potential,
    pub direction_index: usize,
    /// Semidual value of the best profile for each grid direction.
    pub values: Vec<f64>,
}

impl SpikedFit {
    pub fn direction(&self) -> &DVector<f64> {
        match &self.potential {
            Potential::Spiked(s) => s.direction(),
            _ => unreachable!("spiked fit always holds a spiked potential"),
        }
    }
}

/// Minimizes the empirical semidual over spiked potentials with directions
/// restricted to `directions`.
pub fn fit_spiked_grid(
    data: &EmpiricalPair,
    directions: &[DVector<f64>],
    cfg: &OracleConfig,
) -> Result<SpikedFit> {
    let candidates = directions
        .iter()
        .map(|u| fit_spiked_profile(u, data).map(Potential::Spiked))
        .collect::<Result<Vec<_>>>()?;
    let (index, values) = select_finite(&candidates, data, cfg)?;
    Ok(SpikedFit {
        potential: candidates[index].clone(),
        direction_index: index,
        values,
    })
}
