//! Candidate Brenier potentials.
//!
//! Three families are supported: quadratics `x ↦ ½xᵀAx + bᵀx`, convex
//! combinations of other potentials (dictionary mixtures), and spiked
//! potentials `x ↦ ψ(⟨u,x⟩) + ½‖x − ⟨u,x⟩u‖²` whose profile `ψ` is a
//! one-dimensional quadratic. Every potential vanishes at the origin.
//!
//! All implemented families have growth exponent `a = 0`: they are globally
//! smooth, and strongly convex whenever the certificate reports `alpha > 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Symmetric matrices are accepted up to this asymmetry without a warning.
const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue tolerated for a PSD matrix.
const PSD_TOL: f64 = -1e-10;
/// Simplex weights must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Smoothness `beta`, growth exponent `a` and strong-convexity `alpha` of a potential.
///
/// The constants are conservative: `beta` may over-estimate and `alpha` may
/// under-estimate the true extreme Hessian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCertificate {
    pub beta: f64,
    pub a: f64,
    pub alpha: f64,
}

impl RegularityCertificate {
    pub fn is_strongly_convex(&self) -> bool {
        self.alpha > 0.0
    }
}

/// `x ↦ ½xᵀAx + bᵀx` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    matrix: DMatrix<f64>,
    shift: DVector<f64>,
    cert: RegularityCertificate,
}

impl Quadratic {
    /// Builds the quadratic, symmetrizing `matrix` and rejecting indefinite input.
    pub fn new(matrix: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "quadratic matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if shift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: shift.len(),
            });
        }
        if matrix.iter().chain(shift.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("quadratic has non-finite entries".into()));
        }
        let asym = linalg::asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            log::warn!("quadratic matrix asymmetric by {asym:e}; symmetrizing");
        }
        let matrix = linalg::symmetrize(&matrix);
        let (min, max) = linalg::eigen_range(&matrix);
        if min < PSD_TOL * max.abs().max(1.0) {
            return Err(Error::NotConvex(format!(
                "quadratic matrix has negative eigenvalue {min:e}"
            )));
        }
        let cert = RegularityCertificate {
            beta: max.max(0.0),
            a: 0.0,
            alpha: min.max(0.0),
        };
        Ok(Self {
            matrix,
            shift,
            cert,
        })
    }

    /// `½‖x‖²`.
    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), DVector::zeros(dim))
            .expect("identity is positive definite")
    }

    /// `x ↦ c·½‖x‖²`.
    pub fn isotropic(dim: usize, c: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * c, DVector::zeros(dim))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn certificate(&self) -> RegularityCertificate {
        self.cert
    }

    fn value_at(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.matrix * x).dot(x) + self.shift.dot(x)
    }

    fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.shift
    }
}

/// Convex combination `Σ λ_j φ_j` of potentials of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    atoms: Vec<Potential>,
    weights: Vec<f64>,
    dim: usize,
}

impl Mixture {
    pub fn new(atoms: Vec<Potential>, weights: Vec<f64>) -> Result<Self> {
        let dim = check_dictionary(&atoms)?;
        if weights.len() != atoms.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        check_simplex(&weights)?;
        Ok(Self {
            atoms,
            weights,
            dim,
        })
    }

    pub fn atoms(&self) -> &[Potential] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn active(&self) -> impl Iterator<Item = (f64, &Potential)> {
        self.weights
            .iter()
            .copied()
            .zip(self.atoms.iter())
            .filter(|(w, _)| *w != 0.0)
    }
}

/// `x ↦ ψ(⟨u,x⟩) + ½‖x − ⟨u,x⟩u‖²` with `ψ(t) = ½·curvature·t² + shift·t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spiked {
    direction: DVector<f64>,
    curvature: f64,
    shift: f64,
}

impl Spiked {
    /// The direction is normalized to unit length; it must be nonzero.
    pub fn new(direction: DVector<f64>, curvature: f64, shift: f64) -> Result<Self> {
        if direction.is_empty() {
            return Err(Error::InvalidInput("spike direction is empty".into()));
        }
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput("spike direction must be a nonzero finite vector".into()));
        }
        if !(curvature.is_finite() && curvature > 0.0) {
            return Err(Error::NotConvex(format!(
                "spike profile curvature must be positive, got {curvature}"
            )));
        }
        if !shift.is_finite() {
            return Err(Error::InvalidInput("spike profile shift must be finite".into()));
        }
        Ok(Self {
            direction: direction / norm,
            curvature,
            shift,
        })
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    fn value_at(&self, x: &DVector<f64>) -> f64 {
        let t = self.direction.dot(x);
        let profile = 0.5 * self.curvature * t * t + self.shift * t;
        let orth = x.norm_squared() - t * t;
        profile + 0.5 * orth
    }

    fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.direction.dot(x);
        let along = self.curvature * t + self.shift;
        x + &self.direction * (along - t)
    }

    /// Equivalent quadratic `A = I + (c − 1)uuᵀ`, `b = s·u`.
    pub fn to_quadratic(&self) -> Quadratic {
        let d = self.direction.len();
        let u = &self.direction;
        let matrix = DMatrix::identity(d, d) + (u * u.transpose()) * (self.curvature - 1.0);
        Quadratic::new(matrix, u * self.shift).expect("spiked quadratic is positive definite")
    }
}

/// A candidate potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Quadratic(Quadratic),
    Mixture(Mixture),
    Spiked(Spiked),
}

impl From<Quadratic> for Potential {
    fn from(q: Quadratic) -> Self {
        Potential::Quadratic(q)
    }
}

impl From<Mixture> for Potential {
    fn from(m: Mixture) -> Self {
        Potential::Mixture(m)
    }
}

impl From<Spiked> for Potential {
    fn from(s: Spiked) -> Self {
        Potential::Spiked(s)
    }
}

impl Potential {
    pub fn quadratic(matrix: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        Quadratic::new(matrix, shift).map(Potential::Quadratic)
    }

    pub fn mixture(atoms: Vec<Potential>, weights: Vec<f64>) -> Result<Self> {
        Mixture::new(atoms, weights).map(Potential::Mixture)
    }

    pub fn spiked(direction: DVector<f64>, curvature: f64, shift: f64) -> Result<Self> {
        Spiked::new(direction, curvature, shift).map(Potential::Spiked)
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Quadratic(q) => q.dim(),
            Potential::Mixture(m) => m.dim,
            Potential::Spiked(s) => s.direction.len(),
        }
    }

    pub(crate) fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `φ(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value_at(x))
    }

    /// `∇φ(x)`.
    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.gradient_at(x))
    }

    /// Unchecked evaluation; callers guarantee `x.len() == self.dim()`.
    pub(crate) fn value_at(&self, x: &DVector<f64>) -> f64 {
        match self {
            Potential::Quadratic(q) => q.value_at(x),
            Potential::Mixture(m) => m.active().map(|(w, p)| w * p.value_at(x)).sum(),
            Potential::Spiked(s) => s.value_at(x),
        }
    }

    pub(crate) fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Potential::Quadratic(q) => q.gradient_at(x),
            Potential::Mixture(m) => {
                let mut g = DVector::zeros(m.dim);
                for (w, p) in m.active() {
                    g.axpy(w, &p.gradient_at(x), 1.0);
                }
                g
            }
            Potential::Spiked(s) => s.gradient_at(x),
        }
    }

    pub fn certificate(&self) -> RegularityCertificate {
        match self {
            Potential::Quadratic(q) => q.cert,
            Potential::Mixture(m) => {
                let mut beta = 0.0;
                let mut alpha = 0.0;
                let mut a = 0.0f64;
                for (w, p) in m.active() {
                    let c = p.certificate();
                    beta += w * c.beta;
                    alpha += w * c.alpha;
                    a = a.max(c.a);
                }
                RegularityCertificate {
                    beta,
                    a,
                    alpha: alpha.min(beta),
                }
            }
            Potential::Spiked(s) => RegularityCertificate {
                beta: s.curvature.max(1.0),
                a: 0.0,
                alpha: s.curvature.min(1.0),
            },
        }
    }

    /// The equivalent quadratic when the potential has one, which enables
    /// closed-form conjugation.
    pub fn as_quadratic(&self) -> Option<Quadratic> {
        match self {
            Potential::Quadratic(q) => Some(q.clone()),
            Potential::Spiked(s) => Some(s.to_quadratic()),
            Potential::Mixture(m) => {
                let mut matrix = DMatrix::zeros(m.dim, m.dim);
                let mut shift = DVector::zeros(m.dim);
                for (w, p) in m.active() {
                    let q = p.as_quadratic()?;
                    matrix += q.matrix() * w;
                    shift += q.shift() * w;
                }
                Quadratic::new(matrix, shift).ok()
            }
        }
    }

    /// Probes gradient monotonicity `⟨∇φ(x) − ∇φ(z), x − z⟩ ≥ 0` on a fixed
    /// set of pseudo-random pairs and fails on any negative-curvature witness.
    pub fn negative_curvature_probe(&self) -> Result<()> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
        for _ in 0..64 {
            let x = DVector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
            let z = DVector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
            let dx = &x - &z;
            let monotone = (self.gradient_at(&x) - self.gradient_at(&z)).dot(&dx);
            if monotone < -1e-9 * (1.0 + dx.norm_squared()) {
                return Err(Error::NotConvex(format!(
                    "negative curvature detected: <grad(x) - grad(z), x - z> = {monotone:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_spec(&self) -> PotentialSpec {
        match self {
            Potential::Quadratic(q) => PotentialSpec::Quadratic {
                matrix: linalg::to_rows(&q.matrix),
                shift: Some(q.shift.iter().copied().collect()),
            },
            Potential::Mixture(m) => PotentialSpec::Mixture {
                atoms: m.atoms.iter().map(Potential::to_spec).collect(),
                weights: m.weights.clone(),
            },
            Potential::Spiked(s) => PotentialSpec::Spiked {
                direction: s.direction.iter().copied().collect(),
                curvature: s.curvature,
                shift: Some(s.shift),
            },
        }
    }
}

/// Checks that a dictionary is nonempty with a common dimension, returning it.
pub(crate) fn check_dictionary(atoms: &[Potential]) -> Result<usize> {
    let dim = match atoms.first() {
        Some(p) => p.dim(),
        None => return Err(Error::InvalidInput("dictionary has no atoms".into())),
    };
    if let Some(bad) = atoms.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    Ok(dim)
}

pub(crate) fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("simplex weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput(format!(
            "simplex weights must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// JSON description of a potential. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    Mixture {
        atoms: Vec<PotentialSpec>,
        weights: Vec<f64>,
    },
    Spiked {
        direction: Vec<f64>,
        curvature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<f64>,
    },
}

impl TryFrom<PotentialSpec> for Potential {
    type Error = Error;

    fn try_from(spec: PotentialSpec) -> Result<Self> {
        match spec {
            PotentialSpec::Quadratic { matrix, shift } => {
                let m = linalg::from_rows(&matrix)
                    .ok_or_else(|| Error::InvalidInput("quadratic matrix rows have unequal lengths".into()))?;
                let shift = shift.unwrap_or_else(|| vec![0.0; m.nrows()]);
                Potential::quadratic(m, DVector::from_vec(shift))
            }
            PotentialSpec::Mixture { atoms, weights } => {
                let atoms = atoms
                    .into_iter()
                    .map(Potential::try_from)
                    .collect::<Result<Vec<_>>>()?;
                Potential::mixture(atoms, weights)
            }
            PotentialSpec::Spiked {
                direction,
                curvature,
                shift,
            } => Potential::spiked(DVector::from_vec(direction), curvature, shift.unwrap_or(0.0)),
        }
    }
}

impl Serialize for Potential {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = PotentialSpec::deserialize(d)?;
        Potential::try_from(spec).map_err(serde::de::Error::custom)
    }
}
