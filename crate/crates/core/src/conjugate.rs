//! Convex conjugation `φ*(y) = sup_x ⟨x,y⟩ − φ(x)`.
//!
//! Quadratics (and everything that collapses to one) are conjugated in closed
//! form. Any other potential with a strong-convexity certificate is handled by
//! fixed-step gradient ascent on `x ↦ ⟨x,y⟩ − φ(x)` with step `1/β`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::potential::{Potential, Quadratic};
use crate::sample::SampleSet;
use crate::{Error, Result};

/// Settings for the iterative conjugate oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Stop once `‖y − ∇φ(x)‖` drops to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting point for single queries. Defaults to the origin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<Vec<f64>>,
    /// In batch mode, visit queries in lexicographic order and start each
    /// ascent from the previous argmax.
    pub chain_warm_starts: bool,
    /// Use the exact solution when the potential reduces to a quadratic.
    pub closed_form: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            warm_start: None,
            chain_warm_starts: false,
            closed_form: true,
        }
    }
}

impl OracleConfig {
    /// Forces the gradient-ascent oracle regardless of the potential family.
    pub fn iterative() -> Self {
        Self {
            closed_form: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "oracle tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("oracle max_iterations must be at least 1".into()));
        }
        if let Some(w) = &self.warm_start {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("warm start must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Value and maximizer of one conjugation query.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateSolution {
    /// `φ*(y)`, computed as `⟨argmax, y⟩ − φ(argmax)`.
    pub value: f64,
    pub argmax: DVector<f64>,
    pub iterations: usize,
    /// `‖∇φ(argmax) − y‖`.
    pub residual: f64,
}

/// Closed-form conjugate of a quadratic with a factorized matrix.
pub(crate) struct QuadraticConjugator<'a> {
    quad: &'a Quadratic,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> QuadraticConjugator<'a> {
    pub(crate) fn new(quad: &'a Quadratic) -> Result<Self> {
        let alpha = quad.certificate().alpha;
        if alpha <= 0.0 {
            return Err(Error::NotStronglyConvex { alpha });
        }
        let chol = Cholesky::new(quad.matrix().clone()).ok_or(Error::NotStronglyConvex { alpha })?;
        Ok(Self { quad, chol })
    }

    pub(crate) fn solve(&self, y: &DVector<f64>) -> ConjugateSolution {
        let a: &DMatrix<f64> = self.quad.matrix();
        let rhs = y - self.quad.shift();
        let mut x = self.chol.solve(&rhs);
        // one step of iterative refinement
        let r = &rhs - a * &x;
        x += self.chol.solve(&r);
        let residual = (a * &x - &rhs).norm();
        let value = x.dot(y) - (0.5 * (a * &x).dot(&x) + self.quad.shift().dot(&x));
        ConjugateSolution {
            value,
            argmax: x,
            iterations: 0,
            residual,
        }
    }
}

/// Exact conjugate `½(y−b)ᵀA⁻¹(y−b)` of a positive definite quadratic.
pub fn conjugate_quadratic(quad: &Quadratic, y: &DVector<f64>) -> Result<ConjugateSolution> {
    if y.len() != quad.dim() {
        return Err(Error::DimensionMismatch {
            expected: quad.dim(),
            got: y.len(),
        });
    }
    Ok(QuadraticConjugator::new(quad)?.solve(y))
}

fn require_strongly_convex(p: &Potential) -> Result<f64> {
    let cert = p.certificate();
    if !(cert.alpha > 0.0) {
        return Err(Error::NotStronglyConvex { alpha: cert.alpha });
    }
    if cert.a != 0.0 {
        return Err(Error::InvalidInput(format!(
            "iterative conjugation needs growth exponent 0, got {}",
            cert.a
        )));
    }
    Ok(cert.beta)
}

fn ascend(
    p: &Potential,
    y: &DVector<f64>,
    beta: f64,
    start: DVector<f64>,
    cfg: &OracleConfig,
) -> Result<ConjugateSolution> {
    let step = 1.0 / beta;
    let mut x = start;
    let mut iterations = 0;
    loop {
        let r = y - p.gradient_at(&x);
        let residual = r.norm();
        if residual <= cfg.tolerance {
            let value = x.dot(y) - p.value_at(&x);
            return Ok(ConjugateSolution {
                value,
                argmax: x,
                iterations,
                residual,
            });
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::Convergence {
                iterations,
                residual,
                last: x.iter().copied().collect(),
            });
        }
        x.axpy(step, &r, 1.0);
        iterations += 1;
    }
}

/// Gradient-ascent conjugate oracle with step `1/β`.
pub fn conjugate_iterative(
    p: &Potential,
    y: &DVector<f64>,
    cfg: &OracleConfig,
) -> Result<ConjugateSolution> {
    cfg.validate()?;
    p.check_dim(y)?;
    let beta = require_strongly_convex(p)?;
    let start = match &cfg.warm_start {
        Some(w) if w.len() == y.len() => DVector::from_column_slice(w),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: w.len(),
            })
        }
        None => DVector::zeros(y.len()),
    };
    ascend(p, y, beta, start, cfg)
}

/// Single conjugation query, closed form when enabled and available.
pub fn conjugate(p: &Potential, y: &DVector<f64>, cfg: &OracleConfig) -> Result<ConjugateSolution> {
    if cfg.closed_form {
        if let Some(q) = p.as_quadratic() {
            return conjugate_quadratic(&q, y);
        }
    }
    conjugate_iterative(p, y, cfg)
}

fn first_error(results: Vec<Result<ConjugateSolution>>) -> Result<Vec<ConjugateSolution>> {
    let mut out = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => out.push(s),
            Err(e) => {
                return Err(Error::BatchPoint {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Conjugates `p` at every point of `ys`; results are in input order.
pub fn conjugate_batch(
    p: &Potential,
    ys: &SampleSet,
    cfg: &OracleConfig,
) -> Result<Vec<ConjugateSolution>> {
    cfg.validate()?;
    if ys.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: ys.dim(),
        });
    }
    if cfg.closed_form {
        if let Some(q) = p.as_quadratic() {
            let conj = QuadraticConjugator::new(&q)?;
            return Ok(ys.points().iter().map(|y| conj.solve(y)).collect());
        }
    }
    let beta = require_strongly_convex(p)?;

    if cfg.chain_warm_starts {
        let points = ys.points();
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| {
            points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut slots: Vec<Option<ConjugateSolution>> = vec![None; points.len()];
        let mut start = match &cfg.warm_start {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::zeros(p.dim()),
        };
        for &i in &order {
            let sol = ascend(p, &points[i], beta, start.clone(), cfg).map_err(|e| Error::BatchPoint {
                index: i,
                source: Box::new(e),
            })?;
            start = sol.argmax.clone();
            slots[i] = Some(sol);
        }
        return Ok(slots.into_iter().map(|s| s.expect("every query visited")).collect());
    }

    let results: Vec<Result<ConjugateSolution>> = ys
        .points()
        .par_iter()
        .map(|y| conjugate_iterative(p, y, cfg))
        .collect();
    first_error(results)
}
