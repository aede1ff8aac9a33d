//! Empirical semidual `S_n(φ) = ∫φ dP_n + ∫φ* dQ_n`, its envelope gradient over
//! dictionary weights, projected gradient descent on the simplex, and
//! selection over a finite candidate class.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{conjugate_batch, OracleConfig};
use crate::potential::{check_dictionary, Potential};
use crate::sample::SampleSet;
use crate::{Error, Result};

/// Independent source and target samples `X_i ~ P`, `Y_k ~ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPair {
    source: SampleSet,
    target: SampleSet,
}

impl EmpiricalPair {
    pub fn new(source: SampleSet, target: SampleSet) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                got: target.dim(),
            });
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &SampleSet {
        &self.source
    }

    pub fn target(&self) -> &SampleSet {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }
}

fn mean_over<F: Fn(&DVector<f64>) -> f64 + Sync>(s: &SampleSet, f: F) -> f64 {
    s.points().iter().map(f).sum::<f64>() / s.len() as f64
}

fn check_pair(p: &Potential, data: &EmpiricalPair) -> Result<()> {
    if p.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: data.dim(),
        });
    }
    Ok(())
}

/// `(1/n_P)Σφ(X_i) + (1/n_Q)Σφ*(Y_k)`.
pub fn semidual_value(p: &Potential, data: &EmpiricalPair, cfg: &OracleConfig) -> Result<f64> {
    check_pair(p, data)?;
    let primal = mean_over(data.source(), |x| p.value_at(x));
    let conj = conjugate_batch(p, data.target(), cfg)?;
    let dual = conj.iter().map(|s| s.value).sum::<f64>() / conj.len() as f64;
    Ok(primal + dual)
}

/// Precomputed pieces of `S_n(λ)` for a fixed dictionary and data set.
struct DictionaryObjective<'a> {
    atoms: &'a [Potential],
    data: &'a EmpiricalPair,
    cfg: &'a OracleConfig,
    /// `(1/n_P)Σ_i φ_j(X_i)` per atom.
    primal: Vec<f64>,
}

impl<'a> DictionaryObjective<'a> {
    fn new(atoms: &'a [Potential], data: &'a EmpiricalPair, cfg: &'a OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = check_dictionary(atoms)?;
        if dim != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.dim(),
            });
        }
        let primal = atoms
            .iter()
            .map(|a| mean_over(data.source(), |x| a.value_at(x)))
            .collect();
        Ok(Self {
            atoms,
            data,
            cfg,
            primal,
        })
    }

    /// Objective value and envelope gradient at `lambda`.
    fn evaluate(&self, lambda: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mixture = Potential::mixture(self.atoms.to_vec(), lambda.to_vec())?;
        let alpha = mixture.certificate().alpha;
        if !(alpha > 0.0) {
            return Err(Error::NotStronglyConvex { alpha });
        }
        let conj = conjugate_batch(&mixture, self.data.target(), self.cfg)?;
        let n_q = conj.len() as f64;
        let dual = conj.iter().map(|s| s.value).sum::<f64>() / n_q;
        let primal: f64 = lambda.iter().zip(&self.primal).map(|(l, m)| l * m).sum();
        let grad = self
            .atoms
            .iter()
            .zip(&self.primal)
            .map(|(atom, m)| m - conj.iter().map(|s| atom.value_at(&s.argmax)).sum::<f64>() / n_q)
            .collect();
        Ok((primal + dual, grad))
    }
}

/// Envelope-theorem gradient `[∇S_n(λ)]_j = mean_i φ_j(X_i) − mean_k φ_j(x*_k)`,
/// with `x*_k` the conjugate maximizers of the mixture at `Y_k`.
pub fn envelope_gradient(
    atoms: &[Potential],
    lambda: &[f64],
    data: &EmpiricalPair,
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    DictionaryObjective::new(atoms, data, cfg)?
        .evaluate(lambda)
        .map(|(_, g)| g)
}

/// `S_n(λ)` for the mixture of `atoms` with weights `lambda`.
pub fn dictionary_value(
    atoms: &[Potential],
    lambda: &[f64],
    data: &EmpiricalPair,
    cfg: &OracleConfig,
) -> Result<f64> {
    DictionaryObjective::new(atoms, data, cfg)?
        .evaluate(lambda)
        .map(|(v, _)| v)
}

/// Euclidean projection onto the probability simplex by sorting and thresholding.
pub fn simplex_project(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("cannot project a non-finite vector".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientMapSmall,
    MaxIterations,
    ObjectiveStall,
}

/// Outcome of projected gradient descent over dictionary weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemidualFitReport {
    pub weights: Vec<f64>,
    /// `S_n(λ_k)` for `k = 0..=iterations`.
    #[serde(rename = "trace")]
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub step_size: f64,
    pub smoothness_estimate: f64,
}

impl SemidualFitReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

/// Stopping thresholds for [`pgd_fit`].
pub const GRADIENT_MAP_TOL: f64 = 1e-6;
pub const STALL_TOL: f64 = 1e-12;
pub const STALL_WINDOW: usize = 20;
const SMOOTHNESS_PAIRS: usize = 20;
// Per-step increase accepted as rounding noise before the step is halved.
const DESCENT_SLACK: f64 = 1e-11;
const MAX_HALVINGS: usize = 60;

fn dirichlet_uniform(rng: &mut ChaCha8Rng, j: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..j).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|x| x / total).collect();
    // absorb rounding so the weights sum to one
    let excess: f64 = w.iter().sum::<f64>() - 1.0;
    let big = (0..j).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
    w[big] -= excess;
    w
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Secant estimate `max ‖∇S_n(λ) − ∇S_n(μ)‖ / ‖λ − μ‖` over seeded random simplex pairs.
fn estimate_smoothness(obj: &DictionaryObjective<'_>) -> Result<f64> {
    let j = obj.atoms.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51_4d0e);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..SMOOTHNESS_PAIRS)
        .map(|_| (dirichlet_uniform(&mut rng, j), dirichlet_uniform(&mut rng, j)))
        .collect();
    let ratios = pairs
        .par_iter()
        .map(|(l, m)| {
            let (_, gl) = obj.evaluate(l)?;
            let (_, gm) = obj.evaluate(m)?;
            let d = dist(l, m);
            Ok(if d > 0.0 { dist(&gl, &gm) / d } else { 0.0 })
        })
        .collect::<Vec<Result<f64>>>();
    let mut best = 0.0f64;
    for r in ratios {
        best = best.max(r?);
    }
    Ok(best.max(1e-12))
}

/// Projected gradient descent `λ ← Proj_Δ(λ − η∇S_n(λ))` from uniform weights.
///
/// Without an explicit `step`, `η = 1/(2L̂)` with `L̂` from [`estimate_smoothness`].
/// Should a step increase the objective, `η` is halved and the step retried,
/// which keeps the trace monotone even when `L̂` underestimates the curvature.
pub fn pgd_fit(
    atoms: &[Potential],
    data: &EmpiricalPair,
    step: Option<f64>,
    max_iter: usize,
    cfg: &OracleConfig,
) -> Result<SemidualFitReport> {
    let obj = DictionaryObjective::new(atoms, data, cfg)?;
    for (j, atom) in atoms.iter().enumerate() {
        atom.negative_curvature_probe()
            .map_err(|e| Error::NotConvex(format!("dictionary atom {j}: {e}")))?;
        let alpha = atom.certificate().alpha;
        if !(alpha > 0.0) {
            return Err(Error::NotStronglyConvex { alpha });
        }
    }
    if let Some(s) = step {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {s}")));
        }
    }

    let j = atoms.len();
    let mut lambda = vec![1.0 / j as f64; j];
    let (mut value, mut grad) = obj.evaluate(&lambda)?;
    let mut trace = vec![value];

    if j == 1 {
        let eta = step.unwrap_or(1.0);
        return Ok(SemidualFitReport {
            weights: lambda,
            objective_trace: trace,
            iterations: 0,
            stop_reason: StopReason::GradientMapSmall,
            step_size: eta,
            smoothness_estimate: 0.5 / eta,
        });
    }

    let smoothness = match step {
        Some(s) => 0.5 / s,
        None => estimate_smoothness(&obj)?,
    };
    let mut eta = step.unwrap_or(0.5 / smoothness);
    let mut iterations = 0;

    let stop_reason = loop {
        let trial: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| l - eta * g).collect();
        let proj = simplex_project(&trial)?;
        if dist(&lambda, &proj) / eta <= GRADIENT_MAP_TOL {
            break StopReason::GradientMapSmall;
        }
        if iterations >= max_iter {
            break StopReason::MaxIterations;
        }

        let mut candidate = proj;
        let mut halvings = 0;
        let (next_value, next_grad) = loop {
            let (v, g) = obj.evaluate(&candidate)?;
            if v <= value + DESCENT_SLACK {
                break (v, g);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break (f64::NAN, g);
            }
            eta *= 0.5;
            let trial: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| l - eta * g).collect();
            candidate = simplex_project(&trial)?;
        };
        if next_value.is_nan() {
            break StopReason::ObjectiveStall;
        }
        if halvings > 0 {
            log::debug!("pgd step halved {halvings} times to {eta:e}");
        }

        lambda = candidate;
        value = next_value;
        grad = next_grad;
        trace.push(value);
        iterations += 1;

        if trace.len() > STALL_WINDOW {
            let earlier = trace[trace.len() - 1 - STALL_WINDOW];
            if earlier - value < STALL_TOL {
                break StopReason::ObjectiveStall;
            }
        }
    };

    Ok(SemidualFitReport {
        weights: lambda,
        objective_trace: trace,
        iterations,
        stop_reason,
        step_size: eta,
        smoothness_estimate: smoothness,
    })
}

/// Index of the smallest value, lowest index on ties. NaN never wins.
pub fn argmin_lowest_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Minimizes the empirical semidual over a finite class. Returns the winning
/// index and every candidate's value.
pub fn select_finite(
    candidates: &[Potential],
    data: &EmpiricalPair,
    cfg: &OracleConfig,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate potentials to select from".into()));
    }
    cfg.validate()?;
    let results: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|c| semidual_value(c, data, cfg))
        .collect();
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let index = argmin_lowest_index(&values)
        .ok_or_else(|| Error::InvalidInput("every candidate semidual value is NaN".into()))?;
    Ok((index, values))
}
