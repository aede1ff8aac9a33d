//! Ground-truth experiments: seeded source samplers, pushforward targets,
//! Monte Carlo risk functionals, the stability sandwich and rate sweeps.
//!
//! Every random draw comes from a ChaCha8 stream keyed by `(seed, substream)`.
//! The evaluation sample, the source sample `X` and the sample `X'` that is
//! pushed forward to form `Y` never share a substream.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{fit_location_scale, spd_sqrt, LocationScaleEstimate};
use crate::conjugate::{conjugate_batch, OracleConfig};
use crate::linalg;
use crate::potential::{Potential, PotentialSpec, Quadratic};
use crate::sample::SampleSet;
use crate::semidual::{pgd_fit, select_finite, EmpiricalPair};
use crate::{Error, Result};

/// Default Monte Carlo size for population integrals.
pub const DEFAULT_EVAL_POINTS: usize = 10_000;
/// Width of the Monte Carlo slack, in standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Certificates below this are treated as not strongly convex.
pub const MIN_ALPHA: f64 = 1e-8;

/// Source distribution `P`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `N(mean, cov)`; sampled as `mean + cov^{1/2} z`.
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        root: DMatrix<f64>,
    },
    /// Uniform on `[-radius, radius]^dim`.
    UniformCube { dim: usize, radius: f64 },
}

impl Source {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let root = spd_sqrt(&cov)?;
        Ok(Source::Gaussian { mean, cov, root })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::gaussian(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity covariance")
    }

    pub fn uniform_cube(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "uniform cube needs dim > 0 and radius > 0, got dim {dim}, radius {radius}"
            )));
        }
        Ok(Source::UniformCube { dim, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Source::Gaussian { mean, .. } => mean.len(),
            Source::UniformCube { dim, .. } => *dim,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            Source::Gaussian { mean, root, .. } => {
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                mean + root * z
            }
            Source::UniformCube { dim, radius } => {
                DVector::from_fn(*dim, |_, _| rng.random_range(-*radius..=*radius))
            }
        }
    }
}

/// JSON form of [`Source`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    UniformCube {
        dim: usize,
        radius: f64,
    },
}

impl TryFrom<SourceSpec> for Source {
    type Error = Error;

    fn try_from(spec: SourceSpec) -> Result<Self> {
        match spec {
            SourceSpec::Gaussian { mean, cov } => {
                let cov = linalg::from_rows(&cov)
                    .ok_or_else(|| Error::InvalidInput("covariance rows have unequal lengths".into()))?;
                Source::gaussian(DVector::from_vec(mean), cov)
            }
            SourceSpec::UniformCube { dim, radius } => Source::uniform_cube(dim, radius),
        }
    }
}

impl Source {
    pub fn to_spec(&self) -> SourceSpec {
        match self {
            Source::Gaussian { mean, cov, .. } => SourceSpec::Gaussian {
                mean: mean.iter().copied().collect(),
                cov: linalg::to_rows(cov),
            },
            Source::UniformCube { dim, radius } => SourceSpec::UniformCube {
                dim: *dim,
                radius: *radius,
            },
        }
    }
}

/// A synthetic experiment with known Brenier potential `truth`, so that
/// `Q = (∇truth)_♯ P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: Source,
    pub truth: Potential,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub eval_points: usize,
}

impl ExperimentSpec {
    pub fn new(
        source: Source,
        truth: Potential,
        sample_sizes: Vec<usize>,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            source,
            truth,
            sample_sizes,
            replicates,
            seed,
            eval_points: DEFAULT_EVAL_POINTS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_eval_points(mut self, eval_points: usize) -> Result<Self> {
        self.eval_points = eval_points;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truth.dim() != self.source.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source.dim(),
                got: self.truth.dim(),
            });
        }
        self.truth.negative_curvature_probe()?;
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes[0] == 0 {
            return Err(Error::InvalidInput("sample sizes must be nonempty and positive".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("sample sizes must be strictly increasing".into()));
        }
        if self.eval_points < 2 {
            return Err(Error::InvalidInput("eval_points must be at least 2".into()));
        }
        Ok(())
    }

    fn cell(&self, size_index: usize, replicate: usize) -> u64 {
        (size_index * self.replicates + replicate) as u64
    }
}

/// JSON form of [`ExperimentSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpecFile {
    pub source: SourceSpec,
    pub truth: PotentialSpec,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
}

fn one() -> usize {
    1
}

fn default_eval_points() -> usize {
    DEFAULT_EVAL_POINTS
}

impl TryFrom<ExperimentSpecFile> for ExperimentSpec {
    type Error = Error;

    fn try_from(f: ExperimentSpecFile) -> Result<Self> {
        let spec = ExperimentSpec {
            source: Source::try_from(f.source)?,
            truth: Potential::try_from(f.truth)?,
            sample_sizes: f.sample_sizes,
            replicates: f.replicates,
            seed: f.seed,
            eval_points: f.eval_points,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Generator substreams. Distinct variants never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    /// Fresh points for Monte Carlo integrals.
    Evaluation,
    /// Source sample `X` of sweep cell `(size_index, replicate)`.
    Source { size_index: usize, replicate: usize },
    /// Sample `X'` whose pushforward forms the target `Y` of a sweep cell.
    Target { size_index: usize, replicate: usize },
    /// Anything else a caller wants to keep separate, e.g. candidate construction.
    Auxiliary(u64),
}

impl Substream {
    fn id(self, spec: &ExperimentSpec) -> u64 {
        match self {
            Substream::Evaluation => 0,
            Substream::Source {
                size_index,
                replicate,
            } => 4 * spec.cell(size_index, replicate) + 1,
            Substream::Target {
                size_index,
                replicate,
            } => 4 * spec.cell(size_index, replicate) + 2,
            Substream::Auxiliary(k) => 4 * k + 3,
        }
    }
}

/// Seeded generator for one substream of an experiment.
pub fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. draws from the source. Identical `(seed, stream, n)` give identical bits.
pub fn sample_source(spec: &ExperimentSpec, n: usize, stream: Substream) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot draw an empty sample".into()));
    }
    let mut rng = substream_rng(spec.seed, stream.id(spec));
    SampleSet::new((0..n).map(|_| spec.source.draw(&mut rng)).collect())
}

/// Applies `∇φ` to every point.
pub fn pushforward(s: &SampleSet, p: &Potential) -> Result<SampleSet> {
    if s.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: s.dim(),
        });
    }
    s.map(|x| p.gradient_at(x))
}

/// The independent pair `(X, (∇truth)(X'))` for one sweep cell.
pub fn draw_pair(spec: &ExperimentSpec, size_index: usize, replicate: usize) -> Result<EmpiricalPair> {
    let n = *spec
        .sample_sizes
        .get(size_index)
        .ok_or_else(|| Error::InvalidInput(format!("no sample size at index {size_index}")))?;
    let x = sample_source(
        spec,
        n,
        Substream::Source {
            size_index,
            replicate,
        },
    )?;
    let x_prime = sample_source(
        spec,
        n,
        Substream::Target {
            size_index,
            replicate,
        },
    )?;
    EmpiricalPair::new(x, pushforward(&x_prime, &spec.truth)?)
}

/// Anything that maps points to points, e.g. a potential's gradient.
pub trait TransportMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl TransportMap for Potential {
    fn dim(&self) -> usize {
        Potential::dim(self)
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gradient_at(x)
    }
}

impl TransportMap for LocationScaleEstimate {
    fn dim(&self) -> usize {
        self.mean_p.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        LocationScaleEstimate::apply(self, x)
    }
}

/// `x ↦ offset + matrix·x`; the matrix need not be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl TransportMap for AffineMap {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.matrix * x
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            estimate: mean,
            standard_error: (var / m).sqrt(),
        }
    }
}

/// Evaluation points together with the true map on them.
struct EvalSet {
    z: SampleSet,
    true_map: SampleSet,
}

impl EvalSet {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        let z = sample_source(spec, spec.eval_points, Substream::Evaluation)?;
        let true_map = pushforward(&z, &spec.truth)?;
        Ok(Self { z, true_map })
    }

    fn map_error(&self, p_hat: &dyn TransportMap) -> Result<McEstimate> {
        if p_hat.dim() != self.z.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.z.dim(),
                got: p_hat.dim(),
            });
        }
        let values: Vec<f64> = self
            .z
            .points()
            .par_iter()
            .zip(self.true_map.points().par_iter())
            .map(|(z, t)| (p_hat.apply(z) - t).norm_squared())
            .collect();
        Ok(McEstimate::from_samples(&values))
    }

    fn excess(&self, p1: &Potential, cfg: &OracleConfig) -> Result<McEstimate> {
        let alpha = p1.certificate().alpha;
        if !(alpha > MIN_ALPHA) {
            return Err(Error::NotStronglyConvex { alpha });
        }
        if p1.dim() != self.z.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.z.dim(),
                got: p1.dim(),
            });
        }
        let conj = conjugate_batch(p1, &self.true_map, cfg)?;
        let values: Vec<f64> = self
            .z
            .iter()
            .zip(self.true_map.iter())
            .zip(conj.iter())
            .map(|((z, t), c)| p1.value_at(z) + c.value - z.dot(t))
            .collect();
        Ok(McEstimate::from_samples(&values))
    }
}

/// `E_P‖T̂(Z) − ∇φ₀(Z)‖²` over `spec.eval_points` evaluation draws.
pub fn mc_map_error(p_hat: &dyn TransportMap, p_true: &Potential, spec: &ExperimentSpec) -> Result<McEstimate> {
    let mut spec = spec.clone();
    spec.truth = p_true.clone();
    EvalSet::new(&spec)?.map_error(p_hat)
}

/// Semidual excess `S(φ₁) − S(φ₀) = E_P[φ₁(X) + φ₁*(∇φ₀(X)) − ⟨X, ∇φ₀(X)⟩]`.
pub fn semidual_excess(
    p1: &Potential,
    p0_truth: &Potential,
    spec: &ExperimentSpec,
    cfg: &OracleConfig,
) -> Result<McEstimate> {
    let mut spec = spec.clone();
    spec.truth = p0_truth.clone();
    EvalSet::new(&spec)?.excess(p1, cfg)
}

/// Both directions of the stability bound for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `ℓ = S(φ₁) − S(φ₀)`.
    pub excess: f64,
    pub excess_se: f64,
    /// `I = ‖∇φ₁ − ∇φ₀‖²_{L²(P)}`.
    pub map_error: f64,
    pub map_error_se: f64,
    /// `ℓ ≤ I/(2α₁) + mc_margin`.
    pub lower_ok: bool,
    /// `I/(2β₁) ≤ ℓ + mc_margin`.
    pub upper_ok: bool,
    pub mc_margin: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl StabilityReport {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok && self.excess >= -self.mc_margin
    }
}

/// Checks `I/(2β₁) − margin ≤ ℓ ≤ I/(2α₁) + margin` by Monte Carlo.
pub fn stability_check(
    p1: &Potential,
    p0: &Potential,
    spec: &ExperimentSpec,
    cfg: &OracleConfig,
) -> Result<StabilityReport> {
    let c1 = p1.certificate();
    let c0 = p0.certificate();
    if c1.a != 0.0 || c0.a != 0.0 {
        return Err(Error::InvalidInput("stability check needs growth exponent 0".into()));
    }
    if !(c1.alpha > MIN_ALPHA) {
        return Err(Error::NotStronglyConvex { alpha: c1.alpha });
    }
    p0.negative_curvature_probe()?;
    let mut spec = spec.clone();
    spec.truth = p0.clone();
    let eval = EvalSet::new(&spec)?;
    let excess = eval.excess(p1, cfg)?;
    let map_error = eval.map_error(p1)?;
    let (l, i) = (excess.estimate, map_error.estimate);
    let mc_margin = MC_SIGMAS * (excess.standard_error + map_error.standard_error / (2.0 * c1.alpha))
        + 1e-12 * (1.0 + l.abs() + i);
    Ok(StabilityReport {
        excess: l,
        excess_se: excess.standard_error,
        map_error: i,
        map_error_se: map_error.standard_error,
        lower_ok: l <= i / (2.0 * c1.alpha) + mc_margin,
        upper_ok: i / (2.0 * c1.beta) <= l + mc_margin,
        mc_margin,
        alpha1: c1.alpha,
        beta1: c1.beta,
    })
}

/// Estimators available to [`rate_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    LocationScale {
        ridge: f64,
    },
    FiniteSelect {
        candidates: Vec<Potential>,
    },
    PgdDictionary {
        atoms: Vec<Potential>,
        step: Option<f64>,
        max_iter: usize,
    },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::LocationScale { .. } => "location_scale",
            Estimator::FiniteSelect { .. } => "finite_select",
            Estimator::PgdDictionary { .. } => "pgd_dictionary",
        }
    }

    /// Fits the estimator to one data set and returns the estimated potential.
    pub fn fit(&self, data: &EmpiricalPair, cfg: &OracleConfig) -> Result<Potential> {
        match self {
            Estimator::LocationScale { ridge } => fit_location_scale(data, *ridge)?.potential(),
            Estimator::FiniteSelect { candidates } => {
                let (k, _) = select_finite(candidates, data, cfg)?;
                Ok(candidates[k].clone())
            }
            Estimator::PgdDictionary {
                atoms,
                step,
                max_iter,
            } => {
                let report = pgd_fit(atoms, data, *step, *max_iter, cfg)?;
                Potential::mixture(atoms.clone(), report.weights)
            }
        }
    }
}

/// One row of a rate sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub replicate: usize,
    pub estimator: String,
    pub map_error: f64,
    pub map_error_se: f64,
    pub excess: f64,
    pub excess_se: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub oracle: OracleConfig,
    /// Record per-cell fitting time. Off by default so that tables are reproducible.
    pub record_timing: bool,
}

/// Fits `estimator` on every `(n, replicate)` cell and scores it against the truth.
/// Rows come back in `(n, replicate)` order whatever order the cells finish in.
pub fn rate_sweep(spec: &ExperimentSpec, estimator: &Estimator, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    opts.oracle.validate()?;
    let eval = EvalSet::new(spec)?;
    let cells: Vec<(usize, usize)> = (0..spec.sample_sizes.len())
        .flat_map(|i| (0..spec.replicates).map(move |r| (i, r)))
        .collect();
    let rows: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|&(i, r)| {
            let data = draw_pair(spec, i, r)?;
            let started = Instant::now();
            let fitted = estimator.fit(&data, &opts.oracle)?;
            let wall_ms = if opts.record_timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            };
            let map_error = eval.map_error(&fitted)?;
            let excess = eval.excess(&fitted, &opts.oracle)?;
            Ok(SweepRow {
                n: spec.sample_sizes[i],
                replicate: r,
                estimator: estimator.name().to_string(),
                map_error: map_error.estimate,
                map_error_se: map_error.standard_error,
                excess: excess.estimate,
                excess_se: excess.standard_error,
                wall_ms,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Ordinary least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean map error per sample size, in sweep order.
pub fn mean_error_by_n(rows: &[SweepRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|(n, _, _)| *n == row.n) {
            Some(entry) => {
                entry.1 += row.map_error;
                entry.2 += 1;
            }
            None => out.push((row.n, row.map_error, 1)),
        }
    }
    out.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
}

/// Random symmetric matrix `V diag(λ) Vᵀ` with eigenvalues drawn uniformly in `[lo, hi]`.
pub fn random_spd(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let values = DVector::from_fn(dim, |_, _| rng.random_range(lo..=hi));
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&values) * q.transpose()))
}

/// Random quadratic potential with Hessian spectrum in `[lo, hi]` and a
/// standard normal shift scaled by `shift_scale`.
pub fn random_quadratic(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64, shift_scale: f64) -> Quadratic {
    let a = random_spd(rng, dim, lo, hi);
    let b = DVector::from_fn(dim, |_, _| shift_scale * rng.sample::<f64, _>(StandardNormal));
    Quadratic::new(a, b).expect("random quadratic is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn spec(source: Source, truth: Potential) -> ExperimentSpec {
        ExperimentSpec::new(source, truth, vec![10, 20], 2, 42).unwrap()
    }

    #[test]
    fn sampling_is_replayable() {
        let s = spec(Source::standard_gaussian(2), Potential::Quadratic(Quadratic::identity(2)));
        let a = sample_source(&s, 1, Substream::Evaluation).unwrap();
        let b = sample_source(&s, 1, Substream::Evaluation).unwrap();
        assert_eq!(a, b);
        let c = sample_source(
            &s,
            1,
            Substream::Source {
                size_index: 0,
                replicate: 0,
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_are_disjoint() {
        let s = spec(Source::standard_gaussian(1), Potential::Quadratic(Quadratic::identity(1)));
        let mut ids = vec![Substream::Evaluation.id(&s)];
        for i in 0..2 {
            for r in 0..2 {
                ids.push(Substream::Source { size_index: i, replicate: r }.id(&s));
                ids.push(Substream::Target { size_index: i, replicate: r }.id(&s));
            }
        }
        ids.push(Substream::Auxiliary(0).id(&s));
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
    }

    #[test]
    fn uniform_cube_support() {
        let s = spec(Source::uniform_cube(3, 1.0).unwrap(), Potential::Quadratic(Quadratic::identity(3)));
        let pts = sample_source(&s, 500, Substream::Evaluation).unwrap();
        assert!(pts.iter().all(|p| p.iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn pushforward_examples() {
        let x = SampleSet::from_rows(&[vec![1.0, 1.0], vec![-2.0, 0.5]]).unwrap();
        let id = Potential::Quadratic(Quadratic::identity(2));
        assert_eq!(pushforward(&x, &id).unwrap(), x);
        let two = Potential::Quadratic(Quadratic::isotropic(2, 2.0).unwrap());
        let y = pushforward(&x, &two).unwrap();
        assert_eq!(y.points()[1], dvector![-4.0, 1.0]);
        let spiked = Potential::spiked(dvector![1.0, 0.0], 3.0, 0.0).unwrap();
        let y = pushforward(&SampleSet::from_rows(&[vec![1.0, 1.0]]).unwrap(), &spiked).unwrap();
        assert!((&y.points()[0] - dvector![3.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn map_error_examples() {
        let id = Potential::Quadratic(Quadratic::identity(3));
        let s = spec(Source::standard_gaussian(3), id.clone());
        let e = mc_map_error(&id, &id, &s).unwrap();
        assert_eq!((e.estimate, e.standard_error), (0.0, 0.0));

        let c = dvector![1.0, -2.0, 0.5];
        let shifted = Potential::quadratic(DMatrix::identity(3, 3), c.clone()).unwrap();
        let e = mc_map_error(&shifted, &id, &s).unwrap();
        assert!((e.estimate - c.norm_squared()).abs() < 1e-12);

        let two = Potential::Quadratic(Quadratic::isotropic(3, 2.0).unwrap());
        let e = mc_map_error(&two, &id, &s).unwrap();
        assert!((e.estimate - 3.0).abs() <= 3.0 * e.standard_error);

        let affine = AffineMap {
            matrix: DMatrix::identity(3, 3),
            offset: c.clone(),
        };
        let e = mc_map_error(&affine, &id, &s).unwrap();
        assert!((e.estimate - c.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn excess_examples() {
        let id = Potential::Quadratic(Quadratic::identity(3));
        let s = spec(Source::standard_gaussian(3), id.clone());
        let cfg = OracleConfig::default();
        let e = semidual_excess(&id, &id, &s, &cfg).unwrap();
        assert!(e.estimate.abs() < 1e-8);

        // integrand ‖x‖² + ¼‖x‖² − ‖x‖² = ¼‖x‖², so ℓ = d/4
        let two = Potential::Quadratic(Quadratic::isotropic(3, 2.0).unwrap());
        let e = semidual_excess(&two, &id, &s, &cfg).unwrap();
        assert!((e.estimate - 0.75).abs() <= 3.0 * e.standard_error);
        assert!(e.estimate >= -3.0 * e.standard_error);
    }

    #[test]
    fn stability_examples() {
        let p = Potential::spiked(dvector![0.0, 1.0, 0.0], 2.0, 0.3).unwrap();
        let s = spec(Source::standard_gaussian(3), p.clone());
        let cfg = OracleConfig::default();
        let r = stability_check(&p, &p, &s, &cfg).unwrap();
        assert!(r.excess.abs() < 1e-8 && r.map_error == 0.0 && r.holds());

        let flat = Potential::quadratic(DMatrix::from_diagonal(&dvector![1.0, 1.0, 1e-12]), DVector::zeros(3))
            .unwrap();
        assert!(matches!(
            stability_check(&flat, &p, &s, &cfg),
            Err(Error::NotStronglyConvex { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let id = Potential::Quadratic(Quadratic::identity(2));
        let src = Source::standard_gaussian(2);
        assert!(ExperimentSpec::new(src.clone(), id.clone(), vec![10, 10], 1, 0).is_err());
        assert!(ExperimentSpec::new(src.clone(), id.clone(), vec![10], 0, 0).is_err());
        assert!(ExperimentSpec::new(src, Potential::Quadratic(Quadratic::identity(3)), vec![10], 1, 0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
    }
}
