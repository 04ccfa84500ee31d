//! Domain distance measures between two sample batches.
//!
//! Five measures are provided: L2 and cosine distance between batch means,
//! squared MMD with a Gaussian kernel, the optimal Fisher discriminant
//! objective, and CORAL. Each has an analytic gradient with respect to every
//! input sample so it can be used as a training penalty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{covariance, dot, norm, ridge_solve, scatter_about, sq_dist, Mat, Normalization};

/// Samples drawn from one domain, with their mean cached.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    domain_id: String,
    samples: Mat,
    mean: Vec<f64>,
}

impl DomainBatch {
    pub fn new(domain_id: impl Into<String>, samples: Mat) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if samples.cols() == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if !samples.is_finite() {
            return Err(Error::Config("batch contains non-finite values".into()));
        }
        let mean = samples.col_means()?;
        Ok(Self {
            domain_id: domain_id.into(),
            samples,
            mean,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(domain_id: impl Into<String>, rows: &[R]) -> Result<Self> {
        Self::new(domain_id, Mat::from_rows(rows)?)
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn samples(&self) -> &Mat {
        &self.samples
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    L2,
    Cosine,
    Mmd,
    Fld,
    Coral,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::L2,
        Measure::Cosine,
        Measure::Mmd,
        Measure::Fld,
        Measure::Coral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::L2 => "l2",
            Measure::Cosine => "cosine",
            Measure::Mmd => "mmd",
            Measure::Fld => "fld",
            Measure::Coral => "coral",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Measure::L2),
            "cos" | "cosine" => Ok(Measure::Cosine),
            "mmd" => Ok(Measure::Mmd),
            "fld" | "fisher" => Ok(Measure::Fld),
            "coral" => Ok(Measure::Coral),
            other => Err(Error::Config(format!("unknown distance measure '{other}'"))),
        }
    }
}

/// Gaussian kernel bandwidth, in squared-distance units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median squared pairwise distance over the pooled batches.
    MedianHeuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    fn resolve(&self, s: &Mat, t: &Mat) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(sigma) if sigma > 0.0 && sigma.is_finite() => Ok(sigma),
            Bandwidth::Fixed(sigma) => Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}"))),
            Bandwidth::MedianHeuristic => Ok(median_sq_distance(s, t)),
        }
    }
}

fn median_sq_distance(s: &Mat, t: &Mat) -> f64 {
    let pooled: Vec<&[f64]> = s.row_iter().chain(t.row_iter()).collect();
    let mut d = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Ridge added to the within-class scatter before solving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Fixed(f64),
    /// `factor * trace(S_W) / d`.
    TraceScaled(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FldConfig {
    pub ridge: Ridge,
}

impl Default for FldConfig {
    fn default() -> Self {
        Self {
            ridge: Ridge::TraceScaled(1e-3),
        }
    }
}

impl FldConfig {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            ridge: Ridge::Fixed(lambda),
        }
    }

    fn resolve(&self, within: &Mat) -> Result<f64> {
        let lambda = match self.ridge {
            Ridge::Fixed(l) => l,
            Ridge::TraceScaled(f) => f * within.trace() / within.rows() as f64,
        };
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(lambda)
        } else {
            Err(Error::Config(format!("FLD ridge must be nonnegative, got {lambda}")))
        }
    }
}

/// Kernel and FLD settings shared by every measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub fld: FldConfig,
}

/// Weighted combination of distinct measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MixtureSpec {
    components: Vec<(Measure, f64)>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(Measure, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        for (i, (m, a)) in components.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("coefficient for {m} is not finite")));
            }
            if components[..i].iter().any(|(other, _)| other == m) {
                return Err(Error::Config(format!("measure {m} appears twice in mixture")));
            }
        }
        Ok(Self { components })
    }

    pub fn single(measure: Measure) -> Self {
        Self {
            components: vec![(measure, 1.0)],
        }
    }

    pub fn components(&self) -> &[(Measure, f64)] {
        &self.components
    }
}

impl TryFrom<String> for MixtureSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MixtureSpec> for String {
    fn from(m: MixtureSpec) -> Self {
        m.to_string()
    }
}

impl fmt::Display for MixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components.iter().map(|(m, a)| format!("{m}:{a}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `l2:0.5,mmd:2` or a bare measure name.
impl FromStr for MixtureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut comps = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, coef) = match part.split_once(':') {
                Some((n, c)) => (
                    n,
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad coefficient in '{part}': {e}")))?,
                ),
                None => (part, 1.0),
            };
            comps.push((name.trim().parse()?, coef));
        }
        Self::new(comps)
    }
}

fn check_dims(s: &DomainBatch, t: &DomainBatch) -> Result<()> {
    if s.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: t.dim(),
        });
    }
    Ok(())
}

fn mean_diff(s: &DomainBatch, t: &DomainBatch) -> Vec<f64> {
    s.mean().iter().zip(t.mean()).map(|(a, b)| a - b).collect()
}

/// Euclidean distance between batch means.
pub fn d_l2(s: &DomainBatch, t: &DomainBatch) -> Result<f64> {
    check_dims(s, t)?;
    Ok(norm(&mean_diff(s, t)))
}

const MIN_MEAN_NORM: f64 = 1e-12;

/// One minus the cosine similarity of the batch means.
pub fn d_cos(s: &DomainBatch, t: &DomainBatch) -> Result<f64> {
    check_dims(s, t)?;
    let (na, nb) = (norm(s.mean()), norm(t.mean()));
    if na < MIN_MEAN_NORM || nb < MIN_MEAN_NORM {
        return Err(Error::DegenerateMean);
    }
    let cos = dot(s.mean(), t.mean()) / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

#[inline]
fn gauss(sq: f64, sigma: f64) -> f64 {
    (-sq / (2.0 * sigma)).exp()
}

fn kernel_mean(a: &Mat, b: &Mat, sigma: f64) -> f64 {
    let mut total = 0.0;
    for x in a.row_iter() {
        for y in b.row_iter() {
            total += gauss(sq_dist(x, y), sigma);
        }
    }
    total / (a.rows() * b.rows()) as f64
}

/// Squared MMD, the three double sums with all same-index terms kept.
pub fn d_mmd(s: &DomainBatch, t: &DomainBatch, kernel: &KernelConfig) -> Result<f64> {
    check_dims(s, t)?;
    let sigma = kernel.resolve(s.samples(), t.samples())?;
    Ok(mmd_with_sigma(s.samples(), t.samples(), sigma))
}

fn mmd_with_sigma(s: &Mat, t: &Mat, sigma: f64) -> f64 {
    kernel_mean(s, s, sigma) - 2.0 * kernel_mean(s, t, sigma) + kernel_mean(t, t, sigma)
}

struct FldSystem {
    diff: Vec<f64>,
    solved: Vec<f64>,
}

fn fld_system(s: &DomainBatch, t: &DomainBatch, cfg: &FldConfig) -> Result<FldSystem> {
    check_dims(s, t)?;
    let mut within = scatter_about(s.samples(), s.mean());
    let other = scatter_about(t.samples(), t.mean());
    within
        .as_mut_slice()
        .iter_mut()
        .zip(other.as_slice())
        .for_each(|(a, b)| *a += b);
    let lambda = cfg.resolve(&within)?;
    let diff = mean_diff(s, t);
    let solved = ridge_solve(&within, &diff, lambda)?;
    Ok(FldSystem { diff, solved })
}

/// Optimal Fisher criterion `Δᵀ (S_W + λI)⁻¹ Δ` with Δ the mean difference.
pub fn d_fld(s: &DomainBatch, t: &DomainBatch, cfg: &FldConfig) -> Result<f64> {
    let sys = fld_system(s, t, cfg)?;
    Ok(dot(&sys.diff, &sys.solved).max(0.0))
}

fn coral_covariances(s: &DomainBatch, t: &DomainBatch) -> Result<(Mat, Mat)> {
    check_dims(s, t)?;
    let cs = covariance(s.samples(), Normalization::Sample)?;
    let ct = covariance(t.samples(), Normalization::Sample)?;
    Ok((cs, ct))
}

/// Squared Frobenius distance between sample covariances, scaled by `1/(4d²)`.
pub fn d_coral(s: &DomainBatch, t: &DomainBatch) -> Result<f64> {
    let (cs, ct) = coral_covariances(s, t)?;
    let d = s.dim() as f64;
    let f = cs.sub(&ct)?.frobenius_norm();
    Ok(f * f / (4.0 * d * d))
}

pub fn distance(measure: Measure, s: &DomainBatch, t: &DomainBatch, cfg: &DistanceConfig) -> Result<f64> {
    match measure {
        Measure::L2 => d_l2(s, t),
        Measure::Cosine => d_cos(s, t),
        Measure::Mmd => d_mmd(s, t, &cfg.kernel),
        Measure::Fld => d_fld(s, t, &cfg.fld),
        Measure::Coral => d_coral(s, t),
    }
}

/// `Σ α_k D_k(s, t)`. Zero-weight components are still evaluated so that
/// their preconditions are enforced.
pub fn d_mixture(s: &DomainBatch, t: &DomainBatch, mix: &MixtureSpec, cfg: &DistanceConfig) -> Result<f64> {
    mix.components()
        .iter()
        .try_fold(0.0, |acc, &(m, a)| Ok(acc + a * distance(m, s, t, cfg)?))
}

/// Per-sample gradients of a distance, one row per input sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    pub source: Mat,
    pub target: Mat,
}

impl BatchGradients {
    fn zeros(s: &DomainBatch, t: &DomainBatch) -> Self {
        Self {
            source: Mat::zeros(s.len(), s.dim()),
            target: Mat::zeros(t.len(), t.dim()),
        }
    }

    fn add_scaled(&mut self, other: &BatchGradients, a: f64) {
        for (x, y) in self.source.as_mut_slice().iter_mut().zip(other.source.as_slice()) {
            *x += a * y;
        }
        for (x, y) in self.target.as_mut_slice().iter_mut().zip(other.target.as_slice()) {
            *x += a * y;
        }
    }

    /// Gradient with respect to the batch means spread evenly over the samples.
    fn from_mean_gradient(s: &DomainBatch, t: &DomainBatch, gs: &[f64], gt: &[f64]) -> Self {
        let mut g = Self::zeros(s, t);
        let (ns, nt) = (s.len() as f64, t.len() as f64);
        for i in 0..s.len() {
            for (x, v) in g.source.row_mut(i).iter_mut().zip(gs) {
                *x = v / ns;
            }
        }
        for j in 0..t.len() {
            for (x, v) in g.target.row_mut(j).iter_mut().zip(gt) {
                *x = v / nt;
            }
        }
        g
    }
}

/// Analytic gradient of `measure` with respect to every sample in both batches.
///
/// Two quantities are held constant: the within-class scatter for FLD, and
/// the bandwidth for MMD when it comes from the median heuristic. L2 uses
/// the zero subgradient when the means coincide.
pub fn grad_distance(measure: Measure, s: &DomainBatch, t: &DomainBatch, cfg: &DistanceConfig) -> Result<BatchGradients> {
    check_dims(s, t)?;
    match measure {
        Measure::L2 => {
            let diff = mean_diff(s, t);
            let n = norm(&diff);
            if n == 0.0 {
                return Ok(BatchGradients::zeros(s, t));
            }
            let gs: Vec<f64> = diff.iter().map(|v| v / n).collect();
            let gt: Vec<f64> = gs.iter().map(|v| -v).collect();
            Ok(BatchGradients::from_mean_gradient(s, t, &gs, &gt))
        }
        Measure::Cosine => {
            let (a, b) = (s.mean(), t.mean());
            let (na, nb) = (norm(a), norm(b));
            if na < MIN_MEAN_NORM || nb < MIN_MEAN_NORM {
                return Err(Error::DegenerateMean);
            }
            let cos = dot(a, b) / (na * nb);
            // D = 1 - cos, so dD/da = -(b/(|a||b|) - cos a/|a|²).
            let gs: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| -(bi / (na * nb) - cos * ai / (na * na)))
                .collect();
            let gt: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| -(ai / (na * nb) - cos * bi / (nb * nb)))
                .collect();
            Ok(BatchGradients::from_mean_gradient(s, t, &gs, &gt))
        }
        Measure::Mmd => {
            let sigma = cfg.kernel.resolve(s.samples(), t.samples())?;
            Ok(mmd_gradient(s.samples(), t.samples(), sigma))
        }
        Measure::Fld => {
            let sys = fld_system(s, t, &cfg.fld)?;
            let gs: Vec<f64> = sys.solved.iter().map(|y| 2.0 * y).collect();
            let gt: Vec<f64> = gs.iter().map(|v| -v).collect();
            Ok(BatchGradients::from_mean_gradient(s, t, &gs, &gt))
        }
        Measure::Coral => {
            let (cs, ct) = coral_covariances(s, t)?;
            let diff = cs.sub(&ct)?;
            let d = s.dim() as f64;
            let mut g = BatchGradients::zeros(s, t);
            let scale_s = 1.0 / (d * d * (s.len() as f64 - 1.0));
            let scale_t = -1.0 / (d * d * (t.len() as f64 - 1.0));
            coral_side(&mut g.source, s, &diff, scale_s);
            coral_side(&mut g.target, t, &diff, scale_t);
            Ok(g)
        }
    }
}

fn coral_side(out: &mut Mat, batch: &DomainBatch, diff: &Mat, scale: f64) {
    let mut centered = vec![0.0; batch.dim()];
    for (i, x) in batch.samples().row_iter().enumerate() {
        for ((c, xi), m) in centered.iter_mut().zip(x).zip(batch.mean()) {
            *c = xi - m;
        }
        for (o, v) in out.row_mut(i).iter_mut().zip(diff.mat_vec(&centered)) {
            *o = scale * v;
        }
    }
}

fn mmd_gradient(s: &Mat, t: &Mat, sigma: f64) -> BatchGradients {
    let (ns, nt) = (s.rows() as f64, t.rows() as f64);
    let d = s.cols();
    // d/dx k(x, y) = -k(x, y) (x - y) / σ
    let side = |own: &Mat, other: &Mat, n_own: f64, n_other: f64| {
        let mut g = Mat::zeros(own.rows(), d);
        for (i, x) in own.row_iter().enumerate() {
            let row = g.row_mut(i);
            for y in own.row_iter() {
                let k = gauss(sq_dist(x, y), sigma);
                let w = -2.0 * k / (n_own * n_own * sigma);
                for ((r, xi), yi) in row.iter_mut().zip(x).zip(y) {
                    *r += w * (xi - yi);
                }
            }
            for y in other.row_iter() {
                let k = gauss(sq_dist(x, y), sigma);
                let w = 2.0 * k / (n_own * n_other * sigma);
                for ((r, xi), yi) in row.iter_mut().zip(x).zip(y) {
                    *r += w * (xi - yi);
                }
            }
        }
        g
    };
    BatchGradients {
        source: side(s, t, ns, nt),
        target: side(t, s, nt, ns),
    }
}

/// Gradient of `Σ α_k D_k`.
pub fn grad_mixture(s: &DomainBatch, t: &DomainBatch, mix: &MixtureSpec, cfg: &DistanceConfig) -> Result<BatchGradients> {
    let mut total = BatchGradients::zeros(s, t);
    for &(m, a) in mix.components() {
        if a == 0.0 {
            continue;
        }
        total.add_scaled(&grad_distance(m, s, t, cfg)?, a);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn batch(rows: &[&[f64]]) -> DomainBatch {
        DomainBatch::from_rows("b", rows).unwrap()
    }

    #[test]
    fn domain_batch_invariants() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(DomainBatch::from_rows("x", &empty).is_err());
        let b = batch(&[&[1.0, 2.0], &[3.0, 6.0]]);
        assert_eq!(b.mean(), &[2.0, 4.0]);
        assert!(DomainBatch::from_rows("x", &[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn l2_examples() {
        let s = batch(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let t = batch(&[&[3.0, 4.0]]);
        assert_eq!(d_l2(&s, &s).unwrap(), 0.0);
        assert_eq!(d_l2(&s, &t).unwrap(), 5.0);
        assert_eq!(d_l2(&t, &s).unwrap(), 5.0);
        let u = batch(&[&[1.0]]);
        assert!(matches!(d_l2(&s, &u), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cosine_examples() {
        let a = batch(&[&[1.0, 2.0]]);
        let b = batch(&[&[3.0, 6.0]]);
        let c = batch(&[&[-2.0, 1.0]]);
        let neg = batch(&[&[-1.0, -2.0]]);
        assert_abs_diff_eq!(d_cos(&a, &b).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_cos(&a, &c).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_cos(&a, &neg).unwrap(), 2.0, epsilon = 1e-15);
        let zero = batch(&[&[1.0, 1.0], &[-1.0, -1.0]]);
        assert!(matches!(d_cos(&a, &zero), Err(Error::DegenerateMean)));
    }

    #[test]
    fn mmd_two_points() {
        let x = [0.3, -1.2, 2.0];
        let y = [1.0, 0.5, -0.5];
        let sigma = 1.7;
        let s = batch(&[&x]);
        let t = batch(&[&y]);
        let sq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let expected = 2.0 * (1.0 - (-sq / (2.0 * sigma)).exp());
        assert_abs_diff_eq!(d_mmd(&s, &t, &KernelConfig::fixed(sigma)).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(d_mmd(&s, &s, &KernelConfig::default()).unwrap(), 0.0, epsilon = 1e-12);
        assert!(d_mmd(&s, &t, &KernelConfig::fixed(0.0)).is_err());
    }

    #[test]
    fn median_bandwidth() {
        // Pooled points 0, 1, 3 give squared distances {1, 9, 4}; median 4.
        let s = batch(&[&[0.0], &[1.0]]);
        let t = batch(&[&[3.0]]);
        assert_eq!(median_sq_distance(s.samples(), t.samples()), 4.0);
        // Four points: {1,4,9,1,4,1} sorted 1,1,1,4,4,9 -> (1+4)/2.
        let t = batch(&[&[2.0], &[3.0]]);
        assert_eq!(median_sq_distance(s.samples(), t.samples()), 2.5);
        let same = batch(&[&[1.0], &[1.0]]);
        assert_eq!(median_sq_distance(same.samples(), same.samples()), 1.0);
    }

    #[test]
    fn fld_examples() {
        let s = batch(&[&[0.0], &[2.0]]);
        let t = batch(&[&[4.0], &[6.0]]);
        assert_abs_diff_eq!(d_fld(&s, &t, &FldConfig::fixed(0.0)).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d_fld(&t, &s, &FldConfig::fixed(0.0)).unwrap(), 4.0, epsilon = 1e-12);
        let u = batch(&[&[-1.0], &[1.0], &[3.0]]);
        assert_eq!(d_fld(&s, &u, &FldConfig::default()).unwrap(), 0.0);
        // Rank-deficient scatter without ridge.
        let a = batch(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let b = batch(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(d_fld(&a, &b, &FldConfig::fixed(0.0)), Err(Error::SingularMatrix)));
        assert!(d_fld(&a, &b, &FldConfig::default()).unwrap() > 0.0);
    }

    #[test]
    fn coral_examples() {
        let s = batch(&[&[1.0, 0.0], &[-1.0, 2.0], &[0.5, 0.5]]);
        let shifted: Vec<Vec<f64>> = s.samples().row_iter().map(|r| vec![r[0] + 7.0, r[1] - 3.0]).collect();
        let t = DomainBatch::from_rows("t", &shifted).unwrap();
        assert_abs_diff_eq!(d_coral(&s, &t).unwrap(), 0.0, epsilon = 1e-12);

        let a = batch(&[&[0.0], &[2.0]]);
        let b = batch(&[&[5.0], &[5.0]]);
        assert_abs_diff_eq!(d_coral(&a, &b).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_coral(&b, &a).unwrap(), 1.0, epsilon = 1e-15);

        let single = batch(&[&[1.0]]);
        assert!(matches!(d_coral(&single, &a), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn mixture_examples() {
        let s = batch(&[&[0.0, 1.0], &[1.0, 2.0], &[2.0, 0.0]]);
        let t = batch(&[&[3.0, 1.0], &[2.0, 5.0]]);
        let cfg = DistanceConfig::default();
        let single = MixtureSpec::single(Measure::L2);
        assert_eq!(d_mixture(&s, &t, &single, &cfg).unwrap(), d_l2(&s, &t).unwrap());
        let zero = MixtureSpec::new(vec![(Measure::L2, 0.0), (Measure::Mmd, 0.0)]).unwrap();
        assert_eq!(d_mixture(&s, &t, &zero, &cfg).unwrap(), 0.0);
        let mix: MixtureSpec = "l2:0.5, mmd:2".parse().unwrap();
        let expected = 0.5 * d_l2(&s, &t).unwrap() + 2.0 * d_mmd(&s, &t, &cfg.kernel).unwrap();
        assert_abs_diff_eq!(d_mixture(&s, &t, &mix, &cfg).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn mixture_spec_validation() {
        assert!(MixtureSpec::new(vec![]).is_err());
        assert!(MixtureSpec::new(vec![(Measure::L2, 1.0), (Measure::L2, 2.0)]).is_err());
        assert!("l2:x".parse::<MixtureSpec>().is_err());
        assert!("wasserstein".parse::<MixtureSpec>().is_err());
        let m: MixtureSpec = "fisher".parse().unwrap();
        assert_eq!(m.components(), &[(Measure::Fld, 1.0)]);
        assert_eq!(m.to_string(), "fld:1");
    }

    #[test]
    fn l2_gradient_at_kink_is_zero() {
        let s = batch(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let g = grad_distance(Measure::L2, &s, &s, &DistanceConfig::default()).unwrap();
        assert!(g.source.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.target.as_slice().iter().all(|&v| v == 0.0));
    }
}
