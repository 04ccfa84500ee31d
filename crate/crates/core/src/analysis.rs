//! Separability statistics over domain distance matrices.
//!
//! A [`DistanceMatrix`] holds `d(P_i, P_j)` for every ordered pair of
//! domains. `z1` counts domains whose in-domain distance is no larger than
//! any distance in its row and column; `z2` standardizes the whole matrix,
//! pushes it through one softmax and sums the diagonal mass (lower is
//! better). [`mixture_phi`] searches for the linear combination of several
//! matrices with the lowest `z2`, and [`informativeness`] measures how much
//! that optimum worsens when one component is dropped.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{distance, DistanceConfig, DomainBatch, Measure};
use crate::error::{Error, Result};
use crate::numerics::{pearson, softmax, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    domain_ids: Vec<String>,
    values: Mat,
    label: String,
}

impl DistanceMatrix {
    pub fn new(domain_ids: Vec<String>, values: Mat, label: impl Into<String>) -> Result<Self> {
        let k = domain_ids.len();
        if values.rows() != k || values.cols() != k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                found: values.rows() * values.cols(),
            });
        }
        if !values.is_finite() {
            return Err(Error::Config("distance matrix has non-finite entries".into()));
        }
        Ok(Self {
            domain_ids,
            values,
            label: label.into(),
        })
    }

    pub fn domain_ids(&self) -> &[String] {
        &self.domain_ids
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    /// Name of the measure (or mixture) that produced the entries.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn size(&self) -> usize {
        self.domain_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Entrywise `a * M + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let mut values = self.values.clone();
        values.as_mut_slice().iter_mut().for_each(|v| *v = a * *v + b);
        Self {
            domain_ids: self.domain_ids.clone(),
            values,
            label: self.label.clone(),
        }
    }

    /// Entrywise natural log; nonpositive entries are floored at the
    /// smallest positive normal float first.
    pub fn log_scaled(&self) -> Self {
        let mut values = self.values.clone();
        values
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.max(f64::MIN_POSITIVE).ln());
        Self {
            domain_ids: self.domain_ids.clone(),
            values,
            label: format!("log_{}", self.label),
        }
    }

    /// Header row of domain ids followed by one row of values per domain.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.domain_ids)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, label: impl Into<String>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let ids: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut data = Vec::with_capacity(ids.len() * ids.len());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            for field in rec.iter() {
                data.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })?);
            }
        }
        let k = ids.len();
        Self::new(ids, Mat::from_vec(k, k, data)?, label)
    }
}

/// Two disjoint draws from the same domain. Row `i` of a distance matrix
/// uses `source` of domain `i`, column `j` uses `target` of domain `j`.
#[derive(Clone, Debug)]
pub struct ProbePair {
    pub source: DomainBatch,
    pub target: DomainBatch,
}

impl ProbePair {
    pub fn domain_id(&self) -> &str {
        self.source.domain_id()
    }
}

pub fn build_distance_matrix(probes: &[ProbePair], measure: Measure, cfg: &DistanceConfig) -> Result<DistanceMatrix> {
    let k = probes.len();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 domains, got {k}")));
    }
    let values: Vec<f64> = (0..k * k)
        .into_par_iter()
        .map(|cell| distance(measure, &probes[cell / k].source, &probes[cell % k].target, cfg))
        .collect::<Result<_>>()?;
    let ids = probes.iter().map(|p| p.domain_id().to_string()).collect();
    DistanceMatrix::new(ids, Mat::from_vec(k, k, values)?, measure.name())
}

/// Fraction of domains whose diagonal entry is ≤ every entry in its row and column.
pub fn z1(m: &DistanceMatrix) -> f64 {
    let k = m.size();
    if k == 0 {
        return 0.0;
    }
    let separated = (0..k)
        .filter(|&i| {
            let diag = m.get(i, i);
            (0..k).filter(|&j| j != i).all(|j| diag <= m.get(i, j) && diag <= m.get(j, i))
        })
        .count();
    separated as f64 / k as f64
}

/// Diagonal mass after joint standardization and softmax over all entries.
pub fn z2(m: &DistanceMatrix) -> Result<f64> {
    if m.size() < 2 {
        return Err(Error::Config("z2 needs at least 2 domains".into()));
    }
    Ok(z2_and_grad(m.values.as_slice(), m.size(), false)?.0)
}

fn is_diag(e: usize, k: usize) -> bool {
    e / k == e % k
}

/// z2 of a flattened K×K matrix, optionally with its gradient with respect
/// to every raw entry.
fn z2_and_grad(v: &[f64], k: usize, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    // Relative threshold: below this the standardized entries are rounding noise.
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(std > 1e-12 * scale.max(1e-300)) {
        return Err(Error::DegenerateSpread);
    }
    let u: Vec<f64> = v.iter().map(|x| (x - mean) / std).collect();
    let p = softmax(&u);
    let z: f64 = p.iter().enumerate().filter(|(e, _)| is_diag(*e, k)).map(|(_, p)| p).sum();
    if !want_grad {
        return Ok((z, Vec::new()));
    }
    // dz/du_e = p_e (1[e diagonal] - z)
    let g: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(e, pe)| pe * (if is_diag(e, k) { 1.0 } else { 0.0 } - z))
        .collect();
    let g_mean = g.iter().sum::<f64>() / n;
    let gu_mean = g.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / n;
    let grad = g
        .iter()
        .zip(&u)
        .map(|(ge, ue)| (ge - g_mean - ue * gu_mean) / std)
        .collect();
    Ok((z, grad))
}

pub fn correlate_with_results(distances: &[f64], accuracies: &[f64]) -> Result<f64> {
    pearson(distances, accuracies)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiOptions {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiResult {
    /// Lowest z2 found.
    pub phi: f64,
    /// Coefficients on the raw matrices achieving `phi`.
    pub alpha: Vec<f64>,
    /// Gradient steps spent, summed over every restart.
    pub iterations: usize,
}

/// Minimizes `z2(Σ α_k M_k)` over real coefficients.
///
/// Gradient descent runs on standardized copies of the components (an
/// equivalent reparametrization, since z2 ignores affine maps), starting
/// from uniform weights. Every proper subset is solved first and its best
/// coefficients seed a second descent, so the result is never worse than
/// any sub-mixture.
pub fn mixture_phi(matrices: &[DistanceMatrix], opts: &PhiOptions) -> Result<PhiResult> {
    let mut solver = PhiSolver::new(matrices, *opts)?;
    let full = solver.full_mask();
    solver.solve(full)
}

/// `φ(all) − φ(all except m)`; more negative means more informative.
pub fn informativeness(matrices: &[DistanceMatrix], m: usize, opts: &PhiOptions) -> Result<f64> {
    if matrices.len() < 2 {
        return Err(Error::Config("informativeness needs at least 2 components".into()));
    }
    if m >= matrices.len() {
        return Err(Error::Config(format!("component {m} out of range")));
    }
    let mut solver = PhiSolver::new(matrices, *opts)?;
    let full = solver.full_mask();
    let with = solver.solve(full)?.phi;
    let without = solver.solve(full & !(1 << m))?.phi;
    Ok(with - without)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformativenessReport {
    /// One `(label, I(D_m))` per component, in input order.
    pub scores: Vec<(String, f64)>,
    /// Optimal raw coefficients of the full mixture.
    pub alpha: Vec<f64>,
    pub phi: f64,
    pub iterations: usize,
}

pub fn informativeness_report(matrices: &[DistanceMatrix], opts: &PhiOptions) -> Result<InformativenessReport> {
    let mut solver = PhiSolver::new(matrices, *opts)?;
    let full = solver.full_mask();
    let best = solver.solve(full)?;
    let mut scores = Vec::with_capacity(matrices.len());
    if matrices.len() >= 2 {
        for (m, mat) in matrices.iter().enumerate() {
            let without = solver.solve(full & !(1 << m))?;
            scores.push((mat.label().to_string(), best.phi - without.phi));
        }
    }
    Ok(InformativenessReport {
        scores,
        alpha: best.alpha,
        phi: best.phi,
        iterations: best.iterations,
    })
}

struct PhiSolver {
    k: usize,
    /// Standardized components, flattened.
    units: Vec<Vec<f64>>,
    /// Standard deviation of each raw component (1 when constant).
    scales: Vec<f64>,
    opts: PhiOptions,
    memo: HashMap<u32, PhiResult>,
}

impl PhiSolver {
    fn new(matrices: &[DistanceMatrix], opts: PhiOptions) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| Error::Config("mixture needs at least one matrix".into()))?;
        if matrices.len() > 16 {
            return Err(Error::Config("at most 16 mixture components are supported".into()));
        }
        let k = first.size();
        if k < 2 {
            return Err(Error::Config("z2 needs at least 2 domains".into()));
        }
        let mut units = Vec::with_capacity(matrices.len());
        let mut scales = Vec::with_capacity(matrices.len());
        for m in matrices {
            if m.domain_ids() != first.domain_ids() {
                return Err(Error::Config(format!(
                    "matrix '{}' has a different domain ordering than '{}'",
                    m.label(),
                    first.label()
                )));
            }
            let v = m.values().as_slice();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if std > 1e-12 * scale.max(1e-300) {
                units.push(v.iter().map(|x| (x - mean) / std).collect());
                scales.push(std);
            } else {
                units.push(vec![0.0; v.len()]);
                scales.push(1.0);
            }
        }
        Ok(Self {
            k,
            units,
            scales,
            opts,
            memo: HashMap::new(),
        })
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.units.len()) - 1
    }

    fn combine(&self, alpha: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.k * self.k];
        for (a, u) in alpha.iter().zip(&self.units) {
            if *a != 0.0 {
                v.iter_mut().zip(u).for_each(|(x, y)| *x += a * y);
            }
        }
        v
    }

    fn evaluate(&self, alpha: &[f64]) -> Option<f64> {
        z2_and_grad(&self.combine(alpha), self.k, false).ok().map(|r| r.0)
    }

    /// Plain gradient descent restricted to `mask`; returns the best iterate.
    fn descend(&self, mask: u32, start: Vec<f64>) -> (Option<(f64, Vec<f64>)>, usize) {
        let mut alpha = start;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut steps = 0;
        for step in 0..=self.opts.steps {
            let Ok((z, grad_v)) = z2_and_grad(&self.combine(&alpha), self.k, true) else {
                break;
            };
            if best.as_ref().is_none_or(|(b, _)| z < *b) {
                best = Some((z, alpha.clone()));
            }
            if step == self.opts.steps {
                break;
            }
            steps += 1;
            for (c, a) in alpha.iter_mut().enumerate() {
                if mask & (1 << c) == 0 {
                    continue;
                }
                let g: f64 = grad_v.iter().zip(&self.units[c]).map(|(x, y)| x * y).sum();
                *a -= self.opts.learning_rate * g;
            }
        }
        (best, steps)
    }

    fn solve(&mut self, mask: u32) -> Result<PhiResult> {
        if let Some(r) = self.memo.get(&mask) {
            return Ok(r.clone());
        }
        let comps: Vec<usize> = (0..self.units.len()).filter(|c| mask & (1 << c) != 0).collect();
        if comps.is_empty() {
            return Err(Error::Config("empty mixture".into()));
        }
        let mut iterations = 0;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let consider = |cand: Option<(f64, Vec<f64>)>, best: &mut Option<(f64, Vec<f64>)>| {
            if let Some((z, a)) = cand {
                if best.as_ref().is_none_or(|(b, _)| z < *b) {
                    *best = Some((z, a));
                }
            }
        };

        if comps.len() == 1 {
            let mut alpha = vec![0.0; self.units.len()];
            alpha[comps[0]] = 1.0;
            let z = self.evaluate(&alpha).map(|z| (z, alpha));
            consider(z, &mut best);
        } else {
            let mut uniform = vec![0.0; self.units.len()];
            for &c in &comps {
                uniform[c] = 1.0 / comps.len() as f64;
            }
            let (cand, steps) = self.descend(mask, uniform);
            iterations += steps;
            consider(cand, &mut best);

            let mut best_sub: Option<PhiResult> = None;
            for &c in &comps {
                // Subsets that cannot be standardized are simply not candidates.
                if let Ok(sub) = self.solve(mask & !(1 << c)) {
                    iterations += sub.iterations;
                    if best_sub.as_ref().is_none_or(|b| sub.phi < b.phi) {
                        best_sub = Some(sub);
                    }
                }
            }
            if let Some(sub) = best_sub {
                let start: Vec<f64> = sub.alpha.iter().zip(&self.scales).map(|(a, s)| a * s).collect();
                let (cand, steps) = self.descend(mask, start);
                iterations += steps;
                consider(cand, &mut best);
            }
        }

        let (phi, unit_alpha) = best.ok_or(Error::DegenerateSpread)?;
        let alpha = unit_alpha.iter().zip(&self.scales).map(|(a, s)| a / s).collect();
        let result = PhiResult { phi, alpha, iterations };
        self.memo.insert(mask, result.clone());
        Ok(result)
    }
}
