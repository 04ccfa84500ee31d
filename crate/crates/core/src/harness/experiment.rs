use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::DomainDataset;
use super::train::{run_seeds, summarize, train_single};
use crate::analysis::{
    build_distance_matrix, correlate_with_results, informativeness_report, z1, z2, DistanceMatrix, InformativenessReport,
    PhiOptions, ProbePair,
};
use crate::distances::{DistanceConfig, DomainBatch, Measure};
use crate::error::{Error, Result};
use crate::numerics::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Rows per probe set; smaller pools are used whole.
    pub probe_size: usize,
    pub seed: u64,
    pub distance: DistanceConfig,
    pub phi: PhiOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            probe_size: 200,
            seed: 0,
            distance: DistanceConfig::default(),
            phi: PhiOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityRow {
    pub measure: Measure,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub matrices: Vec<DistanceMatrix>,
    pub separability: Vec<SeparabilityRow>,
    /// Present when at least two measures were analyzed.
    pub informativeness: Option<InformativenessReport>,
}

fn pick(m: &Mat, n: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut idx = sample(rng, m.rows(), n.min(m.rows())).into_vec();
    idx.sort_unstable();
    m.select_rows(&idx)
}

/// Source probe from the labeled train split, target probe from the
/// unlabeled pool, so the two never share an example.
pub fn probe_pairs(datasets: &[DomainDataset], probe_size: usize, seed: u64) -> Result<Vec<ProbePair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    datasets
        .iter()
        .map(|ds| {
            if ds.train.len() < 2 || ds.unlabeled.rows() < 2 {
                return Err(Error::InsufficientSamples {
                    needed: 2,
                    found: ds.train.len().min(ds.unlabeled.rows()),
                });
            }
            Ok(ProbePair {
                source: DomainBatch::new(&ds.domain_id, pick(&ds.train.inputs, probe_size, &mut rng))?,
                target: DomainBatch::new(&ds.domain_id, pick(&ds.unlabeled, probe_size, &mut rng))?,
            })
        })
        .collect()
}

/// One distance matrix per measure, their z1/z2, and informativeness of
/// each measure within the mixture of all of them.
pub fn run_analysis(datasets: &[DomainDataset], measures: &[Measure], cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    if datasets.len() < 2 {
        return Err(Error::Config(format!("analysis needs at least 2 domains, got {}", datasets.len())));
    }
    if measures.is_empty() {
        return Err(Error::Config("no measures selected".into()));
    }
    let probes = probe_pairs(datasets, cfg.probe_size, cfg.seed)?;
    let matrices: Vec<DistanceMatrix> = measures
        .iter()
        .map(|&m| build_distance_matrix(&probes, m, &cfg.distance))
        .collect::<Result<_>>()?;
    let separability = measures
        .iter()
        .zip(&matrices)
        .map(|(&measure, m)| {
            Ok(SeparabilityRow {
                measure,
                z1: z1(m),
                z2: z2(m)?,
            })
        })
        .collect::<Result<_>>()?;
    let informativeness = if matrices.len() >= 2 {
        Some(informativeness_report(&matrices, &cfg.phi)?)
    } else {
        None
    };
    Ok(AnalysisReport {
        matrices,
        separability,
        informativeness,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `matrix_<m>.csv`, `log_matrix_<m>.csv`, `separability.csv` and,
/// when available, `informativeness.csv` into `dir`.
pub fn write_analysis(report: &AnalysisReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for m in &report.matrices {
        m.write_csv(create(dir, &format!("matrix_{}.csv", m.label()))?)?;
        m.log_scaled().write_csv(create(dir, &format!("log_matrix_{}.csv", m.label()))?)?;
    }
    let mut w = csv::Writer::from_writer(create(dir, "separability.csv")?);
    w.write_record(["measure", "z1", "z2"])?;
    for r in &report.separability {
        w.write_record([r.measure.to_string(), r.z1.to_string(), r.z2.to_string()])?;
    }
    w.flush()?;
    if let Some(info) = &report.informativeness {
        let mut w = csv::Writer::from_writer(create(dir, "informativeness.csv")?);
        w.write_record(["measure", "informativeness", "alpha"])?;
        for ((label, score), alpha) in info.scores.iter().zip(&info.alpha) {
            w.write_record([label.clone(), score.to_string(), alpha.to_string()])?;
        }
        w.write_record(["phi".to_string(), info.phi.to_string(), String::new()])?;
        w.flush()?;
    }
    Ok(())
}

/// Baseline (`β = 0`) target test accuracy for every ordered domain pair,
/// averaged over `cfg.seeds` seeds. Entry `(i, j)` trains on `i` and tests on `j`.
pub fn transfer_accuracies(datasets: &[DomainDataset], cfg: &ExperimentConfig) -> Result<Mat> {
    let k = datasets.len();
    let mut base = cfg.clone();
    base.beta = 0.0;
    let values: Vec<f64> = (0..k * k)
        .into_par_iter()
        .map(|cell| {
            let (src, tgt) = (&datasets[cell / k], &datasets[cell % k]);
            let reports = run_seeds(&base, |c| train_single(src, tgt, c))?;
            Ok(summarize(&reports)?.mean)
        })
        .collect::<Result<_>>()?;
    Mat::from_vec(k, k, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub measure: String,
    /// Pearson r of distance against cross-domain accuracy.
    pub accuracy_r: f64,
    /// Pearson r of distance against the drop from in-domain accuracy on the target.
    pub drop_r: f64,
}

/// Correlates off-diagonal distances with transfer results. The drop for
/// `(i, j)` is `acc(j, j) - acc(i, j)`.
pub fn correlate(matrices: &[DistanceMatrix], transfer: &Mat) -> Result<Vec<CorrelationRow>> {
    let k = transfer.rows();
    let mut acc = Vec::new();
    let mut drop = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                acc.push(transfer[(i, j)]);
                drop.push(transfer[(j, j)] - transfer[(i, j)]);
            }
        }
    }
    matrices
        .iter()
        .map(|m| {
            if m.size() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: m.size(),
                });
            }
            let d: Vec<f64> = (0..k)
                .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j))
                .collect();
            Ok(CorrelationRow {
                measure: m.label().to_string(),
                accuracy_r: correlate_with_results(&d, &acc)?,
                drop_r: correlate_with_results(&d, &drop)?,
            })
        })
        .collect()
}

pub fn write_correlation<W: Write>(rows: &[CorrelationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["measure", "accuracy_r", "drop_r"])?;
    for r in rows {
        w.write_record([r.measure.clone(), r.accuracy_r.to_string(), r.drop_r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
