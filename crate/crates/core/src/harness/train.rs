use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{num_classes, DomainDataset};
use crate::bandit::{BanditState, TraceRecord};
use crate::distances::{d_mixture, DomainBatch};
use crate::error::{Error, Result};
use crate::model::{backward, encode, predict, LabeledBatch, ModelParams, Sgd};
use crate::numerics::Mat;

/// Rows used on each side when measuring the final representation distance.
pub const PROBE_ROWS: usize = 200;

// Independent ChaCha streams per purpose, so the distance term (which draws
// nothing) cannot change which batches are sampled.
const STREAM_INIT: u64 = 1;
const STREAM_SOURCE: u64 = 2;
const STREAM_TARGET: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    RoundRobin,
    Ucb,
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheduler::RoundRobin => "round_robin",
            Scheduler::Ucb => "ucb",
        })
    }
}

impl FromStr for Scheduler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" | "round-robin" | "rr" => Ok(Scheduler::RoundRobin),
            "ucb" => Ok(Scheduler::Ucb),
            other => Err(Error::Config(format!("unknown scheduler '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
    /// Source trained on since the previous evaluation (multi-source runs).
    pub arm: Option<String>,
}

/// Loss terms averaged over the steps since the previous evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub xe: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub scheduler: Scheduler,
    pub arms: Vec<String>,
    pub records: Vec<TraceRecord>,
    pub pulls: Vec<u64>,
    pub final_q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub sources: Vec<String>,
    pub target: String,
    pub mixture: String,
    pub beta: f64,
    pub evals: Vec<EvalRecord>,
    pub losses: Vec<LossRecord>,
    /// Step of the checkpoint with the best target validation accuracy.
    pub selected_step: usize,
    pub valid_accuracy: f64,
    /// Target test accuracy of the selected checkpoint.
    pub test_accuracy: f64,
    /// Distance between encoded source and target probes after the last step.
    pub final_distance: f64,
    /// Hash of every sampled batch index, for checking paired runs.
    pub batch_digest: u64,
    pub trace: Option<BanditTrace>,
    /// Parameters of the selected checkpoint.
    #[serde(skip)]
    pub params: Option<ModelParams>,
    /// Parameters after the last step.
    #[serde(skip)]
    pub final_params: Option<ModelParams>,
}

/// Row-major `C × C` counts, `[true][predicted]`.
pub fn confusion_matrix(predicted: &[usize], actual: &[usize], num_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &a) in predicted.iter().zip(actual) {
        m[a][p] += 1;
    }
    m
}

pub fn accuracy(params: &ModelParams, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pred = predict(params, &batch.inputs)?;
    let correct = pred.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / batch.len() as f64)
}

/// Distance between encoded source-train and target-unlabeled probes.
pub fn representation_distance(
    params: &ModelParams,
    src: &DomainDataset,
    tgt: &DomainDataset,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    let probe = |m: &Mat| {
        let idx: Vec<usize> = (0..m.rows().min(PROBE_ROWS)).collect();
        encode(params, &m.select_rows(&idx))
    };
    let hs = DomainBatch::new(&src.domain_id, probe(&src.train.inputs)?)?;
    let ht = DomainBatch::new(&tgt.domain_id, probe(&tgt.unlabeled)?)?;
    d_mixture(&hs, &ht, &cfg.mixture, &cfg.distance)
}

fn clip_norm(grads: &mut ModelParams, limit: f64) {
    let norm = grads.slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > limit {
        let scale = limit / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a DomainDataset,
    params: ModelParams,
    sgd: Sgd,
    src_rng: ChaCha8Rng,
    tgt_rng: ChaCha8Rng,
    digest: u64,
    steps_done: usize,
    pending: (usize, f64, f64, f64),
    evals: Vec<EvalRecord>,
    losses: Vec<LossRecord>,
    best: Option<(f64, f64, usize, ModelParams)>,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a ExperimentConfig, sources: &[&DomainDataset], target: &'a DomainDataset) -> Result<Self> {
        cfg.validate()?;
        let dim = target.dim();
        for s in sources {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
            if s.train.is_empty() {
                return Err(Error::InsufficientSamples { needed: 1, found: 0 });
            }
        }
        if target.unlabeled.rows() == 0 || target.valid.is_empty() || target.test.is_empty() {
            return Err(Error::Config(format!(
                "target '{}' needs unlabeled, valid and test data",
                target.domain_id
            )));
        }
        let mut all: Vec<&DomainDataset> = sources.to_vec();
        all.push(target);
        let arch = cfg.architecture(dim, num_classes(&all));
        let params = ModelParams::init(&arch, &mut stream(cfg.seed, STREAM_INIT))?;
        Ok(Self {
            cfg,
            target,
            params,
            sgd: Sgd::new(cfg.learning_rate, cfg.momentum),
            src_rng: stream(cfg.seed, STREAM_SOURCE),
            tgt_rng: stream(cfg.seed, STREAM_TARGET),
            digest: 0xcbf2_9ce4_8422_2325,
            steps_done: 0,
            pending: (0, 0.0, 0.0, 0.0),
            evals: Vec::new(),
            losses: Vec::new(),
            best: None,
        })
    }

    fn mix(&mut self, v: usize) {
        for b in (v as u64).to_le_bytes() {
            self.digest ^= b as u64;
            self.digest = self.digest.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn step(&mut self, src: &DomainDataset) -> Result<()> {
        let b = self.cfg.batch_size;
        let src_idx: Vec<usize> = (0..b).map(|_| self.src_rng.random_range(0..src.train.len())).collect();
        let n_t = self.target.unlabeled.rows();
        let tgt_idx: Vec<usize> = (0..b).map(|_| self.tgt_rng.random_range(0..n_t)).collect();
        for &i in src_idx.iter().chain(&tgt_idx) {
            self.mix(i);
        }
        let beta = if self.cfg.is_masked(&src.domain_id) { 0.0 } else { self.cfg.beta };
        let (loss, mut grads) = backward(
            &self.params,
            &src.train.select(&src_idx),
            &self.target.unlabeled.select_rows(&tgt_idx),
            &self.cfg.mixture,
            beta,
            &self.cfg.distance,
        )?;
        if let Some(limit) = self.cfg.max_grad_norm {
            clip_norm(&mut grads, limit);
        }
        self.sgd.step(&mut self.params, &grads)?;
        if !self.params.is_finite() {
            return Err(Error::Diverged {
                step: self.steps_done + 1,
            });
        }
        self.steps_done += 1;
        let p = &mut self.pending;
        p.0 += 1;
        p.1 += loss.total;
        p.2 += loss.xe;
        p.3 += loss.distance;
        Ok(())
    }

    /// Evaluates on the target and returns the validation accuracy.
    fn evaluate(&mut self, arm: Option<String>) -> Result<f64> {
        let valid = accuracy(&self.params, &self.target.valid)?;
        let test = accuracy(&self.params, &self.target.test)?;
        let step = self.steps_done;
        self.evals.push(EvalRecord {
            step,
            valid_accuracy: valid,
            test_accuracy: test,
            arm,
        });
        let (n, total, xe, dist) = std::mem::replace(&mut self.pending, (0, 0.0, 0.0, 0.0));
        if n > 0 {
            let n = n as f64;
            self.losses.push(LossRecord {
                step,
                total: total / n,
                xe: xe / n,
                distance: dist / n,
            });
        }
        if self.best.as_ref().is_none_or(|b| valid > b.0) {
            self.best = Some((valid, test, step, self.params.clone()));
        }
        Ok(valid)
    }

    fn finish(self, sources: &[&DomainDataset], probe_source: &DomainDataset, trace: Option<BanditTrace>) -> Result<RunReport> {
        let final_distance = representation_distance(&self.params, probe_source, self.target, self.cfg)?;
        let (valid, test, step, params) = self.best.expect("at least one evaluation");
        Ok(RunReport {
            seed: self.cfg.seed,
            sources: sources.iter().map(|s| s.domain_id.clone()).collect(),
            target: self.target.domain_id.clone(),
            mixture: self.cfg.mixture.to_string(),
            beta: self.cfg.beta,
            evals: self.evals,
            losses: self.losses,
            selected_step: step,
            valid_accuracy: valid,
            test_accuracy: test,
            final_distance,
            batch_digest: self.digest,
            trace,
            params: Some(params),
            final_params: Some(self.params),
        })
    }
}

/// Trains on labeled `src` batches plus unlabeled `tgt` batches, evaluating
/// on the target validation split every `eval_interval` steps.
pub fn train_single(src: &DomainDataset, tgt: &DomainDataset, cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut t = Trainer::new(cfg, &[src], tgt)?;
    for step in 1..=cfg.steps {
        t.step(src)?;
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            t.evaluate(None)?;
        }
    }
    t.finish(&[src], src, None)
}

/// Trains in rounds of `round_length` steps, each on one source chosen by
/// the scheduler; the target validation accuracy after a round is that
/// round's reward. Runs `steps / round_length` rounds (at least one).
pub fn train_multi(
    sources: &[DomainDataset],
    tgt: &DomainDataset,
    cfg: &ExperimentConfig,
    scheduler: Scheduler,
) -> Result<RunReport> {
    if sources.is_empty() {
        return Err(Error::Config("multi-source training needs at least one source".into()));
    }
    let refs: Vec<&DomainDataset> = sources.iter().collect();
    let mut t = Trainer::new(cfg, &refs, tgt)?;
    let arms: Vec<String> = sources.iter().map(|s| s.domain_id.clone()).collect();
    let mut bandit = BanditState::new(arms.clone())?;
    let mut records = Vec::new();
    let rounds = (cfg.steps / cfg.round_length).max(1);
    for round in 0..rounds {
        let arm = match scheduler {
            Scheduler::RoundRobin => round % sources.len(),
            Scheduler::Ucb => bandit.select(),
        };
        for _ in 0..cfg.round_length {
            t.step(&sources[arm])?;
        }
        let reward = t.evaluate(Some(arms[arm].clone()))?;
        bandit.update(arm, reward)?;
        records.push(TraceRecord::capture(round, arm, reward, &bandit));
    }
    let trace = BanditTrace {
        scheduler,
        arms,
        records,
        pulls: bandit.pulls().to_vec(),
        final_q: bandit.q().to_vec(),
    };
    t.finish(&refs, &sources[0], Some(trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub test_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

pub fn summarize(reports: &[RunReport]) -> Result<SeedSummary> {
    if reports.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, found: 0 });
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let std = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SeedSummary {
        seeds: reports.iter().map(|r| r.seed).collect(),
        test_accuracies: acc,
        mean,
        std,
    })
}

/// Runs `run` for seeds `cfg.seed, cfg.seed + 1, ...` (`cfg.seeds` of them)
/// in parallel; results come back in seed order.
pub fn run_seeds<F>(cfg: &ExperimentConfig, run: F) -> Result<Vec<RunReport>>
where
    F: Fn(&ExperimentConfig) -> Result<RunReport> + Sync,
{
    (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            run(&c)
        })
        .collect()
}
