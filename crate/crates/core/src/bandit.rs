//! UCB1 controller over candidate source domains.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    arms: Vec<String>,
    q: Vec<f64>,
    pulls: Vec<u64>,
    t: u64,
}

impl BanditState {
    pub fn new(arms: Vec<String>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::Config("bandit needs at least one arm".into()));
        }
        let m = arms.len();
        Ok(Self {
            arms,
            q: vec![0.0; m],
            pulls: vec![0; m],
            t: 0,
        })
    }

    pub fn arms(&self) -> &[String] {
        &self.arms
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn total_pulls(&self) -> u64 {
        self.t
    }

    /// `Q(a) + √(2 ln t / N(a))`, infinite for an arm never pulled.
    pub fn ucb_value(&self, arm: usize) -> f64 {
        if self.pulls[arm] == 0 {
            return f64::INFINITY;
        }
        let t = self.t.max(1) as f64;
        self.q[arm] + (2.0 * t.ln() / self.pulls[arm] as f64).sqrt()
    }

    /// Lowest-indexed unpulled arm, otherwise the UCB argmax (ties to the lowest index).
    pub fn select(&self) -> usize {
        if let Some(a) = self.pulls.iter().position(|&n| n == 0) {
            return a;
        }
        let mut best = 0;
        let mut best_v = self.ucb_value(0);
        for a in 1..self.arms.len() {
            let v = self.ucb_value(a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    /// Running-mean update of `Q(arm)`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms.len() {
            return Err(Error::UnknownArm(arm));
        }
        if !reward.is_finite() {
            return Err(Error::Config(format!("reward must be finite, got {reward}")));
        }
        self.pulls[arm] += 1;
        self.t += 1;
        self.q[arm] += (reward - self.q[arm]) / self.pulls[arm] as f64;
        Ok(())
    }

    /// Test hook: build a state with given estimates and counts.
    pub fn from_parts(arms: Vec<String>, q: Vec<f64>, pulls: Vec<u64>) -> Result<Self> {
        if arms.is_empty() || q.len() != arms.len() || pulls.len() != arms.len() {
            return Err(Error::Config("arms, q and pulls must have equal nonzero length".into()));
        }
        let t = pulls.iter().sum();
        Ok(Self { arms, q, pulls, t })
    }
}

/// One scheduling round as recorded for plotting arm values over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub arm: usize,
    pub reward: f64,
    /// `Q(a)` for every arm after the update.
    pub q: Vec<f64>,
    /// `Q(a) + bonus` for every arm after the update; infinite for arms
    /// not yet pulled, stored as `null` in self-describing formats.
    #[serde(with = "unbounded")]
    pub value: Vec<f64>,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

impl TraceRecord {
    pub fn capture(round: usize, arm: usize, reward: f64, state: &BanditState) -> Self {
        Self {
            round,
            arm,
            reward,
            q: state.q().to_vec(),
            value: (0..state.arms().len()).map(|a| state.ucb_value(a)).collect(),
        }
    }
}

/// Columns: `round,arm,reward,value_<arm>...,q_<arm>...`. The `arm` column
/// holds the arm id.
pub fn write_trace_csv<W: Write>(arms: &[String], records: &[TraceRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["round".to_string(), "arm".to_string(), "reward".to_string()];
    header.extend(arms.iter().map(|a| format!("value_{a}")));
    header.extend(arms.iter().map(|a| format!("q_{a}")));
    w.write_record(&header)?;
    for r in records {
        let arm = arms.get(r.arm).ok_or(Error::UnknownArm(r.arm))?;
        let mut row = vec![r.round.to_string(), arm.clone(), r.reward.to_string()];
        row.extend(r.value.iter().map(f64::to_string));
        row.extend(r.q.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
