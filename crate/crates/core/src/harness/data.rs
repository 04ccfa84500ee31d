use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::LabeledBatch;
use crate::numerics::Mat;

/// One domain's labeled splits plus its unlabeled pool.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub domain_id: String,
    pub train: LabeledBatch,
    pub valid: LabeledBatch,
    pub test: LabeledBatch,
    pub unlabeled: Mat,
}

impl DomainDataset {
    pub fn dim(&self) -> usize {
        self.train.inputs.cols()
    }

    /// One more than the largest label in any labeled split.
    pub fn num_classes(&self) -> usize {
        [&self.train, &self.valid, &self.test]
            .iter()
            .flat_map(|b| b.labels.iter())
            .max()
            .map_or(0, |&l| l + 1)
    }
}

/// Largest class count over a set of datasets, at least 2.
pub fn num_classes(datasets: &[&DomainDataset]) -> usize {
    datasets.iter().map(|d| d.num_classes()).max().unwrap_or(0).max(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Split {
    Train,
    Valid,
    Test,
    Unlabeled,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            "unlabeled" => Some(Split::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Default)]
struct Pending {
    rows: [Vec<Vec<f64>>; 4],
    labels: [Vec<usize>; 3],
}

/// Writes `domain_id<TAB>split<TAB>label<TAB>v1,...,vd` lines. Unlabeled
/// vectors carry label `-1`.
pub fn write_embedded<W: Write>(datasets: &[DomainDataset], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for ds in datasets {
        if ds.domain_id.contains(['\t', '\n']) {
            return Err(Error::Config(format!("domain id {:?} contains a tab or newline", ds.domain_id)));
        }
        for (name, batch) in [("train", &ds.train), ("valid", &ds.valid), ("test", &ds.test)] {
            for (row, label) in batch.inputs.row_iter().zip(&batch.labels) {
                writeln!(w, "{}\t{}\t{}\t{}", ds.domain_id, name, label, join(row))?;
            }
        }
        for row in ds.unlabeled.row_iter() {
            writeln!(w, "{}\tunlabeled\t-1\t{}", ds.domain_id, join(row))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn join(row: &[f64]) -> String {
    row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn save_embedded(datasets: &[DomainDataset], path: impl AsRef<Path>) -> Result<()> {
    write_embedded(datasets, File::create(path)?)
}

pub fn load_embedded(path: impl AsRef<Path>) -> Result<Vec<DomainDataset>> {
    read_embedded(BufReader::new(File::open(path)?))
}

/// Parses the embedded text format. Domains keep their order of first appearance.
pub fn read_embedded<R: BufRead>(reader: R) -> Result<Vec<DomainDataset>> {
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    let mut dim: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(parse_err("empty domain id".into()));
        }
        let split = Split::parse(fields[1]).ok_or_else(|| parse_err(format!("unknown split '{}'", fields[1])))?;
        let label: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad label '{}'", fields[2])))?;
        let vector: Vec<f64> = fields[3]
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("bad vector component: {e}")))?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite vector component".into()));
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: vector.len(),
                })
            }
            _ => {}
        }

        let entry = pending.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Pending::default()
        });
        match (split, label) {
            (Split::Unlabeled, -1) => entry.rows[3].push(vector),
            (Split::Unlabeled, l) => return Err(parse_err(format!("unlabeled record has label {l}"))),
            (_, l) if l < 0 => entry.rows[3].push(vector),
            (s, l) => {
                let k = s as usize;
                entry.rows[k].push(vector);
                entry.labels[k].push(l as usize);
            }
        }
    }

    let d = dim.ok_or_else(|| Error::Parse {
        line: 0,
        message: "no records".into(),
    })?;
    let classes = pending
        .values()
        .flat_map(|p| p.labels.iter().flatten())
        .max()
        .map_or(2, |&l| (l + 1).max(2));
    order
        .into_iter()
        .map(|id| {
            let p = pending.remove(&id).expect("domain recorded");
            let [train, valid, test, unlabeled] = p.rows;
            let [lt, lv, ls] = p.labels;
            Ok(DomainDataset {
                train: LabeledBatch::new(to_mat(&train, d)?, lt, classes)?,
                valid: LabeledBatch::new(to_mat(&valid, d)?, lv, classes)?,
                test: LabeledBatch::new(to_mat(&test, d)?, ls, classes)?,
                unlabeled: to_mat(&unlabeled, d)?,
                domain_id: id,
            })
        })
        .collect()
}

fn to_mat(rows: &[Vec<f64>], d: usize) -> Result<Mat> {
    if rows.is_empty() {
        Ok(Mat::zeros(0, d))
    } else {
        Mat::from_rows(rows)
    }
}
