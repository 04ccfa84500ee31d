//! Datasets, synthetic domains, training loops and experiment reports.

mod config;
mod data;
mod experiment;
mod synth;
mod train;

use std::io::Write;

pub use config::ExperimentConfig;
pub use data::{load_embedded, num_classes, read_embedded, save_embedded, write_embedded, DomainDataset};
pub use experiment::{
    correlate, probe_pairs, run_analysis, transfer_accuracies, write_analysis, write_correlation, AnalysisConfig,
    AnalysisReport, CorrelationRow, SeparabilityRow,
};
pub use synth::{gen_multi_source, gen_synthetic, DomainShift, ScenarioConfig, SplitSizes, SynthConfig, SyntheticWorld};
pub use train::{
    accuracy, confusion_matrix, representation_distance, run_seeds, summarize, train_multi, train_single, BanditTrace,
    EvalRecord, LossRecord, RunReport, Scheduler, SeedSummary, PROBE_ROWS,
};

use crate::error::Result;

/// Columns: `step,arm,valid_accuracy,test_accuracy,total,xe,distance`.
pub fn write_evals_csv<W: Write>(report: &RunReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "arm", "valid_accuracy", "test_accuracy", "total", "xe", "distance"])?;
    for e in &report.evals {
        let loss = report.losses.iter().find(|l| l.step == e.step);
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            e.step.to_string(),
            e.arm.clone().unwrap_or_default(),
            e.valid_accuracy.to_string(),
            e.test_accuracy.to_string(),
            f(loss.map(|l| l.total)),
            f(loss.map(|l| l.xe)),
            f(loss.map(|l| l.distance)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `seed,selected_step,valid_accuracy,test_accuracy,final_distance`,
/// then a `mean` and `std` row over test accuracy.
pub fn write_summary_csv<W: Write>(reports: &[RunReport], writer: W) -> Result<()> {
    let summary = summarize(reports)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "selected_step", "valid_accuracy", "test_accuracy", "final_distance"])?;
    for r in reports {
        w.write_record([
            r.seed.to_string(),
            r.selected_step.to_string(),
            r.valid_accuracy.to_string(),
            r.test_accuracy.to_string(),
            r.final_distance.to_string(),
        ])?;
    }
    w.write_record(["mean", "", "", &summary.mean.to_string(), ""])?;
    w.write_record(["std", "", "", &summary.std.to_string(), ""])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{Measure, MixtureSpec};
    use crate::error::Error;

    fn small(shift: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            num_domains: 2,
            dim: 4,
            sizes: SplitSizes {
                train: 40,
                valid: 10,
                test: 10,
                unlabeled: 30,
            },
            shift,
            class_sep: 3.0,
            seed,
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(gen_synthetic(&small(1.0, 3)).unwrap(), gen_synthetic(&small(1.0, 3)).unwrap());
        assert_ne!(gen_synthetic(&small(1.0, 3)).unwrap(), gen_synthetic(&small(1.0, 4)).unwrap());
    }

    #[test]
    fn synthetic_preconditions() {
        let mut c = small(1.0, 0);
        c.dim = 1;
        assert!(gen_synthetic(&c).is_err());
        let mut c = small(1.0, 0);
        c.num_domains = 1;
        assert!(gen_synthetic(&c).is_err());
    }

    #[test]
    fn split_sizes_respected() {
        let ds = gen_synthetic(&small(0.5, 1)).unwrap();
        for d in &ds {
            assert_eq!(d.train.len(), 40);
            assert_eq!(d.valid.len(), 10);
            assert_eq!(d.test.len(), 10);
            assert_eq!(d.unlabeled.rows(), 30);
            assert_eq!(d.dim(), 4);
        }
        assert_eq!(ds[0].domain_id, "d0");
    }

    #[test]
    fn shift_preserves_distances() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let s = DomainShift::random(5, 2.0, &mut rng);
        let (mut x, mut y) = (vec![1.0, -2.0, 0.5, 3.0, 0.0], vec![0.0, 1.0, 1.0, -1.0, 2.0]);
        let before = crate::numerics::sq_dist(&x, &y);
        s.apply(&mut x);
        s.apply(&mut y);
        assert!((crate::numerics::sq_dist(&x, &y) - before).abs() < 1e-10);
    }

    #[test]
    fn embedded_round_trip() {
        let ds = gen_synthetic(&small(1.0, 9)).unwrap();
        let mut buf = Vec::new();
        write_embedded(&ds, &mut buf).unwrap();
        let back = read_embedded(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn embedded_routes_unlabeled_and_groups_domains() {
        let text = "a\ttrain\t0\t1,2\nb\ttrain\t1\t3,4\na\tunlabeled\t-1\t5,6\na\ttest\t1\t7,8\nb\tvalid\t0\t0,0\n";
        let ds = read_embedded(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].domain_id, "a");
        assert_eq!(ds[0].unlabeled.row(0), &[5.0, 6.0]);
        assert_eq!(ds[0].test.labels, vec![1]);
        assert_eq!(ds[1].valid.len(), 1);
    }

    #[test]
    fn embedded_errors_carry_line_numbers() {
        let bad = "a\ttrain\t0\t1,2\na\ttrain\tx\t1,2\n";
        assert!(matches!(read_embedded(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "a\ttrain\t0\t1,2\na\tbogus\t0\t1,2\n";
        assert!(matches!(read_embedded(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "a\ttrain\t0\t1,2\na\ttrain\t0\t1,2,3\n";
        assert!(matches!(
            read_embedded(bad.as_bytes()),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        let bad = "a\ttrain\t0\n";
        assert!(matches!(read_embedded(bad.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    fn quick_cfg() -> ExperimentConfig {
        ExperimentConfig {
            steps: 60,
            eval_interval: 20,
            round_length: 20,
            batch_size: 8,
            mixture: MixtureSpec::single(Measure::L2),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn report_accuracies_match_confusion_matrix() {
        let ds = gen_synthetic(&small(1.0, 2)).unwrap();
        let r = train_single(&ds[0], &ds[1], &quick_cfg()).unwrap();
        assert_eq!(r.evals.len(), 3);
        let params = r.params.as_ref().unwrap();
        let pred = crate::model::predict(params, &ds[1].test.inputs).unwrap();
        let cm = confusion_matrix(&pred, &ds[1].test.labels, 2);
        let correct: u64 = (0..2).map(|c| cm[c][c]).sum();
        assert_eq!(r.test_accuracy, correct as f64 / ds[1].test.len() as f64);
    }

    #[test]
    fn round_robin_visits_evenly() {
        let ds = gen_synthetic(&SynthConfig {
            num_domains: 4,
            ..small(1.0, 5)
        })
        .unwrap();
        let mut cfg = quick_cfg();
        cfg.steps = 7 * cfg.round_length;
        let r = train_multi(&ds[..3], &ds[3], &cfg, Scheduler::RoundRobin).unwrap();
        assert_eq!(r.trace.unwrap().pulls, vec![3, 2, 2]);
    }

    #[test]
    fn summary_statistics() {
        let ds = gen_synthetic(&small(1.0, 2)).unwrap();
        let mut cfg = quick_cfg();
        cfg.seeds = 2;
        let reports = run_seeds(&cfg, |c| train_single(&ds[0], &ds[1], c)).unwrap();
        assert_eq!(reports[0].seed, 0);
        assert_eq!(reports[1].seed, 1);
        let s = summarize(&reports).unwrap();
        let (a, b) = (reports[0].test_accuracy, reports[1].test_accuracy);
        assert!((s.mean - (a + b) / 2.0).abs() < 1e-15);
        assert!((s.std - (a - b).abs() / 2f64.sqrt()).abs() < 1e-12);
    }
}
