use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use domdist::bandit::write_trace_csv;
use domdist::distances::{Measure, MixtureSpec};
use domdist::harness::{
    correlate, gen_multi_source, gen_synthetic, load_embedded, run_analysis, run_seeds, save_embedded,
    transfer_accuracies, train_multi, train_single, write_analysis, write_correlation, write_evals_csv,
    write_summary_csv, AnalysisConfig, DomainDataset, ExperimentConfig, RunReport, ScenarioConfig, Scheduler,
    SplitSizes, SynthConfig,
};
use domdist::{Error, Result};

/// Domain distances, separability analysis and distance-regularized training.
#[derive(Parser)]
#[command(name = "domdist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic domains in the embedded text format.
    GenSynth(GenSynth),
    /// Distance matrices, z1/z2 and informativeness for every domain pair.
    Analyze(Analyze),
    /// Train on one source domain, adapt to one target.
    TrainSingle(TrainSingle),
    /// Train on several source domains under a scheduler.
    TrainMulti(TrainMulti),
    /// Re-export bandit traces from a saved multi-source report.
    BanditTrace(BanditTrace),
}

#[derive(Args)]
struct GenSynth {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    num_domains: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
    #[arg(long, default_value_t = 3.0)]
    class_sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    valid: usize,
    #[arg(long, default_value_t = 200)]
    test: usize,
    #[arg(long, default_value_t = 600)]
    unlabeled: usize,
    /// Generate the four-source scenario (adversarial, neutral1, neutral2,
    /// near, target) instead of independent domains.
    #[arg(long)]
    multi_source: bool,
}

/// Flags shared by the training and analysis commands. Each one overrides
/// the matching field of `--config`.
#[derive(Args)]
struct Common {
    /// Embedded dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainFlags {
    /// Distance term, e.g. `mmd` or `l2:0.5,mmd:1,fld:1`.
    #[arg(long)]
    mixture: Option<MixtureSpec>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct Analyze {
    #[command(flatten)]
    common: Common,
    /// Comma-separated measures.
    #[arg(long, value_delimiter = ',', default_value = "l2,cosine,mmd,fld,coral")]
    measures: Vec<Measure>,
    #[arg(long, default_value_t = 200)]
    probe_size: usize,
    /// Also train every ordered pair without the distance term and correlate
    /// each measure with the resulting accuracies.
    #[arg(long)]
    correlate: bool,
}

#[derive(Args)]
struct TrainSingle {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    source: String,
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct TrainMulti {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    /// Comma-separated source domain ids.
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<String>,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "ucb")]
    scheduler: Scheduler,
    #[arg(long)]
    round_length: Option<usize>,
}

#[derive(Args)]
struct BanditTrace {
    /// `reports.json` written by `train-multi`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn experiment(common: &Common, flags: Option<&TrainFlags>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(f) = flags {
        if let Some(m) = &f.mixture {
            cfg.mixture = m.clone();
        }
        cfg.beta = f.beta.unwrap_or(cfg.beta);
        cfg.steps = f.steps.unwrap_or(cfg.steps);
        cfg.seeds = f.seeds.unwrap_or(cfg.seeds);
        cfg.learning_rate = f.learning_rate.unwrap_or(cfg.learning_rate);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn find<'a>(data: &'a [DomainDataset], id: &str) -> Result<&'a DomainDataset> {
    data.iter()
        .find(|d| d.domain_id == id)
        .ok_or_else(|| Error::Config(format!("no domain named {id:?} in the dataset")))
}

fn write_reports(reports: &[RunReport], out: &Path) -> Result<()> {
    write_summary_csv(reports, create(out, "summary.csv")?)?;
    for r in reports {
        write_evals_csv(r, create(out, &format!("evals_seed{}.csv", r.seed))?)?;
        if let Some(t) = &r.trace {
            write_trace_csv(&t.arms, &t.records, create(out, &format!("trace_seed{}.csv", r.seed))?)?;
        }
    }
    serde_json::to_writer_pretty(create(out, "reports.json")?, reports)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

fn print_summary(reports: &[RunReport]) -> Result<()> {
    let s = domdist::harness::summarize(reports)?;
    println!("target test accuracy {:.4} ± {:.4} over {} seeds", s.mean, s.std, reports.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(g) => {
            let sizes = SplitSizes {
                train: g.train,
                valid: g.valid,
                test: g.test,
                unlabeled: g.unlabeled,
            };
            let data = if g.multi_source {
                let (mut sources, target) = gen_multi_source(&ScenarioConfig {
                    dim: g.dim,
                    sizes,
                    shift: g.shift,
                    class_sep: g.class_sep,
                    seed: g.seed,
                    ..ScenarioConfig::default()
                })?;
                sources.push(target);
                sources
            } else {
                gen_synthetic(&SynthConfig {
                    num_domains: g.num_domains,
                    dim: g.dim,
                    sizes,
                    shift: g.shift,
                    class_sep: g.class_sep,
                    seed: g.seed,
                })?
            };
            save_embedded(&data, &g.out)
        }
        Command::Analyze(a) => {
            let cfg = experiment(&a.common, None)?;
            let data = load_embedded(&a.common.data)?;
            let analysis = AnalysisConfig {
                probe_size: a.probe_size,
                seed: cfg.seed,
                distance: cfg.distance,
                ..AnalysisConfig::default()
            };
            let report = run_analysis(&data, &a.measures, &analysis)?;
            write_analysis(&report, &a.common.out)?;
            if a.correlate {
                let transfer = transfer_accuracies(&data, &cfg)?;
                let rows = correlate(&report.matrices, &transfer)?;
                write_correlation(&rows, create(&a.common.out, "correlation.csv")?)?;
            }
            for row in &report.separability {
                println!("{:<7} z1 {:.3}  z2 {:.6}", row.measure.name(), row.z1, row.z2);
            }
            Ok(())
        }
        Command::TrainSingle(t) => {
            let cfg = experiment(&t.common, Some(&t.train))?;
            let data = load_embedded(&t.common.data)?;
            let (src, tgt) = (find(&data, &t.source)?, find(&data, &t.target)?);
            let reports = run_seeds(&cfg, |c| train_single(src, tgt, c))?;
            write_reports(&reports, &t.common.out)?;
            print_summary(&reports)
        }
        Command::TrainMulti(t) => {
            let mut cfg = experiment(&t.common, Some(&t.train))?;
            cfg.round_length = t.round_length.unwrap_or(cfg.round_length);
            cfg.validate()?;
            let data = load_embedded(&t.common.data)?;
            let sources = t
                .sources
                .iter()
                .map(|id| find(&data, id).cloned())
                .collect::<Result<Vec<_>>>()?;
            let tgt = find(&data, &t.target)?;
            let reports = run_seeds(&cfg, |c| train_multi(&sources, tgt, c, t.scheduler))?;
            write_reports(&reports, &t.common.out)?;
            print_summary(&reports)
        }
        Command::BanditTrace(b) => {
            let text = std::fs::read_to_string(&b.report)?;
            let reports: Vec<RunReport> = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
            let mut written = 0;
            for r in &reports {
                if let Some(t) = &r.trace {
                    write_trace_csv(&t.arms, &t.records, create(&b.out, &format!("trace_seed{}.csv", r.seed))?)?;
                    written += 1;
                }
            }
            if written == 0 {
                return Err(Error::Config("report holds no bandit traces".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
