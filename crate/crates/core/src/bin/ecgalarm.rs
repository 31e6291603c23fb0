//! Command-line front end. Settings come from an optional JSON config file;
//! each flag (or its `ECGALARM_*` environment variable) overrides the
//! matching key.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ecgalarm::pipeline::{self, CachePolicy, PipelineConfig};
use ecgalarm::Error;

#[derive(Parser, Debug)]
#[command(name = "ecgalarm", version, about = "ICU ECG false-alarm classification pipeline")]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true, env = "ECGALARM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "ECGALARM_SEED")]
    seed: Option<u64>,
    /// Directory of .hea/.mat records or CSV fixtures.
    #[arg(long, global = true, env = "ECGALARM_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// `record,label` truth file (default: <data-dir>/labels.csv).
    #[arg(long, global = true, env = "ECGALARM_LABELS")]
    labels: Option<PathBuf>,
    #[arg(long, global = true, env = "ECGALARM_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated, e.g. `HLF_cityblock,DWT`.
    #[arg(long, global = true, env = "ECGALARM_SCENARIOS", value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    /// Comma-separated: AdaBoostM1, RUSBoost.
    #[arg(long, global = true, env = "ECGALARM_CLASSIFIERS", value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    #[arg(long, global = true, env = "ECGALARM_FOLDS")]
    folds: Option<usize>,
    /// Clusters per record.
    #[arg(long, global = true, env = "ECGALARM_K")]
    k: Option<usize>,
    #[arg(long, global = true, env = "ECGALARM_WORKERS")]
    workers: Option<usize>,
    /// reuse | rebuild
    #[arg(long, global = true, env = "ECGALARM_CACHE")]
    cache: Option<CachePolicy>,
    #[arg(long, global = true, env = "ECGALARM_ROUNDS")]
    rounds: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Decode records, write manifest.csv and the signal cache.
    Ingest,
    /// Compute the LLF, HLF and DWT feature files.
    Featurize,
    /// Cross-validate every scenario and classifier.
    Evaluate,
    /// Re-render report.md from report.json.
    Report,
    /// ingest, featurize and evaluate.
    All,
    /// Write a synthetic labelled corpus in challenge layout.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        records: usize,
        /// Seconds per record.
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
    },
}

impl Cli {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_path(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.data_dir {
            c.data_dir = Some(v.clone());
        }
        if let Some(v) = &self.labels {
            c.labels_path = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.scenarios {
            c.scenarios = v.clone();
        }
        if let Some(v) = &self.classifiers {
            c.classifiers = v.clone();
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.k {
            c.k_clusters = v;
        }
        if let Some(v) = self.workers {
            c.workers = Some(v);
        }
        if let Some(v) = self.cache {
            c.cache = v;
        }
        if let Some(v) = self.rounds {
            c.rounds = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::MissingInput(_) => 3,
        Error::EmptyDataset => 4,
        Error::Io { .. } => 5,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => 6,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::Synth { dir, records, duration } = &cli.command {
        let corpus = ecgalarm::synthetic::demo_corpus(*records, *duration, cli.seed.unwrap_or(0));
        ecgalarm::synthetic::write_corpus(dir, &corpus)?;
        println!("wrote {} records to {}", corpus.len(), dir.display());
        return Ok(());
    }
    let config = cli.config()?;
    let ingest = || -> Result<(), Error> {
        let s = pipeline::ingest(&config)?;
        println!("ingested {} records ({} decoded, {} from cache)", s.entries.len(), s.decoded, s.reused);
        print!("{}", pipeline::format_counts(&s.entries));
        Ok(())
    };
    let featurize = || -> Result<(), Error> {
        let s = pipeline::featurize(&config)?;
        println!("featurized {} records, {} failed", s.rows, s.failed.len());
        for (rec, why) in &s.failed {
            println!("  {rec}: {why}");
        }
        Ok(())
    };
    let evaluate = || -> Result<(), Error> {
        let r = pipeline::evaluate(&config)?;
        print!("{}", ecgalarm::evaluation::render_markdown(&r));
        Ok(())
    };
    match &cli.command {
        Command::Synth { .. } => unreachable!("handled above"),
        Command::Ingest => ingest(),
        Command::Featurize => featurize(),
        Command::Evaluate => evaluate(),
        Command::Report => {
            print!("{}", pipeline::report(&config)?);
            Ok(())
        }
        Command::All => {
            ingest()?;
            featurize()?;
            evaluate()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
