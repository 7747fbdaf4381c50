use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsq_core::encode::{DEFAULT_MIN_FREQ, DEFAULT_VOCAB_SIZE};
use dsq_core::harness::{DEFAULT_THRESHOLD, DEFAULT_TRAIN_FRACTION};
use dsq_core::net::{
    DEFAULT_BATCH, DEFAULT_DROPOUT, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE, DEFAULT_SEED,
};
use dsq_core::pipeline::{
    cmd_experiment, cmd_ingest, cmd_replay, cmd_run, load_corpus, load_input, ExperimentArgs, ExperimentReport,
    IngestArgs, Outcome, RunArgs, RunReport, DEFAULT_MAX_SEQUENCES,
};
use dsq_core::segment::segment;
use dsq_core::{Dialect, Error, UnitKind};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ndataset format ",
    "DSQE v1",
    "\ncheckpoint format ",
    "DSQM v1"
);

const DIALECTS: [&str; 4] = ["auto", "jeb", "ida", "apktool"];

fn dialect(choice: &str) -> Option<Dialect> {
    Dialect::parse_choice(choice).expect("clap restricts the choices")
}

#[derive(Parser)]
#[command(name = "dsq", version, long_version = LONG_VERSION)]
/// Segment Dalvik disassembly into sequence units and classify apps with an
/// LSTM.
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a corpus, resolve dialects and cache it with a manifest.
    Ingest {
        /// Manifest file or corpus root with benign/ and malicious/.
        input: PathBuf,
        #[arg(long, default_value = "ingested")]
        out: PathBuf,
        #[arg(long, default_value = "auto", value_parser = DIALECTS)]
        dialect: String,
    },
    /// Segment, encode, train and evaluate.
    Run(RunOpts),
    /// Run a synthetic factor experiment: granularity or path-token.
    Experiment(ExperimentOpts),
    /// Re-execute a command from the config.json it wrote.
    Replay {
        config: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sequence units of a corpus as JSON lines.
    Segments {
        input: PathBuf,
        #[arg(long, default_value = "bsm")]
        unit: UnitKind,
        #[arg(long, default_value = "auto", value_parser = DIALECTS)]
        dialect: String,
    },
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunOpts {
    /// Manifest file, ingested cache directory or corpus root.
    input: PathBuf,
    #[arg(long, default_value = "bsm")]
    unit: UnitKind,
    #[arg(long, default_value = "auto", value_parser = DIALECTS)]
    dialect: String,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    vocab_size: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_FREQ)]
    min_freq: usize,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = DEFAULT_DROPOUT)]
    dropout: f64,
    /// Sequences per epoch; 0 disables the cap.
    #[arg(long, default_value_t = DEFAULT_MAX_SEQUENCES)]
    max_sequences: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Args)]
struct ExperimentOpts {
    name: String,
    /// Unit kind of the path-token arms.
    #[arg(long, default_value = "msm")]
    unit: UnitKind,
    /// Applications generated per label.
    #[arg(long)]
    apps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Sequence length for the unit (path-token) or for CSM (granularity).
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run_args(o: RunOpts) -> RunArgs {
    let mut a = RunArgs::new(o.input, o.train.out, o.unit);
    a.dialect = dialect(&o.dialect);
    a.seq_len = o.train.seq_len;
    a.vocab_size = o.vocab_size;
    a.min_freq = o.min_freq;
    a.model.seq_len = a.effective_seq_len();
    a.model.hidden = o.hidden;
    a.model.dropout_rate = o.dropout;
    a.model.epochs = o.train.epochs;
    a.model.batch_size = o.train.batch;
    a.model.learning_rate = o.train.lr;
    a.model.seed = o.train.seed;
    a.max_sequences = (o.max_sequences > 0).then_some(o.max_sequences);
    a.threshold = o.threshold;
    a.train_fraction = o.train_fraction;
    a
}

fn experiment_args(o: ExperimentOpts) -> dsq_core::Result<ExperimentArgs> {
    let mut a = ExperimentArgs::new(&o.name, o.out, o.seed)?;
    a.unit = o.unit;
    let s = &mut a.settings;
    if let Some(n) = o.apps {
        s.corpus.apps_per_label = n;
    }
    if let Some(n) = o.epochs {
        s.model.epochs = n;
    }
    if let Some(n) = o.batch {
        s.model.batch_size = n;
    }
    if let Some(x) = o.lr {
        s.model.learning_rate = x;
    }
    if let Some(l) = o.seq_len {
        let kind = if o.name == "granularity" { UnitKind::Csm } else { o.unit };
        s.seq_lens.insert(kind, l);
    }
    Ok(a)
}

fn print_run(r: &RunReport) {
    let m = &r.sequences.metrics;
    let a = &r.apps.metrics;
    println!(
        "{} {}: {} train / {} test sequences, vocab {}",
        r.unit, r.dialect, r.train_sequences, r.test_sequences, r.config.vocab_size
    );
    println!("sequence level: TPR {:.4} FPR {:.4} ACC {:.4}", m.tpr, m.fpr, m.acc);
    println!("app level:      TPR {:.4} FPR {:.4} ACC {:.4}", a.tpr, a.fpr, a.acc);
}

fn print_experiment(r: &ExperimentReport) {
    println!("{:<14} {:>8} {:>8} {:>8} {:>12} {:>8}", "arm", "TPR", "FPR", "ACC", "mean tokens", "n");
    for row in r.csv_rows() {
        println!(
            "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>12.2} {:>8}",
            row.kind, row.tpr, row.fpr, row.acc, row.mean_tokens, row.n_sequences
        );
    }
}

fn print_outcome(o: &Outcome) {
    match o {
        Outcome::Ingest(s) => {
            for (dialect, n) in &s.by_dialect {
                println!("{dialect}\t{n}");
            }
            println!("total\t{}", s.files);
            println!("digest\t{}", s.digest);
        }
        Outcome::Run(r) => print_run(r),
        Outcome::Experiment(r) => print_experiment(r),
    }
}

fn segments(input: PathBuf, unit: UnitKind, dialect: Option<Dialect>) -> dsq_core::Result<()> {
    let docs = load_corpus(&load_input(&input)?, dialect)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for doc in &docs {
        for u in segment(doc, unit) {
            serde_json::to_writer(&mut out, &u)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn dispatch(command: Command) -> dsq_core::Result<()> {
    let outcome = match command {
        Command::Ingest { input, out, dialect: d } => Outcome::Ingest(cmd_ingest(&IngestArgs {
            input,
            out,
            dialect: dialect(&d),
        })?),
        Command::Run(o) => Outcome::Run(Box::new(cmd_run(&run_args(o))?)),
        Command::Experiment(o) => Outcome::Experiment(Box::new(cmd_experiment(&experiment_args(o)?)?)),
        Command::Replay { config, out } => cmd_replay(&config, out)?,
        Command::Segments { input, unit, dialect: d } => return segments(input, unit, dialect(&d)),
    };
    print_outcome(&outcome);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn version_text_matches_formats() {
        let expect = format!(
            "DSQE v{}\ncheckpoint format DSQM v{}",
            dsq_core::encode::DATASET_VERSION,
            dsq_core::net::CHECKPOINT_VERSION
        );
        assert!(LONG_VERSION.ends_with(&expect));
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ism_defaults_to_length_15() {
        let cli = Cli::parse_from(["dsq", "run", "x", "--unit", "ism"]);
        let Command::Run(o) = cli.command else { panic!() };
        let a = run_args(o);
        assert_eq!(a.effective_seq_len(), 15);
        assert_eq!(a.model.seq_len, 15);
        let cli = Cli::parse_from(["dsq", "run", "x", "--unit", "ism", "--seq-len", "9"]);
        let Command::Run(o) = cli.command else { panic!() };
        assert_eq!(run_args(o).effective_seq_len(), 9);
    }
}
