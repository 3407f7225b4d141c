use std::path::PathBuf;
use std::process::ExitCode;

use agreelab::config::{Overrides, RunConfig};
use agreelab::error::{AppError, AppResult};
use agreelab::io::traces::{trace_rows, HEADER};
use agreelab::pipeline::{self, parse_mask, Stage, Workspace};
use agreelab_core::lstm::{forward_sentence, AblationMask, UnitRef};
use clap::{Args, Parser, Subcommand};

/// Number-agreement mechanisms in LSTM language models: data generation,
/// training and analysis.
#[derive(Parser)]
#[command(name = "agreelab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file, or a run manifest to reproduce.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Units ablated in evaluation, e.g. "L2-U17,L2-U42".
    #[arg(long, global = true)]
    mask: Option<String>,
    /// Analyse this checkpoint instead of training one.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Override one config value: `dotted.key=value` (value parsed as JSON,
    /// else taken as a string). Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training corpus, agreement tasks and depth dataset.
    GenData,
    /// Train the language model.
    Train {
        /// Continue from this checkpoint's saved optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Agreement accuracy per task and condition.
    Eval,
    /// Single-unit ablation sweep and long-range unit identification.
    Ablate,
    /// Permutation tests of group ablations.
    PermTest,
    /// Decoding across time and short-range unit identification.
    Gat,
    /// Syntactic-depth regression and syntax units.
    Depth,
    /// Efferent and afferent weights, mutual inhibition.
    Connectivity,
    /// Gate and state traces. With --sentence, dump raw traces for one
    /// sentence as CSV to stdout.
    Traces {
        #[arg(long)]
        sentence: Option<String>,
        /// Units to dump; defaults to every unit.
        #[arg(long)]
        units: Option<String>,
    },
    /// Run every stage, skipping those already complete.
    Pipeline {
        /// Print the stage plan only.
        #[arg(long)]
        dry_run: bool,
        /// Rerun complete stages too.
        #[arg(long)]
        force: bool,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn resolve(common: &Common) -> AppResult<RunConfig> {
    let mut set = common.set.clone();
    if let Some(m) = &common.mask {
        let units = parse_mask(m)?;
        set.push(format!(
            "analysis.eval_mask={}",
            serde_json::to_string(&units).expect("json")
        ));
    }
    if let Some(c) = &common.checkpoint {
        set.push(format!(
            "model.checkpoint={}",
            serde_json::to_string(c).expect("json")
        ));
    }
    RunConfig::resolve(
        common.config.as_deref(),
        &Overrides {
            seed: common.seed,
            out: common.out.clone(),
            jobs: common.jobs,
            set,
        },
    )
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn raw_traces(ws: &Workspace, sentence: &str, units: Option<&str>) -> AppResult<()> {
    let (model, vocab) = ws.load_model()?;
    let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
    let ids = vocab.encode(&words)?;
    let mask = AblationMask::of(ws.cfg.analysis.eval_mask.iter().copied())
        .with_mode(ws.cfg.analysis.ablation_mode);
    let out = forward_sentence(&model, &ids, vocab.eos(), &mask, true)?;
    let trace = out.trace.expect("trace was requested");
    let units = match units {
        Some(s) => UnitRef::parse_list(s)?,
        None => UnitRef::all(&model.dims),
    };
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    let io_err = |e: csv::Error| AppError::Config(format!("writing CSV: {e}"));
    w.write_record(HEADER).map_err(io_err)?;
    for row in trace_rows(&trace, &vocab, &units) {
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| AppError::io("<stdout>", e))?;
    Ok(())
}

fn run(cli: Cli) -> AppResult<()> {
    let cfg = resolve(&cli.common)?;
    let stage = |s: Stage| -> AppResult<()> {
        let ws = Workspace::new(cfg.clone())?;
        pipeline::run_stages(&ws, &[s], true, &mut |l| log(l))?;
        Ok(())
    };
    match cli.command {
        Command::GenData => stage(Stage::GenData),
        Command::Train { resume } => {
            let mut ws = Workspace::new(cfg)?;
            ws.resume_from = resume;
            pipeline::run_stages(&ws, &[Stage::Train], true, &mut |l| log(l))?;
            Ok(())
        }
        Command::Eval => stage(Stage::Eval),
        Command::Ablate => stage(Stage::Ablate),
        Command::PermTest => stage(Stage::PermTest),
        Command::Gat => stage(Stage::Gat),
        Command::Depth => stage(Stage::Depth),
        Command::Connectivity => stage(Stage::Connectivity),
        Command::Traces { sentence, units } => match sentence {
            Some(s) => raw_traces(&Workspace::new(cfg)?, &s, units.as_deref()),
            None => stage(Stage::Traces),
        },
        Command::Pipeline { dry_run, force } => {
            let ws = Workspace::new(cfg)?;
            if dry_run {
                println!("run directory {}", ws.root.display());
                for line in pipeline::plan(&ws) {
                    println!("{line}");
                }
                return Ok(());
            }
            let summary = pipeline::run_stages(&ws, &Stage::ALL, force, &mut |l| log(l))?;
            let problems = pipeline::cross_reference_problems(&ws)?;
            for p in &problems {
                log(&format!("warning: {p}"));
            }
            let ran = summary
                .stages
                .iter()
                .filter(|(_, o)| *o == pipeline::StageOutcome::Ran)
                .count();
            log(&format!(
                "{ran} stages ran, report at {}",
                ws.path(pipeline::paths::INDEX_HTML).display()
            ));
            Ok(())
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("json"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
