//! `pbr`: benchmark runner, external-command tuner and session front end.

mod tune;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use pbr_core::base::Hyperparams;
use pbr_core::bench::{run_benchmark, SuiteSpec};
use pbr_core::dsl::{emit_code, program_from_model};
use pbr_core::learners::{
    learn_in_rounds, Learner, Model, RewardOracle, Template, TreeInit, MAX_TREE_HEIGHT,
};
use pbr_core::session::{serve, Server, Session};
use pbr_core::tree::AnnealSchedule;
use pbr_core::Error;

use tune::ChildOracle;

const EXIT_USAGE: u8 = 2;
const EXIT_CORRUPT: u8 = 3;
const EXIT_ORACLE: u8 = 4;

const BUNDLED_SUITES: &[(&str, &str)] = &[
    ("table1", include_str!("../suites/table1.suite")),
    ("fig7", include_str!("../suites/fig7.suite")),
    ("parrot", include_str!("../suites/parrot.suite")),
    ("thermostat", include_str!("../suites/thermostat.suite")),
];

#[derive(Parser)]
#[command(
    name = "pbr",
    version,
    about = "Learn small decision functions from black-box rewards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark suite and write results.csv plus reward curves.
    Bench {
        /// Suite file; the bundled names table1, fig7, parrot and thermostat
        /// are accepted when no such file exists.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Learn against an external reward command and print the learned code.
    Tune(TuneArgs),
    /// Answer newline-delimited JSON requests on stdin.
    Serve {
        #[arg(long)]
        store: PathBuf,
    },
    /// Print the learned code of one instance.
    Emit {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: u64,
    },
    /// List the instances of a store.
    Inspect {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    Const,
    Linear,
    Tree,
}

#[derive(clap::Args)]
struct TuneArgs {
    #[arg(long, value_enum, default_value = "const")]
    template: TemplateArg,
    #[arg(long, default_value_t = 2)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    rounds: u64,
    #[arg(long, default_value_t = Hyperparams::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = Hyperparams::DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    two_point: bool,
    #[arg(long, env = "PBR_SEED", default_value_t = 0)]
    seed: u64,
    /// Shell command speaking the line protocol on stdin/stdout.
    #[arg(long)]
    reward_cmd: String,
    /// Seconds to wait for each line from the reward command.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Where the partial model is written if the reward command fails.
    #[arg(long, default_value = "pbr-recovery.c")]
    recovery: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Store errors: corrupt data is 3, everything else a usage error.
fn store_failure(e: Error) -> Failure {
    match e {
        Error::Format(_) => Failure::new(EXIT_CORRUPT, e.to_string()),
        _ => Failure::new(EXIT_USAGE, e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench { suite, out, jobs } => cmd_bench(&suite, out, jobs),
        Command::Tune(args) => cmd_tune(&args),
        Command::Serve { store } => cmd_serve(&store),
        Command::Emit { store, id } => cmd_emit(&store, id),
        Command::Inspect { store } => cmd_inspect(&store),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pbr: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_suite(path: &Path) -> Result<SuiteSpec, Failure> {
    if !path.exists() {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let name = path.to_str().unwrap_or_default();
        if let Some((_, text)) = BUNDLED_SUITES.iter().find(|(n, _)| {
            *n == name || (*n == stem && path.extension().is_some_and(|e| e == "suite"))
        }) {
            return SuiteSpec::from_toml_str(text)
                .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()));
        }
        return Err(Failure::new(
            EXIT_USAGE,
            format!("suite {} not found", path.display()),
        ));
    }
    SuiteSpec::from_path(path)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn cmd_bench(suite: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<(), Failure> {
    let spec = load_suite(suite)?;
    let out = out
        .or_else(|| spec.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let results =
        run_benchmark(&spec, &out, jobs).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let solved = results.iter().filter(|r| r.solved).count();
    let failed: Vec<_> = results.iter().filter(|r| r.error.is_some()).collect();
    println!(
        "{}: {} runs, {} solved, {} failed; results in {}",
        if spec.name.is_empty() {
            "suite"
        } else {
            &spec.name
        },
        results.len(),
        solved,
        failed.len(),
        out.join("results.csv").display()
    );
    for r in &failed {
        eprintln!(
            "{} {} seed {}: {}",
            r.problem,
            r.template,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_ORACLE,
            format!("{} runs failed", failed.len()),
        ))
    }
}

fn render(model: &Model, p: usize) -> Result<String, Failure> {
    emit_code(&program_from_model(model, p), None)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn cmd_tune(args: &TuneArgs) -> Result<(), Failure> {
    let usage = |e: Error| Failure::new(EXIT_USAGE, e.to_string());
    let template = match args.template {
        TemplateArg::Const => Template::Const,
        TemplateArg::Linear => Template::Linear,
        TemplateArg::Tree => {
            if args.height > MAX_TREE_HEIGHT {
                return Err(Failure::new(
                    EXIT_USAGE,
                    format!(
                        "--height {} exceeds the cap of {MAX_TREE_HEIGHT}",
                        args.height
                    ),
                ));
            }
            Template::Tree {
                height: args.height,
            }
        }
    };
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(Failure::new(EXIT_USAGE, "--timeout must be positive"));
    }
    let p = if template == Template::Const {
        0
    } else {
        args.p
    };
    let mut hp = Hyperparams::defaults(args.m);
    hp.delta = args.delta;
    hp.eta = args.eta;
    hp.two_point = args.two_point;
    hp.max_rounds = args.rounds;
    hp.seed = args.seed;
    let learner = Learner::build(
        template,
        p,
        args.m,
        hp,
        None,
        TreeInit::default(),
        AnnealSchedule::default(),
    )
    .map_err(usage)?;
    let mut oracle = ChildOracle::new(&args.reward_cmd, p, Duration::from_secs_f64(args.timeout));
    match learn_in_rounds(learner, &mut oracle, None) {
        Ok(outcome) => {
            print!("{}", render(&outcome.model, p)?);
            eprintln!(
                "{} rounds, {} queries",
                outcome.trace.len(),
                oracle.query_count()
            );
            Ok(())
        }
        Err(aborted) => {
            let code = render(&aborted.outcome.model, p)?;
            fs::write(&args.recovery, code).map_err(|e| {
                Failure::new(
                    EXIT_ORACLE,
                    format!(
                        "{}; writing {} also failed: {e}",
                        aborted.error,
                        args.recovery.display()
                    ),
                )
            })?;
            Err(Failure::new(
                EXIT_ORACLE,
                format!(
                    "{} after {} rounds; partial model written to {}",
                    aborted.error,
                    aborted.outcome.trace.len(),
                    args.recovery.display()
                ),
            ))
        }
    }
}

fn cmd_serve(store: &Path) -> Result<(), Failure> {
    let session = Session::open_or_create(store).map_err(store_failure)?;
    let mut server = Server::new(session);
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(&mut server, stdin.lock(), BufWriter::new(stdout.lock()))
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn open_existing(store: &Path) -> Result<Session, Failure> {
    Session::open(store).map_err(|e| match e {
        Error::Io(msg) => Failure::new(EXIT_USAGE, format!("{}: {msg}", store.display())),
        other => store_failure(other),
    })
}

fn cmd_emit(store: &Path, id: u64) -> Result<(), Failure> {
    let session = open_existing(store)?;
    let instance = session.store().instance(id).map_err(store_failure)?;
    print!("{}", instance.expr_tree().map_err(store_failure)?);
    Ok(())
}

fn cmd_inspect(store: &Path) -> Result<(), Failure> {
    // a store that was never written is empty
    let summary = if store.exists() {
        open_existing(store)?.store().summary()
    } else {
        Vec::new()
    };
    let mut out = io::stdout().lock();
    let write = |out: &mut dyn Write, s: String| {
        writeln!(out, "{s}").map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
    };
    write(&mut out, format!("{} instances", summary.len()))?;
    for s in summary {
        write(
            &mut out,
            format!(
                "{}\t{}\t{}\tversion {}\t{} invocations\t{} rewarded",
                s.id, s.param_name, s.template, s.model_version, s.invocations, s.rewarded
            ),
        )?;
    }
    Ok(())
}
