use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use policyforge_cli::config::RunConfig;
use policyforge_cli::{commands, Outcome, EXIT_USAGE};

/// Learn, explain and check cache replacement policies.
#[derive(Parser)]
#[command(name = "policyforge", version)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// fifo, lru, plru, mru, lip, srrip-hp, srrip-fp, new1, new2
    #[arg(long, global = true)]
    policy: Option<String>,
    #[arg(long, global = true)]
    assoc: Option<String>,
    /// Conformance suite depth.
    #[arg(long, global = true)]
    k: Option<String>,
    /// `flush` or an MBL reset sequence.
    #[arg(long, global = true)]
    reset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Oracle queries for learn, search nodes for synthesize.
    #[arg(long, global = true)]
    budget: Option<String>,
    /// Wall-clock limit in seconds.
    #[arg(long, global = true)]
    timeout: Option<String>,
    /// simple or extended
    #[arg(long, global = true)]
    template: Option<String>,
    #[arg(long, global = true)]
    max_age: Option<String>,
    #[arg(long, global = true)]
    expr_depth: Option<String>,
    #[arg(long, global = true)]
    repetitions: Option<String>,
    #[arg(long, global = true)]
    noise: Option<String>,
    /// Number of blocks in the query alphabet.
    #[arg(long, global = true)]
    alphabet: Option<String>,
    /// Search threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Parent of timestamped run directories.
    #[arg(long, global = true)]
    runs_dir: Option<String>,
    /// Write artifacts here instead of a fresh run directory.
    #[arg(long, global = true)]
    out: Option<String>,
}

impl Flags {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let flags = [
            ("policy", self.policy.clone()),
            ("assoc", self.assoc.clone()),
            ("k", self.k.clone()),
            ("reset", self.reset.clone()),
            ("seed", self.seed.clone()),
            ("budget", self.budget.clone()),
            ("timeout", self.timeout.clone()),
            ("template", self.template.clone()),
            ("max_age", self.max_age.clone()),
            ("expr_depth", self.expr_depth.clone()),
            ("repetitions", self.repetitions.clone()),
            ("noise", self.noise.clone()),
            ("alphabet", self.alphabet.clone()),
            ("threads", self.threads.clone()),
            ("runs_dir", self.runs_dir.clone()),
            ("out", self.out.clone()),
        ];
        RunConfig::resolve(self.config.as_deref(), &flags)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Answer MBL queries from a batch file, or from stdin line by line.
    Query { file: Option<PathBuf> },
    /// Learn the configured policy from a simulated cache.
    Learn,
    /// Explain an automaton (default: the configured policy) as a program.
    Synthesize { automaton: Option<PathBuf> },
    /// Compare a program with an automaton (default: the configured policy).
    Check {
        program: PathBuf,
        automaton: Option<PathBuf>,
    },
    /// Print outcomes, evictions and content for a block sequence.
    Simulate {
        /// Use this automaton instead of the configured policy.
        #[arg(long)]
        automaton: Option<PathBuf>,
        #[arg(required = true)]
        blocks: Vec<String>,
    },
    /// Print DOT for an automaton or program file, or the configured policy.
    ExportDot { file: Option<PathBuf> },
}

fn run(cli: Cli) -> Outcome {
    let cfg = cli.flags.resolve()?;
    match &cli.command {
        Command::Query { file } => commands::query(&cfg, file.as_deref()),
        Command::Learn => commands::learn_cmd(&cfg),
        Command::Synthesize { automaton } => commands::synthesize(&cfg, automaton.as_deref()),
        Command::Check { program, automaton } => {
            commands::check(&cfg, program, automaton.as_deref())
        }
        Command::Simulate { automaton, blocks } => {
            commands::simulate(&cfg, automaton.as_deref(), blocks)
        }
        Command::ExportDot { file } => commands::export_dot(&cfg, file.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code as u8)
        }
    }
}
