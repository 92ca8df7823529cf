mod args;
mod commands;
mod edit_script;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure of a subcommand, carrying the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(todflow::Error),
    Io { path: PathBuf, source: io::Error },
    /// A provider failure at one turn; always exits 1.
    Turn { traj: String, turn: usize, message: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use todflow::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(
                E::FileNotFound(_)
                | E::Config(_)
                | E::Parse { .. }
                | E::Schema { .. }
                | E::GraphFormat { .. }
                | E::Vocabulary(_)
                | E::Edit(_),
            ) => 2,
            CliError::Core(_) => 1,
            CliError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            CliError::Io { .. } | CliError::Turn { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Turn { traj, turn, message } => write!(f, "trajectory `{traj}` turn {turn}: {message}"),
        }
    }
}

impl From<todflow::Error> for CliError {
    fn from(e: todflow::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Core(todflow::Error::FileNotFound(path.to_path_buf()))
        } else {
            CliError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Condition(a) => commands::condition(a),
        Command::Eval(a) => commands::eval(a),
        Command::Export(a) => commands::export(a),
        Command::Synth(a) => commands::synth(a),
        Command::Edit(a) => commands::edit(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
