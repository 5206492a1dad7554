use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commitlab::overhead::OverheadParams;
use commitlab::scenario::{self, Format, OverheadSpec, Report, RunOptions, ScenarioFile};
use commitlab::{Error, Result};

#[derive(Parser)]
#[command(name = "commitlab", version, about = "Run commitment-attack scenarios and equilibrium checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format; defaults to the scenario's `output.format`, else text.
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
    /// Bound on joint profiles the equilibrium search may enumerate.
    #[arg(long, default_value_t = 1_000_000, global = true)]
    max_joint_actions: u128,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file or bundled scenario id.
    Run {
        scenario: String,
        /// Write the simulation trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// List bundled scenarios, plus those in --dir.
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Run every *.json scenario in a directory in parallel.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Overhead table for one aggregator configuration.
    Overhead {
        #[arg(long, default_value_t = 16)]
        n_agg: u64,
        #[arg(long, default_value_t = 8)]
        n_limit: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn load(arg: &str) -> Result<ScenarioFile> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path)?
    } else if let Some(t) = scenario::bundled(arg) {
        t.to_string()
    } else {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{arg}: no such file or bundled scenario"),
        )));
    };
    scenario::parse_scenario(&text)
}

fn emit(file: &ScenarioFile, report: &Report, format: Option<Format>) -> Result<()> {
    let out = file.output.clone().unwrap_or_default();
    let text = report.render(format.or(out.format).unwrap_or_default());
    match out.path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(arg: &str, trace: Option<PathBuf>, c: &Common) -> Result<()> {
    let file = load(arg)?;
    let opts = RunOptions { seed: c.seed, trace, max_joint_actions: c.max_joint_actions };
    let report = scenario::run_scenario(&file, &opts)?;
    emit(&file, &report, c.format)
}

fn batch(dir: &Path, c: &Common) -> Result<i32> {
    let opts = RunOptions { seed: c.seed, trace: None, max_joint_actions: c.max_joint_actions };
    let format = c.format.unwrap_or_default();
    let mut code = 0;
    let mut json = Vec::new();
    for (path, res) in scenario::run_batch(dir, &opts)? {
        match res {
            Ok(r) if format == Format::Json => json.push(serde_json::to_value(&r).expect("report serializes")),
            Ok(r) => println!("== {}\n{}", path.display(), r.render_text()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                code = code.max(e.exit_code());
            }
        }
    }
    if format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&json).expect("reports serialize"));
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { scenario, trace, common } => run(&scenario, trace, &common).map(|_| 0),
        Cmd::List { dir } => scenario::list_scenarios(dir.as_deref()).map(|items| {
            let width = items.iter().map(|(id, _)| id.len()).max().unwrap_or(0);
            for (id, desc) in items {
                println!("{id:width$}  {desc}");
            }
            0
        }),
        Cmd::Batch { dir, common } => batch(&dir, &common),
        Cmd::Overhead { n_agg, n_limit, format } => {
            let file = ScenarioFile {
                scenario: "overhead".into(),
                description: String::new(),
                game: None,
                tendermint: None,
                quantify: None,
                overhead: Some(OverheadSpec { grid: vec![OverheadParams::with_agg(n_agg, n_limit)] }),
                profile: None,
                checks: Vec::new(),
                seed: None,
                output: None,
            };
            scenario::run_scenario(&file, &RunOptions::default()).map(|r| {
                print!("{}", r.render(format));
                0
            })
        }
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
