use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sleepscan::detectors::DefectType;
use sleepscan::report::{self, ContractReport, CorpusLabel, OutputFormat, RunConfig};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sleepscan", version, about = "Detect sleepminting defects in compiled ERC-721 contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze compiler artifacts (standard-JSON files, directories of them, or loose solc output directories).
    Analyze {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Wall-clock limit per contract, in seconds.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
        #[arg(long, default_value_t = 3)]
        loop_bound: u32,
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
        #[arg(long, default_value_t = 5_000)]
        max_paths: usize,
        /// Per-query solver limit, in seconds.
        #[arg(long, default_value_t = 10)]
        solver_timeout: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Comma-separated subset of PA, UF, OI, ETE.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Analyze every callable function instead of only Transfer emitters.
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score saved JSON reports against a labels file.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        /// Directory of report files (each a report or a list of reports).
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the instruction listing with source snippets.
    Disasm { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze { paths, timeout, loop_bound, max_steps, max_paths, solver_timeout, format, only, out, no_prune, jobs } => {
            let enabled: BTreeSet<DefectType> = if only.is_empty() {
                DefectType::ALL.into_iter().collect()
            } else {
                only.iter().map(|s| s.parse()).collect::<Result<_, String>>().map_err(anyhow::Error::msg)?
            };
            let config = RunConfig {
                inputs: paths,
                timeout_seconds: timeout,
                loop_bound,
                max_steps,
                max_paths,
                solver_query_seconds: solver_timeout,
                enabled_detectors: enabled,
                output_format: match format {
                    Format::Text => OutputFormat::Text,
                    Format::Json => OutputFormat::Json,
                },
                prune: !no_prune,
                jobs,
            };
            let reports = report::run(&config)?;
            let text = match config.output_format {
                OutputFormat::Json => serde_json::to_string_pretty(&reports)? + "\n",
                OutputFormat::Text => report::render_text(&reports),
            };
            write_output(out.as_deref(), &text)?;
            let failed = reports.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} input(s) could not be analyzed");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { labels, reports, format } => {
            let raw = std::fs::read_to_string(&labels).with_context(|| format!("reading {}", labels.display()))?;
            let labels: Vec<CorpusLabel> = serde_json::from_str(&raw).context("parsing labels")?;
            let reports = load_reports(&reports)?;
            let eval = report::evaluate_corpus(&labels, &reports)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&eval)?),
                Format::Text => print!("{}", report::render_evaluation(&eval)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Disasm { path } => {
            let unit = sleepscan::ingestion::load_compilation(&path)?;
            print!("{}", sleepscan::disasm::dump(&unit.instructions, &unit.source_map, &unit.sources));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_reports(dir: &Path) -> Result<Vec<ContractReport>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let raw = std::fs::read_to_string(&f)?;
        let value: serde_json::Value = serde_json::from_str(&raw).with_context(|| format!("parsing {}", f.display()))?;
        if value.is_array() {
            out.extend(serde_json::from_value::<Vec<ContractReport>>(value)?);
        } else {
            out.push(serde_json::from_value(value)?);
        }
    }
    Ok(out)
}
