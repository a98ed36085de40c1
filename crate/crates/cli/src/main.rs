use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rollhol::config::RunConfig;
use rollhol::manifold::registry::Registry;
use rollhol::report::{self, CommandOutput, PathFile};
use rollhol::suites::SuiteRegistry;

/// Holonomy of the rolling connection against space forms.
#[derive(Parser)]
#[command(name = "rollhol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the rolling holonomy algebra and classify it.
    Classify(Common),
    /// Roll along a path and report the final state and drift.
    Roll {
        #[command(flatten)]
        common: Common,
        /// JSON file with `waypoints` or a `loop` description.
        #[arg(long)]
        path: PathBuf,
        /// JSON-lines trajectory output; defaults beside `--out`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run a verification suite (converse, forward, lemmas).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: String,
    },
    /// List manifold kinds and verification suites.
    List,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override the curvature parameter of the target space form.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for CSV plot dumps (columns t,quantity,value).
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> rollhol::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(s) = self.seed {
            cfg.sampling.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes via a temporary sibling and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

fn emit(common: &Common, out: &CommandOutput, trajectory: Option<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(&out.report)? + "\n";
    match &common.out {
        Some(p) => write_atomic(p, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if let Some(dir) = &common.plot_dir {
        for (stem, rows) in &out.plots {
            write_atomic(&dir.join(format!("{stem}.csv")), &report::csv(rows))?;
        }
    }
    if let Some(lines) = &out.trajectory {
        let target = trajectory.or_else(|| common.out.as_ref().map(|p| p.with_extension("trajectory.jsonl")));
        if let Some(t) = target {
            let mut body = lines.join("\n");
            body.push('\n');
            write_atomic(&t, &body)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<bool, rollhol::Error> {
    let io = |e: anyhow::Error| rollhol::Error::Io(std::io::Error::other(format!("{e:#}")));
    match cli.command {
        Command::List => {
            println!("manifold kinds:");
            for (k, s) in Registry::with_builtins().kinds() {
                println!("  {k:<16} {s}");
            }
            println!("verify suites:");
            for (k, s) in SuiteRegistry::default().names() {
                println!("  {k:<16} {s}");
            }
            Ok(true)
        }
        Command::Classify(common) => {
            let out = report::cmd_classify(&common.load()?)?;
            emit(&common, &out, None).map_err(io)?;
            Ok(out.success)
        }
        Command::Roll { common, path, trajectory } => {
            let cfg = common.load()?;
            let out = report::cmd_roll(&cfg, &PathFile::load(&path)?)?;
            emit(&common, &out, trajectory).map_err(io)?;
            Ok(out.success)
        }
        Command::Verify { common, suite } => {
            let cfg = common.load()?;
            SuiteRegistry::default().get(&suite)?;
            let out = report::cmd_verify(&cfg, &suite)?;
            emit(&common, &out, None).map_err(io)?;
            Ok(out.success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rollhol: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
