use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vodsim::cli;
use vodsim::{parse_config, Policy, RunConfig};

#[derive(Parser)]
#[command(
    name = "vodsim",
    version,
    about = "Proxy prefix-cache simulator for video on demand"
)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// key = value config file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    policy: Option<PolicyArg>,
    #[arg(long, global = true)]
    multicast: Option<Switch>,
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// N or an inclusive range N..M
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory (falls back to the config, then $VODSIM_OUT)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulated seconds
    #[arg(long, global = true)]
    duration: Option<String>,
    /// Check conservation invariants after every event
    #[arg(long, global = true)]
    self_check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One run per seed
    Run,
    /// Both policies, both delivery modes, paired by seed
    Compare,
    /// Render charts from existing CSVs
    Plot {
        /// Directory holding trace CSVs (default: the output directory)
        input: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Dynamic,
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn load(args: &Args) -> vodsim::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| vodsim::Error::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = args.policy {
        cfg.set("policy", policy_name(p))?;
    }
    if let Some(m) = args.multicast {
        cfg.set(
            "multicast",
            if matches!(m, Switch::On) { "on" } else { "off" },
        )?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(seeds) = &args.seeds {
        cfg.set("seeds", seeds)?;
    }
    if let Some(d) = &args.duration {
        cfg.set("duration", d)?;
    }
    if args.self_check {
        cfg.set("self_check", "on")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn policy_name(p: PolicyArg) -> &'static str {
    match p {
        PolicyArg::Dynamic => "dynamic",
        PolicyArg::Static => "static",
    }
}

fn execute(args: &Args) -> vodsim::Result<()> {
    let cfg = load(args)?;
    let out = cli::output_dir(args.out.as_deref(), &cfg);
    match &args.command {
        Command::Run => {
            for line in cli::cmd_run(&cfg, &out)? {
                println!("{line}");
            }
        }
        Command::Compare => {
            let policies = match args.policy {
                Some(p) => vec![policy_name(p).parse::<Policy>()?],
                None => vec![Policy::Dynamic, Policy::Static],
            };
            let modes = match args.multicast {
                Some(m) => vec![matches!(m, Switch::On)],
                None => vec![true, false],
            };
            for line in cli::cmd_compare(&cfg, &policies, &modes, &out)? {
                println!("{line}");
            }
            println!("summary={}", out.join(cli::SUMMARY_FILE).display());
        }
        Command::Plot { input } => {
            let input = input.clone().unwrap_or_else(|| out.clone());
            for path in cli::cmd_plot(&input, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vodsim: {e}");
            ExitCode::FAILURE
        }
    }
}
