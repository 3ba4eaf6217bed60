use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use popnetcod::csm::PolicyKind;
use popnetcod::experiment::{self, Capacity, Experiment, Seeds};

/// Runs caching-policy sweeps on the network-coded NDN simulator and writes
/// the results as CSV files.
#[derive(Debug, Parser)]
#[command(name = "popnetcod", version)]
struct Args {
    /// Experiment config file. Defaults to the built-in desk-scale sweep.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, overriding the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed count `n` (seeds 0..n) or a comma-separated list.
    #[arg(long)]
    seeds: Option<Seeds>,

    /// Comma-separated policies: popnetcod, lce_lru, lce_nolimit, nocache.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,

    /// Comma-separated capacities in packets, or percentages such as `1.5%`.
    #[arg(long, value_delimiter = ',')]
    capacities: Option<Vec<Capacity>>,

    /// Use the full-scale topology and library (45 routers, 123 clients).
    #[arg(long = "paper-scale")]
    full_scale: bool,

    /// Suppress per-run progress lines.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> popnetcod::Result<()> {
    let mut exp = match (&args.config, args.full_scale) {
        (Some(path), false) => Experiment::load(path)?,
        (Some(path), true) => Experiment::load(path)?.with_full_scale()?,
        (None, false) => Experiment::desk()?,
        (None, true) => Experiment::full_scale()?,
    };
    let mut cfg = exp.config.clone();
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if let Some(p) = args.policies {
        cfg.policies = p;
    }
    if let Some(c) = args.capacities {
        cfg.capacities = c;
    }
    exp = Experiment::new(cfg, exp.topology)?;

    let quiet = args.quiet;
    let results = exp.run_with(|r| {
        if !quiet {
            let s = r.summary();
            eprintln!(
                "{:<12} capacity {:>6} seed {:>3}  hit {}  load reduction {}  goodput {}",
                r.policy.as_str(),
                r.capacity_packets,
                r.seed,
                fmt_opt(s.as_ref().map(|s| s.hit_rate), 4),
                fmt_opt(s.as_ref().map(|s| s.load_reduction), 4),
                fmt_opt(s.as_ref().map(|s| s.goodput_bps / 1e6), 3),
            );
        }
    })?;
    experiment::emit_csv(&results, &exp.config.output_dir)?;

    println!("{:<12} {:>8} {:>6} {:>8} {:>8} {:>10}", "policy", "capacity", "seeds", "hit", "load_red", "goodput_mb");
    for (policy, cap, n, s) in experiment::aggregate(&results) {
        println!(
            "{:<12} {:>8} {:>6} {:>8.4} {:>8.4} {:>10.3}",
            policy.as_str(),
            cap,
            n,
            s.hit_rate,
            s.load_reduction,
            s.goodput_bps / 1e6
        );
    }
    println!("wrote {}", exp.config.output_dir.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.digits$}"))
}
