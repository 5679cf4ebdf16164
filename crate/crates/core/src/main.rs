use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linproc_ustat::cli::{self, Auto, Command, Overrides, RunConfig};
use linproc_ustat::Error;

#[derive(Parser)]
#[command(name = "linproc", version, about = "U-statistic estimation of E[h(Y_0)] for linear processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a path and write it as CSV.
    Simulate(Common),
    /// Estimate E[h(Y_0)] from a path CSV (or a simulated path).
    Estimate(Common),
    /// Run the Monte Carlo comparison study.
    Study(Common),
    /// Compare a numerical directional derivative with the influence function.
    GradientCheck(Common),
    /// Run the tiny-instance oracle suite.
    Selftest(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tuple-sampling partitions (part of the reproducibility key).
    #[arg(long)]
    partitions: Option<usize>,
    /// Worker threads (does not affect results).
    #[arg(long)]
    threads: Option<usize>,
    /// Model parameter, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    /// Pre-observations, or "auto".
    #[arg(long)]
    r: Option<Auto<usize>>,
    /// U-statistic order, or "auto".
    #[arg(long)]
    m: Option<Auto<usize>>,
    /// Tuple draws B, or "auto".
    #[arg(long)]
    draws: Option<Auto<u64>>,
    #[arg(long)]
    replications: Option<usize>,
    /// Path CSV for `estimate`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(cli::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (command, common) = match args.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::Study(c) => (Command::Study, c),
        Cmd::GradientCheck(c) => (Command::GradientCheck, c),
        Cmd::Selftest(c) => (Command::Selftest, c),
    };
    let mut cfg = match &common.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => RunConfig::default(),
    };
    if let Some(c) = cfg.command {
        if c != command {
            eprintln!("note: config says {c:?}, running {command:?}");
        }
    }
    cfg.command = Some(command);
    cfg.apply(&Overrides {
        seed: common.seed,
        partitions: common.partitions,
        theta: common.theta.clone(),
        n: common.n,
        r: common.r,
        m: common.m,
        draws: common.draws,
        replications: common.replications,
        input: common.input.clone(),
        out: common.out.clone(),
    });
    if let Some(t) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: {e}");
        }
    }

    let outcome = match command {
        Command::Simulate => cli::cmd_simulate(&cfg).map(|a| (a, true)),
        Command::Estimate => cli::cmd_estimate(&cfg).map(|(a, r)| {
            println!("kappa_hat = {} (se {})", r.kappa_hat, r.se_plugin);
            (a, true)
        }),
        Command::Study => cli::cmd_study(&cfg).map(|a| {
            if let Some((_, csv)) = a.iter().find(|(n, _)| n.ends_with(".csv")) {
                print!("{csv}");
            }
            (a, true)
        }),
        Command::GradientCheck => cli::cmd_gradient_check(&cfg).map(|(a, reports)| {
            for r in &reports {
                println!("{}: slope {} target {} rel_error {}", r.direction, r.slope, r.target, r.rel_error);
            }
            (a, true)
        }),
        Command::Selftest => {
            let (a, outcomes) = cli::cmd_selftest(&cfg);
            let ok = outcomes.iter().all(|o| o.passed);
            for o in &outcomes {
                println!("{} {} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            Ok((a, ok))
        }
    };
    let (artifacts, ok) = match outcome {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    match cli::write_artifacts(&cfg.output.dir, &artifacts) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => return fail(&e),
    }
    if ok {
        ExitCode::from(cli::EXIT_OK as u8)
    } else {
        ExitCode::from(cli::EXIT_SELFTEST as u8)
    }
}
