//! Front end for the `wkam` binary: configuration, the matrix cache and the
//! `alpha`, `verify` and `barrier` commands.

pub mod commands;
pub mod config;
pub mod store;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Overrides, EXIT_OK};
use config::{CachePolicy, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "wkam", version, about = "Weak KAM computations on discretized tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cache policy (overrides cache.policy).
    #[arg(long, value_name = "POLICY", value_parser = ["rw", "ro", "off"])]
    pub cache: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical value over a sweep of cohomology classes.
    Alpha(Common),
    /// Run the theorem checks on a pair.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Succeed only when some check fails (negative controls).
        #[arg(long)]
        expect_fail: bool,
        /// Coarse and fine points per axis (overrides verify.resolutions).
        #[arg(long, value_delimiter = ',', value_name = "N1,N2")]
        resolutions: Option<Vec<usize>>,
    },
    /// Barrier functions and Aubry/Mañé flags per grid point.
    Barrier(Common),
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        out: c.out.clone(),
        cache: c.cache.as_deref().map(|s| s.parse::<CachePolicy>().expect("validated by clap")),
        ..Overrides::default()
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (common, mut o) = match &cli.command {
        Command::Alpha(c) | Command::Barrier(c) => (c, Overrides::default()),
        Command::Verify { common, expect_fail, resolutions } => (
            common,
            Overrides { expect_fail: *expect_fail, resolutions: resolutions.clone(), ..Overrides::default() },
        ),
    };
    let base = overrides(common);
    o.out = base.out;
    o.cache = base.cache;
    let config = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return commands::exit_code(&e);
        }
    };
    let ctx = Context::new(config, &o);
    let result = match &cli.command {
        Command::Alpha(_) => commands::alpha(&ctx).map(|p| {
            println!("wrote {}", p.display());
            EXIT_OK
        }),
        Command::Barrier(_) => commands::barrier(&ctx).map(|p| {
            println!("wrote {}", p.display());
            EXIT_OK
        }),
        Command::Verify { .. } => commands::verify(&ctx, &o).map(|v| {
            print!("{}", commands::summary_table(&v.reports));
            println!("wrote {}", v.path.display());
            v.exit_code
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        commands::exit_code(&e)
    })
}
