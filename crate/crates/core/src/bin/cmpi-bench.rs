use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cmpi::bench::{self, parse_sizes, BenchConfig, Metric, Pattern};
use cmpi::runtime::{RankContext, RuntimeConfig};
use cmpi::units::parse_size;

/// Latency and bandwidth sweeps; run under cmpi-run with 2 x pairs ranks.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Args {
    /// one_sided_get, one_sided_put, two_sided (alias pingpong)
    pattern: Pattern,
    /// latency or bandwidth
    #[arg(default_value = "latency")]
    metric: Metric,
    /// Message sizes, `a:b` in powers of two (default 1:8M)
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long, value_parser = parse_size)]
    cell_size: Option<u64>,
    /// Write rows to this CSV file instead of printing a table
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Messages in flight per bandwidth iteration
    #[arg(long)]
    window: Option<usize>,
    /// Payload pattern seed
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: Args) -> cmpi::Result<()> {
    let (rank, nranks, mut rt) = RuntimeConfig::from_env()?;
    if let Some(c) = args.cell_size {
        rt.cell_size = c as usize;
    }
    let mut cfg = BenchConfig::new(args.pattern, args.metric);
    cfg.pairs = (nranks / 2).max(1);
    cfg.cell_size = rt.cell_size;
    if let Some(s) = args.sizes {
        cfg.sizes = parse_sizes(&s)?;
    }
    if let Some(w) = args.warmup {
        cfg.warmup = w;
    }
    if let Some(i) = args.iters {
        cfg.iters = i;
    }
    if let Some(w) = args.window {
        cfg.window = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate(nranks)?;
    let mut ctx = RankContext::init(rank, nranks, rt)?;
    let records = bench::run(&mut ctx, &cfg)?;
    ctx.finalize()?;
    if rank == 0 {
        match args.csv {
            Some(path) => bench::emit_csv(&records, &path)?,
            None => {
                let unit = if cfg.metric == Metric::Latency { "us" } else { "MB/s" };
                println!(
                    "# {} {} pairs={} cell={}",
                    cfg.pattern, cfg.metric, cfg.pairs, cfg.cell_size
                );
                println!("# size\t{unit}");
                for r in &records {
                    println!("{}\t{:.2}", r.size, r.value);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench[{}]: {e}", std::env::var("CMPI_RANK").unwrap_or_default());
            ExitCode::from(1)
        }
    }
}
