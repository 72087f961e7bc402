use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cmpi::device::{Device, DeviceConfig, DEFAULT_CAPACITY};
use cmpi::launch::{launch, LaunchConfig};
use cmpi::runtime::default_device_path;
use cmpi::units::parse_size;

/// Runs a command as N ranks sharing one emulated memory device.
#[derive(Parser, Debug)]
#[command(name = "cmpi-run", version)]
struct Args {
    /// Number of ranks
    #[arg(short = 'n', long = "nranks", value_parser = clap::value_parser!(u16).range(1..=63))]
    nranks: u16,
    /// Backing file for the device [env: CMPI_DEVICE]
    #[arg(long)]
    device: Option<PathBuf>,
    /// Device capacity, e.g. 512M or 2G (default 1G)
    #[arg(long, value_parser = parse_size)]
    device_size: Option<u64>,
    /// Emulate a non-coherent device
    #[arg(long)]
    incoherent: bool,
    /// Message cell size (16K, 32K, 64K, 128K)
    #[arg(long, value_parser = parse_size)]
    cell_size: Option<u64>,
    /// Delete the backing file when the job finishes
    #[arg(long)]
    cleanup: bool,
    /// Program and arguments (`bench` runs the bundled benchmark driver)
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true)]
    command: Vec<OsString>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let device = args
        .device
        .or_else(|| std::env::var_os("CMPI_DEVICE").map(PathBuf::from))
        .unwrap_or_else(default_device_path);
    let capacity = args.device_size.unwrap_or(DEFAULT_CAPACITY);
    // Create the backing file once so the ranks never race on sizing it.
    if let Err(e) = Device::open(DeviceConfig::new(&device).capacity(capacity)) {
        eprintln!("cmpi-run: {}: {e}", device.display());
        return ExitCode::from(1);
    }
    let cfg = LaunchConfig {
        nranks: args.nranks as usize,
        device,
        device_size: Some(capacity),
        incoherent: args.incoherent,
        cell_size: args.cell_size,
        cleanup: args.cleanup,
        command: args.command,
    };
    match launch(&cfg) {
        Ok(report) => {
            if let Some(r) = report.failed_rank {
                eprintln!("cmpi-run: rank {r} failed ({})", report.statuses[r]);
            }
            ExitCode::from(report.exit_code().clamp(0, 255) as u8)
        }
        Err(e) => {
            eprintln!("cmpi-run: {e}");
            ExitCode::from(1)
        }
    }
}
