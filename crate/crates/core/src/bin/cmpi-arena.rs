use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use cmpi::arena::{Arena, HashGeometry, DEFAULT_LEVELS, DEFAULT_LEVEL_CAP, TOOL_RANK};
use cmpi::device::{CoherenceMode, Device, DeviceConfig, DEFAULT_CAPACITY};
use cmpi::runtime::default_device_path;
use cmpi::units::parse_size;

/// Inspects and edits the object arena on an emulated device.
#[derive(Parser, Debug)]
#[command(name = "cmpi-arena", version)]
struct Args {
    /// Backing file for the device [env: CMPI_DEVICE]
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    /// Device capacity (default: size of an existing file, else 1G)
    #[arg(long, global = true, value_parser = parse_size)]
    device_size: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write an empty arena (no-op if already formatted with this geometry)
    Format {
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
        level_cap: u64,
    },
    /// List live objects: name, offset, size, owner
    Ls,
    /// Allocate a zeroed object; prints name, offset, size
    Create {
        name: String,
        #[arg(value_parser = parse_size)]
        size: u64,
    },
    Unlink {
        name: String,
    },
    /// Show one object and the hash slot holding it
    Stat {
        name: String,
    },
}

fn run(args: Args) -> cmpi::Result<()> {
    let path = args
        .device
        .or_else(|| std::env::var_os("CMPI_DEVICE").map(PathBuf::from))
        .unwrap_or_else(default_device_path);
    let dev = match args.device_size {
        None if path.exists() => Device::attach(&path, CoherenceMode::Coherent)?,
        size => Device::open(DeviceConfig::new(&path).capacity(size.unwrap_or(DEFAULT_CAPACITY)))?,
    };
    let dev = Arc::new(dev);
    let arena = match args.cmd {
        Cmd::Format { levels, level_cap } => {
            let a = Arena::format(dev, HashGeometry::from_cap(level_cap, levels)?)?;
            let h = a.header();
            println!(
                "formatted {}: {} levels, {} slots, objects at {} ({} bytes)",
                path.display(),
                a.geometry().levels(),
                a.geometry().slot_total(),
                h.objects_off,
                h.objects_len
            );
            return Ok(());
        }
        _ => Arena::attach(dev)?.with_rank(TOOL_RANK),
    };
    match args.cmd {
        Cmd::Format { .. } => unreachable!(),
        Cmd::Ls => {
            let mut objs = arena.list()?;
            objs.sort_by(|a, b| a.name.cmp(&b.name));
            for o in objs {
                println!("{}\t{}\t{}\t{}", o.name, o.handle.offset, o.handle.size, o.owner);
            }
        }
        Cmd::Create { name, size } => {
            let h = arena.create(&name, size)?;
            println!("{name}\t{}\t{}", h.offset, h.size);
        }
        Cmd::Unlink { name } => arena.unlink(&name)?,
        Cmd::Stat { name } => {
            let o = arena.stat(&name)?;
            let (level, bucket) = arena.geometry().locate(o.handle.slot_index);
            println!("name:   {}", o.name);
            println!("offset: {}", o.handle.offset);
            println!("size:   {}", o.handle.size);
            println!("owner:  {}", o.owner);
            println!("slot:   {} (level {level}, bucket {bucket})", o.handle.slot_index);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cmpi-arena: {e}");
            ExitCode::from(1)
        }
    }
}
