//! Local launcher: one OS process per rank on a shared backing file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus};
use std::time::Duration;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    pub nranks: usize,
    pub device: PathBuf,
    pub device_size: Option<u64>,
    pub incoherent: bool,
    pub cell_size: Option<u64>,
    pub cleanup: bool,
    /// Program and its arguments.
    pub command: Vec<OsString>,
}

#[derive(Debug)]
pub struct LaunchReport {
    pub statuses: Vec<ExitStatus>,
    /// First rank observed to fail, if any.
    pub failed_rank: Option<usize>,
}

impl LaunchReport {
    pub fn success(&self) -> bool {
        self.failed_rank.is_none()
    }

    pub fn exit_code(&self) -> i32 {
        match self.failed_rank {
            None => 0,
            Some(r) => self.statuses[r].code().filter(|&c| c != 0).unwrap_or(1),
        }
    }
}

/// `bench` names the benchmark driver shipped next to the launcher.
fn resolve_program(prog: &OsString) -> OsString {
    if prog == "bench" {
        if let Some(dir) = std::env::current_exe()
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf))
        {
            let sibling = dir.join("cmpi-bench");
            if sibling.exists() {
                return sibling.into_os_string();
            }
        }
    }
    prog.clone()
}

fn session_id() -> u64 {
    loop {
        let s: u64 = rand::random();
        if s != 0 {
            return s;
        }
    }
}

/// Spawns every rank, waits for all of them and kills the survivors as soon
/// as one rank fails, so a crashed peer cannot leave the others spinning.
pub fn launch(cfg: &LaunchConfig) -> Result<LaunchReport> {
    if cfg.nranks == 0 {
        return Err(Error::Config("rank count must be at least 1".into()));
    }
    let Some((prog, args)) = cfg.command.split_first() else {
        return Err(Error::Config("no command given".into()));
    };
    let prog = resolve_program(prog);
    let session = session_id();
    let mut children: Vec<Option<Child>> = Vec::with_capacity(cfg.nranks);
    for rank in 0..cfg.nranks {
        let mut cmd = Command::new(&prog);
        cmd.args(args)
            .env("CMPI_RANK", rank.to_string())
            .env("CMPI_NRANKS", cfg.nranks.to_string())
            .env("CMPI_DEVICE", &cfg.device)
            .env("CMPI_INCOHERENT", if cfg.incoherent { "1" } else { "0" })
            .env("CMPI_SESSION", session.to_string());
        if let Some(n) = cfg.device_size {
            cmd.env("CMPI_DEVICE_SIZE", n.to_string());
        }
        if let Some(c) = cfg.cell_size {
            cmd.env("CMPI_CELL_SIZE", c.to_string());
        }
        if cfg.cleanup {
            cmd.env("CMPI_CLEANUP", "1");
        }
        match cmd.spawn() {
            Ok(c) => children.push(Some(c)),
            Err(e) => {
                for c in children.iter_mut().flatten() {
                    c.kill().ok();
                    c.wait().ok();
                }
                return Err(Error::Launch(format!(
                    "spawning rank {rank} ({}): {e}",
                    prog.to_string_lossy()
                )));
            }
        }
    }

    let mut statuses: Vec<Option<ExitStatus>> = vec![None; cfg.nranks];
    let mut failed_rank = None;
    while statuses.iter().any(Option::is_none) {
        let mut progressed = false;
        for (rank, slot) in children.iter_mut().enumerate() {
            let Some(child) = slot else { continue };
            if let Some(st) = child.try_wait()? {
                statuses[rank] = Some(st);
                *slot = None;
                progressed = true;
                if !st.success() && failed_rank.is_none() {
                    failed_rank = Some(rank);
                    for c in children.iter_mut().flatten() {
                        c.kill().ok();
                    }
                    break;
                }
            }
        }
        if !progressed {
            std::thread::sleep(Duration::from_millis(2));
        }
    }
    Ok(LaunchReport {
        statuses: statuses.into_iter().map(Option::unwrap).collect(),
        failed_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, cmd: &[&str]) -> LaunchConfig {
        LaunchConfig {
            nranks: n,
            device: std::env::temp_dir().join("unused"),
            device_size: None,
            incoherent: false,
            cell_size: None,
            cleanup: false,
            command: cmd.iter().map(OsString::from).collect(),
        }
    }

    #[test]
    fn aggregates_exit_codes() {
        let ok = launch(&cfg(3, &["sh", "-c", "test \"$CMPI_NRANKS\" = 3"])).unwrap();
        assert!(ok.success());
        assert_eq!(ok.statuses.len(), 3);

        let bad = launch(&cfg(
            3,
            &["sh", "-c", "if [ \"$CMPI_RANK\" = 2 ]; then exit 7; fi; sleep 30"],
        ))
        .unwrap();
        assert_eq!(bad.failed_rank, Some(2));
        assert_eq!(bad.exit_code(), 7);
    }

    #[test]
    fn usage_errors() {
        assert!(matches!(launch(&cfg(0, &["true"])), Err(Error::Config(_))));
        assert!(matches!(launch(&cfg(1, &[])), Err(Error::Config(_))));
        assert!(matches!(launch(&cfg(1, &["/nonexistent/prog"])), Err(Error::Launch(_))));
    }
}
