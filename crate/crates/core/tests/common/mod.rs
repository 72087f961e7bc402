#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use cmpi::device::{CoherenceMode, Device, DeviceConfig};

pub const WORKER: &str = "CMPI_TEST_WORKER";

/// Role handed to a re-executed test binary, if this process is one.
pub fn worker_role() -> Option<String> {
    std::env::var(WORKER).ok()
}

/// Runs `test` from this test binary in a child process with `role`.
pub fn spawn_worker(test: &str, role: &str, envs: &[(&str, String)]) -> std::process::Child {
    let mut cmd = Command::new(std::env::current_exe().unwrap());
    cmd.args([test, "--exact", "--nocapture", "--test-threads=1"])
        .env(WORKER, role)
        .stdout(std::process::Stdio::piped());
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.spawn().unwrap()
}

/// Waits for every worker and returns their stdout.
pub fn wait_all(children: Vec<std::process::Child>) -> Vec<String> {
    children
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let out: Output = c.wait_with_output().unwrap();
            assert!(out.status.success(), "worker {i} failed: {}", out.status);
            String::from_utf8_lossy(&out.stdout).into_owned()
        })
        .collect()
}

pub fn device(path: &Path, capacity: u64, mode: CoherenceMode) -> Device {
    Device::open(DeviceConfig::new(path).capacity(capacity).mode(mode)).unwrap()
}
