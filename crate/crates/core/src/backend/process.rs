use std::os::unix::process::CommandExt;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::BackendError;

pub(crate) struct Finished {
    pub status: ExitStatus,
    pub elapsed: Duration,
    pub stderr: Vec<u8>,
}

/// Runs `script` under `bash -c` in its own process group.
///
/// The elapsed time spans spawn to reap. On timeout the whole group is killed.
pub(crate) fn run_bash(
    script: &str,
    envs: &[(&str, &str)],
    timeout: Duration,
    capture_stderr: bool,
) -> Result<Finished, BackendError> {
    let mut cmd = Command::new("bash");
    cmd.arg("-c")
        .arg(script)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(if capture_stderr { Stdio::piped() } else { Stdio::null() })
        .process_group(0);
    for (k, v) in envs {
        cmd.env(k, v);
    }

    let start = Instant::now();
    let child = cmd.spawn().map_err(|e| BackendError::Spawn(e.to_string()))?;
    let pid = child.id() as libc::pid_t;

    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let out = child.wait_with_output();
        let elapsed = start.elapsed();
        let _ = tx.send((out, elapsed));
    });

    match rx.recv_timeout(timeout) {
        Ok((out, elapsed)) => {
            let _ = waiter.join();
            let out = out.map_err(|e| BackendError::Spawn(e.to_string()))?;
            Ok(Finished {
                status: out.status,
                elapsed,
                stderr: out.stderr,
            })
        }
        Err(_) => {
            // SAFETY: kill(2) on our own process group has no memory effects.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
            let _ = waiter.join();
            Err(BackendError::Timeout {
                limit_s: timeout.as_secs_f64(),
            })
        }
    }
}

/// Quotes a path for a POSIX shell, leaving plain paths untouched so the
/// generated commands read like hand-written ones.
pub(crate) fn shell_quote(s: &str) -> String {
    let plain = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "/._-+,:=@%".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

pub(crate) fn on_path(program: &str) -> bool {
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("tests/input01.txt"), "tests/input01.txt");
        assert_eq!(shell_quote("a b"), "'a b'");
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
    }

    #[test]
    fn timeout_kills_group() {
        let t = Instant::now();
        let err = run_bash("sleep 5; sleep 5", &[], Duration::from_millis(200), false)
            .err()
            .unwrap();
        assert!(matches!(err, BackendError::Timeout { .. }));
        assert!(t.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn captures_stderr_and_status() {
        let f = run_bash("echo hi >&2; exit 3", &[], Duration::from_secs(5), true).unwrap();
        assert_eq!(f.status.code(), Some(3));
        assert_eq!(String::from_utf8_lossy(&f.stderr).trim(), "hi");
    }
}
