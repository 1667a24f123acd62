//! Feedback providers: deterministic synthetic execution, real subprocess
//! execution against stdin/stdout test cases, and a noisy verifier channel.

use std::fs;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::theory::ChannelSpec;

pub const OUTPUT_CAP_BYTES: usize = 1 << 20;
pub const TIMEOUT_MARKER: &str = "timeout";
pub const SOURCE_PLACEHOLDER: &str = "{source}";
const CANDIDATE_FILE: &str = "candidate";

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("task directory {path}: {message}")]
    TaskDir { path: PathBuf, message: String },
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExecError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub success: bool,
    pub output: String,
    pub tests: Vec<bool>,
    pub error: String,
    #[serde(default)]
    pub wall_ms: u64,
}

impl ExecutionReport {
    /// Single-line JSON record with `success`, `tests`, `error`, `wall_ms`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "success": self.success,
            "tests": self.tests,
            "error": self.error,
            "wall_ms": self.wall_ms,
        })
        .to_string()
    }
}

/// `Q = success ∧ all tests pass`.
pub fn quality_from_report(report: &ExecutionReport) -> bool {
    report.success && report.tests.iter().all(|&t| t)
}

/// Deterministic report whose derived quality is `true_quality`.
pub fn execute_synthetic(true_quality: bool) -> ExecutionReport {
    if true_quality {
        ExecutionReport {
            success: true,
            output: "ok".into(),
            tests: vec![true; 3],
            error: String::new(),
            wall_ms: 0,
        }
    } else {
        ExecutionReport {
            success: false,
            output: "mismatch".into(),
            tests: vec![true, false, true],
            error: "test 2: expected output differs".into(),
            wall_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierVerdict {
    pub is_correct: bool,
    pub confidence: f64,
    pub errors_text: String,
}

/// Passes `true_quality` through a binary channel; confidence is
/// `P(Q = 1 | verdict)` under that channel.
pub fn pseudo_verify_simulated<R: Rng + ?Sized>(
    true_quality: bool,
    channel: &ChannelSpec,
    rng: &mut R,
) -> VerifierVerdict {
    let flip = if true_quality { channel.fn_rate } else { channel.fp_rate };
    let wrong = flip > 0.0 && rng.random::<f64>() < flip;
    let is_correct = true_quality != wrong;
    let joint = channel.joint();
    let s = usize::from(is_correct);
    let mass = joint[0][s] + joint[1][s];
    let confidence = if mass > 0.0 { joint[1][s] / mass } else { 0.5 };
    VerifierVerdict {
        is_correct,
        confidence,
        errors_text: if is_correct {
            String::new()
        } else {
            "verifier rejected the candidate".into()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub stdin: String,
    pub expected: String,
}

/// How to run a candidate program against its tests.
///
/// `entry_command` is run with `sh -c` inside a private scratch directory;
/// `{source}` expands to the path of the candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTaskSpec {
    pub entry_command: String,
    pub test_cases: Vec<TestCase>,
    pub timeout: Duration,
}

impl ProcessTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.test_cases.is_empty() {
            return Err(ExecError::InvalidSpec("need at least one test case".into()));
        }
        if self.timeout.is_zero() {
            return Err(ExecError::InvalidSpec("timeout must be positive".into()));
        }
        if self.entry_command.trim().is_empty() {
            return Err(ExecError::InvalidSpec("entry command is empty".into()));
        }
        Ok(())
    }

    /// Reads `task.txt` (`entry = ...`, `timeout = <seconds>`) and
    /// `tests/NN.in` / `tests/NN.out` pairs.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let fail = |message: String| ExecError::TaskDir {
            path: dir.to_path_buf(),
            message,
        };
        let manifest = fs::read_to_string(dir.join("task.txt")).map_err(|e| fail(format!("task.txt: {e}")))?;
        let mut entry = None;
        let mut timeout = Duration::from_secs(60);
        for line in manifest.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("task.txt: expected `key = value`, got `{line}`")))?;
            match key.trim() {
                "entry" => entry = Some(value.trim().to_string()),
                "timeout" => {
                    let secs: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| fail(format!("task.txt: bad timeout `{}`", value.trim())))?;
                    if !(secs > 0.0 && secs.is_finite()) {
                        return Err(fail("task.txt: timeout must be positive".into()));
                    }
                    timeout = Duration::from_secs_f64(secs);
                }
                other => return Err(fail(format!("task.txt: unknown key `{other}`"))),
            }
        }
        let entry_command = entry.ok_or_else(|| fail("task.txt: missing `entry`".into()))?;
        let tests_dir = dir.join("tests");
        let mut inputs: Vec<PathBuf> = fs::read_dir(&tests_dir)
            .map_err(|e| fail(format!("tests/: {e}")))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "in"))
            .collect();
        inputs.sort();
        let mut test_cases = Vec::with_capacity(inputs.len());
        for input in inputs {
            let expected_path = input.with_extension("out");
            test_cases.push(TestCase {
                stdin: fs::read_to_string(&input)?,
                expected: fs::read_to_string(&expected_path)
                    .map_err(|e| fail(format!("{}: {e}", expected_path.display())))?,
            });
        }
        let spec = Self {
            entry_command,
            test_cases,
            timeout,
        };
        spec.validate().map_err(|e| fail(e.to_string()))?;
        Ok(spec)
    }
}

/// Strips trailing whitespace on each line and trailing blank lines.
pub fn normalize_output(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    lines[..end].join("\n")
}

struct CaseOutcome {
    passed: bool,
    stdout: String,
    error: Option<String>,
}

/// Runs `candidate_source` once per test case in a fresh scratch directory.
pub fn execute_process(spec: &ProcessTaskSpec, candidate_source: &str) -> ExecutionReport {
    let start = Instant::now();
    let finish = |success, output, tests, error| ExecutionReport {
        success,
        output,
        tests,
        error,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    if let Err(e) = spec.validate() {
        return finish(false, String::new(), Vec::new(), e.to_string());
    }
    let mut tests = Vec::with_capacity(spec.test_cases.len());
    let mut errors = Vec::new();
    let mut output = String::new();
    for (i, case) in spec.test_cases.iter().enumerate() {
        let outcome = match run_case(spec, candidate_source, case) {
            Ok(o) => o,
            Err(e) => CaseOutcome {
                passed: false,
                stdout: String::new(),
                error: Some(format!("spawn failed: {e}")),
            },
        };
        if i == 0 || (!outcome.passed && output.is_empty()) {
            output = outcome.stdout;
        }
        if let Some(err) = outcome.error {
            errors.push(format!("test {}: {err}", i + 1));
        } else if !outcome.passed {
            errors.push(format!("test {}: output differs from expected", i + 1));
        }
        tests.push(outcome.passed);
    }
    let success = tests.iter().all(|&t| t);
    finish(success, output, tests, errors.join("\n"))
}

fn run_case(spec: &ProcessTaskSpec, source: &str, case: &TestCase) -> std::io::Result<CaseOutcome> {
    let scratch = tempfile::tempdir()?;
    let source_path = scratch.path().join(CANDIDATE_FILE);
    fs::write(&source_path, source)?;
    let command = spec
        .entry_command
        .replace(SOURCE_PLACEHOLDER, &shell_quote(&source_path.to_string_lossy()));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(scratch.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let input = case.stdin.clone();
    let writer = thread::spawn(move || {
        // The child may exit without reading; a broken pipe is not an error here.
        let _ = stdin.write_all(input.as_bytes());
    });
    let stdout = capped_reader(child.stdout.take().expect("stdout is piped"));
    let stderr = capped_reader(child.stderr.take().expect("stderr is piped"));

    let deadline = Instant::now() + spec.timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            kill_group(&mut child);
            break None;
        }
        thread::sleep(Duration::from_millis(2));
    };
    let _ = writer.join();
    let (out_bytes, out_truncated) = stdout.join().unwrap_or_default();
    let (err_bytes, _) = stderr.join().unwrap_or_default();
    let stdout_text = String::from_utf8_lossy(&out_bytes).into_owned();
    let stderr_text = String::from_utf8_lossy(&err_bytes).trim_end().to_string();

    let Some(status) = status else {
        return Ok(CaseOutcome {
            passed: false,
            stdout: stdout_text,
            error: Some(format!("{TIMEOUT_MARKER} after {:?}", spec.timeout)),
        });
    };
    if !status.success() {
        let detail = if stderr_text.is_empty() {
            format!("exited with {status}")
        } else {
            format!("exited with {status}: {stderr_text}")
        };
        return Ok(CaseOutcome {
            passed: false,
            stdout: stdout_text,
            error: Some(detail),
        });
    }
    if out_truncated {
        return Ok(CaseOutcome {
            passed: false,
            stdout: stdout_text,
            error: Some(format!("output exceeded {OUTPUT_CAP_BYTES} bytes")),
        });
    }
    let passed = normalize_output(&stdout_text) == normalize_output(&case.expected);
    Ok(CaseOutcome {
        passed,
        stdout: stdout_text,
        error: None,
    })
}

fn capped_reader<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = OUTPUT_CAP_BYTES.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, truncated)
    })
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: plain syscall on the process group this child leads.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Produces execution feedback for a candidate.
pub trait Executor: Send + Sync {
    fn execute(&self, candidate_source: &str) -> ExecutionReport;
}

pub struct ProcessExecutor {
    pub spec: ProcessTaskSpec,
}

impl Executor for ProcessExecutor {
    fn execute(&self, candidate_source: &str) -> ExecutionReport {
        execute_process(&self.spec, candidate_source)
    }
}

/// Runs every candidate with at most `workers` concurrent executions.
pub fn execute_batch(executor: &dyn Executor, candidates: &[String], workers: usize) -> Vec<ExecutionReport> {
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build();
    match pool {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            candidates.par_iter().map(|c| executor.execute(c)).collect()
        }),
        Err(_) => candidates.iter().map(|c| executor.execute(c)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::WorldSeed;
    use crate::theory::channel_analysis;
    use proptest::prelude::*;

    #[test]
    fn synthetic_reports_encode_quality() {
        let good = execute_synthetic(true);
        assert!(good.success && good.tests.iter().all(|&t| t));
        let bad = execute_synthetic(false);
        assert!(bad.tests.contains(&false) && !bad.error.is_empty());
        assert_eq!(execute_synthetic(false), bad);
        assert!(quality_from_report(&good) && !quality_from_report(&bad));
    }

    #[test]
    fn quality_examples() {
        let mut r = execute_synthetic(true);
        r.tests = vec![true, false];
        assert!(!quality_from_report(&r));
    }

    proptest! {
        #[test]
        fn quality_is_the_conjunction(success: bool, tests in proptest::collection::vec(any::<bool>(), 0..8)) {
            let r = ExecutionReport { success, output: String::new(), tests: tests.clone(), error: String::new(), wall_ms: 0 };
            let mut expected = success;
            for t in tests {
                expected = expected && t;
            }
            prop_assert_eq!(quality_from_report(&r), expected);
        }
    }

    #[test]
    fn normalization_ignores_trailing_space() {
        assert_eq!(normalize_output("a  \nb\t\n\n\n"), normalize_output("a\nb"));
        assert_ne!(normalize_output(" a"), normalize_output("a"));
        assert_eq!(normalize_output(""), "");
    }

    #[test]
    fn noiseless_verifier_is_truthful() {
        let ch = ChannelSpec::new(0.4, 0.0, 0.0).unwrap();
        let mut rng = WorldSeed::new(1).stream("ver", 0);
        let v = pseudo_verify_simulated(true, &ch, &mut rng);
        assert!(v.is_correct && v.confidence == 1.0);
        let v = pseudo_verify_simulated(false, &ch, &mut rng);
        assert!(!v.is_correct && v.confidence == 0.0);
    }

    #[test]
    fn verifier_confidence_is_the_posterior() {
        let ch = ChannelSpec::new(0.4, 0.1, 0.15).unwrap();
        let a = channel_analysis(&ch).unwrap();
        let mut rng = WorldSeed::new(2).stream("ver", 0);
        for _ in 0..200 {
            let v = pseudo_verify_simulated(true, &ch, &mut rng);
            let expect = if v.is_correct {
                a.posterior_correct
            } else {
                a.posterior_incorrect
            };
            assert!((v.confidence - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn verifier_false_negative_rate() {
        let ch = ChannelSpec::new(0.4, 0.05, 0.10).unwrap();
        let mut rng = WorldSeed::new(3).stream("ver", 0);
        let n = 100_000;
        let wrong = (0..n)
            .filter(|_| !pseudo_verify_simulated(true, &ch, &mut rng).is_correct)
            .count();
        assert!((wrong as f64 / n as f64 - 0.10).abs() < 0.005);
    }

    #[test]
    fn json_line_has_report_fields() {
        let line = execute_synthetic(false).to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["tests"], serde_json::json!([true, false, true]));
        assert!(v.get("output").is_none());
        assert!(!line.contains('\n'));
    }

    #[test]
    fn spawn_failure_is_reported() {
        let spec = ProcessTaskSpec {
            entry_command: "/nonexistent/interpreter {source}".into(),
            test_cases: vec![TestCase {
                stdin: String::new(),
                expected: String::new(),
            }],
            timeout: Duration::from_secs(5),
        };
        let r = execute_process(&spec, "");
        assert!(!r.success);
        assert!(!r.error.is_empty());
    }
}
