use std::path::PathBuf;
use std::time::{Duration, Instant};

use faultrank_core::harness::{
    execute_candidate, execute_corpus, Candidate, DriverCommand, ExecutionReport, HarnessError, Limits, Outcome,
    Task, TestFormat, TestStatus,
};
use faultrank_core::taxonomy::{labels_for_report, ExecErrorClass, FaultLabelSet, IntentErrorClass};
use serde_json::json;

fn driver() -> DriverCommand {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fake_driver.py");
    DriverCommand::new("python3", script)
}

fn task(id: &str, n: usize) -> Task {
    Task {
        task_id: id.into(),
        prompt: "return the number".into(),
        test_format: TestFormat::CallBased,
        function_name: Some("f".into()),
        inputs: (0..n).map(|i| json!([i])).collect(),
        expected_outputs: (0..n).map(|i| json!(i * 100 + 75)).collect(),
        starter_code: None,
    }
}

fn cand(task_id: &str, id: &str, code: &str) -> Candidate {
    Candidate {
        task_id: task_id.into(),
        candidate_id: id.into(),
        code: code.into(),
        gen_logprob: None,
        source_model: None,
    }
}

fn limits(timeout_s: f64) -> Limits {
    Limits {
        timeout_s,
        memory_mb: None,
    }
}

fn run(code: &str, n: usize) -> ExecutionReport {
    execute_candidate(&driver(), &task("t", n), &cand("t", "c", code), &limits(2.0)).unwrap()
}

#[test]
fn passing_candidate_is_correct() {
    let r = run("def f(x): return x  # PASS", 3);
    assert_eq!(r.outcome, Outcome::Correct);
    assert_eq!(r.first_failure_index, None);
    assert!(r.results.iter().all(|t| t.status == TestStatus::Pass));
    assert_eq!(labels_for_report(&r, 1), FaultLabelSet::CORRECT);
}

#[test]
fn type_error_at_line_two() {
    let r = run("def f(n):\n  return len(n)  # TYPEERROR", 2);
    assert_eq!(r.outcome, Outcome::ExecutionError);
    assert_eq!(r.results[0].exception_type.as_deref(), Some("TypeError"));
    assert_eq!(labels_for_report(&r, 2), FaultLabelSet::execution(ExecErrorClass::TypeError, 2));
}

#[test]
fn wrong_output_is_intent_error() {
    let r = run("def f(x): return 'vole'  # WRONG", 1);
    assert_eq!(r.outcome, Outcome::IntentError);
    assert_eq!(r.results[0].produced_output, Some(json!("vole")));
    assert_eq!(r.results[0].expected_output, json!(75));
    assert_eq!(
        labels_for_report(&r, 1),
        FaultLabelSet::intent(IntentErrorClass::OutputTypeError)
    );
}

#[test]
fn null_and_non_finite_outputs_survive_the_wire() {
    let r = run("# NONE", 1);
    assert_eq!(r.results[0].produced_output, Some(serde_json::Value::Null));
    assert_eq!(labels_for_report(&r, 1), FaultLabelSet::intent(IntentErrorClass::NoneError));
    let mut t = task("t", 1);
    t.expected_outputs = vec![json!(2.0)];
    let r = execute_candidate(&driver(), &t, &cand("t", "c", "# INF"), &limits(2.0)).unwrap();
    assert_eq!(r.results[0].produced_output, Some(json!({"$float": "-inf"})));
    assert_eq!(labels_for_report(&r, 1), FaultLabelSet::intent(IntentErrorClass::IntLargeError));
}

#[test]
fn execution_fault_dominates_earlier_pass() {
    let r = run("# SECOND", 3);
    assert_eq!(r.outcome, Outcome::ExecutionError);
    assert_eq!(r.first_failure_index, Some(1));
    assert_eq!(r.results[0].status, TestStatus::Pass);
    assert_eq!(r.results[2].status, TestStatus::Pass);
    assert_eq!(labels_for_report(&r, 5), FaultLabelSet::execution(ExecErrorClass::IndexError, 3));
}

#[test]
fn compile_failure_fans_out() {
    let r = run("def f(:  # SYNTAX", 4);
    assert_eq!(r.results.len(), 4);
    assert!(r
        .results
        .iter()
        .all(|t| t.exception_type.as_deref() == Some("SyntaxError") && t.error_line == Some(1)));
    assert_eq!(labels_for_report(&r, 1), FaultLabelSet::execution(ExecErrorClass::SyntaxError, 1));
}

#[test]
fn stray_prints_before_the_report_are_ignored() {
    assert_eq!(run("# NOISY", 2).outcome, Outcome::Correct);
}

#[test]
fn unusable_driver_output_is_a_protocol_error() {
    for code in ["# GARBAGE", "# EXIT", "# SHORT"] {
        let r = run(code, 2);
        assert_eq!(r.outcome, Outcome::ExecutionError, "{code}");
        assert!(r
            .results
            .iter()
            .all(|t| t.exception_type.as_deref() == Some("ProtocolError")));
        assert_eq!(labels_for_report(&r, 1), FaultLabelSet::execution(ExecErrorClass::Misc, 1));
    }
}

#[test]
fn driver_runs_with_fixed_hash_seed() {
    let mut t = task("t", 1);
    t.expected_outputs = vec![json!("0")];
    let r = execute_candidate(&driver(), &t, &cand("t", "c", "# ENV"), &limits(2.0)).unwrap();
    assert_eq!(r.outcome, Outcome::Correct);
}

#[test]
fn hanging_driver_is_killed_at_the_deadline() {
    let lim = limits(0.25);
    let t = task("t", 2);
    let start = Instant::now();
    let r = execute_candidate(&driver(), &t, &cand("t", "c", "# HANG"), &lim).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed >= lim.hard_deadline(2), "{elapsed:?}");
    assert!(elapsed < lim.hard_deadline(2) + Duration::from_secs(2), "{elapsed:?}");
    assert!(r
        .results
        .iter()
        .all(|t| t.status == TestStatus::Timeout && t.exception_type.as_deref() == Some("TimeoutException")));
    assert_eq!(
        labels_for_report(&r, 1),
        FaultLabelSet::execution(ExecErrorClass::TimeoutException, 1)
    );
}

fn process_gone(pid: &str) -> bool {
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        Err(_) => true,
        // Reparented and not yet reaped.
        Ok(stat) => stat.rsplit(')').next().is_some_and(|rest| rest.trim_start().starts_with('Z')),
    }
}

#[test]
fn kill_reaches_the_whole_process_group() {
    let dir = tempfile::tempdir().unwrap();
    let pid_file = dir.path().join("pid");
    let code = format!("# ORPHAN {}", pid_file.display());
    execute_candidate(&driver(), &task("t", 1), &cand("t", "c", &code), &limits(0.5)).unwrap();
    let pid = std::fs::read_to_string(&pid_file).unwrap();
    let deadline = Instant::now() + Duration::from_secs(2);
    while !process_gone(pid.trim()) && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    assert!(process_gone(pid.trim()), "grandchild {pid} survived");
}

#[test]
fn missing_driver_or_interpreter_is_an_environment_error() {
    let t = task("t", 1);
    let c = cand("t", "c", "# PASS");
    let missing_script = DriverCommand::new("python3", "/nonexistent/driver.py");
    assert!(matches!(
        execute_candidate(&missing_script, &t, &c, &limits(1.0)),
        Err(HarnessError::DriverUnavailable(_))
    ));
    let missing_interp = DriverCommand::new("/nonexistent/python", driver().driver);
    assert!(matches!(
        execute_candidate(&missing_interp, &t, &c, &limits(1.0)),
        Err(HarnessError::DriverUnavailable(_))
    ));
}

fn corpus() -> (Vec<Task>, Vec<Candidate>) {
    let tasks: Vec<Task> = (0..4).map(|i| task(&format!("t{i}"), 2)).collect();
    let kinds = ["# PASS", "# WRONG", "# TYPEERROR", "# SLOW", "# SECOND", "# NONE"];
    let mut cands = Vec::new();
    // Deliberately out of canonical order.
    for i in (0..4).rev() {
        for (j, k) in kinds.iter().enumerate().rev() {
            cands.push(cand(&format!("t{i}"), &format!("c{j}"), k));
        }
    }
    (tasks, cands)
}

fn serialize(reports: &[ExecutionReport]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut out, r).unwrap();
        out.push(b'\n');
    }
    out
}

#[test]
fn corpus_output_does_not_depend_on_worker_count() {
    let (tasks, cands) = corpus();
    let mut sunk_1 = Vec::new();
    let one = execute_corpus(&driver(), &tasks, &cands, &limits(2.0), 1, |r| {
        sunk_1.push(r.clone());
        Ok(())
    })
    .unwrap();
    let mut sunk_8 = Vec::new();
    let eight = execute_corpus(&driver(), &tasks, &cands, &limits(2.0), 8, |r| {
        sunk_8.push(r.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(one.len(), cands.len());
    assert_eq!(serialize(&one), serialize(&eight));
    assert_eq!(serialize(&sunk_1), serialize(&one));
    assert_eq!(serialize(&sunk_8), serialize(&eight));
    let keys: Vec<(String, String)> = one.iter().map(|r| (r.task_id.clone(), r.candidate_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn corpus_validates_before_running() {
    let (tasks, mut cands) = corpus();
    cands.push(cand("nope", "c0", "# PASS"));
    let mut calls = 0;
    let err = execute_corpus(&driver(), &tasks, &cands, &limits(1.0), 2, |_| {
        calls += 1;
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, HarnessError::MissingTask { ref task_id, .. } if task_id == "nope"));
    assert_eq!(calls, 0);

    let (tasks, mut cands) = corpus();
    cands.push(cands[0].clone());
    assert!(matches!(
        execute_corpus(&driver(), &tasks, &cands, &limits(1.0), 2, |_| Ok(())),
        Err(HarnessError::DuplicateCandidate { .. })
    ));
    let (tasks, cands) = corpus();
    assert!(matches!(
        execute_corpus(&driver(), &tasks, &cands, &limits(1.0), 0, |_| Ok(())),
        Err(HarnessError::InvalidLimits(_))
    ));
}

#[test]
fn sink_failure_stops_the_run() {
    let (tasks, cands) = corpus();
    let mut calls = 0;
    let err = execute_corpus(&driver(), &tasks, &cands, &limits(2.0), 2, |_| {
        calls += 1;
        Err(std::io::Error::other("disk full"))
    })
    .unwrap_err();
    assert!(matches!(err, HarnessError::Sink(_)));
    assert_eq!(calls, 1);
}

#[test]
fn stdin_reports_label_through_token_structure() {
    let t = Task {
        task_id: "s".into(),
        prompt: "count zeros".into(),
        test_format: TestFormat::StdinStdout,
        function_name: None,
        inputs: vec![json!("2\n1\n2\n")],
        expected_outputs: vec![json!("1\n2\n")],
        starter_code: None,
    };
    let r = ExecutionReport::from_results(
        "s",
        "c",
        TestFormat::StdinStdout,
        vec![faultrank_core::harness::TestResult::wrong_output(0, json!("2\n3\n"), json!("1\n2\n"))],
        0,
    );
    assert_eq!(r.test_format, t.test_format);
    assert_eq!(labels_for_report(&r, 4), FaultLabelSet::intent(IntentErrorClass::IntSmallError));
}
