use slcl_bench::{emit_report, run_suite, write_csv, BenchError, ReportFormat, SuiteReport};
use slcl_core::driver::{solve, OuterOptions};
use slcl_core::model::catalog_get;

fn opts() -> OuterOptions {
    OuterOptions::default()
}

#[test]
fn three_entry_suite() {
    let report = run_suite(&["circle-proj", "linear-as-nl", "infeas-affine"], &opts(), None).unwrap();
    let statuses: Vec<&str> = report.entries.iter().map(|e| e.status.as_str()).collect();
    assert_eq!(statuses, ["Optimal", "Optimal", "Infeasible"]);
    assert!(report.entries.iter().all(|e| e.expected()));
    assert_eq!(report.totals.problems, 3);
    assert_eq!(report.totals.optimal, 2);
    assert_eq!(report.totals.majors, report.entries.iter().map(|e| e.majors).sum::<usize>());
}

#[test]
fn empty_suite_has_zero_totals() {
    let report = run_suite(&[], &opts(), None).unwrap();
    assert!(report.entries.is_empty());
    assert_eq!(report.totals.problems, 0);
    assert_eq!(report.totals.fevals, 0);
    assert_eq!(report.totals.wall_time_s, 0.0);
}

#[test]
fn unknown_name_is_rejected_before_solving() {
    assert!(matches!(run_suite(&["circle-proj", "nope"], &opts(), None), Err(BenchError::Model(_))));
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    run_suite(&["linear-as-nl"], &opts(), Some((&path, ReportFormat::Csv))).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "name,status,majors,minors,fevals,final_objective,primal_inf,dual_inf,comp,wall_time_s");
    assert!(lines[1].starts_with("linear-as-nl,Optimal,"));
    assert!(text.ends_with('\n'));

    let mut buf = Vec::new();
    write_csv(&SuiteReport::new(Vec::new(), opts()), &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
}

#[test]
fn json_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let report = run_suite(&["linear-as-nl"], &opts(), None).unwrap();
    emit_report(&report, ReportFormat::Json, &path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(value["entries"].as_array().unwrap().len(), 1);
    assert_eq!(value["totals"]["problems"], 1);
    assert_eq!(value["options"]["omega_star"], 1e-6);
}

#[test]
fn unwritable_sink_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("r.csv");
    assert!(matches!(
        run_suite(&["linear-as-nl"], &opts(), Some((&path, ReportFormat::Csv))),
        Err(BenchError::Io(_))
    ));
}

#[test]
fn reruns_are_identical_apart_from_time() {
    let names = ["circle-proj", "hs035", "hs012"];
    let a = run_suite(&names, &opts(), None).unwrap();
    let b = run_suite(&names, &opts(), None).unwrap();
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.status, y.status);
        assert_eq!((x.majors, x.minors, x.fevals), (y.majors, y.minors, y.fevals));
        assert_eq!(x.final_objective.to_bits(), y.final_objective.to_bits());
    }
}

#[test]
fn fevals_match_model_counter() {
    let entry = catalog_get("hs014").unwrap();
    let before = entry.problem.eval_counts();
    let r = solve(&entry.problem, &opts()).unwrap();
    let after = entry.problem.eval_counts();
    assert_eq!(r.fevals, (after - before).objective);
}
