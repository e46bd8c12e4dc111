//! Command-line behavior tests: argument validation, exit codes, report
//! content, and CSV round trips, all through the library entry point so no
//! subprocess is spawned.

use std::fs;
use std::io::Write as _;

use audit_design::population::read_claims_csv;
use audit_design::synthpop::{generate, SynthKind, SynthSpec};
use audit_design_cli::{run, CommandResult};

fn cli(rest: &[&str]) -> CommandResult {
    let mut argv = vec!["audit-design"];
    argv.extend_from_slice(rest);
    run(argv)
}

fn write_fixture(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    let mut f = fs::File::create(&path).expect("fixture file");
    f.write_all(body.as_bytes()).expect("fixture write");
    path.to_str().unwrap().to_string()
}

const FIXTURE: &str = "claim_id,line_index,claimed_amount,probable_error_amount\n\
A,1,100.00,50.00\n\
A,2,50.00,0.00\n\
B,1,200.00,200.00\n";

#[test]
fn help_exits_zero() {
    let r = cli(&["--help"]);
    assert_eq!(r.exit_code, 0);
    assert!(r.report.contains("Usage"), "{}", r.report);
    let r = cli(&["plan", "--help"]);
    assert_eq!(r.exit_code, 0);
}

#[test]
fn unknown_flag_exits_one() {
    let r = cli(&["plan", "--synth", "clinic", "--bogus"]);
    assert_eq!(r.exit_code, 1);
}

#[test]
fn missing_population_source_is_a_usage_error() {
    let r = cli(&["moments"]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("--claims"), "{}", r.report);
    assert!(r.report.contains("--synth"), "{}", r.report);
}

#[test]
fn plan_requires_error_rate_or_conservative() {
    let r = cli(&[
        "plan",
        "--synth",
        "edwards",
        "--estimator",
        "simple-expansion",
        "--margin",
        "110000",
        "--confidence",
        "0.90",
    ]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("--error-rate"), "{}", r.report);
    assert!(r.report.contains("--conservative"), "{}", r.report);
}

#[test]
fn error_rate_conflicts_with_conservative() {
    let r = cli(&[
        "plan",
        "--synth",
        "edwards",
        "--estimator",
        "simple-expansion",
        "--margin",
        "110000",
        "--confidence",
        "0.90",
        "--error-rate",
        "0.3",
        "--conservative",
    ]);
    assert_eq!(r.exit_code, 1);
}

#[test]
fn plan_reports_sample_size() {
    let r = cli(&[
        "plan",
        "--synth",
        "edwards",
        "--estimator",
        "simple-expansion",
        "--error-rate",
        "0.3",
        "--margin",
        "110000",
        "--confidence",
        "0.90",
    ]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert!(r.report.contains("sample size: 90"), "{}", r.report);
    assert!(r.report.contains("achieved margin"), "{}", r.report);
}

#[test]
fn conservative_plan_needs_no_rate() {
    let r = cli(&[
        "plan",
        "--synth",
        "clinic",
        "--estimator",
        "ratio",
        "--conservative",
        "--margin",
        "500",
        "--confidence",
        "0.90",
    ]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert!(r.report.contains("worst case"), "{}", r.report);
}

#[test]
fn moments_reads_a_claims_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(&dir, "claims.csv", FIXTURE);
    let r = cli(&["moments", "--claims", &path]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert!(r.report.contains("claims: 2"), "{}", r.report);
    assert!(r.report.contains("line items: 3"), "{}", r.report);
    assert!(r.report.contains("total claimed: $350.00"), "{}", r.report);
    assert!(r.report.contains("mean claim: $175.00"), "{}", r.report);
}

#[test]
fn missing_claims_file_exits_one() {
    let r = cli(&["moments", "--claims", "/no/such/claims.csv"]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("error"), "{}", r.report);
}

#[test]
fn invalid_claim_amounts_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "claim_id,line_index,claimed_amount,probable_error_amount\n\
A,1,10.00,25.00\n";
    let path = write_fixture(&dir, "bad.csv", bad);
    let r = cli(&["moments", "--claims", &path]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("probable error"), "{}", r.report);
}

#[test]
fn compare_monte_carlo_requires_seed() {
    let r = cli(&[
        "compare",
        "--synth",
        "clinic",
        "--error-rate",
        "0.2",
        "--method",
        "monte-carlo",
    ]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("--seed"), "{}", r.report);
}

#[test]
fn stratify_needs_strata_or_breakpoints() {
    let r = cli(&[
        "stratify",
        "--synth",
        "clinic",
        "--estimator",
        "ratio",
        "--sample-size",
        "30",
        "--error-rate",
        "0.2",
    ]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("--strata"), "{}", r.report);
    assert!(r.report.contains("--breakpoints"), "{}", r.report);
}

#[test]
fn stratify_with_explicit_breakpoints_reports_strata() {
    let r = cli(&[
        "stratify",
        "--synth",
        "clinic",
        "--estimator",
        "ratio",
        "--sample-size",
        "30",
        "--error-rate",
        "0.2",
        "--breakpoints",
        "20,35",
    ]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert!(r.report.contains("stratum 1"), "{}", r.report);
    assert!(r.report.contains("stratum 3"), "{}", r.report);
}

#[test]
fn simulate_round_trips_through_the_reader() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("claims.csv");
    let r = cli(&[
        "simulate",
        "--synth",
        "neter",
        "--seed",
        "11",
        "--size",
        "250",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert_eq!(r.data_files, vec![out.clone()]);
    let reread = read_claims_csv(fs::File::open(&out).unwrap()).expect("round trip");
    let mut spec = SynthSpec::new(SynthKind::Neter, 11);
    spec.size_override = Some(250);
    let direct = generate(&spec).unwrap();
    assert_eq!(reread, direct);
}

#[test]
fn emitted_csv_headers_are_stable() {
    let dir = tempfile::tempdir().unwrap();

    let cov = dir.path().join("coverage.csv");
    let r = cli(&[
        "coverage",
        "--synth",
        "clinic",
        "--size",
        "200",
        "--error-rate",
        "0.2",
        "--estimator",
        "ratio",
        "--sample-size",
        "20",
        "--replicates",
        "50",
        "--seed",
        "2",
        "--out",
        cov.to_str().unwrap(),
    ]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    let body = fs::read_to_string(&cov).unwrap();
    assert_eq!(
        body.lines().next().unwrap(),
        "estimator,n,pi,pi_l,nominal,attained,rmse"
    );

    let claims = dir.path().join("claims.csv");
    cli(&[
        "simulate",
        "--synth",
        "clinic",
        "--seed",
        "1",
        "--size",
        "50",
        "--out",
        claims.to_str().unwrap(),
    ]);
    let body = fs::read_to_string(&claims).unwrap();
    assert_eq!(
        body.lines().next().unwrap(),
        "claim_id,line_index,claimed_amount,probable_error_amount"
    );

    for (kind, header) in [
        ("samplesize", "pi,n_simple_expansion,n_ratio"),
        ("preference", "pi,prob_ratio_better"),
        ("cross-section", "pi,pi_l,expected_var_y,expected_var_r"),
    ] {
        let out = dir.path().join(format!("{kind}.csv"));
        let r = cli(&[
            "curves",
            "--synth",
            "clinic",
            "--size",
            "200",
            "--kind",
            kind,
            "--margin",
            "500",
            "--confidence",
            "0.90",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(r.exit_code, 0, "{kind}: {}", r.report);
        let body = fs::read_to_string(&out).unwrap();
        assert_eq!(body.lines().next().unwrap(), header, "{kind}");
    }
}

#[test]
fn verify_reports_pass() {
    let r = cli(&["verify", "--mini-populations", "40", "--seed", "4"]);
    assert_eq!(r.exit_code, 0, "{}", r.report);
    assert!(r.report.contains("verdict: pass"), "{}", r.report);
}

#[test]
fn invalid_rate_exits_one() {
    let r = cli(&[
        "plan",
        "--synth",
        "clinic",
        "--estimator",
        "ratio",
        "--error-rate",
        "1.5",
        "--margin",
        "500",
        "--confidence",
        "0.90",
    ]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("error rate"), "{}", r.report);
}

#[test]
fn workers_zero_is_rejected() {
    let r = cli(&[
        "verify",
        "--mini-populations",
        "10",
        "--seed",
        "1",
        "--workers",
        "0",
    ]);
    assert_eq!(r.exit_code, 1);
    assert!(r.report.contains("--workers"), "{}", r.report);
}
