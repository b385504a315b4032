use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsense")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Drop the header line, which carries a timestamp.
fn body(o: &Output) -> String {
    let s = stdout(o);
    let (head, rest) = s.split_once('\n').unwrap();
    assert!(head.starts_with("# covsense "), "{head}");
    assert!(head.contains("generated_unix="), "{head}");
    rest.to_string()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next() == Some(key)).then(|| parts.next().unwrap_or(""))
        })
        .unwrap_or_else(|| panic!("no field {key} in\n{text}"))
}

#[test]
fn check_quantum_fixture_holds() {
    let o = run(&["check", &fixture("quantum_cq.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let b = body(&o);
    for key in ["indistinguishable_pair", "non_simulable", "innocent_support", "all_hold"] {
        assert_eq!(field(&b, key), "true", "{key}");
    }
}

#[test]
fn exponent_without_zero_pair_exits_2() {
    let o = run(&["exponent", &fixture("no_zero_pair.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("innocent"), "{err}");
}

#[test]
fn check_without_zero_pair_exits_2() {
    let o = run(&["check", &fixture("no_zero_pair.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&body(&o), "all_hold"), "false");
}

#[test]
fn simulate_without_trials_has_no_monte_carlo() {
    let o = run(&["simulate", &fixture("quantum_cq.json"), "--trials", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let b = body(&o);
    assert!(!b.contains("monte_carlo"));
    assert!(b.contains("[exact]"));
    let with = body(&run(&["simulate", &fixture("quantum_cq.json"), "--trials", "50"]));
    assert!(with.contains("[monte_carlo]"));
}

#[test]
fn bodies_are_byte_identical_across_runs() {
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), fixture("quantum_cq.json"), "--trials".into(), "100".into()],
        vec!["--format".into(), "machine".into(), "exponent".into(), fixture("classical_cq.json")],
        vec!["geometry".into(), fixture("unitary_depolarizing.json")],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(body(&a), body(&b), "{args:?}");
    }
}

#[test]
fn parse_error_exits_1() {
    let dir = std::env::temp_dir().join(format!("covsense-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ \"schema_version\": \"1.0\", \"kind\": ").unwrap();
    let o = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let missing = run(&["check", dir.join("missing.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn wrong_scenario_kind_exits_1() {
    assert_eq!(run(&["geometry", &fixture("quantum_cq.json")]).status.code(), Some(1));
    assert_eq!(run(&["expand", &fixture("unitary_depolarizing.json")]).status.code(), Some(1));
}

#[test]
fn scale_exceeded_is_reported_not_fatal() {
    // 2^40 receiver dimension: exact sections are skipped, the bound remains
    let o = run(&["simulate", &fixture("quantum_cq.json"), "--n", "40", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let b = body(&o);
    assert!(b.contains("covertness_skipped"), "{b}");
    assert!(b.contains("covertness_bound"));
}

#[test]
fn block_too_long_exits_3() {
    let o = run(&["unitary", &fixture("unitary_depolarizing.json"), "--n", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bits_rescale_entropic_values() {
    let nats = body(&run(&["expand", &fixture("classical_cq.json"), "--alphas", "0.1"]));
    let bits = body(&run(&["--bits", "expand", &fixture("classical_cq.json"), "--alphas", "0.1"]));
    assert!(bits.contains("divergence [bits]"));
    let row = |s: &str| -> f64 {
        let line = s.lines().find(|l| l.starts_with("a,1,")).unwrap();
        line.split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!((row(&nats) / row(&bits) - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn machine_format_carries_units() {
    let o = run(&["--format", "machine", "check", &fixture("quantum_cq.json")]);
    let v: serde_json::Value = serde_json::from_str(&body(&o)).unwrap();
    assert_eq!(v["sections"]["scenario"]["dim_bob"]["unit"], "count");
    assert_eq!(v["sections"]["assumptions"]["all_hold"], true);
    assert_eq!(v["tables"]["simulability"]["columns"][1]["unit"], "dimensionless");
}
