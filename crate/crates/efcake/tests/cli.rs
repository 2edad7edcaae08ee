//! End-to-end checks of the binary: exit codes, required output lines,
//! and byte-identical reruns for a fixed seed.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const THREE: &str = "\
agent a1
seg 0 1 1
agent a2
seg 0 1/4 2
seg 1/4 1 2/3
agent a3
seg 0 1/2 1/2
seg 1/2 1 3/2
";

const ONE: &str = "\
agent a1
seg 0 1 1
";

fn profile(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("efcake-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efcake"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn selfridge_conway_exits_zero_with_five_cuts() {
    let p = profile("three.profile", THREE);
    let out = run(&["run", "--protocol", "selfridge_conway", "--agents", p.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cuts: u64 = text
        .lines()
        .find_map(|l| l.strip_prefix("CUTS "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(cuts <= 5);
    assert!(text.contains("OVERALL pass"));
}

#[test]
fn efbt_reports_the_four_player_budget() {
    let p = profile("four.profile", &format!("{THREE}agent a4\nseg 0 1/3 2\nseg 1/3 1 1/2\n"));
    let out = run(&["run", "--protocol", "efbt", "--agents", p.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("BUDGET-INIT 5w+11"));
}

#[test]
fn single_divider_uses_no_cuts() {
    let p = profile("one.profile", ONE);
    let out = run(&["run", "--protocol", "efrw", "--agents", p.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("CUTS 0"));
}

#[test]
fn distinct_exit_codes_for_distinct_failures() {
    let bad = profile("bad.profile", "gibberish\n");
    let three = profile("three2.profile", THREE);
    let parse = run(&["run", "--protocol", "efrw", "--agents", bad.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(2));
    let unknown = run(&["run", "--protocol", "nope", "--agents", three.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
    let exhausted = run(&[
        "run",
        "--protocol",
        "selfridge_conway",
        "--agents",
        three.to_str().unwrap(),
        "--budget",
        "2",
    ]);
    assert_eq!(exhausted.status.code(), Some(4));
}

#[test]
fn verify_accepts_honest_and_rejects_tampered_transcripts() {
    let p = profile("three3.profile", THREE);
    let t = std::env::temp_dir().join("efcake-cli-tests").join("sc.transcript");
    let out = run(&[
        "run",
        "--protocol",
        "selfridge_conway",
        "--agents",
        p.to_str().unwrap(),
        "--out",
        t.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let ok = run(&["verify", "--transcript", t.to_str().unwrap(), "--agents", p.to_str().unwrap()]);
    assert!(ok.status.success());

    let text = fs::read_to_string(&t).unwrap();
    let line = text.lines().find(|l| l.starts_with("SHARE a1 ")).unwrap().to_string();
    let tampered_path = t.with_extension("tampered");
    fs::write(&tampered_path, text.replace(&line, "SHARE a1 0..1")).unwrap();
    let bad = run(&[
        "verify",
        "--transcript",
        tampered_path.to_str().unwrap(),
        "--agents",
        p.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn simulate_is_bit_identical_across_reruns_and_thread_counts() {
    let a = run(&["simulate", "--n", "5", "--trials", "4000", "--seed", "7"]);
    let b = Command::new(env!("CARGO_BIN_EXE_efcake"))
        .args(["simulate", "--n", "5", "--trials", "4000", "--seed", "7"])
        .env("EFCAKE_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8(a.stdout).unwrap().contains("STAT mean_stages "));
}

#[test]
fn recurrence_table_lists_bounds() {
    let out = run(&["recurrence", "--protocol", "efrw", "--n", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("T(10;*) = 17w+0 \u{2264} 17w+0"));
}
