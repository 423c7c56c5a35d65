use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const GOLDEN_IN: &str = include_str!("../../core/tests/golden/serve_session.in");
const GOLDEN_OUT: &str = include_str!("../../core/tests/golden/serve_session.out");

fn pbr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbr"))
        .args(args)
        .env_remove("PBR_SEED")
        .output()
        .unwrap()
}

fn pbr_with_input(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pbr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The value in `return v;` of an emitted constant.
fn returned_constant(code: &str) -> f64 {
    let line = code
        .lines()
        .find(|l| l.trim_start().starts_with("return"))
        .unwrap();
    line.trim()
        .trim_start_matches("return")
        .trim_end_matches(';')
        .trim()
        .parse()
        .unwrap()
}

fn write_script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    format!("sh {}", path.display())
}

#[test]
fn missing_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = pbr(&[
        "bench",
        "--suite",
        "no-such.suite",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"));
}

#[test]
fn malformed_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("bad.suite");
    fs::write(
        &suite,
        "seeds = [0]\n[[cell]]\nproblem = { kind = \"nope\" }\n",
    )
    .unwrap();
    let o = pbr(&[
        "bench",
        "--suite",
        suite.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_table1_writes_80_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = pbr(&[
        "bench",
        "--suite",
        "table1",
        "--out",
        dir.path().to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("problem,template,seed,rounds,queries,final_reward,solved,wall_ms")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 80);
    assert!(rows.iter().all(|r| r.split(',').nth(6) == Some("true")));
    assert!(dir
        .path()
        .join("curves/linear/curve_linear_d2_abs_0.csv")
        .exists());
}

#[test]
fn zero_reward_leaves_the_model_unchanged() {
    for (flag, queries) in [(None, "300 queries"), (Some("--two-point"), "600 queries")] {
        let mut args = vec![
            "tune",
            "--template",
            "const",
            "--rounds",
            "300",
            "--reward-cmd",
            "echo 0",
        ];
        args.extend(flag);
        let o = pbr(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o), "double decide() {\n    return 0;\n}\n");
        assert!(stderr(&o).contains(queries), "{}", stderr(&o));
    }
}

#[test]
fn learns_the_peak_of_a_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "quad.sh",
        "while IFS= read -r a; do awk -v a=\"$a\" 'BEGIN { print -(a - 2)^2 }'; done\n",
    );
    let o = pbr(&[
        "tune",
        "--rounds",
        "5000",
        "--seed",
        "3",
        "--reward-cmd",
        &cmd,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = returned_constant(&stdout(&o));
    assert!((a - 2.0).abs() <= 0.2, "learned {a}");
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "lin.sh",
        "while IFS= read -r a; do echo \"$a\"; done\n",
    );
    let run = |seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_pbr"))
            .args(["tune", "--rounds", "20", "--reward-cmd", &cmd])
            .env("PBR_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));
}

#[test]
fn contextual_protocol_reads_features_first() {
    let dir = tempfile::tempdir().unwrap();
    // reward -(a - 2x)^2 with x alternating between 1 and -1
    let cmd = write_script(
        dir.path(),
        "ctx.sh",
        "x=1\nwhile true; do echo $x; IFS= read -r a || exit 0; \
         awk -v a=\"$a\" -v x=$x 'BEGIN { print -(a - 2*x)^2 }'; x=$((-x)); done\n",
    );
    let o = pbr(&[
        "tune",
        "--template",
        "linear",
        "--p",
        "1",
        "--rounds",
        "50",
        "--two-point",
        "--reward-cmd",
        &cmd,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("double decide(double x0) {"));
    assert!(
        stderr(&o).contains("50 rounds, 100 queries"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn malformed_reward_aborts_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "bad.sh",
        "read a; echo -0.5; read a; echo -0.25; read a; echo oops; cat > /dev/null\n",
    );
    let recovery = dir.path().join("partial.c");
    let o = pbr(&[
        "tune",
        "--rounds",
        "100",
        "--reward-cmd",
        &cmd,
        "--recovery",
        recovery.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert!(err.contains("line 3"), "{err}");
    let partial = fs::read_to_string(&recovery).unwrap();
    assert!(partial.starts_with("double decide() {"));
}

#[test]
fn silent_child_is_an_oracle_failure() {
    let dir = tempfile::tempdir().unwrap();
    let recovery = dir.path().join("partial.c");
    let rec = recovery.to_str().unwrap();
    let o = pbr(&[
        "tune",
        "--rounds",
        "5",
        "--reward-cmd",
        "exit 1",
        "--recovery",
        rec,
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(recovery.exists());

    let o = pbr(&[
        "tune",
        "--rounds",
        "5",
        "--timeout",
        "0.3",
        "--reward-cmd",
        "sleep 5",
        "--recovery",
        rec,
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("did not answer"), "{}", stderr(&o));
}

#[test]
fn inspect_fresh_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let o = pbr(&["inspect", "--store", store.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 instances\n");
}

#[test]
fn corrupt_store_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    fs::write(&store, "{\"format\": \"something-else\"}").unwrap();
    let s = store.to_str().unwrap();
    assert_eq!(pbr(&["inspect", "--store", s]).status.code(), Some(3));
    assert_eq!(
        pbr(&["emit", "--store", s, "--id", "0"]).status.code(),
        Some(3)
    );
    let o = pbr_with_input(&["serve", "--store", s], "");
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("format error"));
}

#[test]
fn serve_then_emit_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let s = store.to_str().unwrap();
    let requests = concat!(
        r#"{"op":"create","args":{"param_name":"budget","template":{"kind":"const"},"init_values":[2.5]}}"#,
        "\n",
        r#"{"op":"connect","args":{"id":0}}"#,
        "\n",
        r#"{"op":"predict","args":{"handle":0,"features":[]}}"#,
        "\n",
    );
    let o = pbr_with_input(&["serve", "--store", s], requests);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = pbr(&["emit", "--store", s, "--id", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "double decide() {\n    return 2.5;\n}\n");

    let o = pbr(&["inspect", "--store", s]);
    assert_eq!(
        stdout(&o),
        "1 instances\n0\tbudget\tconst\tversion 0\t1 invocations\t0 rewarded\n"
    );

    assert_eq!(
        pbr(&["emit", "--store", s, "--id", "9"]).status.code(),
        Some(2)
    );
}

#[test]
fn serve_matches_golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let o = pbr_with_input(&["serve", "--store", store.to_str().unwrap()], GOLDEN_IN);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), GOLDEN_OUT);
}
