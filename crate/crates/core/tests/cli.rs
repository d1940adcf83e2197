use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_reduction-machine"));
    c.env_remove("REDUCTION_MACHINE_SEED");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn asm_writes_image() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "p.asm", "loop: ADD R1, #1\n JMP loop\n");
    let out = dir.path().join("p.bin");
    let o = run(bin().arg("asm").arg(&src).arg("-o").arg(&out));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), vec![0x01, 0x23, 0x00, 0xA0]);

    let o = run(bin().arg("disasm").arg(&out));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ADD R1, #1\nJMP 0\n");
}

#[test]
fn asm_default_output_and_listing() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "halt.asm", "HALT\n");
    let lst = dir.path().join("halt.lst");
    let o = run(bin().arg("asm").arg(&src).arg("--listing").arg(&lst));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("halt.bin")).unwrap(), vec![0x00, 0xF0]);
    assert!(fs::read_to_string(&lst).unwrap().contains("F000  HALT"));
}

#[test]
fn asm_duplicate_label_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "dup.asm", "a: HALT\na: HALT\n");
    let o = run(bin().arg("asm").arg(&src));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate label"));
}

#[test]
fn missing_files_are_io_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.asm");
    assert_eq!(run(bin().arg("asm").arg(&missing)).status.code(), Some(2));
    assert_eq!(
        run(bin().arg("run").arg(dir.path().join("x.bin"))).status.code(),
        Some(2)
    );
    let o = run(bin()
        .arg("run")
        .arg(data("coin.asm"))
        .arg("-c")
        .arg(dir.path().join("nope.json")));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"l_r_m": -1}"#);
    let o = run(bin().arg("run").arg(data("coin.asm")).arg("-c").arg(&cfg));
    assert_eq!(o.status.code(), Some(1));
    let cfg = write(&dir, "d.json", r#"{"l_r": 1}"#);
    assert_eq!(
        run(bin().arg("run").arg(data("coin.asm")).arg("-c").arg(&cfg))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn halt_program_learns_nothing() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "h.asm", "HALT\n");
    let o = run(bin().arg("run").arg(&src));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("status: halted after 1 steps, 1 cycles"), "{text}");
    assert!(text.contains("information: 0 bits acquired, 0 bits expected"), "{text}");
}

#[test]
fn fine_mode_ignores_the_seed() {
    let a = run(bin().args(["run", "--seed", "1"]).arg(data("coin.asm")));
    let b = run(bin().args(["run", "--seed", "999"]).arg(data("coin.asm")));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("0 bits acquired"));
}

#[test]
fn coarse_trace_matches_golden() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = run(bin()
        .arg("run")
        .arg(data("coin.asm"))
        .arg("-c")
        .arg(data("coarse.json"))
        .arg("--trace")
        .arg(&trace));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&trace).unwrap(),
        fs::read_to_string(data("coin_seed42.jsonl")).unwrap()
    );
}

#[test]
fn seed_precedence_flag_env_config() {
    let dir = TempDir::new().unwrap();
    let trace = |name: &str, cmd: &mut Command| {
        let p = dir.path().join(name);
        let o = run(cmd.arg("--trace").arg(&p));
        assert_eq!(o.status.code(), Some(0));
        fs::read_to_string(p).unwrap()
    };
    let base = || {
        let mut c = bin();
        c.arg("run").arg(data("coin.asm")).arg("-c").arg(data("coarse.json"));
        c
    };
    let config_seed = trace("a", &mut base());
    let env_same = trace("b", base().env("REDUCTION_MACHINE_SEED", "42"));
    assert_eq!(config_seed, env_same);
    // flag beats the environment
    let flag = trace("c", base().env("REDUCTION_MACHINE_SEED", "7").args(["--seed", "42"]));
    assert_eq!(config_seed, flag);
    let bad = run(base().env("REDUCTION_MACHINE_SEED", "seven"));
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ensemble_report_and_csv() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let csv = dir.path().join("m.csv");
    let mut cmd = bin();
    cmd.arg("ensemble")
        .arg(data("coin.asm"))
        .arg("-c")
        .arg(data("coarse.json"))
        .args(["-n", "400", "--compare", "--report"])
        .arg(&report)
        .arg("--csv")
        .arg(&csv);
    let o = run(&mut cmd);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("members: 400"));
    assert!(text.contains("empirical entropy"));
    assert!(text.contains("fine: pure=true"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["n_members"], 400);
    let total: u64 = json["histogram"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, 400);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 401);

    let first = fs::read(&report).unwrap();
    assert_eq!(run(&mut cmd).status.code(), Some(0));
    assert_eq!(fs::read(&report).unwrap(), first);
}

#[test]
fn physics_sweep_over_potential() {
    let o = run(bin().args(["physics", "--sweep", "U0=0:1:2"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["u0_v", "a_C", "tau_d", "lambda", "latency_cycles"]);
    assert_eq!(rows[1][3], "0");
    assert_eq!(rows[1][4], "");
    assert_eq!(rows[2], ["1", "1", "1", "1", "8"]);
}

#[test]
fn physics_sweep_over_linear_damping() {
    let o = run(bin().args(["physics", "--sweep", "k1_per_s=1:4:4"]));
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines().skip(1) {
        let cols: Vec<f64> = line.split(',').take(4).map(|c| c.parse().unwrap()).collect();
        // lambda * k1 stays a_C
        assert!((cols[3] * cols[0] - cols[1]).abs() < 1e-12, "{line}");
    }
}

#[test]
fn physics_json_and_tube_warning() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "w.json",
        r#"{"tube_diameter_m": 5e-4, "damping_exponent": 2, "k2_per_m": 1.0, "u0_v": 4.0}"#,
    );
    let o = run(bin().arg("physics").arg("-c").arg(&cfg).arg("--json"));
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let k: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(k["a_C"], 4.0);
    assert_eq!(k["tau_d"], 0.5);
    assert_eq!(k["lambda"], 2.0);
    assert!(k["latency_cycles"].is_u64());

    assert_eq!(
        run(bin().args(["physics", "--sweep", "bogus=0:1:2"])).status.code(),
        Some(1)
    );
}
