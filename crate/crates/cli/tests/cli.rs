//! End-to-end runs of the `mccodec` binary.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use mocap_lsdt::io::{load_motion, MotionFormat};
use mocap_lsdt::load_model;
use tempfile::TempDir;

fn mccodec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mccodec"))
        .args(args)
        .env_remove("MCCODEC_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mccodec(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mccodec(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gen(&self, name: &str, joints: usize, frames: usize, seed: u64) -> PathBuf {
        let out = self.path(name);
        let (j, f, seed) = (joints.to_string(), frames.to_string(), seed.to_string());
        ok(&["gen", "--J", &j, "--F", &f, "--seed", &seed, "--rank", "4", "--out", s(&out)]);
        out
    }

    fn train(&self, input: &Path, p: &str) -> PathBuf {
        let out = self.path(&format!("model_P{p}.bin"));
        ok(&["train", "--in", s(input), "--P", p, "--K", "50", "--out", s(&out)]);
        out
    }
}

fn parse_d(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("D "))
        .expect("a D line")
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn train_reports_objectives_and_records_sparsity() {
    let fx = Fixture::new();
    let data = fx.gen("train.csv", 12, 400, 1);
    let model = fx.path("model.bin");
    let stdout = ok(&["train", "--in", s(&data), "--P", "8", "--K", "40", "--out", s(&model)]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    for (line, axis) in lines.iter().zip(["x", "y", "z"]) {
        assert!(line.starts_with(&format!("{axis}: objective ")), "{line}");
    }
    let loaded = load_model(&model).unwrap();
    assert_eq!(loaded.meta.sparsity, 8);
    assert_eq!(loaded.joints(), 12);
    let conv = std::fs::read_to_string(fx.path("convergence.csv")).unwrap();
    assert!(conv.starts_with("# {"), "{conv}");
}

#[test]
fn both_codecs_round_trip_through_files() {
    let fx = Fixture::new();
    let data = fx.gen("walk.csv", 12, 300, 2);
    let model = fx.train(&data, "4");
    for (codec, extra) in [("clip", ["--L", "60"]), ("frame", ["--b", "12"])] {
        let stream = fx.path(&format!("{codec}.mccs"));
        let recon = fx.path(&format!("{codec}.csv"));
        let mut args = vec!["encode", "--model", s(&model), "--in", s(&data), "--out", s(&stream), "--codec", codec];
        args.extend(extra);
        let stdout = ok(&args);
        assert!(stdout.starts_with("CR "), "{stdout}");
        ok(&["decode", "--model", s(&model), "--in", s(&stream), "--out", s(&recon)]);
        let back = load_motion(&recon, MotionFormat::Csv, None).unwrap();
        assert_eq!((back.joints(), back.frames()), (12, 300));
        let d = parse_d(&ok(&["eval", s(&data), s(&recon)]));
        assert!(d.is_finite() && d < 1.0, "{codec}: D={d}");
    }
}

#[test]
fn eval_of_a_file_against_itself_is_zero() {
    let fx = Fixture::new();
    let data = fx.gen("a.csv", 5, 40, 3);
    let per_joint = fx.path("pj.csv");
    let stdout = ok(&["eval", s(&data), s(&data), "--per-joint", s(&per_joint)]);
    assert_eq!(parse_d(&stdout), 0.0);
    let rows = std::fs::read_to_string(&per_joint).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5);
}

#[test]
fn gen_is_deterministic() {
    let fx = Fixture::new();
    let a = std::fs::read(fx.gen("a.bin", 7, 90, 11)).unwrap();
    let b = std::fs::read(fx.gen("b.bin", 7, 90, 11)).unwrap();
    let c = std::fs::read(fx.gen("c.bin", 7, 90, 12)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn bench_writes_one_row_per_configuration() {
    let fx = Fixture::new();
    let x = fx.gen("x.csv", 8, 300, 4);
    let y = fx.gen("y.csv", 8, 300, 5);
    let model = fx.train(&x, "3");
    let out_dir = fx.path("bench");
    let stdout = ok(&["bench", "--model", s(&model), "--in", s(&x), s(&y), "--out-dir", s(&out_dir), "--gnuplot"]);
    assert!(stdout.contains("(32 rows)"), "{stdout}");
    let rd = std::fs::read_to_string(out_dir.join("rd.csv")).unwrap();
    let data: Vec<&str> = rd.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "sequence,codec,L,b,CR,D");
    // 4 bit depths, each with the frame codec and 3 clip lengths.
    for name in [&x, &y] {
        assert_eq!(data.iter().filter(|l| l.starts_with(s(name))).count(), 16);
    }
    let sparsity = std::fs::read_to_string(out_dir.join("sparsity.csv")).unwrap();
    assert_eq!(sparsity.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 3 * 3);
    assert!(out_dir.join("rd.gp").exists() && out_dir.join("sparsity.gp").exists());
}

#[test]
fn bench_can_train_one_model_per_sparsity() {
    let fx = Fixture::new();
    let x = fx.gen("x.csv", 6, 200, 6);
    let out_dir = fx.path("bench");
    ok(&[
        "bench", "--train", s(&x), "--P", "2,4", "--K", "20", "--in", s(&x), "--codec", "frame", "--b", "8",
        "--out-dir", s(&out_dir),
    ]);
    for p in [2, 4] {
        let rd = std::fs::read_to_string(out_dir.join(format!("rd_P{p}.csv"))).unwrap();
        assert!(rd.lines().next().unwrap().contains(&format!("\"P\":{p}")), "{rd}");
    }
}

#[test]
fn bad_arguments_exit_with_2() {
    let fx = Fixture::new();
    let data = fx.gen("a.csv", 6, 50, 1);
    let model = fx.path("m.bin");
    assert_eq!(code(&["train", "--in", s(&data), "--P", "0", "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--in", s(&data), "--P", "7", "--out", s(&model)]), 2);
    assert_eq!(code(&["train", "--in", s(&data), "--tol", "-1", "--out", s(&model)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    let model = fx.train(&data, "2");
    let out = fx.path("a.mccs");
    assert_eq!(code(&["encode", "--model", s(&model), "--in", s(&data), "--out", s(&out), "--b", "1"]), 2);
    assert_eq!(code(&["encode", "--model", s(&model), "--in", s(&data), "--out", s(&out), "--L", "0"]), 2);
}

#[test]
fn damaged_streams_exit_with_4() {
    let fx = Fixture::new();
    let data = fx.gen("a.csv", 6, 80, 1);
    let model = fx.train(&data, "2");
    let stream = fx.path("a.mccs");
    ok(&["encode", "--model", s(&model), "--in", s(&data), "--out", s(&stream)]);
    let bytes = std::fs::read(&stream).unwrap();
    let recon = fx.path("r.csv");

    let cut = fx.path("cut.mccs");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&["decode", "--model", s(&model), "--in", s(&cut), "--out", s(&recon)]), 4);

    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x10;
    let bad = fx.path("bad.mccs");
    std::fs::write(&bad, &flipped).unwrap();
    assert_eq!(code(&["decode", "--model", s(&model), "--in", s(&bad), "--out", s(&recon)]), 4);
}

#[test]
fn mismatched_models_exit_with_5() {
    let fx = Fixture::new();
    let six = fx.gen("six.csv", 6, 80, 1);
    let nine = fx.gen("nine.csv", 9, 80, 1);
    let model6 = fx.train(&six, "2");
    let stream = fx.path("nine.mccs");
    let model9 = fx.path("m9.bin");
    ok(&["train", "--in", s(&nine), "--P", "2", "--K", "10", "--out", s(&model9)]);
    ok(&["encode", "--model", s(&model9), "--in", s(&nine), "--out", s(&stream)]);
    let recon = fx.path("r.csv");
    assert_eq!(code(&["encode", "--model", s(&model6), "--in", s(&nine), "--out", s(&recon)]), 5);
    assert_eq!(code(&["decode", "--model", s(&model6), "--in", s(&stream), "--out", s(&recon)]), 5);
}

#[test]
fn missing_input_exits_with_3() {
    let fx = Fixture::new();
    let missing = fx.path("nope.csv");
    assert_eq!(code(&["eval", s(&missing), s(&missing)]), 3);
}

#[test]
fn streaming_emits_each_frame_before_reading_the_next() {
    let fx = Fixture::new();
    let data = fx.gen("live.csv", 6, 30, 8);
    let model = fx.train(&data, "2");
    let stream = fx.path("live.mccs");
    let mut child = Command::new(env!("CARGO_BIN_EXE_mccodec"))
        .args(["encode", "--model", s(&model), "--in", "-", "--out", s(&stream)])
        .args(["--codec", "frame", "--b", "10", "--mode", "streaming"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let csv = std::fs::read_to_string(&data).unwrap();
    let mut lines = csv.lines().peekable();
    if lines.peek().is_some_and(|l| l.starts_with('#')) {
        writeln!(stdin, "{}", lines.next().unwrap()).unwrap();
    }
    for (i, row) in lines.enumerate() {
        writeln!(stdin, "{row}").unwrap();
        stdin.flush().unwrap();
        // Blocks until the encoder has answered for this frame; frame i+1
        // has not been written yet.
        let mut reply = String::new();
        stdout.read_line(&mut reply).unwrap();
        assert!(reply.starts_with(&format!("frame {i} bits ")), "{reply:?}");
    }
    drop(stdin);
    let mut rest = String::new();
    stdout.read_line(&mut rest).unwrap();
    assert!(rest.starts_with("CR "), "{rest}");
    assert!(child.wait().unwrap().success());

    let recon = fx.path("live_out.csv");
    ok(&["decode", "--model", s(&model), "--in", s(&stream), "--out", s(&recon)]);
    assert!(parse_d(&ok(&["eval", s(&data), s(&recon)])).is_finite());
}

#[test]
fn streaming_needs_the_frame_codec() {
    let fx = Fixture::new();
    let data = fx.gen("a.csv", 6, 20, 1);
    let model = fx.train(&data, "2");
    let out = fx.path("a.mccs");
    let args = ["encode", "--model", s(&model), "--in", s(&data), "--out", s(&out), "--mode", "streaming"];
    assert_eq!(code(&args), 2);
}
