use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hmflow"));
    c.env_remove("HMFLOW_THREADS");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("spawn hmflow")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{text}"))
        .to_string()
}

const IDENTITY: &str = "kind = \"rational\"\nnumerator = [0, 1]\n";

#[test]
fn gen_writes_exact_snapshot_length() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "id.toml", IDENTITY);
    let o = run(&["gen", "id.toml", "--out", "id.sphm", "--n", "129"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let len = std::fs::metadata(dir.path().join("id.sphm")).unwrap().len();
    assert_eq!(len, 20 + 2 * 129 * 129 * 24);
    assert!(dir.path().join("id.manifest.toml").exists());
}

#[test]
fn malformed_spec_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "kind = \"rational\"\nnumerator = [0, 1]\nnumeratr = 3\n");
    let o = run(&["gen", "bad.toml", "--out", "bad.sphm"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("numeratr"), "{err}");
    assert!(!dir.path().join("bad.sphm").exists());
}

#[test]
fn energy_of_generated_maps() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "id.toml", IDENTITY);
    write(dir.path(), "z2.toml", "kind = \"rational\"\nnumerator = [0, 0, 1]\n");
    write(dir.path(), "c.toml", "kind = \"rational\"\nnumerator = [1]\n");
    for name in ["id", "z2", "c"] {
        let o = run(&["gen", &format!("{name}.toml"), "--out", &format!("{name}.sphm"), "--n", "65"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }

    let id = stdout(&run(&["energy", "id.sphm", "--whole"], dir.path()));
    let e: f64 = value(&id, "E").parse().unwrap();
    assert!((e / (4.0 * std::f64::consts::PI) - 1.0).abs() < 1e-4, "{e}");
    assert_eq!(value(&id, "degree"), "1");

    let z2 = stdout(&run(&["energy", "z2.sphm", "--whole"], dir.path()));
    assert_eq!(value(&z2, "degree"), "2");

    let c = run(&["energy", "c.sphm", "--whole", "--csv", "c.csv"], dir.path());
    assert_eq!(c.status.code(), Some(0));
    for key in ["E", "E_d", "E_dbar", "kappa"] {
        let v: f64 = value(&stdout(&c), key).parse().unwrap();
        assert_eq!(v, 0.0, "{key}");
    }
    assert!(dir.path().join("c.csv").exists());
}

#[test]
fn missing_snapshot_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["energy", "nowhere.sphm", "--whole"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.sphm"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["energy"], dir.path()).status.code(), Some(1));
    let o = bin().args(["laurent", "--random", "10"]).env("HMFLOW_THREADS", "x").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn blowup_guard_exits_three_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "id.toml", IDENTITY);
    let o = run(
        &["flow", "--spec", "id.toml", "--n", "65", "--out-dir", "out", "--guard", "1e-9", "--tmax", "0.01"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"blowup_detected\""), "{manifest}");
}

#[test]
fn zero_tmax_gives_single_row_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "id.toml", IDENTITY);
    let o = run(&["flow", "--spec", "id.toml", "--n", "65", "--out-dir", "out", "--tmax", "0", "--id", "zero"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,E,E_d,E_dbar,delta,dist4pi,max_density,dt");
    assert_eq!(lines.len(), 2);
    assert!(dir.path().join("out/run-zero-t0.sphm").exists());

    let ok = run(&["verify", "out"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));

    std::fs::write(dir.path().join("out/trace.csv"), csv.replace("t,E", "t,e")).unwrap();
    let bad = run(&["verify", "out/manifest.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("FAIL"), "{}", stdout(&bad));
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn resumed_run_continues_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "p.toml",
        "kind = \"perturbed\"\namplitude = 0.2\nseed = 4\n[base]\nkind = \"rational\"\nnumerator = [0, 1]\n",
    );
    let flags = ["--n", "65", "--record-every", "1"];
    let mut a = vec!["flow", "--spec", "p.toml", "--out-dir", "a", "--id", "a", "--tmax", "0.006", "--snapshot-every", "0.002"];
    a.extend(flags);
    let o = run(&a, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let full = rows(&dir.path().join("a/trace.csv"));
    let mid = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .find(|n| n.ends_with(".sphm") && *n != "run-a-t0.sphm" && n.starts_with("run-a-t0.00"))
        .expect("intermediate snapshot");
    let t_mid: f64 = mid.trim_start_matches("run-a-t").trim_end_matches(".sphm").parse().unwrap();
    let start = full.iter().position(|r| r[0].parse::<f64>().unwrap() == t_mid).expect("snapshot time is a trace row");
    assert!(start > 0 && start < full.len() - 2, "{start} of {}", full.len());

    let snap = format!("a/{mid}");
    let mut b = vec!["flow", "--snapshot", &snap, "--out-dir", "b", "--id", "b", "--tmax", "0.002"];
    b.extend(flags);
    let o = run(&b, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cont = rows(&dir.path().join("b/trace.csv"));
    assert_eq!(cont[0][1..7], full[start][1..7]);
    // the clamped last step is excluded
    let mut compared = 0;
    for (k, row) in cont.iter().enumerate().take(cont.len() - 1).skip(1) {
        if start + k >= full.len() - 1 {
            break;
        }
        assert_eq!(row[1..], full[start + k][1..], "row {k}");
        compared += 1;
    }
    assert!(compared > 5, "{compared}");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "p.toml",
        "kind = \"perturbed\"\namplitude = 0.3\nseed = 9\n[base]\nkind = \"rational\"\nnumerator = [0, 0, 1]\n",
    );
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = format!("t{threads}");
        let o = bin()
            .args(["flow", "--spec", "p.toml", "--n", "65", "--out-dir", &out, "--id", "det"])
            .args(["--tmax", "0.01", "--snapshot-every", "0.004", "--record-every", "3"])
            .env("HMFLOW_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join(&out))
            .unwrap()
            .map(|e| e.unwrap())
            .filter(|e| e.file_name() != "manifest.toml")
            .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
            .collect();
        files.sort();
        assert!(files.len() >= 3);
        outputs.push(files);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn laurent_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["laurent", "--random", "10000", "--sigma", "2", "--beta", "0.25", "--seed", "7", "--out-dir", "lr"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "violations = 0"), "{}", stdout(&o));
    assert!(dir.path().join("lr/laurent.csv").exists());
}

#[test]
fn scan_then_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scan.toml", "[scan]\nfloor_factor = 1.5\n");
    let o = run(
        &[
            "--config", "scan.toml", "scan-loj", "--out-dir", "scan", "--n", "65", "--amplitudes", "0.05,0.8",
            "--seeds", "1", "--tmax", "2", "--record-every", "40", "--cfl", "0.5", "--tension-stop", "1e-9",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let loj = std::fs::read_to_string(dir.path().join("scan/loj.csv")).unwrap();
    assert!(loj.lines().count() > 16);
    let summary = std::fs::read_to_string(dir.path().join("scan/summary.txt")).unwrap();
    let slope = summary.lines().find(|l| l.starts_with("slope alpha")).expect("slope line");
    let alpha: f64 = slope.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(alpha >= 0.9, "{slope}");

    let o = run(&["report", "scan", "--svg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report_traces.csv", "report_loj.csv", "report_loglog.svg", "manifest.toml"] {
        assert!(dir.path().join("scan/report").join(f).exists(), "{f}");
    }
    assert_eq!(run(&["verify", "scan"], dir.path()).status.code(), Some(0));
}

#[test]
fn report_on_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "."], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no inputs"));
}

#[test]
fn tension_and_bubbles_on_identity() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "id.toml", IDENTITY);
    run(&["gen", "id.toml", "--out", "id.sphm", "--n", "129"], dir.path());
    let t = stdout(&run(&["tension", "id.sphm"], dir.path()));
    let l2: f64 = value(&t, "tension_l2").parse().unwrap();
    assert!(l2 < 1e-5, "{l2}");
    let b = run(&["bubbles", "id.sphm", "--csv", "b.csv"], dir.path());
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    assert_eq!(value(&stdout(&b), "bubbles"), "0");
}
