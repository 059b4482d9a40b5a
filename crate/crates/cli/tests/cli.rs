use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use sexit_cli::Cli;

fn sexit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sexit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs the CLI in-process and returns its report.
fn run(args: &[&str]) -> String {
    let cli = Cli::try_parse_from(std::iter::once("sexit").chain(args.iter().copied())).unwrap();
    let mut buf = Vec::new();
    sexit_cli::run(cli, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn rate_of_code_b_original() {
    let out = sexit(&["rate", "--profile", "code_b_orig"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "0.502\n");
}

#[test]
fn rate_from_profile_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("codeB_orig.json");
    fs::write(&path, sexit_core::profile::fixtures::CODE_B_ORIG).unwrap();
    let out = sexit(&["rate", "--profile", path.to_str().unwrap(), "--digits", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "0.50199\n");
}

#[test]
fn bad_profile_file_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"perspective":"edge","lambda":[{"degree":3,"weight":0.7}],"rho":[{"degree":6,"weight":1.0}]}"#,
    )
    .unwrap();
    let out = sexit(&["rate", "--profile", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("weights sum to 0.7"),
        "{}",
        stderr(&out)
    );

    let missing = sexit(&["rate", "--profile", "no/such/file.json"]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("reading profile"));
}

#[test]
fn threshold_of_regular_36_on_the_bec() {
    let out = sexit(&["threshold", "--profile", "reg36", "--channel", "bec"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "0.4294\n");
}

#[test]
fn infeasible_quantization_is_reported() {
    // 3 * 13 = 39 edges cannot fill degree-6 checks
    let out = sexit(&[
        "sexit",
        "--profile",
        "reg36",
        "--n",
        "13",
        "--channel",
        "bec:0.3",
        "--out",
        "/nonexistent",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("infeasible"), "{}", stderr(&out));
}

#[test]
fn construct_writes_girth_free_alist() {
    let out = sexit(&[
        "construct",
        "--profile",
        "reg36",
        "--n",
        "60",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("60 30"));
    assert_eq!(lines.next(), Some("3 6"));
    assert!(stderr(&out).contains("4-cycles 0"), "{}", stderr(&out));
}

#[test]
fn construct_warns_about_forced_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.alist");
    let out = sexit(&[
        "construct",
        "--profile",
        "code_b_orig",
        "--n",
        "128",
        "--budget-per-edge",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("forced at least 150"),
        "{}",
        stderr(&out)
    );
    assert!(stderr(&out).contains("warning: graph keeps"));
    assert!(fs::read_to_string(&path).unwrap().starts_with("128 62\n"));

    let strict = sexit(&[
        "construct",
        "--profile",
        "code_b_orig",
        "--n",
        "128",
        "--budget-per-edge",
        "20",
        "--strict",
    ]);
    assert!(!strict.status.success());
}

#[test]
fn exit_curves_print_csv_and_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("curves.json");
    let report = run(&[
        "exit-curves",
        "--profile",
        "code_a_orig",
        "--channel",
        "bec:0.25",
        "--points",
        "11",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("I_A,I_E_vnd,I_E_cnd"));
    assert_eq!(lines.count(), 11);
    let set: serde_json::Value = serde_json::from_slice(&fs::read(&json_path).unwrap()).unwrap();
    assert_eq!(set["ia"].as_array().unwrap().len(), 11);
}

#[test]
fn sexit_writes_bundle_and_images_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str, workers: &str| {
        vec![
            "sexit".to_string(),
            "--profile".into(),
            "reg35".into(),
            "--n".into(),
            "155".into(),
            "--channel".into(),
            "bec:0.25".into(),
            "--m".into(),
            "40".into(),
            "--grid".into(),
            "50".into(),
            "--seed".into(),
            "11".into(),
            "--workers".into(),
            workers.into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let report = run(&args(a.to_str().unwrap(), "1")
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert!(report.contains("trajectories 40"), "{report}");
    run(&args(b.to_str().unwrap(), "4")
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());

    let files_a = read_dir_sorted(&a);
    let names: Vec<&str> = files_a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "bins.csv",
            "bundle.json",
            "cnd.pgm",
            "summary.json",
            "vnd.pgm"
        ]
    );
    assert_eq!(files_a, read_dir_sorted(&b));

    let pgm = &files_a[4].1;
    assert!(pgm.starts_with(b"P5\n50 50\n255\n"));
    let bundle = std::str::from_utf8(&files_a[1].1).unwrap();
    let hist = sexit_core::SExitHistogram::from_bundle_json(bundle).unwrap();
    assert_eq!(hist.grid, 50);
    assert_eq!(hist.to_bundle_json(), bundle);
}

#[test]
fn sexit_independent_writes_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("indep");
    let report = run(&[
        "sexit-indep",
        "--profile",
        "reg36",
        "--n",
        "120",
        "--channel",
        "awgn:1.5",
        "--apriori-points",
        "5",
        "--samples",
        "3",
        "--grid",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(report.contains("vertices 30"), "{report}");
    let columns: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("columns.json")).unwrap()).unwrap();
    assert_eq!(columns["vnd"].as_array().unwrap().len(), 20);
}

#[test]
fn ber_csv_is_reproducible_and_comparable() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let ber = |seed: &str, out: &str| {
        run(&[
            "ber",
            "--profile",
            "reg36",
            "--n",
            "60",
            "--channel",
            "bec",
            "--points",
            "0.3:0.45:0.05",
            "--min-errors",
            "20",
            "--max-frames",
            "400",
            "--seed",
            seed,
            "--out",
            out,
        ])
    };
    let report = ber("5", &path("a.csv"));
    ber("5", &path("b.csv"));
    let a = fs::read_to_string(path("a.csv")).unwrap();
    assert_eq!(report, a);
    assert_eq!(a, fs::read_to_string(path("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 5);
    assert!(a.starts_with("channel_param,frames,bit_errors,frame_errors,ber,fer,ci_low,ci_high\n"));
}

#[test]
fn compare_reports_gain_and_unbracketed_targets() {
    let dir = tempfile::tempdir().unwrap();
    let header = "channel_param,frames,bit_errors,frame_errors,ber,fer,ci_low,ci_high\n";
    // log-linear: BER 1e-2 at 1 dB, 1e-4 at 3 dB; shifted copy 0.5 dB better
    let a = format!("{header}1,1000,10,5,1e-2,5e-3,0,1\n3,1000,10,5,1e-4,5e-3,0,1\n");
    let b = format!("{header}0.5,1000,10,5,1e-2,5e-3,0,1\n2.5,1000,10,5,1e-4,5e-3,0,1\n");
    fs::write(dir.path().join("a.csv"), a).unwrap();
    fs::write(dir.path().join("b.csv"), b).unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let out = sexit(&[
        "compare",
        "--a",
        pa.to_str().unwrap(),
        "--b",
        pb.to_str().unwrap(),
        "--channel",
        "awgn",
        "--target",
        "1e-3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "gain at BER 1e-3: 0.5000 dB\n");

    let out = sexit(&[
        "compare",
        "--a",
        pa.to_str().unwrap(),
        "--b",
        pb.to_str().unwrap(),
        "--channel",
        "awgn",
        "--target",
        "1e-6",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("not bracketed"), "{}", stderr(&out));
}
