use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const TINY: &str = r#"
[dataset]
samples_per_class = 60

[model]
hidden = [8, 8]

[training]
epochs = 3

[run]
seeds = [0, 1]
"#;

fn edgekt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgekt")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    edgekt(&args)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_the_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = tmp.path().join("a");
    let status = run_into(&cfg, &out, &[]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let names: Vec<String> = csv_files(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        [
            "confusion_0_0.csv",
            "confusion_0_1.csv",
            "confusion_1_0.csv",
            "confusion_1_1.csv",
            "confusion_2_0.csv",
            "confusion_2_1.csv",
            "metrics_0.csv",
            "metrics_1.csv",
        ]
    );
    assert!(out.join("manifest.json").exists());
    let metrics = fs::read_to_string(out.join("metrics_0.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 * 3);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&cfg, &a, &["--seed", "7"]).status.success());
    assert!(run_into(&cfg, &b, &["--seed", "7"]).status.success());
    let files = csv_files(&a);
    assert_eq!(files.len(), 4);
    assert_eq!(files, csv_files(&b));
}

#[test]
fn manifest_refeeds_to_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&cfg, &a, &["--method", "kd", "--topology", "full_mesh"])
        .status
        .success());
    let manifest = a.join("manifest.json");
    let status = run_into(&manifest, &b, &[]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(csv_files(&a), csv_files(&b));
    assert!(fs::read_to_string(a.join("metrics_0.csv")).unwrap().contains(",kd,"));
}

#[test]
fn unknown_keys_exit_with_two_and_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", "[training]\nepochs = 2\nalpah = 0.3\n");
    let out = run_into(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("alpah"), "{err}");
}

#[test]
fn invalid_values_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[training]\nalpha = 1.5\n");
    assert_eq!(run_into(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "empty.toml", "[run]\nseeds = []\n");
    assert_eq!(run_into(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(2));
    assert_eq!(
        edgekt(&["run", "--config", "/nonexistent/x.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-data");
    let text = format!(
        "[dataset]\nkind = \"fmnist\"\nfmnist_dir = {:?}\n",
        missing.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), "fmnist.toml", &text);
    assert_eq!(run_into(&cfg, &tmp.path().join("o"), &[]).status.code(), Some(1));
}

#[test]
fn smoke_run_finishes_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[training]\nepochs = 6\n[run]\nseeds = [0]\n";
    let cfg = write_config(tmp.path(), "smoke.toml", text);
    let start = Instant::now();
    assert!(run_into(&cfg, &tmp.path().join("o"), &[]).status.success());
    assert!(start.elapsed() < Duration::from_secs(10), "{:?}", start.elapsed());
}

fn parse_tsv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split('\t').map(|c| c.trim().to_string()).collect())
        .collect()
}

#[test]
fn compare_with_itself_gives_identical_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let a = tmp.path().join("a");
    assert!(run_into(&cfg, &a, &[]).status.success());
    let out = edgekt(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = parse_tsv(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows[0],
        ["run", "method", "topology", "seeds", "local", "remote", "combined"]
    );
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows[1][1], "ours");
    assert_eq!(rows[1][3], "2");
    let lines: Vec<&str> = text.lines().collect();
    let tab_positions = |l: &str| {
        l.match_indices('\t')
            .map(|(i, _)| l[..i].chars().count())
            .collect::<Vec<_>>()
    };
    assert!(lines.iter().all(|l| tab_positions(l) == tab_positions(lines[0])));
}

#[test]
fn compare_cells_match_the_metrics_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_into(&cfg, &a, &[]).status.success());
    assert!(run_into(&cfg, &b, &["--method", "none"]).status.success());
    let out = edgekt(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    let rows = parse_tsv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[2][1], "none");
    let finals: Vec<f64> = [0, 1]
        .iter()
        .map(|seed| {
            let text = fs::read_to_string(a.join(format!("metrics_{seed}.csv"))).unwrap();
            let last = text.lines().rfind(|l| l.split(',').nth(1) == Some("0")).unwrap();
            last.split(',').nth(5).unwrap().parse().unwrap()
        })
        .collect();
    let mean = (finals[0] + finals[1]) / 2.0;
    let std = ((finals[0] - mean).powi(2) + (finals[1] - mean).powi(2)).sqrt();
    assert_eq!(rows[1][6], format!("{mean:.4}±{std:.4}"));
}

#[test]
fn compare_rejects_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let a = tmp.path().join("a");
    assert!(run_into(&cfg, &a, &[]).status.success());
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(
        edgekt(&["compare", a.to_str().unwrap(), empty.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    fs::remove_file(a.join("metrics_1.csv")).unwrap();
    let b = tmp.path().join("b");
    assert!(run_into(&cfg, &b, &[]).status.success());
    assert_eq!(
        edgekt(&["compare", a.to_str().unwrap(), b.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(edgekt(&["compare", b.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg: edgekt::experiment::RunConfig =
            toml::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
    }
}
