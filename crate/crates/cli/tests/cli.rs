use std::path::Path;
use std::process::{Command, Output};

fn cstree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cstree")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn enumerate_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = cstree(&["enumerate", "--cards", "2,2", "--count-only"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "8");
    let listed = cstree(&["enumerate", "--cards", "2,2"], dir.path());
    assert_eq!(stdout(&listed).lines().count(), 8);
    let trees = cstree(&["enumerate", "--cards", "2,2,2,2", "--trees"], dir.path());
    assert_eq!(stdout(&trees).trim(), "400");
}

#[test]
fn generate_sample_learn_kl_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(cstree(&["generate", "--cards", "2,2,3,2", "--seed", "7", "--out", "truth.json"], d).status.success());
    assert!(cstree(&["sample", "--model", "truth.json", "-n", "2000", "--seed", "8", "--out", "data.csv"], d)
        .status
        .success());
    let learn = cstree(
        &["learn", "--data", "data.csv", "--seed", "9", "--iterations", "500", "--out", "fit.json", "--trace", "t.tsv"],
        d,
    );
    assert!(learn.status.success(), "{}", String::from_utf8_lossy(&learn.stderr));
    let text = stdout(&learn);
    assert!(text.starts_with("order\t"));
    assert!(text.contains("log_score\t"));
    let trace = std::fs::read_to_string(d.join("t.tsv")).unwrap();
    let first: Vec<&str> = trace.lines().next().unwrap().split('\t').collect();
    assert_eq!(first.len(), 3);
    assert_eq!(first[0], "101");
    assert_eq!(first[2].split(',').count(), 4);

    let kl = cstree(&["kl", "--p", "truth.json", "--q", "fit.json"], d);
    let value: f64 = stdout(&kl).trim().parse().unwrap();
    assert!((0.0..0.1).contains(&value), "KL {value}");
    let both = cstree(&["kl", "--p", "truth.json", "--q", "fit.json", "--both-directions"], d);
    assert!(stdout(&both).contains("KL(q||p)\t"));
    assert_eq!(stdout(&cstree(&["kl", "--p", "fit.json", "--q", "fit.json"], d)).trim(), "0");

    let dot = cstree(&["ldag", "--model", "fit.json"], d);
    assert!(stdout(&dot).starts_with("digraph ldag {"));
    assert!(cstree(&["ldag", "--model", "fit.json", "--json", "l.json"], d).status.success());
    assert!(std::fs::read_to_string(d.join("l.json")).unwrap().contains("\"edges\""));

    let again = cstree(
        &["learn", "--data", "data.csv", "--seed", "9", "--iterations", "500", "--out", "fit2.json", "--sequential"],
        d,
    );
    assert_eq!(stdout(&again), text);
    assert_eq!(
        std::fs::read_to_string(d.join("fit.json")).unwrap(),
        std::fs::read_to_string(d.join("fit2.json")).unwrap()
    );
}

#[test]
fn score_every_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cstree(&["generate", "--cards", "2,2,2", "--seed", "1", "--out", "m.json"], d);
    cstree(&["sample", "--model", "m.json", "-n", "100", "--seed", "2", "--out", "x.csv"], d);
    let all = stdout(&cstree(&["score", "--data", "x.csv"], d));
    assert_eq!(all.lines().count(), 6);
    let one = stdout(&cstree(&["score", "--data", "x.csv", "--order", "1,0,2"], d));
    assert!(all.contains(one.trim()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cstree(&["learn"], d).status.code(), Some(1));
    assert_eq!(cstree(&["kl", "--p", "missing.json", "--q", "missing.json"], d).status.code(), Some(1));
    assert_eq!(cstree(&["enumerate", "--cards", "2,2", "--beta", "3"], d).status.code(), Some(2));
    std::fs::write(
        d.join("wide.csv"),
        (0..20).map(|v| format!("X{v}")).collect::<Vec<_>>().join(",")
            + "\n"
            + &vec!["0"; 20].join(",")
            + "\n"
            + &vec!["1"; 20].join(",")
            + "\n",
    )
    .unwrap();
    let wide = cstree(
        &["score", "--data", "wide.csv", "--order", &(0..20).map(|v| v.to_string()).collect::<Vec<_>>().join(",")],
        d,
    );
    assert_eq!(wide.status.code(), Some(3), "{}", String::from_utf8_lossy(&wide.stderr));
}

#[test]
fn version_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let v = cstree(&["--version"], dir.path());
    assert!(v.status.success());
    assert!(stdout(&v).starts_with("cstree "));
    assert_eq!(cstree(&["--help"], dir.path()).status.code(), Some(0));
}
