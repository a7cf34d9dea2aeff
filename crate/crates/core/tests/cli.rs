use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loglin_srm::io::{DataCsv, ModelFile, ReportFile};
use loglin_srm::loglin::LogLinearModel;
use loglin_srm::space::{Alphabet, DistributionTable};
use loglin_srm::fit::fit_closed_form_independent;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loglin-srm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

fn tiny_csv(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.csv");
    fs::write(
        &path,
        "a,b,c\nv0,v1,v0\nv1,v1,v0\nv0,v0,v1\nv1,v1,v1\nv0,v1,v0\nv1,v0,v0\nv0,v1,v1\nv1,v1,v0\nv0,v0,v0\nv1,v1,v1\n",
    )
    .unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fit_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let model = dir.path().join("m.json");
    let o = run(&["fit", p(&data), "--alphabet", "2,2,2", "--k", "1", "--lambda", "1e-13", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in ["r_emp", "min_log_prob", "iterations"] {
        value(&text, key);
    }
    let fitted = ModelFile::read(fs::File::open(&model).unwrap()).unwrap().into_model().unwrap();
    let alphabet = Alphabet::with_names(&[2, 2, 2], vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let d = DataCsv::parse(fs::File::open(&data).unwrap()).unwrap().to_dataset(&alphabet).unwrap();
    let oracle = fit_closed_form_independent(&d).unwrap().to_table().unwrap();
    let tv = fitted.to_table().unwrap().total_variation(&oracle).unwrap();
    assert!(tv <= 1e-5, "tv = {tv}");
}

#[test]
fn infeasible_lambda_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let o = run(&["fit", p(&data), "--alphabet", "2,2,2", "--k", "1", "--lambda", "0.2", "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}

#[test]
fn parse_errors_exit_3_and_name_the_problem() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let out = dir.path().join("m.json");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["fit", p(&data), "--alphabet", "2,2,2", "--k", "4", "--lambda", "0.01", "--out", p(&out)], "k = 4"),
        (vec!["fit", p(&data), "--alphabet", "2,2,2", "--k", "1", "--lambda", "0", "--out", p(&out)], "lambda"),
        (vec!["fit", p(&data), "--alphabet", "2,2", "--k", "1", "--lambda", "0.01", "--out", p(&out)], "--alphabet"),
        (vec!["fit", p(&data), "--k", "1", "--lambda", "0.01", "--out", p(&out)], "--alphabet"),
        (vec!["bound", "--alphabet", "2,2,2", "--k", "1", "--lambda", "0.01", "--eta", "1.5", "--l", "100"], "eta"),
        (vec!["bound", "--alphabet", "2,2,2", "--k", "one", "--lambda", "0.01", "--l", "100"], "--k"),
    ];
    for (args, needle) in cases {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,c\nv0,v1,v0\nv0,v9,v1\n").unwrap();
    let o = run(&["fit", p(&bad), "--alphabet", "2,2,2", "--k", "1", "--lambda", "0.01", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert!(!out.exists());
}

#[test]
fn select_single_point_grid() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let report = dir.path().join("r.json");
    let o = run(&["select", p(&data), "--alphabet", "2,2,2", "--max-k", "1", "--ladder-depth", "1", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("winner k=1 n=1 guaranteed_risk="));
    let r = ReportFile::read(fs::File::open(&report).unwrap()).unwrap();
    assert_eq!(r.records.len(), 1);
}

fn write_model(dir: &Path, normalized: bool) -> PathBuf {
    let a = Alphabet::with_names(&[2, 2], vec!["x".into(), "y".into()]).unwrap();
    let model = LogLinearModel::product(&a, &[vec![0.4, 0.6], vec![0.5, 0.5]], 0.01).unwrap();
    let mut file = ModelFile::from_model(&model);
    file.normalized = normalized;
    let path = dir.join(if normalized { "m.json" } else { "unnorm.json" });
    file.write(fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn generate_round_trips_and_guards() {
    let dir = TempDir::new().unwrap();
    let model = write_model(dir.path(), true);
    let out = dir.path().join("g.csv");
    let o = run(&["generate", "--model", p(&model), "--count", "200", "--seed", "9", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let m = ModelFile::read(fs::File::open(&model).unwrap()).unwrap().into_model().unwrap();
    let d = DataCsv::parse(fs::File::open(&out).unwrap()).unwrap().to_dataset(m.alphabet()).unwrap();
    assert_eq!(d, m.sample(200, 9).unwrap());

    let o = run(&["generate", "--model", p(&model), "--count", "0", "--seed", "9", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let unnorm = write_model(dir.path(), false);
    let o = run(&["generate", "--model", p(&unnorm), "--count", "5", "--seed", "9", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn test_subcommand_statistics() {
    let dir = TempDir::new().unwrap();
    let a = Alphabet::with_names(&[2], vec!["x".into()]).unwrap();
    let uniform = LogLinearModel::saturated(&DistributionTable::uniform(a), 0.1).unwrap();
    let model = dir.path().join("u.json");
    ModelFile::from_model(&uniform).write(fs::File::create(&model).unwrap()).unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x,count\nv0,7\nv1,3\n").unwrap();
    let o = run(&["test", "--data", p(&data), "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let x2: f64 = value(&text, "x2").parse().unwrap();
    assert!((x2 - 1.6).abs() < 1e-9);
    value(&text, "g2");
    value(&text, "df");
    value(&text, "x2_p");
    value(&text, "aic");

    fs::write(&data, "x,count\nv0,5\nv1,5\n").unwrap();
    let text = stdout(&run(&["test", "--data", p(&data), "--model", p(&model)]));
    assert_eq!(value(&text, "x2").parse::<f64>().unwrap(), 0.0);
    assert_eq!(value(&text, "g2").parse::<f64>().unwrap(), 0.0);

    fs::write(&data, "z,count\nv0,5\nv1,5\n").unwrap();
    let o = run(&["test", "--data", p(&data), "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bound_prints_dimension_and_vacuity() {
    let o = run(&["bound", "--alphabet", "2,2,2", "--k", "1", "--lambda", "0.01", "--eta", "0.05", "--l", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(value(&text, "h_k"), "6");
    let phi: f64 = value(&text, "phi").parse().unwrap();
    assert!((phi - 0.5983942759).abs() < 1e-9);
    assert_eq!(value(&text, "vacuous"), "false");
    let text = stdout(&run(&["bound", "--alphabet", "2,2,2", "--k", "3", "--lambda", "0.1", "--l", "10"]));
    assert_eq!(value(&text, "vacuous"), "true");
}
