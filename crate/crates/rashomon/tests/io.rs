mod common;

use std::fmt::Write as _;

use rashomon::enumerate::{enumerate_rps, reference, ReferenceMode};
use rashomon::error::Error;
use rashomon::hasse::{FeatureCombination, Profile};
use rashomon::io::*;

fn decl(name: &str, levels: &[&str]) -> FeatureDecl {
    FeatureDecl { name: name.into(), levels: levels.iter().map(|s| s.to_string()).collect() }
}

fn two_feature_config() -> RunConfig {
    RunConfig::new(vec![decl("treat", &["no", "yes"]), decl("age", &["none", "young", "old"])], 0.05, 0.2)
}

fn data_error(r: rashomon::Result<impl std::fmt::Debug>) -> String {
    match r {
        Err(Error::Data(msg)) => msg,
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn rows_of_one_combination_aggregate() {
    let cfg = two_feature_config();
    let d = ingest_reader("treat,age,y\nyes,old,1\nyes,old,3\n".as_bytes(), &cfg).unwrap();
    let c = d.space().index_of(&FeatureCombination::new(vec![1, 2])).unwrap();
    assert_eq!(d.n(), 2);
    assert_eq!(d.cell(c).count, 2);
    assert_eq!(d.cell(c).mean, 2.0);
    assert_eq!(d.cell(c).m2, 2.0);
    assert!(d.cells().iter().enumerate().all(|(i, s)| i == c || s.count == 0));
}

#[test]
fn columns_may_come_in_any_order() {
    let cfg = two_feature_config();
    let a = ingest_reader("treat,age,y\nno,young,1.5\n".as_bytes(), &cfg).unwrap();
    let b = ingest_reader("y,extra,age,treat\n1.5,zzz,young,no\n".as_bytes(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_label_names_row_and_column() {
    let cfg = two_feature_config();
    let msg = data_error(ingest_reader("treat,age,y\nyes,old,1\nyes,ancient,3\n".as_bytes(), &cfg));
    assert!(msg.contains("row 3") && msg.contains("\"age\"") && msg.contains("ancient"), "{msg}");
}

#[test]
fn malformed_inputs_are_data_errors() {
    let cfg = two_feature_config();
    let msg = data_error(ingest_reader("treat,y\nyes,1\n".as_bytes(), &cfg));
    assert!(msg.contains("missing column \"age\""), "{msg}");
    let msg = data_error(ingest_reader("treat,age,y\nyes,old,abc\n".as_bytes(), &cfg));
    assert!(msg.contains("row 2") && msg.contains("non-numeric"), "{msg}");
    let msg = data_error(ingest_reader("treat,age,y\nyes,old,inf\n".as_bytes(), &cfg));
    assert!(msg.contains("non-numeric"), "{msg}");
    assert!(matches!(ingest_reader("treat,age,y\n".as_bytes(), &cfg), Err(Error::Data(_))));
    assert!(matches!(ingest_reader("".as_bytes(), &cfg), Err(Error::Data(_))));
}

#[test]
fn balanced_layout_of_sixteen_combinations() {
    let names = ["a", "b", "c", "d"];
    let cfg = RunConfig::new(names.iter().map(|n| decl(n, &["off", "on"])).collect(), 0.1, 0.1);
    let mut text = String::from("a,b,c,d,y\n");
    for rep in 0..30 {
        for mask in 0..16u32 {
            let row: Vec<&str> = (0..4).map(|m| if mask >> m & 1 == 1 { "on" } else { "off" }).collect();
            writeln!(text, "{},{}", row.join(","), rep % 7).unwrap();
        }
    }
    let d = ingest_reader(text.as_bytes(), &cfg).unwrap();
    assert_eq!(d.n(), 480);
    assert_eq!(d.space().size(), 16);
    assert!(d.cells().iter().all(|s| s.count == 30));
    assert_eq!(d.realized_profiles().len(), 16);
}

#[test]
fn single_profile_labels_start_at_one() {
    let mut cfg = RunConfig::new(vec![decl("dose", &["low", "mid", "high"])], 0.1, 0.1);
    cfg.single_profile = true;
    assert_eq!(cfg.level_of(0, "low"), Some(1));
    assert_eq!(cfg.label_of(0, 3), Some("high"));
    assert_eq!(cfg.label_of(0, 0), None);
    let d = ingest_reader("dose,y\nhigh,4\n".as_bytes(), &cfg).unwrap();
    assert_eq!(d.cell(2).count, 1);
    assert_eq!(cfg.parse_levels(&[0], &["mid"]).unwrap(), vec![2]);
    assert_eq!(cfg.parse_levels(&[0], &["3"]).unwrap(), vec![3]);
    assert!(cfg.parse_levels(&[0], &["0"]).is_err());
}

#[test]
fn config_toml_round_trip() {
    let mut cfg = two_feature_config();
    cfg.reference = "map".into();
    cfg.h_max = Some(4);
    cfg.max_rps = Some(1000);
    cfg.seed = Some(9);
    cfg.outcome_model = OutcomeKind::Linear;
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);

    let minimal = "lambda = 0.1\nepsilon = 0.2\n[[features]]\nname = \"t\"\nlevels = [\"no\", \"yes\"]\n";
    let parsed = RunConfig::from_toml_str(minimal).unwrap();
    assert_eq!(parsed.outcome_column, "y");
    assert_eq!(parsed.reference_spec().unwrap(), ReferenceSpec::FullSplit);
    assert!(parsed.cross_profile);
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        "lambda = 0.1\nepsilon = 0.2\n",
        "lambda = -1\nepsilon = 0.2\n[[features]]\nname = \"t\"\nlevels = [\"a\", \"b\"]\n",
        "lambda = 0.1\nepsilon = 0.2\nreference = \"best\"\n[[features]]\nname = \"t\"\nlevels = [\"a\", \"b\"]\n",
        "lambda = 0.1\nepsilon = 0.2\n[[features]]\nname = \"t\"\nlevels = [\"a\", \"a\"]\n",
        "lambda = 0.1\nepsilon = 0.2\nbogus = 1\n[[features]]\nname = \"t\"\nlevels = [\"a\", \"b\"]\n",
        "lambda = 0.1\nepsilon = 0.2\n[[features]]\nname = \"y\"\nlevels = [\"a\", \"b\"]\n",
    ] {
        assert!(matches!(RunConfig::from_toml_str(bad), Err(Error::InvalidParameter(_))), "{bad}");
    }
}

#[test]
fn reference_specs_parse() {
    assert_eq!(ReferenceSpec::parse("greedy").unwrap(), ReferenceSpec::Greedy);
    assert_eq!(ReferenceSpec::parse("file:ref.txt").unwrap(), ReferenceSpec::File("ref.txt".into()));
    assert!(ReferenceSpec::parse("file:").is_err());
}

#[test]
fn sigma_file_lines() {
    let cfg = two_feature_config();
    let space = cfg.space().unwrap();
    // treat has a single non-control level, so its row is empty
    let text = "# reference\n11 - 0\n\n01 1  # only age\n";
    let sigmas = read_sigma_file(&space, text).unwrap();
    assert_eq!(sigmas.len(), 2);
    assert_eq!(sigmas[0].profile(), Profile::full(2));
    assert_eq!(sigmas[0].row_strings(), vec!["", "0"]);
    assert_eq!(sigmas[1].profile(), Profile::parse("01").unwrap());
    match read_sigma_file(&space, "11 1 0\n") {
        Err(Error::MalformedSigma(msg)) => assert!(msg.contains("line 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

fn sample_artifact(seed: u64) -> Artifact {
    let cfg = two_feature_config();
    let space = cfg.space().unwrap();
    let data = common::random_dataset(&space, 3, seed);
    let loss = cfg.loss_config();
    let opts = cfg.enumeration_options();
    let (q0, _) = reference(&data, &loss, &ReferenceMode::FullSplit, &opts).unwrap();
    let rps = enumerate_rps(&data, &loss, q0, cfg.epsilon, &opts).unwrap();
    assert!(rps.len() > 1);
    Artifact { config: cfg, data, rps, partial: false }
}

#[test]
fn artifact_round_trip() {
    let a = sample_artifact(3);
    let bytes = artifact_bytes(&a).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    let back = parse_artifact(&text).unwrap();
    assert_eq!(back, a);
    assert_eq!(artifact_bytes(&back).unwrap(), bytes);
}

#[test]
fn artifact_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("one.jsonl"), dir.path().join("two.jsonl"));
    write_artifact(&p1, &sample_artifact(21)).unwrap();
    write_artifact(&p2, &sample_artifact(21)).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(read_artifact(&p1).unwrap(), sample_artifact(21));
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2);
}

#[test]
fn damaged_artifacts_are_rejected() {
    let text = String::from_utf8(artifact_bytes(&sample_artifact(4)).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(parse_artifact("").is_err());
    assert!(parse_artifact(&lines[1..].join("\n")).is_err());
    assert!(parse_artifact(&lines[..lines.len() - 1].join("\n")).is_err());
    assert!(parse_artifact(&text.replace(ARTIFACT_FORMAT, "something-else")).is_err());
    assert!(parse_artifact(&format!("{text}not json\n")).is_err());
}
