use super::*;
use crate::datagen::{simulate_panel, SimConfig};

const FIXTURE: &str = "\
id,time,w,y,a,b
1,1,0.5,10,1.0,2.0
1,2,1.5,11,1.1,2.1
1,3,2.5,12,1.2,2.2
2,1,3.5,20,3.0,4.0
2,2,4.5,21,3.1,4.1
2,3,5.5,22,3.2,4.2
";

fn schema(bin: Binarization) -> PanelSchema {
    PanelSchema {
        id_column: Some("id".into()),
        time_column: "time".into(),
        treatment_columns: vec!["w".into()],
        outcome_column: "y".into(),
        covariate_columns: vec!["a".into(), "b".into()],
        treatment_binarization: bin,
    }
}

fn load(text: &str, s: &PanelSchema) -> Result<(TrajectoryPanel, IngestReport)> {
    load_panel_from_reader(text.as_bytes(), s)
}

#[test]
fn lead_by_one_alignment() {
    let (p, r) = load(FIXTURE, &schema(Binarization::None)).unwrap();
    assert_eq!((p.n(), p.t_steps(), p.k()), (2, 2, 2));
    assert_eq!(p.outcomes(), &[11.0, 12.0, 21.0, 22.0]);
    assert_eq!(p.treatments(), &[0.5, 1.5, 3.5, 4.5]);
    assert_eq!(p.x(1, 1), &[3.1, 4.1]);
    assert_eq!((r.rows_read, r.rows_kept, r.rows_dropped), (6, 6, 0));
}

#[test]
fn median_split_definition() {
    let text = "id,time,w,y,a\n1,1,1,0,0\n1,2,2,1,0\n1,3,3,2,0\n1,4,4,3,0\n1,5,,4,\n";
    let s = PanelSchema { covariate_columns: vec!["a".into()], ..schema(Binarization::MedianSplit) };
    let (p, r) = load(text, &s).unwrap();
    assert_eq!(p.treatments(), &[0.0, 0.0, 1.0, 1.0]);
    assert_eq!(r.binarization.threshold, Some(2.5));
    let s = PanelSchema { treatment_binarization: Binarization::Threshold(3.5), ..s };
    assert_eq!(load(text, &s).unwrap().0.treatments(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn row_order_does_not_matter() {
    let mut lines: Vec<&str> = FIXTURE.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    lines.swap(0, 3);
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    let a = load(FIXTURE, &schema(Binarization::MedianSplit)).unwrap();
    let b = load(&shuffled, &schema(Binarization::MedianSplit)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn schema_and_parse_errors() {
    let s = PanelSchema { outcome_column: "rain".into(), ..schema(Binarization::None) };
    assert!(matches!(load(FIXTURE, &s), Err(Error::MissingColumn(c)) if c == "rain"));
    let bad = FIXTURE.replace("1,2,1.5,11", "1,2,abc,11");
    match load(&bad, &schema(Binarization::None)) {
        Err(Error::UnparseableValue { row, column, value }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "w", "abc"));
        }
        other => panic!("{other:?}"),
    }
    let dup = PanelSchema { covariate_columns: vec!["a".into(), "a".into()], ..schema(Binarization::None) };
    assert!(matches!(load(FIXTURE, &dup), Err(Error::InvalidSchema(_))));
    let empty = PanelSchema { covariate_columns: vec![], ..schema(Binarization::None) };
    assert!(matches!(load(FIXTURE, &empty), Err(Error::InvalidSchema(_))));
}

#[test]
fn incomplete_individuals_are_dropped_and_counted() {
    let text = format!("{FIXTURE}3,1,1,1,1,1\n3,3,1,1,1,1\n4,1,1,1,1,1\n4,2,NA,1,1,1\n4,3,1,1,1,1\n");
    let (p, r) = load(&text, &schema(Binarization::None)).unwrap();
    assert_eq!(p.n(), 2);
    assert_eq!(r.individuals_dropped, 2);
    assert_eq!(r.rows_read, 11);
    assert_eq!(r.rows_kept + r.rows_dropped, r.rows_read);
    assert_eq!(r.missing["w"], 1);
}

#[test]
fn wholly_missing_covariate_is_an_error() {
    let text = "id,time,w,y,a,b\n1,1,1,,,1\n1,2,0,1,,1\n1,3,,2,,\n";
    assert!(matches!(load(text, &schema(Binarization::None)), Err(Error::AllMissingColumn(c)) if c == "a"));
}

#[test]
fn synthetic_panel_round_trips_through_csv() {
    let cfg = SimConfig { n_individuals: 25, t_steps: 7, p_order: 2, master_seed: 9, ..SimConfig::default() };
    let sim = simulate_panel(&cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    write_panel_csv(&sim.observed, &path).unwrap();
    let (back, report) = load_panel(&path, &PanelSchema::long_format(3)).unwrap();
    assert_eq!(back, sim.observed);
    assert_eq!(report.rows_read, 25 * 8);
    assert_eq!(report.rows_dropped, 0);
}

#[test]
fn schema_json_forms() {
    let json = r#"{"time_column":"t","treatment_columns":["cfnlf","wspd"],"outcome_column":"prate",
        "covariate_columns":["x"],"treatment_binarization":{"threshold":0.25}}"#;
    let s: PanelSchema = serde_json::from_str(json).unwrap();
    assert_eq!(s.treatment_binarization, Binarization::Threshold(0.25));
    assert_eq!(s.id_column, None);
    let s: PanelSchema = serde_json::from_str(&json.replace(r#"{"threshold":0.25}"#, r#""none""#)).unwrap();
    assert_eq!(s.treatment_binarization, Binarization::None);
    assert_eq!(s.for_treatment("wspd").unwrap().treatment_columns, vec!["wspd"]);
    assert!(s.for_treatment("skt").is_err());
}

#[test]
fn single_series_without_id_column() {
    let text = "time,w,y,a\n1,0,,1\n2,1,5,2\n3,,6,\n";
    let s = PanelSchema {
        id_column: None,
        covariate_columns: vec!["a".into()],
        ..schema(Binarization::None)
    };
    let (p, _) = load(text, &s).unwrap();
    assert_eq!((p.n(), p.t_steps()), (1, 2));
    assert_eq!(p.outcomes(), &[5.0, 6.0]);
}
