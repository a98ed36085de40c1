use rollhol::config::RunConfig;
use rollhol::report::{cmd_classify, cmd_roll, cmd_verify, csv, without_timing, PathFile, PlotRow};
use rollhol::Error;

fn cfg(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap()
}

#[test]
fn classify_report_is_deterministic_and_embeds_tolerances() {
    let c = cfg("[manifold]\nkind = \"wp1\"\n[sampling]\nseed = 3\n");
    let a = cmd_classify(&c).unwrap();
    let b = cmd_classify(&c).unwrap();
    assert_eq!(without_timing(a.report.clone()), without_timing(b.report));
    let r = &a.report;
    assert_eq!(r["command"], "classify");
    assert_eq!(r["manifold"]["dim"], 3);
    for key in ["rank", "zero", "subspace", "n1", "step", "loop_eps"] {
        assert!(r["tolerances"][key].is_number(), "missing tolerance {key}");
    }
    assert_eq!(r["results"]["verdict"], "reducible_lightlike");
    assert_eq!(r["results"]["case"], "lightlike (WP1-type)");
    assert!(r["timing_s"].is_number());
}

#[test]
fn classify_with_positive_c_reports_raw_dimension() {
    let out = cmd_classify(&cfg("c = 1.0\n[manifold]\nkind = \"space_form\"\nn = 2\nc = 1.0\n")).unwrap();
    assert_eq!(out.report["results"]["algebra_dim"], 0);
    assert!(out.report["results"].get("verdict").is_none());
}

#[test]
fn roll_closed_square_on_itself_is_trivial() {
    let c = cfg("[manifold]\nkind = \"space_form\"\nn = 2\nc = -1.0\n");
    let p = PathFile::parse(r#"{"waypoints": [[0,0],[0.3,0],[0.3,0.3],[0,0.3],[0,0]]}"#).unwrap();
    let out = cmd_roll(&c, &p).unwrap();
    let closed = &out.report["results"]["closed_path"];
    assert!(closed["identity_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(out.report["results"]["drift_within_tolerance"], true);
    let lines = out.trajectory.unwrap();
    assert!(lines.len() > 2);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert!(first["state"]["xhat"].is_array());
    assert!(out.report["tolerances"]["isometry"].is_number());
}

#[test]
fn path_file_needs_exactly_one_description() {
    for text in [r#"{}"#, r#"{"waypoints": [], "loop": {"kind": "chart_path", "waypoints": [], "step": 0.001}}"#, "not json"] {
        assert!(matches!(PathFile::parse(text), Err(Error::Config(_))), "{text}");
    }
}

#[test]
fn verify_with_unknown_suite_is_an_argument_error() {
    let err = cmd_verify(&cfg("[manifold]\nkind = \"wp1\"\n"), "nope").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn csv_has_fixed_header() {
    let text = csv(&[PlotRow::new(0.5, "isometry", 1e-12)]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,quantity,value"));
    assert!(lines.next().unwrap().starts_with("0.5,isometry,"));
}
