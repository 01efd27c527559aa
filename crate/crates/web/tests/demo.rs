use joulemark_web::{classification_trial, fit_points, parse_points, synthetic_profile};

fn parse(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn pasted_points() {
    let text = "id,t,c,t_sd,c_sd\n# comment\na,1,0\nb,1,2\nc,2,0,0.1,0.5\nd,2,4\n";
    let pts = parse_points(text).unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[2].c_sd, 0.5);

    let v = parse(&fit_points(text, "ols"));
    assert_eq!(v["profile"]["slope_a"], 1.0);
    assert!((v["profile"]["sigma_e"].as_f64().unwrap() - 5f64.sqrt()).abs() < 1e-12);
    assert!(v["svg"].as_str().unwrap().starts_with("<?xml"));

    assert!(parse(&fit_points("a,1,x\n", "ols"))["error"]
        .as_str()
        .unwrap()
        .contains("not a number"));
    assert!(parse(&fit_points(text, "lasso"))["error"].is_string());
    assert!(parse(&fit_points("a,1,1\n", "ols"))["error"].is_string());
}

#[test]
fn synthetic_explorer() {
    let v = parse(&synthetic_profile(10.0, 2.0, 0.0, 20, 3, true));
    let a = v["profile"]["slope_a"].as_f64().unwrap();
    assert!((a / 0.010 - 1.0).abs() < 1e-9, "{v}");
    let v = parse(&synthetic_profile(10.0, 2.0, 0.0, 20, 3, false));
    assert!((v["profile"]["slope_a"].as_f64().unwrap() / 0.012 - 1.0).abs() < 1e-9);
    assert!(parse(&synthetic_profile(10.0, 2.0, 0.0, 1, 3, false))["error"].is_string());
}

#[test]
fn classification_explorer() {
    let v = parse(&classification_trial(6, 1.379, 0.0, 10, 1));
    assert_eq!(v["success"]["1"], 6);
    assert_eq!(v["table"]["cells"].as_array().unwrap().len(), 6);
    assert_eq!(
        classification_trial(6, 1.379, 2.0, 10, 5),
        classification_trial(6, 1.379, 2.0, 10, 5)
    );
    assert!(parse(&classification_trial(1, 1.379, 0.0, 10, 1))["error"].is_string());
}
