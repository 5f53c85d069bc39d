use serde_json::Value;
use twoweight::dyadic::Lattice;
use twoweight::field::{random_field, FieldModel, Root, WeightField};
use twoweight::lab::{run, Experiment, ExperimentConfig, Format};
use twoweight::Error;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

fn report(experiment: Experiment, text: &str) -> Value {
    serde_json::from_str(&run(experiment, &config(text)).unwrap().report).unwrap()
}

#[test]
fn uniform_constants_are_one() {
    let v = report(Experiment::Constants, r#"{"dimension": 2, "level": 3}"#);
    let reports = v["instances"][0]["reports"].as_array().unwrap();
    for r in reports {
        let name = r["constant"].as_str().unwrap();
        let value = r["value"].as_f64().unwrap();
        if name.starts_with("norm_lower_bound") {
            assert!(value >= 1.0 - 1e-12, "{name} = {value}");
        } else {
            assert!((value - 1.0).abs() < 1e-12, "{name} = {value}");
        }
    }
}

#[test]
fn reports_are_deterministic() {
    let text = r#"{"instances": 3, "level": 6, "seed": 7}"#;
    for experiment in [Experiment::Constants, Experiment::Decompose, Experiment::Equivalence] {
        let a = run(experiment, &config(text)).unwrap();
        let b = run(experiment, &config(text)).unwrap();
        assert_eq!(a.report, b.report, "{}", experiment.name());
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn seed_changes_random_instances() {
    let a = run(Experiment::Equivalence, &config(r#"{"instances": 2, "level": 6, "seed": 1}"#)).unwrap();
    let b = run(Experiment::Equivalence, &config(r#"{"instances": 2, "level": 6, "seed": 2}"#)).unwrap();
    assert_ne!(a.report, b.report);
}

#[test]
fn equivalence_on_the_uniform_pair() {
    let out = run(
        Experiment::Equivalence,
        &config(r#"{"level": 5, "sigma": {"kind": "uniform"}, "w": {"kind": "uniform"}}"#),
    )
    .unwrap();
    assert_eq!(out.format, Format::Csv);
    let summary: Value = serde_json::from_str(out.summary.as_deref().unwrap()).unwrap();
    assert_eq!(summary["instances"], 1);
    assert!(summary["norm_dominates_testing"].as_bool().unwrap());
    // the norm is at least the testing constant 1 and the denominator is ap + 𝔓 = 2
    assert!(summary["ratio_max"].as_f64().unwrap() >= 0.5 - 1e-12);
}

#[test]
fn decomposition_reports_an_empty_remainder() {
    let out = run(Experiment::Decompose, &config(r#"{"instances": 4, "level": 6, "exact": true, "p": 1.5}"#)).unwrap();
    assert!(!out.theorem_violation);
    let v: Value = serde_json::from_str(&out.report).unwrap();
    assert_eq!(v["remainder_empty"], true);
    assert_eq!(v["D"].as_f64().unwrap(), v["paper_D"].as_f64().unwrap());
    for inst in v["instances"].as_array().unwrap() {
        for dec in inst["decompositions"].as_array().unwrap() {
            assert_eq!(dec["partition_ok"], true);
            assert!(dec["bound"]["holds"].as_bool().unwrap());
        }
    }
}

#[test]
fn malformed_configs_are_input_errors() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"levle": 3}"#), Err(Error::Input(_))));
    assert!(matches!(ExperimentConfig::from_json("[1, 2"), Err(Error::Input(_))));
    let named = config(r#"{"experiment": "poisson"}"#);
    assert!(matches!(run(Experiment::Constants, &named), Err(Error::Input(_))));
    let stale = config(r#"{"schema_version": 9}"#);
    assert!(matches!(run(Experiment::Constants, &stale), Err(Error::Input(_))));
}

#[test]
fn out_of_range_parameters_are_rejected() {
    for text in [r#"{"p": 1.0}"#, r#"{"rho": 3}"#, r#"{"D": 0.5}"#, r#"{"instances": 0}"#, r#"{"q": 1.5, "p": 2}"#] {
        assert!(matches!(run(Experiment::Constants, &config(text)), Err(Error::InvalidParameter(_))), "{text}");
    }
}

#[test]
fn oversized_lattices_hit_the_guard() {
    let big = config(r#"{"dimension": 2, "level": 12}"#);
    assert!(matches!(run(Experiment::Constants, &big), Err(Error::SizeGuard { .. })));
    let exact = config(r#"{"level": 13, "exact": true}"#);
    assert!(matches!(run(Experiment::Decompose, &exact), Err(Error::SizeGuard { .. })));
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lattice = Lattice::new(1, 5).unwrap();
    let sigma = random_field(lattice, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 3).unwrap();
    let path = dir.path().join("sigma.json");
    sigma.save(&path).unwrap();
    let back = WeightField::load(&path).unwrap();
    assert_eq!(back.masses(), sigma.masses());

    let text = format!(
        r#"{{"sigma": {{"kind": "file", "path": {path:?}}}, "w": {{"kind": "uniform"}}}}"#,
        path = path.display().to_string()
    );
    let v = report(Experiment::Constants, &text);
    assert_eq!(v["level"], 5);

    let wrong = format!(r#"{{"level": 4, "sigma": {{"kind": "file", "path": {:?}}}}}"#, path.display().to_string());
    assert!(run(Experiment::Constants, &config(&wrong)).is_err());
}

#[test]
fn power_weight_sweep_recovers_the_exponents() {
    let out = run(Experiment::PowerWeight, &config(r#"{"level": 12, "epsilons": [0.25, 0.125]}"#)).unwrap();
    let summary: Value = serde_json::from_str(out.summary.as_deref().unwrap()).unwrap();
    assert!(summary["mass_exponent_error"].as_f64().unwrap() < 0.05);
    assert!(summary["doubling_error"].as_f64().unwrap() < 0.02);
    assert_eq!(out.report.lines().count(), 3);
}

#[test]
fn poisson_and_fractional_runs() {
    let v = report(Experiment::Poisson, r#"{"level": 5}"#);
    let dom = v["domination"].as_array().unwrap();
    assert_eq!(dom.len(), 2);
    for c in dom {
        let max = c["max_ratio"].as_f64().unwrap();
        assert!(max.is_finite() && max >= c["min_ratio"].as_f64().unwrap());
    }
    let v = report(Experiment::Fractional, r#"{"level": 5, "q": 3, "alpha": 0.25}"#);
    assert!(v["instances"][0]["ratio"].as_f64().unwrap().is_finite());
}

#[test]
fn dthreshold_is_monotone() {
    let out = run(Experiment::Dthreshold, &config(r#"{"level": 8, "instances": 2}"#)).unwrap();
    let summary: Value = serde_json::from_str(out.summary.as_deref().unwrap()).unwrap();
    assert_eq!(summary["monotone"], true);
    assert!(!summary["jumps"].as_array().unwrap().is_empty());
}
