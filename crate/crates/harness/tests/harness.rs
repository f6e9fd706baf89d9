use approx::assert_relative_eq;
use signal_core::{ApproxOptions, ModelError};
use signal_harness::config::SCENARIOS;
use signal_harness::sweep::SWEEP_HEADER;
use signal_harness::{
    analyze, load_config, preset, preset_names, quality, sweep, ConfigDocument, HarnessError, SweepSpec,
};
use signal_sim::SimConfig;

#[test]
fn every_preset_loads() {
    for name in preset_names() {
        let cfg = preset(&name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.name, name);
        assert!(cfg.spec.critical_load() <= 1.0 + 1e-12);
    }
    assert_eq!(preset_names().len(), 16);
}

#[test]
fn intersection_two_layout() {
    let cfg = load_config("intersection-2").unwrap();
    let spec = &cfg.spec;
    assert_eq!(spec.flow_count(), 11);
    let mut groups: Vec<Vec<String>> = spec
        .groups()
        .iter()
        .map(|g| {
            let mut ids: Vec<String> = g.flows().iter().map(|f| f.id.clone()).collect();
            ids.sort_by_key(|s| s.parse::<u32>().unwrap());
            ids
        })
        .collect();
    let want: Vec<Vec<String>> = [&["1", "3", "9", "11"][..], &["2", "5"], &["4", "8"], &["6", "7", "10"]]
        .iter()
        .map(|g| g.iter().map(|s| s.to_string()).collect())
        .collect();
    assert_eq!(groups, want);
    groups.clear();
    let reds: Vec<f64> = spec.groups().iter().map(|g| g.all_red().mean()).collect();
    assert_eq!(reds, vec![8.0, 1.0, 4.0, 6.0]);
    let bike = spec.flow(spec.find("8").unwrap());
    assert_relative_eq!(bike.headway.mean(), 0.36, max_relative = 1e-15);
    assert_eq!(bike.headway.scv(), 0.0);
    let total: f64 = [263., 344., 332., 381., 148., 442., 258.]
        .iter()
        .zip([1950., 1950., 1950., 1800., 1700., 1950., 1700.])
        .map(|(a, s)| a / s)
        .sum::<f64>()
        + 4.0 * 60.0 / 10000.0;
    assert_relative_eq!(cfg.actual_load.unwrap(), total, max_relative = 1e-14);
}

#[test]
fn intersection_loads_quoted_in_the_text() {
    // two close relative loads inside one group
    let one = load_config("intersection-1").unwrap().spec;
    let g = &one.groups()[3];
    assert_eq!((g.flows()[0].id.as_str(), g.flows()[1].id.as_str()), ("1", "5"));
    assert!((g.flows()[0].relative_load - 0.12).abs() < 0.005);
    assert!((g.flows()[1].relative_load - 0.11).abs() < 0.005);
    let three = load_config("intersection-3").unwrap().spec;
    let g = &three.groups()[2];
    assert!((g.flows()[0].relative_load - 0.15).abs() < 0.005);
    assert!((g.flows()[1].relative_load - 0.14).abs() < 0.005);
}

#[test]
fn scenario_four_definition() {
    let spec = preset("scenario-IV").unwrap().spec;
    assert_eq!(spec.group_count(), 3);
    for at in spec.flow_refs() {
        let f = spec.flow(at);
        let i: f64 = f.id.parse().unwrap();
        assert_relative_eq!(f.relative_load, i / 21.0, max_relative = 1e-15);
        assert_eq!(f.headway.mean(), 2.0);
        assert_eq!(f.headway.scv(), 1.0);
        assert_eq!(f.interarrival_scv, 1.0);
    }
    assert_eq!(spec.groups()[0].all_red().mean(), 4.0);
    assert_eq!(spec.groups()[0].all_red().scv(), 0.0);
    assert_eq!(preset("scenario-IX").unwrap().spec.flow(signal_core::FlowRef::new(0, 0)).interarrival_scv, 2.0);
    assert_eq!(preset("scenario-X").unwrap().spec.flow(signal_core::FlowRef::new(0, 0)).headway.scv(), 0.0);
}

#[test]
fn parse_errors_name_the_field() {
    let doc = r#"{"flows": [{"id": "1", "relative_load": "x", "saturation_rate_per_hour": 1800}], "groups": []}"#;
    match ConfigDocument::from_json(doc) {
        Err(HarnessError::Parse { path, .. }) => assert_eq!(path, "flows[0].relative_load"),
        other => panic!("{other:?}"),
    }
    let doc = r#"{"flows": [], "groups": [{"flow_ids": [], "all_red_seconds": 1, "colour": 2}]}"#;
    assert!(matches!(ConfigDocument::from_json(doc), Err(HarnessError::Parse { .. })));
    let mixed = r#"{"flows": [
        {"id": "a", "relative_load": 0.5, "saturation_rate_per_hour": 1800},
        {"id": "b", "arrival_rate_per_hour": 100, "saturation_rate_per_hour": 1800}],
        "groups": [{"flow_ids": ["a"], "all_red_seconds": 2}, {"flow_ids": ["b"], "all_red_seconds": 2}]}"#;
    let err = ConfigDocument::from_json(mixed).unwrap().validate("m").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(load_config("/no/such/file.json"), Err(HarnessError::UnknownConfig(_))));
}

#[test]
fn documents_round_trip() {
    let doc = signal_harness::preset_document("intersection-3").unwrap();
    let back = ConfigDocument::from_json(&doc.to_json()).unwrap();
    assert_eq!(doc, back);
    let dir = std::env::temp_dir().join(format!("signal-harness-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("copy.json");
    std::fs::write(&path, doc.to_json()).unwrap();
    let cfg = load_config(path.to_str().unwrap()).unwrap();
    assert_eq!(cfg.spec, preset("intersection-3").unwrap().spec);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn analysis_examples() {
    for s in &SCENARIOS[..7] {
        let spec = preset(&format!("scenario-{s}")).unwrap().spec;
        for row in analyze(&spec, 0.0, &ApproxOptions::new()).unwrap() {
            assert_relative_eq!(row.approx_mean, 8.0, max_relative = 1e-14);
        }
    }
    let v = preset("scenario-V").unwrap().spec;
    let rows = analyze(&v, 0.5, &ApproxOptions::new()).unwrap();
    let six = rows.iter().find(|r| r.flow_id == "6").unwrap();
    assert_relative_eq!(six.ht_scaled_mean, 3.5, max_relative = 1e-14);
    let orders: Vec<u8> = (1..=6)
        .map(|i| rows.iter().find(|r| r.flow_id == i.to_string()).unwrap().order)
        .collect();
    assert_eq!(orders, vec![2, 2, 2, 1, 1, 1]);
    let three = preset("intersection-3").unwrap().spec;
    assert_eq!(analyze(&three, 0.5, &ApproxOptions::new()).unwrap().len(), 10);
    let err = analyze(&three, 1.0, &ApproxOptions::new()).unwrap_err();
    assert!(matches!(err, HarnessError::Model(ModelError::UnstableLoad { .. })));
    assert_eq!(err.exit_code(), 3);
}

fn small_sweep() -> SweepSpec {
    SweepSpec::new(SimConfig::with_cycles(3_000, 3).seed(5)).grid(vec![0.1, 0.5, 0.9])
}

#[test]
fn sweep_is_reproducible_and_consistent() {
    let spec = preset("scenario-IV").unwrap().spec;
    let a = sweep(&spec, &small_sweep()).unwrap();
    let b = sweep(&spec, &small_sweep()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv().lines().next().unwrap(), SWEEP_HEADER);
    assert_eq!(a.rows.len(), 18);
    for r in &a.rows {
        assert!((r.rho * spec.critical_load() - r.l_rho).abs() < 1e-12);
        assert!(r.rel_err_pct >= 0.0);
    }
    let again = quality(&spec, &a.rows).unwrap();
    assert_eq!(again, a.report);
    assert!(a.report.qm2 <= a.report.qm1.error_pct);
    assert_eq!(a.report.order_string(), "2 2 2 2 2 2");
}

#[test]
fn sweep_rejects_bad_grids() {
    let spec = preset("scenario-I").unwrap().spec;
    for grid in [vec![], vec![0.5, 1.0], vec![0.0]] {
        let err = sweep(&spec, &small_sweep().grid(grid)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
