//! The JSON files under `scenarios/` are the bundled scenarios.

use slipstream_sim::{bundled, Scenario};

#[test]
fn published_scenarios_match_bundled() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for (name, sc) in bundled::all() {
        let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(Scenario::from_json(&text).unwrap(), sc, "{name}");
    }
    let files = std::fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"));
    assert_eq!(files.count(), bundled::NAMES.len());
}
