use mre_bench::config::{NodeCount, ScenarioConfig};
use mre_bench::HarnessError;
use mre_core::grid::Face;

const TWO_ZONES: &str = r#"
name = "zones"
[grid]
nodes = 9
[[zones]]
name = "left"
min = [0.0, 0.0, 0.0]
max = [0.06, 0.1, 0.1]
mu = 2000.0
eta = 1.0
rho = 1000.0
[[zones]]
name = "right"
min = [0.04, 0.0, 0.0]
max = [0.1, 0.1, 0.1]
mu = 4000.0
eta = 1.0
rho = 1000.0
"#;

fn config_error(r: Result<impl std::fmt::Debug, HarnessError>) -> String {
    match r {
        Err(HarnessError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = ScenarioConfig::from_toml("[grid]\nnodes = 25\n").unwrap();
    assert_eq!(cfg.grid.nodes, NodeCount::Cube(25));
    assert_eq!(cfg.drive.face, Face::XMin);
    assert_eq!(cfg.drive.frequency, 50.0);
    assert_eq!(cfg.time.steps_per_period, 32);
    assert_eq!(cfg.time.periods, 6);

    let r = cfg.resolve().unwrap();
    assert_eq!(r.grid.nodes_per_axis(), [25; 3]);
    assert!((r.dirichlet.omega - 2.0 * std::f64::consts::PI * 50.0).abs() < 1e-12);
    let abs = r.absorbing.expect("absorbing layer on by default");
    assert!((abs.thickness - 0.01).abs() < 1e-15);
    assert_eq!(abs.faces.len(), 5);
    assert!(!abs.faces.contains(&Face::XMin));
    assert!(r.vessels.is_empty());
}

#[test]
fn overlapping_zones_name_both() {
    let msg = config_error(ScenarioConfig::from_toml(TWO_ZONES));
    assert!(msg.contains("left") && msg.contains("right"), "{msg}");
}

#[test]
fn unknown_key_is_rejected() {
    let msg = config_error(ScenarioConfig::from_toml("[grid]\nnodes = 9\nnodez = 3\n"));
    assert!(msg.contains("nodez"), "{msg}");
}

#[test]
fn oversized_vessel_is_rejected() {
    let text = r#"
[grid]
nodes = 9
[[vessels]]
centerline = [[0.05, 0.0, 0.05], [0.05, 0.1, 0.05]]
radius = 0.06
p_mean = 12500
p_amp = 2000
"#;
    let msg = config_error(ScenarioConfig::from_toml(text));
    assert!(msg.contains("vessels[0]"), "{msg}");
}

#[test]
fn material_and_zones_are_exclusive() {
    let text = TWO_ZONES.replace("max = [0.06", "max = [0.04") + "[material]\nmu = 1.0\n";
    let msg = config_error(ScenarioConfig::from_toml(&text));
    assert!(msg.contains("not both"), "{msg}");
}

#[test]
fn toml_round_trip_preserves_the_scenario() {
    let cfg = ScenarioConfig::from_toml(&TWO_ZONES.replace("max = [0.06", "max = [0.04")).unwrap().materialized();
    let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}
